//! System parameters, loop geometry, branch-tracked spectral quantities and
//! the dynamical matrices in the lab, adiabatic and interaction frames.

use crate::control::FourierControl;
use crate::error::{Error, Result};
use crate::linalg::{sigma_minus, sigma_plus, sigma_x, sigma_y, sigma_z, Mat2, C64, I};
use crate::quadrature::{derivative_weights, lagrange_eval, PanelRule};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Default number of uniform grid intervals of a spectral frame.
pub const DEFAULT_GRID: usize = 4096;
/// Default relative eigenvalue jump that triggers grid bisection.
pub const DEFAULT_JUMP_TOL: f64 = 0.25;
/// Smallest |λ| (in units of Γ) tolerated along a loop.
pub const EP_GUARD: f64 = 1e-9;
const MAX_REFINEMENT: usize = 30;
const PANEL_POINTS: usize = 8;

/// Decay rates of the two modes. Only the half-difference Γ enters the
/// traceless dynamics; the common decay factors out of every observable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
}

impl SystemParams {
    /// Mode 1 must be the lossier one.
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        let gamma = (gamma1 - gamma2) / 2.0;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need gamma1 > gamma2, got {gamma1} and {gamma2}"
            )));
        }
        Ok(Self {
            gamma1,
            gamma2,
            gamma,
        })
    }

    /// Γ = 1 with a lossless second mode.
    pub fn unit() -> Self {
        Self::new(2.0, 0.0).unwrap()
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::unit()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// s = +1
    Plus,
    /// s = −1
    Minus,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Orientation::Plus => Orientation::Minus,
            Orientation::Minus => Orientation::Plus,
        }
    }

    pub fn from_sign(s: i32) -> Result<Self> {
        match s {
            1 => Ok(Orientation::Plus),
            -1 => Ok(Orientation::Minus),
            _ => Err(Error::InvalidParameter(format!("orientation must be ±1, got {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopKind {
    Circular,
    FourierCorrected,
}

/// A closed path (Δ(t), g(t)) around the point `center`.
///
/// The circle is Δ = Δ₀ + r₀ sin(2πst/t_f + α), g = g₀ + r₀ cos(2πst/t_f + α).
/// Correction fields are defined for s = +1; the s = −1 loop is the same
/// closed curve traversed backwards, so its fields are evaluated at t_f − t.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopSpec {
    pub kind: LoopKind,
    pub r0: f64,
    pub alpha: f64,
    pub s: Orientation,
    pub t_f: f64,
    pub center: (f64, f64),
    /// Forces the base coupling g to zero (θ̇ ≡ 0 test loops).
    pub zero_coupling: bool,
    pub controls: Vec<FourierControl>,
}

/// Path value and its time derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPoint {
    pub delta: f64,
    pub g: f64,
    pub delta_dot: f64,
    pub g_dot: f64,
}

impl LoopSpec {
    /// Circle around the exceptional point (Δ, g) = (0, Γ/2).
    pub fn circular(sys: &SystemParams, r0: f64, alpha: f64, s: Orientation, t_f: f64) -> Self {
        Self {
            kind: LoopKind::Circular,
            r0,
            alpha,
            s,
            t_f,
            center: (0.0, sys.gamma / 2.0),
            zero_coupling: false,
            controls: Vec::new(),
        }
    }

    /// The default loop: r₀ = Γ/2, α = 0, s = +1.
    pub fn standard(sys: &SystemParams, t_f: f64) -> Self {
        Self::circular(sys, sys.gamma / 2.0, 0.0, Orientation::Plus, t_f)
    }

    pub fn with_orientation(&self, s: Orientation) -> Self {
        Self { s, ..self.clone() }
    }

    pub fn with_controls(&self, controls: Vec<FourierControl>) -> Self {
        let kind = if controls.is_empty() {
            LoopKind::Circular
        } else {
            LoopKind::FourierCorrected
        };
        Self {
            kind,
            controls,
            ..self.clone()
        }
    }

    /// The underlying uncorrected loop.
    pub fn base(&self) -> Self {
        self.with_controls(Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_f > 0.0) || !self.t_f.is_finite() {
            return Err(Error::InvalidParameter(format!("t_f must be positive, got {}", self.t_f)));
        }
        if !(self.r0 >= 0.0) || !self.r0.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter("r0 and alpha must be finite, r0 ≥ 0".into()));
        }
        Ok(())
    }

    /// (Δ, g) and their rates at time t, without the domain check.
    pub fn point(&self, t: f64) -> PathPoint {
        let u = unit_phase(t / self.t_f);
        let s = self.s.sign();
        let omega = TAU / self.t_f;
        let ph = TAU * s * u + self.alpha;
        let (sn, cs) = ph.sin_cos();
        let mut p = PathPoint {
            delta: self.center.0 + self.r0 * sn,
            g: self.center.1 + self.r0 * cs,
            delta_dot: s * omega * self.r0 * cs,
            g_dot: -s * omega * self.r0 * sn,
        };
        if self.zero_coupling {
            p.g = 0.0;
            p.g_dot = 0.0;
        }
        let (uc, rate) = match self.s {
            Orientation::Plus => (u, omega),
            Orientation::Minus => (if u == 0.0 { 0.0 } else { 1.0 - u }, -omega),
        };
        for fc in &self.controls {
            let f = fc.eval(uc);
            p.delta += f.delta;
            p.g += f.g;
            p.delta_dot += rate * f.delta_du;
            p.g_dot += rate * f.g_du;
        }
        p
    }

    /// Only the correction fields (Δ_c, g_c) at time t.
    pub fn control_fields(&self, t: f64) -> (f64, f64) {
        let u = unit_phase(t / self.t_f);
        let uc = match self.s {
            Orientation::Plus => u,
            Orientation::Minus => {
                if u == 0.0 {
                    0.0
                } else {
                    1.0 - u
                }
            }
        };
        self.controls.iter().fold((0.0, 0.0), |(d, g), fc| {
            let f = fc.eval(uc);
            (d + f.delta, g + f.g)
        })
    }
}

/// Folds the loop end point u = 1 onto u = 0 so the path closes bitwise.
fn unit_phase(u: f64) -> f64 {
    if u >= 1.0 {
        u - 1.0
    } else {
        u
    }
}

pub fn eval_path(lp: &LoopSpec, t: f64) -> Result<(f64, f64)> {
    if !(0.0..=lp.t_f).contains(&t) {
        return Err(Error::Domain { t, t_f: lp.t_f });
    }
    let p = lp.point(t);
    Ok((p.delta, p.g))
}

/// λ = √((Δ + iΓ/2)² + g²) on the principal branch.
pub fn lambda_principal(delta: f64, g: f64, gamma: f64) -> C64 {
    let a = C64::new(delta, gamma / 2.0);
    let z = (a * a + g * g).sqrt();
    if z.re == 0.0 && z.im < 0.0 {
        -z
    } else {
        z
    }
}

/// θ = ½ arctan(−g/(Δ + iΓ/2)) with the principal complex arctangent.
/// At the exceptional point the argument hits the pole ±i and the result
/// is non-finite.
pub fn theta_principal(delta: f64, g: f64, gamma: f64) -> C64 {
    let z = -g / C64::new(delta, gamma / 2.0);
    if (z - I).norm() == 0.0 || (z + I).norm() == 0.0 {
        return C64::new(f64::NAN, f64::INFINITY);
    }
    z.atan() * 0.5
}

/// θ with cos 2θ = −(Δ + iΓ/2)/λ and sin 2θ = g/λ for the given branch of λ.
fn theta_for(delta: f64, g: f64, gamma: f64, lambda: C64) -> C64 {
    let a = -C64::new(delta, gamma / 2.0);
    (-0.5 * I) * ((a + I * g) / lambda).ln()
}

fn nearest_branch(candidate: C64, reference: C64) -> C64 {
    if (candidate - reference).norm() <= (candidate + reference).norm() {
        candidate
    } else {
        -candidate
    }
}

fn unwrap_theta(theta: C64, reference: C64) -> C64 {
    theta + PI * ((reference.re - theta.re) / PI).round()
}

/// Branch-tracked spectral data along a loop.
#[derive(Clone, Debug)]
pub struct SpectralFrame {
    pub loop_spec: LoopSpec,
    pub gamma: f64,
    pub grid: Vec<f64>,
    pub delta: Vec<f64>,
    pub g: Vec<f64>,
    pub lambda: Vec<C64>,
    pub theta: Vec<C64>,
    pub theta_dot: Vec<C64>,
    /// Λ(t) = ∫₀ᵗ λ.
    pub big_lambda: Vec<C64>,
    panel: PanelRule,
}

pub fn build_spectral_frame(
    lp: &LoopSpec,
    sys: &SystemParams,
    n_grid: usize,
    jump_tol: f64,
) -> Result<SpectralFrame> {
    lp.validate()?;
    if n_grid < 64 {
        return Err(Error::InvalidParameter(format!("n_grid must be ≥ 64, got {n_grid}")));
    }
    let gamma = sys.gamma;
    let mut grid: Vec<f64> = (0..=n_grid).map(|i| lp.t_f * i as f64 / n_grid as f64).collect();
    grid[n_grid] = lp.t_f;

    let mut depth = 0;
    let (delta, g, lambda) = loop {
        let pts: Vec<PathPoint> = grid.iter().map(|&t| lp.point(t)).collect();
        let mut lambda = Vec::with_capacity(grid.len());
        for (i, p) in pts.iter().enumerate() {
            let l = lambda_principal(p.delta, p.g, gamma);
            if l.norm() < EP_GUARD * gamma {
                return Err(Error::Singularity {
                    t: grid[i],
                    distance: l.norm(),
                });
            }
            lambda.push(if i == 0 { l } else { nearest_branch(l, lambda[i - 1]) });
        }
        let bad: Vec<usize> = (0..grid.len() - 1)
            .filter(|&i| {
                (lambda[i + 1] - lambda[i]).norm() > jump_tol * lambda[i].norm().max(gamma)
            })
            .collect();
        if bad.is_empty() {
            break (
                pts.iter().map(|p| p.delta).collect::<Vec<_>>(),
                pts.iter().map(|p| p.g).collect::<Vec<_>>(),
                lambda,
            );
        }
        depth += 1;
        if depth > MAX_REFINEMENT {
            return Err(Error::Refinement {
                t: grid[bad[0]],
                depth,
            });
        }
        let mut refined = Vec::with_capacity(grid.len() + bad.len());
        let mut next = bad.iter().peekable();
        for i in 0..grid.len() {
            refined.push(grid[i]);
            if next.peek() == Some(&&i) {
                next.next();
                refined.push(0.5 * (grid[i] + grid[i + 1]));
            }
        }
        grid = refined;
    };

    let mut theta: Vec<C64> = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let th = theta_for(delta[i], g[i], gamma, lambda[i]);
        theta.push(if i == 0 { th } else { unwrap_theta(th, theta[i - 1]) });
    }

    let theta_dot = finite_difference(&grid, &theta);

    let panel = PanelRule::new(PANEL_POINTS);
    let mut big_lambda = vec![C64::new(0.0, 0.0); grid.len()];
    let mut vals = vec![C64::new(0.0, 0.0); PANEL_POINTS];
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        for (k, t) in panel.points(a, b).enumerate() {
            let frac = panel.nodes[k];
            let p = lp.point(t);
            let reference = lambda[i] + (lambda[i + 1] - lambda[i]) * frac;
            vals[k] = nearest_branch(lambda_principal(p.delta, p.g, gamma), reference);
        }
        big_lambda[i + 1] = big_lambda[i] + panel.integrate(b - a, &vals);
    }

    Ok(SpectralFrame {
        loop_spec: lp.clone(),
        gamma,
        grid,
        delta,
        g,
        lambda,
        theta,
        theta_dot,
        big_lambda,
        panel,
    })
}

/// Fourth-order first derivative on a possibly non-uniform grid: centred
/// five-point stencils inside, one-sided ones at the ends.
fn finite_difference(grid: &[f64], f: &[C64]) -> Vec<C64> {
    let n = grid.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2).min(n - 5);
            let xs = &grid[lo..lo + 5];
            let w = derivative_weights(grid[i], xs);
            w.iter().zip(&f[lo..lo + 5]).map(|(w, v)| v * w).sum()
        })
        .collect()
}

impl SpectralFrame {
    pub fn t_f(&self) -> f64 {
        self.loop_spec.t_f
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Index i of the grid interval [t_i, t_{i+1}] containing t.
    pub fn interval(&self, t: f64) -> usize {
        let n = self.grid.len();
        match self.grid.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// λ(t) from the path, on the branch continuing the tracked samples.
    pub fn lambda_at(&self, t: f64) -> C64 {
        let i = self.interval(t);
        let p = self.loop_spec.point(t);
        let frac = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        let reference = self.lambda[i] + (self.lambda[i + 1] - self.lambda[i]) * frac;
        nearest_branch(lambda_principal(p.delta, p.g, self.gamma), reference)
    }

    /// θ̇(t) by local cubic interpolation of the finite-difference samples.
    pub fn theta_dot_at(&self, t: f64) -> C64 {
        let i = self.interval(t);
        let n = self.grid.len();
        let lo = i.saturating_sub(1).min(n - 4);
        lagrange_eval(&self.grid[lo..lo + 4], &self.theta_dot[lo..lo + 4], t)
    }

    /// Λ(t) = Λ(t_i) + ∫_{t_i}^t λ by Gauss–Legendre re-quadrature.
    pub fn big_lambda_at(&self, t: f64) -> C64 {
        let i = self.interval(t);
        let a = self.grid[i];
        if t == a {
            return self.big_lambda[i];
        }
        let vals: Vec<C64> = self.panel.points(a, t).map(|x| self.lambda_at(x)).collect();
        self.big_lambda[i] + self.panel.integrate(t - a, &vals)
    }

    /// θ(t) from the path, unwrapped against the tracked samples.
    pub fn theta_at(&self, t: f64) -> C64 {
        let i = self.interval(t);
        let p = self.loop_spec.point(t);
        let frac = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        let reference = self.theta[i] + (self.theta[i + 1] - self.theta[i]) * frac;
        unwrap_theta(theta_for(p.delta, p.g, self.gamma, self.lambda_at(t)), reference)
    }

    /// S(t) = exp(−iθσ_y).
    pub fn s_matrix(&self, theta: C64) -> Mat2 {
        let (s, c) = (theta.sin(), theta.cos());
        Mat2::new(c, -s, s, c)
    }

    pub fn min_abs_lambda(&self) -> f64 {
        self.lambda.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixFrame {
    Lab,
    Adiabatic,
    Interaction,
}

/// Generator A(t) of Φ̇ = AΦ in a given frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicalMatrix {
    pub frame: MatrixFrame,
    pub entries: Mat2,
}

pub fn lab_generator(delta: f64, g: f64, gamma: f64) -> Mat2 {
    let a = C64::new(delta, gamma / 2.0);
    (sigma_z() * (-a) + sigma_x() * C64::from(g)) * (-I)
}

pub fn adiabatic_generator(lambda: C64, theta_dot: C64) -> Mat2 {
    (sigma_z() * lambda - sigma_y() * theta_dot) * (-I)
}

pub fn interaction_generator(theta_dot: C64, big_lambda: C64) -> Mat2 {
    let e = (2.0 * I * big_lambda).exp();
    sigma_plus() * (theta_dot * e) - sigma_minus() * (theta_dot / e)
}

pub fn dynamical_matrix(
    frame: MatrixFrame,
    lp: &LoopSpec,
    sys: &SystemParams,
    sf: &SpectralFrame,
    t: f64,
) -> Result<DynamicalMatrix> {
    if *lp != sf.loop_spec || sys.gamma != sf.gamma {
        return Err(Error::Consistency);
    }
    if !(0.0..=lp.t_f).contains(&t) {
        return Err(Error::Domain { t, t_f: lp.t_f });
    }
    let entries = match frame {
        MatrixFrame::Lab => {
            let p = lp.point(t);
            lab_generator(p.delta, p.g, sys.gamma)
        }
        MatrixFrame::Adiabatic => adiabatic_generator(sf.lambda_at(t), sf.theta_dot_at(t)),
        MatrixFrame::Interaction => interaction_generator(sf.theta_dot_at(t), sf.big_lambda_at(t)),
    };
    Ok(DynamicalMatrix { frame, entries })
}

/// θ̇ = (gΔ̇ − ġ(Δ + iΓ/2)) / (2λ²), independent of the branch.
pub fn theta_dot_closed_form(p: &PathPoint, gamma: f64) -> C64 {
    let a = C64::new(p.delta, gamma / 2.0);
    (p.g * p.delta_dot - a * p.g_dot) / ((a * a + p.g * p.g) * 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inverse, max_abs};
    use proptest::prelude::*;

    fn frame(tf: f64, s: Orientation) -> SpectralFrame {
        let sys = SystemParams::unit();
        let lp = LoopSpec::standard(&sys, tf).with_orientation(s);
        build_spectral_frame(&lp, &sys, 2048, DEFAULT_JUMP_TOL).unwrap()
    }

    #[test]
    fn loop_closes_bitwise() {
        let sys = SystemParams::unit();
        for s in [Orientation::Plus, Orientation::Minus] {
            let lp = LoopSpec::circular(&sys, 0.5, 0.7, s, 13.0);
            assert_eq!(eval_path(&lp, 0.0).unwrap(), eval_path(&lp, 13.0).unwrap());
        }
        let lp = LoopSpec::standard(&sys, 13.0);
        assert!(matches!(eval_path(&lp, 13.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn theta_principal_pole_at_ep() {
        assert!(!theta_principal(0.0, 0.5, 1.0).is_finite());
        let th = theta_principal(0.3, 0.2, 1.0);
        let want = -0.2 / C64::new(0.3, 0.5);
        assert!(((2.0 * th).tan() - want).norm() < 1e-14);
    }

    #[test]
    fn eigenvalues_swap_after_encircling() {
        for s in [Orientation::Plus, Orientation::Minus] {
            let sf = frame(20.0, s);
            let (l0, lf) = (sf.lambda[0], *sf.lambda.last().unwrap());
            assert!((l0 + lf).norm() < 1e-12, "{l0} {lf}");
        }
    }

    #[test]
    fn fd_theta_dot_matches_closed_form() {
        let sf = frame(50.0, Orientation::Plus);
        let scale = sf.theta_dot.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for (k, &t) in sf.grid.iter().enumerate() {
            let exact = theta_dot_closed_form(&sf.loop_spec.point(t), sf.gamma);
            assert!((sf.theta_dot[k] - exact).norm() < 1e-9 * scale, "t={t}");
        }
        for t in [0.013, 7.77, 31.4159, 49.999] {
            let exact = theta_dot_closed_form(&sf.loop_spec.point(t), sf.gamma);
            assert!((sf.theta_dot_at(t) - exact).norm() < 1e-8 * scale, "t={t}");
        }
    }

    #[test]
    fn big_lambda_against_fine_simpson() {
        let sf = frame(10.0, Orientation::Minus);
        let n = 200_000;
        let h = sf.t_f() / n as f64;
        let mut prev = sf.lambda[0];
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..=n {
            let p = sf.loop_spec.point(k as f64 * h);
            let l = nearest_branch(lambda_principal(p.delta, p.g, sf.gamma), prev);
            prev = l;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += l * (w * h / 3.0);
        }
        let got = *sf.big_lambda.last().unwrap();
        assert!((got - acc).norm() < 1e-10 * acc.norm(), "{got} vs {acc}");
        assert!((sf.big_lambda_at(sf.t_f()) - got).norm() < 1e-12 * got.norm());
    }

    #[test]
    fn s_diagonalises_and_generates_adiabatic_frame() {
        let sf = frame(10.0, Orientation::Plus);
        let sys = SystemParams::unit();
        for t in [0.0, 1.3, 5.0, 9.9] {
            let p = sf.loop_spec.point(t);
            let s = sf.s_matrix(sf.theta_at(t));
            let si = inverse(&s);
            let h = lab_generator(p.delta, p.g, sys.gamma) * I;
            let d = si * h * s;
            let lam = sf.lambda_at(t);
            assert!(max_abs(&(d - sigma_z() * lam)) < 1e-12);
            // S⁻¹ A_lab S − S⁻¹Ṡ with Ṡ = −iθ̇σ_y S
            let td = sf.theta_dot_at(t);
            let a_lab = lab_generator(p.delta, p.g, sys.gamma);
            let a_ad = si * a_lab * s + sigma_y() * (I * td);
            let m = dynamical_matrix(MatrixFrame::Adiabatic, &sf.loop_spec, &sys, &sf, t).unwrap();
            assert!(max_abs(&(a_ad - m.entries)) < 1e-10);
        }
    }

    #[test]
    fn guards() {
        let sys = SystemParams::unit();
        let mut lp = LoopSpec::standard(&sys, 10.0);
        lp.center = (0.0, 0.0);
        assert!(matches!(
            build_spectral_frame(&lp, &sys, 256, DEFAULT_JUMP_TOL),
            Err(Error::Singularity { .. })
        ));
        let sf = frame(10.0, Orientation::Plus);
        let other = LoopSpec::standard(&sys, 11.0);
        assert_eq!(
            dynamical_matrix(MatrixFrame::Lab, &other, &sys, &sf, 1.0).unwrap_err(),
            Error::Consistency
        );
        assert!(SystemParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_coupling_has_no_mixing() {
        let sys = SystemParams::unit();
        let mut lp = LoopSpec::standard(&sys, 10.0);
        lp.zero_coupling = true;
        let sf = build_spectral_frame(&lp, &sys, 256, DEFAULT_JUMP_TOL).unwrap();
        assert!(sf.theta_dot.iter().all(|x| x.norm() < 1e-12));
    }

    proptest! {
        #[test]
        fn spectral_identities(delta in -2.0f64..2.0, g in -2.0f64..2.0) {
            prop_assume!(lambda_principal(delta, g, 1.0).norm() > 1e-3);
            let a = C64::new(delta, 0.5);
            let l = lambda_principal(delta, g, 1.0);
            prop_assert!((l * l - (a * a + g * g)).norm() < 1e-12);
            prop_assert!(l.re >= 0.0);
            for lam in [l, -l] {
                let th = theta_for(delta, g, 1.0, lam);
                prop_assert!(((2.0 * th).cos() + a / lam).norm() < 1e-9);
                prop_assert!(((2.0 * th).sin() - g / lam).norm() < 1e-9);
            }
        }

        #[test]
        fn generators_are_traceless(td_re in -1.0f64..1.0, td_im in -1.0f64..1.0, bl_re in -5.0f64..5.0, bl_im in -5.0f64..5.0) {
            let td = C64::new(td_re, td_im);
            let bl = C64::new(bl_re, bl_im);
            let m = interaction_generator(td, bl);
            prop_assert!(m.trace().norm() < 1e-12 * (1.0 + max_abs(&m)));
            prop_assert!(adiabatic_generator(bl, td).trace().norm() < 1e-12);
        }
    }
}
