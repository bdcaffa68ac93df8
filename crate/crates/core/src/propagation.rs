//! Exact propagation of the 2×2 flow with overflow-safe scaling.

use crate::dynamics::{
    adiabatic_generator, interaction_generator, lab_generator, LoopSpec, SpectralFrame,
    SystemParams,
};
use crate::error::{Error, Result};
use crate::linalg::{det, inverse, max_abs, Mat2, Vec2, C64, I};
use serde::{Deserialize, Serialize};

pub use crate::dynamics::MatrixFrame as FrameKind;

pub const DEFAULT_REL_TOL: f64 = 1e-11;
pub const DEFAULT_ABS_TOL: f64 = 1e-13;

/// A propagator e^{log_scale}·matrix with ‖matrix‖_max kept in [1, e).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flow {
    pub matrix: Mat2,
    pub log_scale: f64,
    pub t: f64,
}

impl Flow {
    pub fn identity(t: f64) -> Self {
        Self {
            matrix: Mat2::identity(),
            log_scale: 0.0,
            t,
        }
    }

    /// Normalises `matrix` and folds the extracted factor into `log_scale`.
    pub fn new(matrix: Mat2, log_scale: f64, t: f64) -> Self {
        let mut f = Self {
            matrix,
            log_scale,
            t,
        };
        f.renormalize();
        f
    }

    pub fn renormalize(&mut self) {
        let m = max_abs(&self.matrix);
        if m > 0.0 && m.is_finite() {
            let k = m.ln().floor();
            if k != 0.0 {
                self.matrix *= C64::from((-k).exp());
                self.log_scale += k;
            }
        }
    }

    /// The physical matrix; overflows for very large log scales.
    pub fn physical(&self) -> Mat2 {
        self.matrix * C64::from(self.log_scale.exp())
    }

    pub fn det_physical(&self) -> C64 {
        det(&self.matrix) * (2.0 * self.log_scale).exp()
    }

    /// Product self·other.
    pub fn compose(&self, other: &Flow) -> Flow {
        Flow::new(self.matrix * other.matrix, self.log_scale + other.log_scale, self.t)
    }

    pub fn inverse(&self) -> Flow {
        Flow::new(inverse(&self.matrix), -self.log_scale, self.t)
    }

    /// Column j as a vector together with the flow's log scale.
    pub fn column(&self, j: usize) -> Vec2 {
        self.matrix.column(j).into_owned()
    }

    /// Φ·v, returned normalised together with ln‖Φv‖.
    pub fn apply_normalized(&self, v: &Vec2) -> Result<(Vec2, f64)> {
        let w = self.matrix * v;
        let n = w.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateInput(format!("evolved state has norm {n} at t = {}", self.t)));
        }
        Ok((w / C64::from(n), n.ln() + self.log_scale))
    }

    /// ln|Φ_ij|² including the log scale.
    pub fn log_abs2(&self, i: usize, j: usize) -> f64 {
        2.0 * (self.matrix[(i, j)].norm().ln() + self.log_scale)
    }
}

/// Flows at the spectral-frame grid times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub frame: FrameKind,
    pub samples: Vec<Flow>,
}

impl Trajectory {
    pub fn last(&self) -> &Flow {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|f| f.t).collect()
    }

    pub fn max_log_scale(&self) -> f64 {
        self.samples.iter().map(|f| f.log_scale).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Step-size control for the Dormand–Prince pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepControl {
    Adaptive { rel_tol: f64, abs_tol: f64 },
    /// Fixed number of equal substeps per grid interval, for convergence studies.
    Fixed { substeps: usize },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Adaptive {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
        }
    }
}

/// Generator of the chosen frame as a closure of time.
pub fn generator<'a>(
    frame: FrameKind,
    lp: &'a LoopSpec,
    sys: &'a SystemParams,
    sf: &'a SpectralFrame,
) -> impl Fn(f64) -> Mat2 + 'a {
    move |t| match frame {
        FrameKind::Lab => {
            let p = lp.point(t);
            lab_generator(p.delta, p.g, sys.gamma)
        }
        FrameKind::Adiabatic => adiabatic_generator(sf.lambda_at(t), sf.theta_dot_at(t)),
        FrameKind::Interaction => interaction_generator(sf.theta_dot_at(t), sf.big_lambda_at(t)),
    }
}

pub fn integrate_flow(
    lp: &LoopSpec,
    sys: &SystemParams,
    sf: &SpectralFrame,
    frame: FrameKind,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Trajectory> {
    if rel_tol < 1e-13 {
        return Err(Error::InvalidParameter(format!("rel_tol must be ≥ 1e-13, got {rel_tol}")));
    }
    integrate_flow_with(lp, sys, sf, frame, StepControl::Adaptive { rel_tol, abs_tol })
}

pub fn integrate_flow_with(
    lp: &LoopSpec,
    sys: &SystemParams,
    sf: &SpectralFrame,
    frame: FrameKind,
    control: StepControl,
) -> Result<Trajectory> {
    if *lp != sf.loop_spec || sys.gamma != sf.gamma {
        return Err(Error::Consistency);
    }
    let a = generator(frame, lp, sys, sf);
    let samples = propagate(&a, &sf.grid, Flow::identity(0.0), control)?;
    Ok(Trajectory { frame, samples })
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn r(x: f64) -> C64 {
    C64::from(x)
}

/// One Dormand–Prince step; returns the 5th-order solution and the
/// embedded error estimate.
fn dopri_step(a: &dyn Fn(f64) -> Mat2, t: f64, y: &Mat2, h: f64) -> (Mat2, Mat2) {
    let k1 = a(t) * y;
    let k2 = a(t + C2 * h) * (y + k1 * r(h * A21));
    let k3 = a(t + C3 * h) * (y + k1 * r(h * A31) + k2 * r(h * A32));
    let k4 = a(t + C4 * h) * (y + k1 * r(h * A41) + k2 * r(h * A42) + k3 * r(h * A43));
    let k5 = a(t + C5 * h)
        * (y + k1 * r(h * A51) + k2 * r(h * A52) + k3 * r(h * A53) + k4 * r(h * A54));
    let k6 = a(t + h)
        * (y + k1 * r(h * A61) + k2 * r(h * A62) + k3 * r(h * A63) + k4 * r(h * A64)
            + k5 * r(h * A65));
    let y5 = y + k1 * r(h * B1) + k3 * r(h * B3) + k4 * r(h * B4) + k5 * r(h * B5) + k6 * r(h * B6);
    let k7 = a(t + h) * y5;
    let err = k1 * r(h * E1) + k3 * r(h * E3) + k4 * r(h * E4) + k5 * r(h * E5) + k6 * r(h * E6)
        + k7 * r(h * E7);
    (y5, err)
}

/// Column-wise scaled error norm: max_j max_i |e_ij| / (abs + rel·max_i |y_ij|).
fn error_norm(err: &Mat2, y: &Mat2, rel_tol: f64, abs_tol: f64) -> f64 {
    (0..2)
        .map(|j| {
            let scale = abs_tol + rel_tol * y[(0, j)].norm().max(y[(1, j)].norm());
            err[(0, j)].norm().max(err[(1, j)].norm()) / scale
        })
        .fold(0.0, f64::max)
}

/// Integrates Φ̇ = A(t)Φ from `start` across `grid`, recording the flow at
/// each node. Every step lands exactly on the nodes it crosses.
pub fn propagate(
    a: &dyn Fn(f64) -> Mat2,
    grid: &[f64],
    start: Flow,
    control: StepControl,
) -> Result<Vec<Flow>> {
    let mut samples = Vec::with_capacity(grid.len());
    let mut y = start.matrix;
    let mut log_scale = start.log_scale;
    samples.push(Flow::new(y, log_scale, grid[0]));
    let span = (grid[grid.len() - 1] - grid[0]).abs().max(f64::MIN_POSITIVE);
    let mut h = grid.get(1).map_or(span, |t1| t1 - grid[0]);

    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mut t = t0;
        match control {
            StepControl::Fixed { substeps } => {
                let hs = (t1 - t0) / substeps.max(1) as f64;
                for k in 0..substeps.max(1) {
                    let tk = t0 + k as f64 * hs;
                    y = dopri_step(a, tk, &y, hs).0;
                }
            }
            StepControl::Adaptive { rel_tol, abs_tol } => {
                while t < t1 {
                    let last = t + h >= t1;
                    let step = if last { t1 - t } else { h };
                    let (y_new, err) = dopri_step(a, t, &y, step);
                    let e = error_norm(&err, &y_new, rel_tol, abs_tol);
                    if !e.is_finite() {
                        h = step * 0.1;
                    } else if e <= 1.0 {
                        t = if last { t1 } else { t + step };
                        y = y_new;
                        let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                        if !last || fac < 1.0 {
                            h = step * fac;
                        }
                    } else {
                        h = step * (0.9 * e.powf(-0.2)).clamp(0.1, 1.0);
                    }
                    if h < 1e-14 * span {
                        return Err(Error::Integration { t });
                    }
                    let m = max_abs(&y);
                    if !(m >= (-1.0f64).exp() && m <= 2.0f64.exp()) {
                        let f = Flow::new(y, log_scale, t);
                        y = f.matrix;
                        log_scale = f.log_scale;
                    }
                }
            }
        }
        let f = Flow::new(y, log_scale, t1);
        y = f.matrix;
        log_scale = f.log_scale;
        samples.push(f);
    }
    Ok(samples)
}

/// Φ₀(t) = exp(−iΛ(t)σ_z) with |Im Λ| moved into the log scale.
pub fn phi0(sf: &SpectralFrame, t: f64) -> Flow {
    phi0_from(sf.big_lambda_at(t), t)
}

pub fn phi0_from(big_lambda: C64, t: f64) -> Flow {
    let shift = big_lambda.im.abs();
    let d1 = (-I * big_lambda - shift).exp();
    let d2 = (I * big_lambda - shift).exp();
    Flow {
        matrix: Mat2::new(d1, C64::new(0.0, 0.0), C64::new(0.0, 0.0), d2),
        log_scale: shift,
        t,
    }
}

/// Φ_I(t) = Φ₀(t)⁻¹Φ(t) at every sample.
pub fn interaction_flow(phi: &Trajectory, sf: &SpectralFrame) -> Result<Trajectory> {
    if phi.frame != FrameKind::Adiabatic || phi.samples.len() != sf.len() {
        return Err(Error::Consistency);
    }
    let samples = phi
        .samples
        .iter()
        .zip(&sf.big_lambda)
        .map(|(f, &l)| phi0_from(-l, f.t).compose(f))
        .collect();
    Ok(Trajectory {
        frame: FrameKind::Interaction,
        samples,
    })
}

/// Φ(t) = Φ₀(t)Φ_I(t) at every sample.
pub fn adiabatic_from_interaction(phi_i: &Trajectory, sf: &SpectralFrame) -> Result<Trajectory> {
    if phi_i.frame != FrameKind::Interaction || phi_i.samples.len() != sf.len() {
        return Err(Error::Consistency);
    }
    let samples = phi_i
        .samples
        .iter()
        .zip(&sf.big_lambda)
        .map(|(f, &l)| phi0_from(l, f.t).compose(f))
        .collect();
    Ok(Trajectory {
        frame: FrameKind::Adiabatic,
        samples,
    })
}

/// Φ_sym(t) = S(t)Φ(t)S⁻¹(0).
pub fn change_frame(phi: &Trajectory, sf: &SpectralFrame) -> Result<Trajectory> {
    if phi.frame != FrameKind::Adiabatic || phi.samples.len() != sf.len() {
        return Err(Error::Consistency);
    }
    let s0_inv = inverse(&sf.s_matrix(sf.theta[0]));
    let samples = phi
        .samples
        .iter()
        .zip(&sf.theta)
        .map(|(f, &th)| Flow::new(sf.s_matrix(th) * f.matrix * s0_inv, f.log_scale, f.t))
        .collect();
    Ok(Trajectory {
        frame: FrameKind::Lab,
        samples,
    })
}

/// Φ(t) = S⁻¹(t)Φ_sym(t)S(0).
pub fn to_adiabatic(phi_sym: &Trajectory, sf: &SpectralFrame) -> Result<Trajectory> {
    if phi_sym.frame != FrameKind::Lab || phi_sym.samples.len() != sf.len() {
        return Err(Error::Consistency);
    }
    let s0 = sf.s_matrix(sf.theta[0]);
    let samples = phi_sym
        .samples
        .iter()
        .zip(&sf.theta)
        .map(|(f, &th)| Flow::new(inverse(&sf.s_matrix(th)) * f.matrix * s0, f.log_scale, f.t))
        .collect();
    Ok(Trajectory {
        frame: FrameKind::Adiabatic,
        samples,
    })
}

/// Largest deviation between two trajectories, measured relative to the
/// larger physical norm at each sample (e^{−max log scale} weighting).
pub fn scaled_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    a.samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| {
            let top = x.log_scale.max(y.log_scale);
            let xm = x.matrix * C64::from((x.log_scale - top).exp());
            let ym = y.matrix * C64::from((y.log_scale - top).exp());
            max_abs(&(xm - ym)) / max_abs(&xm).max(max_abs(&ym))
        })
        .fold(0.0, f64::max)
}

/// Grid and tolerance knobs shared by every exact propagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub n_grid: usize,
    pub jump_tol: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            n_grid: crate::dynamics::DEFAULT_GRID,
            jump_tol: crate::dynamics::DEFAULT_JUMP_TOL,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
        }
    }
}

/// Spectral frame plus the exact adiabatic-frame trajectory of a loop.
pub fn exact_adiabatic(
    lp: &LoopSpec,
    sys: &SystemParams,
    settings: &Settings,
) -> Result<(SpectralFrame, Trajectory)> {
    let sf = crate::dynamics::build_spectral_frame(lp, sys, settings.n_grid, settings.jump_tol)?;
    let traj = integrate_flow(lp, sys, &sf, FrameKind::Adiabatic, settings.rel_tol, settings.abs_tol)?;
    Ok((sf, traj))
}
