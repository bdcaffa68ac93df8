//! Fourier-parameterised loop corrections that cancel, on average, the
//! non-adiabatic transitions out of the gain mode for both orientations.

use crate::dynamics::{build_spectral_frame, LoopSpec, Orientation, SpectralFrame, SystemParams};
use crate::error::{Error, Result};
use crate::linalg::{commutator, sigma_minus, sigma_plus, Mat2, Pauli, C64, I};
use crate::quadrature::PanelRule;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

pub const DEFAULT_SVD_CUTOFF: f64 = 1e-12;
const PANEL_POINTS: usize = 10;

/// Inclusive index ranges (lo, hi) of the four Fourier families:
/// k for Δ_c (1 − cos), l for Δ_c sin, m for g_c (1 − cos), n for g_c sin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub k: (u32, u32),
    pub l: (u32, u32),
    pub m: (u32, u32),
    pub n: (u32, u32),
}

impl Truncation {
    /// Six sine harmonics for Δ_c and six (1 − cos) harmonics for g_c.
    pub fn standard() -> Self {
        Self {
            k: (0, 0),
            l: (1, 6),
            m: (1, 6),
            n: (0, 0),
        }
    }

    /// Basis functions in coefficient order. Index 0 is skipped in both
    /// families since 1 − cos 0 and sin 0 vanish identically.
    pub fn basis(&self) -> Vec<BasisFn> {
        let fam = [
            (Field::Delta, Family::OneMinusCos, self.k),
            (Field::Delta, Family::Sin, self.l),
            (Field::Coupling, Family::OneMinusCos, self.m),
            (Field::Coupling, Family::Sin, self.n),
        ];
        fam.iter()
            .flat_map(|&(field, family, (lo, hi))| {
                (lo.max(1)..=hi).map(move |index| BasisFn {
                    field,
                    family,
                    index,
                })
            })
            .collect()
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    Delta,
    Coupling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    OneMinusCos,
    Sin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisFn {
    pub field: Field,
    pub family: Family,
    pub index: u32,
}

impl BasisFn {
    /// Value and u-derivative at the loop fraction u = t/t_f.
    pub fn eval(&self, u: f64) -> (f64, f64) {
        let w = TAU * self.index as f64;
        let (s, c) = (w * u).sin_cos();
        match self.family {
            Family::OneMinusCos => (1.0 - c, w * s),
            Family::Sin => (s, w * c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FieldValue {
    pub delta: f64,
    pub g: f64,
    pub delta_du: f64,
    pub g_du: f64,
}

/// Order-n correction fields
/// Δ_c(t) = Σ c_k (1 − cos 2πkt/t_f) + Σ d_l sin 2πlt/t_f and likewise g_c.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierControl {
    pub order: u32,
    pub c_delta: BTreeMap<u32, f64>,
    pub d_delta: BTreeMap<u32, f64>,
    pub c_g: BTreeMap<u32, f64>,
    pub d_g: BTreeMap<u32, f64>,
    pub truncation: Truncation,
}

impl FourierControl {
    pub fn zero(order: u32, truncation: Truncation) -> Self {
        Self::from_coefficients(order, truncation, &vec![0.0; truncation.basis().len()])
    }

    /// Coefficients given in the order of `truncation.basis()`.
    pub fn from_coefficients(order: u32, truncation: Truncation, x: &[f64]) -> Self {
        let mut fc = Self {
            order,
            c_delta: BTreeMap::new(),
            d_delta: BTreeMap::new(),
            c_g: BTreeMap::new(),
            d_g: BTreeMap::new(),
            truncation,
        };
        for (b, &v) in truncation.basis().iter().zip(x) {
            fc.family_mut(b).insert(b.index, v);
        }
        fc
    }

    fn family_mut(&mut self, b: &BasisFn) -> &mut BTreeMap<u32, f64> {
        match (b.field, b.family) {
            (Field::Delta, Family::OneMinusCos) => &mut self.c_delta,
            (Field::Delta, Family::Sin) => &mut self.d_delta,
            (Field::Coupling, Family::OneMinusCos) => &mut self.c_g,
            (Field::Coupling, Family::Sin) => &mut self.d_g,
        }
    }

    pub fn coefficient(&self, b: &BasisFn) -> f64 {
        let map = match (b.field, b.family) {
            (Field::Delta, Family::OneMinusCos) => &self.c_delta,
            (Field::Delta, Family::Sin) => &self.d_delta,
            (Field::Coupling, Family::OneMinusCos) => &self.c_g,
            (Field::Coupling, Family::Sin) => &self.d_g,
        };
        map.get(&b.index).copied().unwrap_or(0.0)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.truncation.basis().iter().map(|b| self.coefficient(b)).collect()
    }

    /// Fields and their u-derivatives at u = t/t_f.
    pub fn eval(&self, u: f64) -> FieldValue {
        let mut f = FieldValue::default();
        let families = [
            (&self.c_delta, Field::Delta, Family::OneMinusCos),
            (&self.d_delta, Field::Delta, Family::Sin),
            (&self.c_g, Field::Coupling, Family::OneMinusCos),
            (&self.d_g, Field::Coupling, Family::Sin),
        ];
        for (map, field, family) in families {
            for (&index, &c) in map {
                let (v, dv) = BasisFn {
                    field,
                    family,
                    index,
                }
                .eval(u);
                match field {
                    Field::Delta => {
                        f.delta += c * v;
                        f.delta_du += c * dv;
                    }
                    Field::Coupling => {
                        f.g += c * v;
                        f.g_du += c * dv;
                    }
                }
            }
        }
        f
    }
}

/// Loop fraction at which the correction fields of orientation s are read.
fn control_phase(t: f64, t_f: f64, s: Orientation) -> f64 {
    let u = t / t_f;
    match s {
        Orientation::Plus => u,
        Orientation::Minus => 1.0 - u,
    }
}

/// Spurious part of the interaction-frame generator (Φ̇_I = D_I Φ_I
/// convention): the coupling that moves amplitude from the gain mode into
/// the lossy one.
pub fn v_bad_interaction(sf: &SpectralFrame, s: Orientation, t: f64) -> Pauli {
    let td = sf.theta_dot_at(t);
    let e = (2.0 * I * sf.big_lambda_at(t)).exp();
    match s {
        Orientation::Plus => lowering(-td / e),
        Orientation::Minus => raising(td * e),
    }
}

/// The complementary coupling into the gain mode; V_good + V_bad = D_I.
pub fn v_good_interaction(sf: &SpectralFrame, s: Orientation, t: f64) -> Pauli {
    let td = sf.theta_dot_at(t);
    let e = (2.0 * I * sf.big_lambda_at(t)).exp();
    match s {
        Orientation::Plus => raising(td * e),
        Orientation::Minus => lowering(-td / e),
    }
}

fn raising(c: C64) -> Pauli {
    Pauli::new(C64::new(0.0, 0.0), c * 0.5, c * (0.5 * I))
}

fn lowering(c: C64) -> Pauli {
    Pauli::new(C64::new(0.0, 0.0), c * 0.5, c * (-0.5 * I))
}

/// The split of D_I used by the correction scheme for one orientation.
pub struct ControlDecomposition<'a> {
    pub sf: &'a SpectralFrame,
    pub s: Orientation,
}

impl ControlDecomposition<'_> {
    pub fn v_good(&self, t: f64) -> Mat2 {
        v_good_interaction(self.sf, self.s, t).to_matrix()
    }

    pub fn v_bad(&self, t: f64) -> Mat2 {
        v_bad_interaction(self.sf, self.s, t).to_matrix()
    }

    /// The ideal generator: D_easy,I = 0 in this frame, so it is V_good.
    pub fn ideal(&self, t: f64) -> Mat2 {
        self.v_good(t)
    }

    /// Interaction-frame image of the lab-frame control for the given fields.
    pub fn w(&self, delta_c: f64, g_c: f64, t: f64) -> Pauli {
        w_pauli(self.sf, t, delta_c, g_c)
    }
}

/// Frame factors (K_Δ, K_g) with W_I = Δ_c K_Δ + g_c K_g.
fn w_kernels(sf: &SpectralFrame, t: f64) -> (Pauli, Pauli) {
    let p = sf.loop_spec.point(t);
    let a = C64::new(p.delta, sf.gamma / 2.0);
    let lam = sf.lambda_at(t);
    let (sn, cs) = {
        let two = 2.0 * sf.big_lambda_at(t);
        (two.sin(), two.cos())
    };
    let kd = Pauli::new(a / lam, p.g / lam * cs, -p.g / lam * sn);
    let kg = Pauli::new(C64::from(p.g) / lam, -a / lam * cs, a / lam * sn);
    (kd, kg)
}

fn w_pauli(sf: &SpectralFrame, t: f64, delta_c: f64, g_c: f64) -> Pauli {
    let (kd, kg) = w_kernels(sf, t);
    kd * C64::from(delta_c) + kg * C64::from(g_c)
}

/// Interaction-frame Pauli coefficients of the lab-frame control
/// W = −Δ_c σ_z + g_c σ_x (the change of the traceless generator when the
/// path is shifted by (Δ_c, g_c)):
/// w_z = [(Δ + iΓ/2)Δ_c + g g_c]/λ, w_x = X cos 2Λ, w_y = −X sin 2Λ with
/// X = [gΔ_c − (Δ + iΓ/2)g_c]/λ.
pub fn w_interaction(fc: &FourierControl, lp: &LoopSpec, sf: &SpectralFrame, t: f64) -> Result<Pauli> {
    if lp.base() != sf.loop_spec.base() {
        return Err(Error::Consistency);
    }
    let lam = sf.lambda_at(t);
    if lam.norm() < crate::dynamics::EP_GUARD * sf.gamma {
        return Err(Error::Singularity {
            t,
            distance: lam.norm(),
        });
    }
    let f = fc.eval(control_phase(t, lp.t_f, lp.s));
    Ok(w_pauli(sf, t, f.delta, f.g))
}

/// Spectral frames of the base loop for both orientations.
#[derive(Clone, Debug)]
pub struct OrientedFrames {
    pub plus: SpectralFrame,
    pub minus: SpectralFrame,
}

impl OrientedFrames {
    pub fn build(base: &LoopSpec, sys: &SystemParams, n_grid: usize, jump_tol: f64) -> Result<Self> {
        let (plus, minus) = rayon::join(
            || build_spectral_frame(&base.with_orientation(Orientation::Plus), sys, n_grid, jump_tol),
            || build_spectral_frame(&base.with_orientation(Orientation::Minus), sys, n_grid, jump_tol),
        );
        Ok(Self {
            plus: plus?,
            minus: minus?,
        })
    }

    pub fn get(&self, s: Orientation) -> &SpectralFrame {
        match s {
            Orientation::Plus => &self.plus,
            Orientation::Minus => &self.minus,
        }
    }
}

/// Frame data tabulated at the panel quadrature nodes of one orientation.
struct NodeTable {
    s: Orientation,
    t_f: f64,
    panels: usize,
    widths: Vec<f64>,
    t: Vec<f64>,
    kd: Vec<Pauli>,
    kg: Vec<Pauli>,
    v_good: Vec<Mat2>,
    v_bad: Vec<Mat2>,
}

impl NodeTable {
    fn new(sf: &SpectralFrame, s: Orientation, rule: &PanelRule) -> Self {
        let panels = sf.len() - 1;
        let mut tab = NodeTable {
            s,
            t_f: sf.t_f(),
            panels,
            widths: sf.grid.windows(2).map(|w| w[1] - w[0]).collect(),
            t: Vec::with_capacity(panels * rule.len()),
            kd: Vec::new(),
            kg: Vec::new(),
            v_good: Vec::new(),
            v_bad: Vec::new(),
        };
        for i in 0..panels {
            for t in rule.points(sf.grid[i], sf.grid[i + 1]) {
                let (kd, kg) = w_kernels(sf, t);
                tab.t.push(t);
                tab.kd.push(kd);
                tab.kg.push(kg);
                tab.v_good.push(v_good_interaction(sf, s, t).to_matrix());
                tab.v_bad.push(v_bad_interaction(sf, s, t).to_matrix());
            }
        }
        tab
    }

    fn phase(&self, idx: usize) -> f64 {
        control_phase(self.t[idx], self.t_f, self.s)
    }

    fn w_prime(&self, controls: &[FourierControl], idx: usize) -> Mat2 {
        let u = self.phase(idx);
        let (dc, gc) = controls.iter().fold((0.0, 0.0), |(d, g), fc| {
            let f = fc.eval(u);
            (d + f.delta, g + f.g)
        });
        (self.kd[idx] * C64::from(dc) + self.kg[idx] * C64::from(gc)).to_matrix() * (-I)
    }

    fn integrate<T: crate::quadrature::Integrand>(&self, rule: &PanelRule, f: impl Fn(usize) -> T) -> T {
        let p = rule.len();
        let mut acc = T::zero();
        let mut buf = Vec::with_capacity(p);
        for i in 0..self.panels {
            buf.clear();
            buf.extend((0..p).map(|k| f(i * p + k)));
            acc = acc + rule.integrate(self.widths[i], &buf);
        }
        acc
    }

    /// ∫₀^{t_f} ½([D, ∫D] − [V_g, ∫V_g]) with D = V_g + V_b + W′.
    fn second_order(&self, rule: &PanelRule, controls: &[FourierControl]) -> Mat2 {
        let p = rule.len();
        let (mut run_d, mut run_g) = (Mat2::zeros(), Mat2::zeros());
        let (mut cum_d, mut cum_g) = (vec![Mat2::zeros(); p], vec![Mat2::zeros(); p]);
        let mut total = Mat2::zeros();
        for i in 0..self.panels {
            let d: Vec<Mat2> = (0..p)
                .map(|k| {
                    let j = i * p + k;
                    self.v_good[j] + self.v_bad[j] + self.w_prime(controls, j)
                })
                .collect();
            let g: Vec<Mat2> = (0..p).map(|k| self.v_good[i * p + k]).collect();
            let h = self.widths[i];
            let end_d = rule.cumulate(h, run_d, &d, &mut cum_d);
            let end_g = rule.cumulate(h, run_g, &g, &mut cum_g);
            let integrand: Vec<Mat2> = (0..p)
                .map(|k| (commutator(&d[k], &cum_d[k]) - commutator(&g[k], &cum_g[k])) * C64::from(0.5))
                .collect();
            total += rule.integrate(h, &integrand);
            run_d = end_d;
            run_g = end_g;
        }
        total
    }
}

/// Re/Im of the (z, x, y) Pauli components, six rows per orientation.
fn rows(p: &Pauli) -> [f64; 6] {
    [p.z.re, p.z.im, p.x.re, p.x.im, p.y.re, p.y.im]
}

/// M x = y for the Fourier coefficients of one correction order.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub m: DMatrix<f64>,
    pub y: DVector<f64>,
    pub basis: Vec<BasisFn>,
    pub order: u32,
    pub truncation: Truncation,
}

impl LinearSystem {
    pub fn n_coeffs(&self) -> usize {
        self.m.ncols()
    }
}

fn tables(frames: &OrientedFrames, rule: &PanelRule) -> [NodeTable; 2] {
    let (a, b) = rayon::join(
        || NodeTable::new(&frames.plus, Orientation::Plus, rule),
        || NodeTable::new(&frames.minus, Orientation::Minus, rule),
    );
    [a, b]
}

/// Columns of M: Re/Im of ∫₀^{t_f} W_I for a unit coefficient of each basis function.
fn control_matrix(tabs: &[NodeTable; 2], rule: &PanelRule, basis: &[BasisFn]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(12, basis.len());
    for (col, b) in basis.iter().enumerate() {
        for (r, tab) in tabs.iter().enumerate() {
            let integral = tab.integrate(rule, |j| {
                let v = b.eval(tab.phase(j)).0;
                let w = match b.field {
                    Field::Delta => tab.kd[j],
                    Field::Coupling => tab.kg[j],
                } * C64::from(v);
                w.to_matrix()
            });
            for (k, x) in rows(&Pauli::from_matrix(&integral)).iter().enumerate() {
                m[(6 * r + k, col)] = *x;
            }
        }
    }
    m
}

/// Order-n spurious vector, or the order-1 residual when `prior` holds
/// the installed order-1 control.
fn spurious(tab: &NodeTable, rule: &PanelRule, order: u32, prior: &[FourierControl]) -> Pauli {
    let first = tab.integrate(rule, |j| tab.v_bad[j] + tab.w_prime(prior, j));
    let total = if order >= 2 {
        first + tab.second_order(rule, prior)
    } else {
        first
    };
    Pauli::from_matrix(&total).scale(-I)
}

pub fn build_linear_system(
    frames: &OrientedFrames,
    truncation: &Truncation,
    order: u32,
    prior: &[FourierControl],
) -> Result<LinearSystem> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidParameter(format!("correction order must be 1 or 2, got {order}")));
    }
    let needed = (order - 1) as usize;
    if prior.len() != needed {
        return Err(Error::MissingPrior {
            order,
            needed,
            got: prior.len(),
        });
    }
    let rule = PanelRule::new(PANEL_POINTS);
    let tabs = tables(frames, &rule);
    let basis = truncation.basis();
    let m = control_matrix(&tabs, &rule, &basis);
    let mut y = DVector::zeros(12);
    for (r, tab) in tabs.iter().enumerate() {
        for (k, x) in rows(&spurious(tab, &rule, order, prior)).iter().enumerate() {
            y[6 * r + k] = *x;
        }
    }
    Ok(LinearSystem {
        m,
        y,
        basis,
        order,
        truncation: *truncation,
    })
}

/// The order-1 spurious vector of the corrected dynamics: Re/Im of
/// −i∫(V_bad,I + W′_I) over the base frames with `controls` installed.
pub fn first_order_spurious(frames: &OrientedFrames, controls: &[FourierControl]) -> DVector<f64> {
    let rule = PanelRule::new(PANEL_POINTS);
    let tabs = tables(frames, &rule);
    let mut y = DVector::zeros(12);
    for (r, tab) in tabs.iter().enumerate() {
        for (k, x) in rows(&spurious(tab, &rule, 1, controls)).iter().enumerate() {
            y[6 * r + k] = *x;
        }
    }
    y
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub control: FourierControl,
    pub residual: f64,
    pub singular_values: Vec<f64>,
}

/// Minimum-norm least-squares solution through the SVD; singular values
/// below `svd_cutoff`·σ_max are dropped.
pub fn solve_coefficients(ls: &LinearSystem, svd_cutoff: f64) -> Result<Solution> {
    if ls.n_coeffs() == 0 {
        return Err(Error::InvalidParameter("no Fourier coefficients to solve for".into()));
    }
    let svd = ls.m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::RankZero);
    }
    let eps = svd_cutoff * smax;
    let x = svd
        .solve(&ls.y, eps)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let residual = (&ls.m * &x - &ls.y).norm();
    Ok(Solution {
        control: FourierControl::from_coefficients(ls.order, ls.truncation, x.as_slice()),
        residual,
        singular_values: svd.singular_values.iter().copied().collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    pub n_grid: usize,
    pub jump_tol: f64,
    pub svd_cutoff: f64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            n_grid: crate::dynamics::DEFAULT_GRID,
            jump_tol: crate::dynamics::DEFAULT_JUMP_TOL,
            svd_cutoff: DEFAULT_SVD_CUTOFF,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub corrected: LoopSpec,
    pub controls: Vec<FourierControl>,
    pub systems: Vec<LinearSystem>,
    pub solutions: Vec<Solution>,
    pub frames: OrientedFrames,
}

/// Builds and solves the order-1 and (optionally) order-2 systems on the
/// base-loop frames and returns base + Σ W^(n).
pub fn synthesize_corrected_loop(
    base: &LoopSpec,
    sys: &SystemParams,
    max_order: u32,
    truncation: &Truncation,
    settings: &SynthesisSettings,
) -> Result<Synthesis> {
    if !(1..=2).contains(&max_order) {
        return Err(Error::InvalidParameter(format!("max_order must be 1 or 2, got {max_order}")));
    }
    let base = base.base();
    let frames = OrientedFrames::build(&base, sys, settings.n_grid, settings.jump_tol)?;
    let mut controls = Vec::new();
    let mut systems = Vec::new();
    let mut solutions = Vec::new();
    for order in 1..=max_order {
        let ls = build_linear_system(&frames, truncation, order, &controls)?;
        let sol = solve_coefficients(&ls, settings.svd_cutoff)?;
        controls.push(sol.control.clone());
        systems.push(ls);
        solutions.push(sol);
    }
    let corrected = base.with_controls(controls.clone());
    for s in [Orientation::Plus, Orientation::Minus] {
        build_spectral_frame(&corrected.with_orientation(s), sys, settings.n_grid, settings.jump_tol)?;
    }
    Ok(Synthesis {
        corrected,
        controls,
        systems,
        solutions,
        frames,
    })
}

/// Sum of the raising/lowering parts, used by tests of the generator split.
pub fn ladder(c_plus: C64, c_minus: C64) -> Mat2 {
    sigma_plus() * c_plus + sigma_minus() * c_minus
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{interaction_generator, DEFAULT_JUMP_TOL};
    use crate::linalg::{inverse, max_abs, sigma_x, sigma_z};
    use proptest::prelude::*;

    fn frames(tf: f64, n: usize) -> (LoopSpec, OrientedFrames) {
        let sys = SystemParams::unit();
        let lp = LoopSpec::standard(&sys, tf);
        let fr = OrientedFrames::build(&lp, &sys, n, DEFAULT_JUMP_TOL).unwrap();
        (lp, fr)
    }

    #[test]
    fn basis_skips_vanishing_functions() {
        let b = Truncation::standard().basis();
        assert_eq!(b.len(), 12);
        assert!(b[..6].iter().all(|f| f.field == Field::Delta && f.family == Family::Sin));
        assert!(b[6..].iter().all(|f| f.field == Field::Coupling && f.family == Family::OneMinusCos));
        let t = Truncation {
            k: (0, 2),
            l: (0, 0),
            m: (0, 0),
            n: (0, 1),
        };
        assert_eq!(t.basis().len(), 3);
    }

    proptest! {
        #[test]
        fn coefficients_round_trip_and_derivatives(x in proptest::collection::vec(-1.0f64..1.0, 12), u in 0.0f64..1.0) {
            let tr = Truncation::standard();
            let fc = FourierControl::from_coefficients(1, tr, &x);
            prop_assert_eq!(fc.coefficients(), x);
            let h = 1e-6;
            let (a, b) = (fc.eval(u - h), fc.eval(u + h));
            let f = fc.eval(u);
            prop_assert!(((b.delta - a.delta) / (2.0 * h) - f.delta_du).abs() < 1e-5 * (1.0 + f.delta_du.abs()));
            prop_assert!(((b.g - a.g) / (2.0 * h) - f.g_du).abs() < 1e-5 * (1.0 + f.g_du.abs()));
            // the fields vanish at the loop start, so corrected loops still close
            let z = fc.eval(0.0);
            prop_assert!(z.delta.abs() < 1e-15 && z.g.abs() < 1e-15);
        }
    }

    #[test]
    fn good_and_bad_parts_sum_to_generator() {
        let (_, fr) = frames(10.0, 512);
        for s in [Orientation::Plus, Orientation::Minus] {
            let sf = fr.get(s);
            let dec = ControlDecomposition { sf, s };
            for t in [0.0, 2.5, 7.1] {
                let full = interaction_generator(sf.theta_dot_at(t), sf.big_lambda_at(t));
                assert!(max_abs(&(dec.v_good(t) + dec.v_bad(t) - full)) < 1e-12 * max_abs(&full));
                assert_eq!(dec.ideal(t), dec.v_good(t));
            }
        }
    }

    #[test]
    fn w_matches_explicit_frame_change() {
        let (lp, fr) = frames(10.0, 512);
        let x: Vec<f64> = (0..12).map(|k| 0.01 * (k as f64 - 5.5)).collect();
        let fc = FourierControl::from_coefficients(1, Truncation::standard(), &x);
        for s in [Orientation::Plus, Orientation::Minus] {
            let sf = fr.get(s);
            let lps = lp.with_orientation(s).with_controls(vec![fc.clone()]);
            for t in [0.7, 4.2, 9.3] {
                let (dc, gc) = lps.control_fields(t);
                let w_lab = sigma_z() * C64::from(-dc) + sigma_x() * C64::from(gc);
                let sm = sf.s_matrix(sf.theta_at(t));
                let bl = sf.big_lambda_at(t);
                let p0 = Mat2::new((-I * bl).exp(), C64::new(0.0, 0.0), C64::new(0.0, 0.0), (I * bl).exp());
                let want = inverse(&p0) * inverse(&sm) * w_lab * sm * p0;
                let got = w_interaction(&fc, &lp.with_orientation(s), sf, t).unwrap().to_matrix();
                assert!(max_abs(&(got - want)) < 1e-9 * max_abs(&want), "{s:?} t={t}");
            }
        }
        let other = LoopSpec::standard(&SystemParams::unit(), 11.0);
        assert_eq!(w_interaction(&fc, &other, &fr.plus, 1.0).unwrap_err(), Error::Consistency);
    }

    #[test]
    fn prior_orders_are_required() {
        let (_, fr) = frames(10.0, 256);
        let tr = Truncation::standard();
        assert!(matches!(
            build_linear_system(&fr, &tr, 2, &[]),
            Err(Error::MissingPrior { order: 2, needed: 1, got: 0 })
        ));
        assert!(build_linear_system(&fr, &tr, 3, &[]).is_err());
    }

    #[test]
    fn zero_matrix_is_rank_zero() {
        let ls = LinearSystem {
            m: DMatrix::zeros(12, 12),
            y: DVector::from_element(12, 1.0),
            basis: Truncation::standard().basis(),
            order: 1,
            truncation: Truncation::standard(),
        };
        assert_eq!(solve_coefficients(&ls, DEFAULT_SVD_CUTOFF).unwrap_err(), Error::RankZero);
    }

    #[test]
    fn first_order_control_cancels_spurious_vector() {
        let sys = SystemParams::unit();
        let (lp, _) = frames(10.0, 1024);
        let settings = SynthesisSettings {
            n_grid: 1024,
            ..SynthesisSettings::default()
        };
        let syn = synthesize_corrected_loop(&lp, &sys, 1, &Truncation::standard(), &settings).unwrap();
        let ls = &syn.systems[0];
        assert_eq!((ls.m.nrows(), ls.m.ncols()), (12, 12));
        let y0 = first_order_spurious(&syn.frames, &[]);
        let y1 = first_order_spurious(&syn.frames, &syn.controls);
        assert!((&y0 - &ls.y).norm() < 1e-12 * y0.norm());
        // the residual of the least-squares solve is what is left over
        assert!((y1.norm() - syn.solutions[0].residual).abs() < 1e-8 * y0.norm());
        assert!(y0.norm() / y1.norm() > 100.0);
        assert!(syn.corrected.controls.len() == 1);
    }

    #[test]
    fn zero_coupling_needs_no_correction() {
        let sys = SystemParams::unit();
        let mut lp = LoopSpec::standard(&sys, 10.0);
        lp.zero_coupling = true;
        let settings = SynthesisSettings {
            n_grid: 256,
            ..SynthesisSettings::default()
        };
        let syn = synthesize_corrected_loop(&lp, &sys, 2, &Truncation::standard(), &settings).unwrap();
        for (ls, sol) in syn.systems.iter().zip(&syn.solutions) {
            // θ̇ vanishes up to the rounding of the finite differences
            assert!(ls.y.norm() < 1e-9, "{}", ls.y.norm());
            assert!(sol.control.coefficients().iter().all(|x| x.abs() < 1e-9));
        }
        for t in [0.0, 3.3, 10.0] {
            let (a, b) = (syn.corrected.point(t), lp.point(t));
            assert!((a.delta - b.delta).abs() < 1e-9 && (a.g - b.g).abs() < 1e-9);
        }
    }

    #[test]
    fn solution_is_linear_in_y() {
        let (_, fr) = frames(10.0, 512);
        let mut ls = build_linear_system(&fr, &Truncation::standard(), 1, &[]).unwrap();
        let x1 = solve_coefficients(&ls, DEFAULT_SVD_CUTOFF).unwrap().control.coefficients();
        ls.y *= 2.0;
        let x2 = solve_coefficients(&ls, DEFAULT_SVD_CUTOFF).unwrap().control.coefficients();
        for (a, b) in x1.iter().zip(&x2) {
            assert!((2.0 * a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        ls.y.fill(0.0);
        let x0 = solve_coefficients(&ls, DEFAULT_SVD_CUTOFF).unwrap();
        assert!(x0.control.coefficients().iter().all(|&x| x == 0.0));
        assert_eq!(x0.residual, 0.0);
    }

    #[test]
    fn well_conditioned_square_system_is_inverted() {
        let m = DMatrix::from_fn(12, 12, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 / (1.0 + (i + j) as f64) });
        let y = DVector::from_fn(12, |i, _| (i as f64).sin());
        let ls = LinearSystem {
            m: m.clone(),
            y: y.clone(),
            basis: Truncation::standard().basis(),
            order: 1,
            truncation: Truncation::standard(),
        };
        let sol = solve_coefficients(&ls, DEFAULT_SVD_CUTOFF).unwrap();
        let x = DVector::from_vec(sol.control.coefficients());
        let want = m.lu().solve(&y).unwrap();
        assert!((x - &want).norm() < 1e-12 * want.norm());
        assert!(sol.residual <= 1e-12 * y.norm());
    }

    /// ∫V_bad,I against composite Simpson with the closed-form θ̇ and a
    /// separately accumulated Λ.
    #[test]
    fn spurious_vector_against_brute_force() {
        use crate::dynamics::{lambda_principal, theta_dot_closed_form};
        let (_, fr) = frames(10.0, 1024);
        let ls = build_linear_system(&fr, &Truncation::standard(), 1, &[]).unwrap();
        for (r, s) in [Orientation::Plus, Orientation::Minus].into_iter().enumerate() {
            let sf = fr.get(s);
            let lp = &sf.loop_spec;
            let n = 20_000;
            let h = sf.t_f() / n as f64;
            let mut prev = sf.lambda[0];
            let mut lam = |t: f64| {
                let p = lp.point(t);
                let c = lambda_principal(p.delta, p.g, sf.gamma);
                let c = if (c - prev).norm() <= (c + prev).norm() { c } else { -c };
                prev = c;
                c
            };
            let mut big = vec![C64::new(0.0, 0.0); n + 1];
            let mut l0 = lam(0.0);
            for k in 0..n {
                let t = k as f64 * h;
                let (lm, l1) = (lam(t + 0.5 * h), lam(t + h));
                big[k + 1] = big[k] + (l0 + 4.0 * lm + l1) * (h / 6.0);
                l0 = l1;
            }
            let coupling = |k: usize| {
                let t = k as f64 * h;
                let td = theta_dot_closed_form(&lp.point(t), sf.gamma);
                let e = (2.0 * I * big[k]).exp();
                match s {
                    Orientation::Plus => -td / e,
                    Orientation::Minus => td * e,
                }
            };
            let mut c = C64::new(0.0, 0.0);
            for k in 0..=n {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                c += coupling(k) * (w * h / 3.0);
            }
            let p = match s {
                Orientation::Plus => lowering(c),
                Orientation::Minus => raising(c),
            }
            .scale(-I);
            let want = rows(&p);
            for k in 0..6 {
                let got = ls.y[6 * r + k];
                assert!((got - want[k]).abs() < 1e-9 * ls.y.norm(), "{s:?} row {k}: {got} vs {}", want[k]);
            }
        }
    }

    #[test]
    fn corrected_path_closes_and_keeps_selection() {
        use crate::magnus::{classify_gain_mode, default_gain_tol};
        use crate::metrics::normalized_probabilities;
        use crate::propagation::{exact_adiabatic, Settings};
        let sys = SystemParams::unit();
        let (lp, _) = frames(10.0, 1024);
        let settings = SynthesisSettings {
            n_grid: 1024,
            ..SynthesisSettings::default()
        };
        let syn = synthesize_corrected_loop(&lp, &sys, 2, &Truncation::standard(), &settings).unwrap();
        let peak = (0..=200)
            .map(|k| syn.corrected.control_fields(k as f64 * 0.05))
            .map(|(d, g)| d.abs().max(g.abs()))
            .fold(0.0, f64::max);
        assert!(peak > 1e-3 && peak < 0.5, "{peak}");
        let st = Settings {
            n_grid: 1024,
            ..Settings::default()
        };
        for s in [Orientation::Plus, Orientation::Minus] {
            let c = syn.corrected.with_orientation(s);
            let (a, b) = (c.point(0.0), c.point(10.0));
            let base = lp.with_orientation(s).point(0.0);
            assert!((a.delta - base.delta).abs() < 1e-15 && (a.g - base.g).abs() < 1e-15);
            assert!((b.delta - base.delta).abs() < 1e-15 && (b.g - base.g).abs() < 1e-15);
            let gain = |l: &LoopSpec| {
                let (sf, ex) = exact_adiabatic(l, &sys, &st).unwrap();
                let mode = classify_gain_mode(&sf, default_gain_tol(10.0));
                let p = normalized_probabilities(ex.last(), mode).unwrap();
                p.p[0][0].min(p.p[0][1])
            };
            assert!(gain(&c) >= gain(&lp.with_orientation(s)));
        }
    }
}
