//! Perturbative propagator in the interaction frame: Magnus terms Ω₁..Ω₄
//! by nested quadrature, truncated flows Φ_I^(n), asymptotic channel
//! amplitudes and the transfer efficiency η.

use crate::dynamics::{SpectralFrame, EP_GUARD};
use crate::error::{Error, Result};
use crate::linalg::{sigma_minus, sigma_plus, sigma_z, Mat2, C64, I};
use crate::propagation::{Flow, FrameKind, Trajectory};
use crate::quadrature::PanelRule;
use serde::{Deserialize, Serialize};

/// Default tolerance for the nested-quadrature error estimate.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Pauli-basis coefficients of the Magnus terms:
/// Ω₁ = f₊σ₊ − f₋σ₋, Ω₂ = ½f_z⁽²⁾σ_z, Ω₃ = f₊⁽³⁾σ₊ + f₋⁽³⁾σ₋, Ω₄ = ½f_z⁽⁴⁾σ_z.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MagnusTerms {
    pub f1_plus: C64,
    pub f1_minus: C64,
    pub f2_z: C64,
    pub f3_plus: C64,
    pub f3_minus: C64,
    pub f4_z: C64,
    pub t: f64,
}

impl MagnusTerms {
    pub fn omega(&self, k: usize) -> Mat2 {
        match k {
            1 => sigma_plus() * self.f1_plus - sigma_minus() * self.f1_minus,
            2 => sigma_z() * (self.f2_z * 0.5),
            3 => sigma_plus() * self.f3_plus + sigma_minus() * self.f3_minus,
            4 => sigma_z() * (self.f4_z * 0.5),
            _ => Mat2::zeros(),
        }
    }

    fn values(&self) -> [C64; 6] {
        [self.f1_plus, self.f1_minus, self.f2_z, self.f3_plus, self.f3_minus, self.f4_z]
    }

    fn from_values(v: [C64; 6], t: f64) -> Self {
        Self {
            f1_plus: v[0],
            f1_minus: v[1],
            f2_z: v[2],
            f3_plus: v[3],
            f3_minus: v[4],
            f4_z: v[5],
            t,
        }
    }
}

/// Φ_I^(n)(t): the ε-expansion of exp(Σ ε^k Ω_k) kept to order n.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedFlow {
    pub order: usize,
    pub flow: Flow,
}

/// Coupling a±(t) = θ̇ e^{±2iΛ} at arbitrary t.
fn couplings(sf: &SpectralFrame, t: f64) -> (C64, C64) {
    let td = sf.theta_dot_at(t);
    let e = (2.0 * I * sf.big_lambda_at(t)).exp();
    (td * e, td / e)
}

/// Runs `step` over every grid panel with a p-point rule, handing it the
/// panel width and the couplings at the panel nodes.
fn sweep_panels(sf: &SpectralFrame, rule: &PanelRule, mut step: impl FnMut(usize, f64, &[C64], &[C64])) {
    let p = rule.len();
    let mut ap = vec![C64::new(0.0, 0.0); p];
    let mut am = vec![C64::new(0.0, 0.0); p];
    for i in 0..sf.len() - 1 {
        let (a, b) = (sf.grid[i], sf.grid[i + 1]);
        for (k, t) in rule.points(a, b).enumerate() {
            let (x, y) = couplings(sf, t);
            ap[k] = x;
            am[k] = y;
        }
        step(i, b - a, &ap, &am);
    }
}

/// Magnus coefficients at every grid node, computed level by level with a
/// p-point panel rule. Inner integrals are carried to the quadrature nodes
/// through the rule's integration matrix, so each level costs O(N·p²).
pub fn magnus_table_with(sf: &SpectralFrame, p: usize) -> Vec<MagnusTerms> {
    let rule = PanelRule::new(p);
    let mut out = Vec::with_capacity(sf.len());
    out.push(MagnusTerms::default());
    let mut cur = [C64::new(0.0, 0.0); 6];
    let z = C64::new(0.0, 0.0);
    let (mut fp, mut fm, mut fz, mut c3, mut d3) =
        (vec![z; p], vec![z; p], vec![z; p], vec![z; p], vec![z; p]);
    let mut buf = vec![z; p];
    sweep_panels(sf, &rule, |i, h, ap, am| {
        let end_p = rule.cumulate(h, cur[0], ap, &mut fp);
        let end_m = rule.cumulate(h, cur[1], am, &mut fm);
        let dfz: Vec<C64> = (0..p).map(|k| am[k] * fp[k] - ap[k] * fm[k]).collect();
        let end_z = rule.cumulate(h, cur[2], &dfz, &mut fz);
        for k in 0..p {
            buf[k] = -0.5 * fz[k] * ap[k] + dfz[k] * fp[k] / 6.0;
        }
        let end_c = rule.cumulate(h, cur[3], &buf, &mut c3);
        for k in 0..p {
            buf[k] = -0.5 * fz[k] * am[k] + dfz[k] * fm[k] / 6.0;
        }
        let end_d = rule.cumulate(h, cur[4], &buf, &mut d3);
        for k in 0..p {
            buf[k] = ap[k] * d3[k] + am[k] * c3[k] + fz[k] * (fp[k] * am[k] + fm[k] * ap[k]) / 6.0;
        }
        let end_4 = cur[5] + rule.integrate(h, &buf);
        cur = [end_p, end_m, end_z, end_c, end_d, end_4];
        out.push(MagnusTerms::from_values(cur, sf.grid[i + 1]));
    });
    out
}

/// Magnus table with an error estimate from a second, higher-order rule.
pub fn magnus_table(sf: &SpectralFrame, quad_tol: f64) -> Result<Vec<MagnusTerms>> {
    if quad_tol < 1e-12 {
        return Err(Error::InvalidParameter(format!("quad_tol must be ≥ 1e-12, got {quad_tol}")));
    }
    let fine = magnus_table_with(sf, 12);
    let coarse = magnus_table_with(sf, 8);
    let mut worst = (0.0, 0usize);
    for (i, (a, b)) in fine.iter().zip(&coarse).enumerate() {
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            let e = (x - y).norm() / x.norm().max(1.0);
            if e > worst.0 {
                worst = (e, i);
            }
        }
    }
    if worst.0 > quad_tol {
        let i = worst.1.max(1);
        return Err(Error::Quadrature {
            a: sf.grid[i - 1],
            b: sf.grid[i],
            estimate: worst.0,
        });
    }
    Ok(fine)
}

/// Magnus coefficients at a grid node t.
pub fn magnus_coefficients(sf: &SpectralFrame, t: f64, quad_tol: f64) -> Result<MagnusTerms> {
    let i = sf
        .grid
        .iter()
        .position(|&x| x == t)
        .ok_or_else(|| Error::InvalidParameter(format!("t = {t} is not a grid node")))?;
    Ok(magnus_table(sf, quad_tol)?[i])
}

/// Φ_I^(n) assembled from the Magnus coefficients:
/// n = 1: 𝟙 + Ω₁; n = 2 adds Ω₂ + Ω₁²/2; n = 3 adds Ω₃ + Ω₁³/6;
/// n = 4 adds Ω₄ + {Ω₁, Ω₃}/2 + Ω₂²/2 − (f₊f₋/6)Ω₂ + Ω₁⁴/24.
pub fn phi_i_truncated(mt: &MagnusTerms, order: usize) -> Result<TruncatedFlow> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidParameter(format!("order must be 1..=4, got {order}")));
    }
    let (fp, fm, fz) = (mt.f1_plus, mt.f1_minus, mt.f2_z);
    let (c3, d3, f4) = (mt.f3_plus, mt.f3_minus, mt.f4_z);
    let pm = fp * fm;
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let (id, z, plus, minus) = match order {
        1 => (one, zero, fp, -fm),
        2 => (one - 0.5 * pm, 0.5 * fz, fp, -fm),
        3 => (one - 0.5 * pm, 0.5 * fz, fp + c3 - pm * fp / 6.0, -(fm - d3 - pm * fm / 6.0)),
        _ => (
            one + 0.5 * (fp * d3 - pm - fm * c3) + pm * pm / 24.0 + fz * fz / 8.0,
            0.5 * (fz + f4 - pm * fz / 6.0),
            fp + c3 - pm * fp / 6.0,
            -(fm - d3 - pm * fm / 6.0),
        ),
    };
    let m = Mat2::new(id + z, plus, minus, id - z);
    Ok(TruncatedFlow {
        order,
        flow: Flow::new(m, 0.0, mt.t),
    })
}

/// exp(Ω₁ + … + Ω_n); unimodular because the exponent is traceless.
pub fn magnus_exponential(mt: &MagnusTerms, order: usize) -> Mat2 {
    let x: Mat2 = (1..=order.min(4)).map(|k| mt.omega(k)).sum();
    let mu = (x * x)[(0, 0)].sqrt();
    let sinhc = if mu.norm() < 1e-8 { C64::new(1.0, 0.0) + mu * mu / 6.0 } else { mu.sinh() / mu };
    Mat2::identity() * mu.cosh() + x * sinhc
}

/// Dyson terms D_k(t) = ∫₀ᵗ A(t') D_{k−1}(t') dt' for k = 0..=4 at the grid nodes.
///
/// The truncated flow 𝟙 + D₁ + … + D_n equals the order-n expansion of the
/// Magnus exponential; summing the iterated integrals directly avoids the
/// cancellation between huge products of Magnus coefficients that the
/// closed assembly suffers once |Im Λ| is large.
pub fn dyson_table(sf: &SpectralFrame) -> Vec<[Mat2; 5]> {
    let p = 10;
    let rule = PanelRule::new(p);
    let mut out = Vec::with_capacity(sf.len());
    let mut cur = [Mat2::identity(), Mat2::zeros(), Mat2::zeros(), Mat2::zeros(), Mat2::zeros()];
    out.push(cur);
    let mut lower = vec![Mat2::identity(); p];
    let mut next = vec![Mat2::zeros(); p];
    let mut integrand = vec![Mat2::zeros(); p];
    sweep_panels(sf, &rule, |_, h, ap, am| {
        let a: Vec<Mat2> = (0..p).map(|k| sigma_plus() * ap[k] - sigma_minus() * am[k]).collect();
        lower.iter_mut().for_each(|m| *m = Mat2::identity());
        let mut end = cur;
        for level in 1..5 {
            for k in 0..p {
                integrand[k] = a[k] * lower[k];
            }
            end[level] = rule.cumulate(h, cur[level], &integrand, &mut next);
            std::mem::swap(&mut lower, &mut next);
        }
        cur = end;
        out.push(cur);
    });
    out
}

/// Φ_I^(n) along the grid from the Dyson terms.
pub fn truncated_interaction_trajectory(sf: &SpectralFrame, order: usize) -> Result<Trajectory> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidParameter(format!("order must be 1..=4, got {order}")));
    }
    let samples = dyson_table(sf)
        .iter()
        .zip(&sf.grid)
        .map(|(d, &t)| Flow::new(d[..=order].iter().sum(), 0.0, t))
        .collect();
    Ok(Trajectory {
        frame: FrameKind::Interaction,
        samples,
    })
}

/// Φ^(n) = Φ₀·Φ_I^(n) in the adiabatic frame.
pub fn truncated_adiabatic_trajectory(sf: &SpectralFrame, order: usize) -> Result<Trajectory> {
    let phi_i = truncated_interaction_trajectory(sf, order)?;
    crate::propagation::adiabatic_from_interaction(&phi_i, sf)
}

/// Which eigenmode is amplified at t_f.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainMode {
    PlusIsGain,
    MinusIsGain,
    Degenerate,
}

impl GainMode {
    /// Index of the gain mode in the (+, −) eigenbasis; + by convention when degenerate.
    pub fn gain_index(self) -> usize {
        match self {
            GainMode::MinusIsGain => 1,
            _ => 0,
        }
    }
}

/// Default degeneracy tolerance on Im Λ(t_f).
pub fn default_gain_tol(t_f: f64) -> f64 {
    1e-6 * t_f
}

pub fn classify_gain_mode(sf: &SpectralFrame, tol: f64) -> GainMode {
    let im = sf.big_lambda.last().map_or(0.0, |l| l.im);
    if im > tol {
        GainMode::PlusIsGain
    } else if im < -tol {
        GainMode::MinusIsGain
    } else {
        GainMode::Degenerate
    }
}

/// ln of the asymptotic squared channel amplitudes |Φ_{i,j}|², i, j ∈ {G, L}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelAmplitudes {
    pub log_gg: f64,
    pub log_lg: f64,
    pub log_gl: f64,
    pub log_ll: f64,
}

fn node_values(sf: &SpectralFrame, t: f64) -> Result<(C64, C64, C64)> {
    let (td, lam, big) = (sf.theta_dot_at(t), sf.lambda_at(t), sf.big_lambda_at(t));
    for (l, tt) in [(lam, t), (sf.lambda[0], 0.0)] {
        if l.norm() < EP_GUARD * sf.gamma {
            return Err(Error::Singularity {
                t: tt,
                distance: l.norm(),
            });
        }
    }
    Ok((td, lam, big))
}

pub fn asymptotic_channel_amplitudes(sf: &SpectralFrame, t: f64) -> Result<ChannelAmplitudes> {
    let (td, lam, big) = node_values(sf, t)?;
    let base = 2.0 * big.im.abs();
    let out = 2.0 * (td / (2.0 * lam)).norm().ln();
    let inn = 2.0 * (sf.theta_dot[0] / (2.0 * sf.lambda[0])).norm().ln();
    Ok(ChannelAmplitudes {
        log_gg: base,
        log_lg: base + out,
        log_gl: base + inn,
        log_ll: base + out + inn,
    })
}

/// η(t) = |θ̇(t)|² / (4|λ(t)|²).
pub fn efficiency_eta(sf: &SpectralFrame, t: f64) -> Result<f64> {
    let (td, lam, _) = node_values(sf, t)?;
    Ok(0.25 * td.norm_sqr() / lam.norm_sqr())
}
