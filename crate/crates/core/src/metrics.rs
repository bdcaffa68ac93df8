//! Transfer probabilities, the time-averaged fidelity error of truncated
//! flows and the orientation-averaged non-reciprocity error ε̄.

use crate::dynamics::{LoopSpec, Orientation, SpectralFrame, SystemParams};
use crate::error::{Error, Result};
use crate::linalg::{Vec2, C64};
use crate::magnus::{truncated_adiabatic_trajectory, GainMode};
use crate::propagation::{exact_adiabatic, Flow, Settings, Trajectory};

/// P_{i,j}: probability of ending in mode i after starting in mode j.
/// Index 0 is the gain mode G (or + when no gain mode is defined).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityTable {
    pub p: [[f64; 2]; 2],
    pub t: f64,
}

/// Column-normalised |Φ_ij|² in the (+, −) eigenbasis. The common log
/// scale cancels, so no physical magnitude is ever formed.
pub fn eigenbasis_probabilities(flow: &Flow) -> Result<ProbabilityTable> {
    let m = &flow.matrix;
    let mut p = [[0.0; 2]; 2];
    for j in 0..2 {
        let (a, b) = (m[(0, j)].norm_sqr(), m[(1, j)].norm_sqr());
        let s = a + b;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DegenerateInput(format!("column {j} of the flow vanishes")));
        }
        p[0][j] = a / s;
        p[1][j] = b / s;
    }
    Ok(ProbabilityTable { p, t: flow.t })
}

/// P_{i,j} with i, j ∈ {G, L}.
pub fn normalized_probabilities(flow: &Flow, classification: GainMode) -> Result<ProbabilityTable> {
    let mut t = eigenbasis_probabilities(flow)?;
    if classification == GainMode::MinusIsGain {
        let q = t.p;
        t.p = [[q[1][1], q[1][0]], [q[0][1], q[0][0]]];
    }
    Ok(t)
}

/// The eigenvectors of σ_x, σ_y and σ_z.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialStateSet {
    pub states: [Vec2; 6],
}

impl InitialStateSet {
    pub fn pauli() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = |x: f64| C64::new(x, 0.0);
        let i = |x: f64| C64::new(0.0, x);
        Self {
            states: [
                Vec2::new(r(h), r(h)),
                Vec2::new(r(h), r(-h)),
                Vec2::new(r(h), i(h)),
                Vec2::new(r(h), i(-h)),
                Vec2::new(r(1.0), r(0.0)),
                Vec2::new(r(0.0), r(1.0)),
            ],
        }
    }
}

impl Default for InitialStateSet {
    fn default() -> Self {
        Self::pauli()
    }
}

/// δ = |1 − (1/6) Σ_j (1/t_f) ∫ |⟨e_j^approx(t), e_j(t)⟩|² dt| with the
/// time integral done by the trapezoid rule on the sample times.
pub fn time_averaged_error(exact: &Trajectory, approx: &Trajectory) -> Result<f64> {
    if exact.samples.len() != approx.samples.len() || exact.samples.len() < 2 {
        return Err(Error::Consistency);
    }
    let states = InitialStateSet::pauli();
    let times = exact.times();
    let span = times[times.len() - 1] - times[0];
    let mut total = 0.0;
    for c in &states.states {
        let fid: Vec<f64> = exact
            .samples
            .iter()
            .zip(&approx.samples)
            .map(|(x, y)| {
                let (e, _) = x.apply_normalized(c)?;
                let (ea, _) = y.apply_normalized(c)?;
                Ok(ea.dotc(&e).norm_sqr())
            })
            .collect::<Result<_>>()?;
        let integral: f64 = times
            .windows(2)
            .zip(fid.windows(2))
            .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
            .sum();
        total += integral / span;
    }
    Ok((1.0 - total / 6.0).abs())
}

/// δΦ^(n): time-averaged error of the order-n truncated flow Φ₀Φ_I^(n)
/// against the exact adiabatic-frame trajectory.
pub fn magnus_fidelity_error(exact: &Trajectory, sf: &SpectralFrame, order: usize) -> Result<f64> {
    let approx = truncated_adiabatic_trajectory(sf, order)?;
    time_averaged_error(exact, &approx)
}

/// Final-time eigenbasis probabilities of one orientation of a loop.
pub fn final_probabilities(
    lp: &LoopSpec,
    sys: &SystemParams,
    settings: &Settings,
) -> Result<ProbabilityTable> {
    let (_, traj) = exact_adiabatic(lp, sys, settings)?;
    eigenbasis_probabilities(traj.last())
}

/// ε̄ = 1 − ¼ Σ_j [P^{s=+1}_{+,j}(t_f) + P^{s=−1}_{−,j}(t_f)].
pub fn average_error(lp: &LoopSpec, sys: &SystemParams) -> Result<f64> {
    average_error_with(lp, sys, &Settings::default())
}

pub fn average_error_with(lp: &LoopSpec, sys: &SystemParams, settings: &Settings) -> Result<f64> {
    let (plus, minus) = rayon::join(
        || final_probabilities(&lp.with_orientation(Orientation::Plus), sys, settings),
        || final_probabilities(&lp.with_orientation(Orientation::Minus), sys, settings),
    );
    let (plus, minus) = (plus?, minus?);
    Ok(1.0 - 0.25 * (plus.p[0][0] + plus.p[0][1] + minus.p[1][0] + minus.p[1][1]))
}
