//! TOML experiment description. Every physical quantity is in units of Γ.

use crate::control::{SynthesisSettings, Truncation};
use crate::dynamics::{LoopSpec, Orientation, SystemParams, DEFAULT_GRID, DEFAULT_JUMP_TOL};
use crate::magnus::DEFAULT_QUAD_TOL;
use crate::propagation::{Settings, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Trajectory,
    MagnusValidation,
    AlphaSweep,
    DurationSweep,
    Correction,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Trajectory => "trajectory",
            Experiment::MagnusValidation => "magnus-validation",
            Experiment::AlphaSweep => "alpha-sweep",
            Experiment::DurationSweep => "duration-sweep",
            Experiment::Correction => "correction",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub r0: f64,
    pub alpha: f64,
    pub s: i32,
    pub gamma_tf: f64,
    /// Forces g ≡ 0 along the whole loop.
    pub zero_coupling: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            r0: 0.5,
            alpha: 0.0,
            s: 1,
            gamma_tf: 50.0,
            zero_coupling: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub n_grid: usize,
    pub jump_tol: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub quad_tol: f64,
    pub svd_cutoff: f64,
    /// Samples kept per exported time series.
    pub output_samples: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            n_grid: DEFAULT_GRID,
            jump_tol: DEFAULT_JUMP_TOL,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            quad_tol: DEFAULT_QUAD_TOL,
            svd_cutoff: crate::control::DEFAULT_SVD_CUTOFF,
            output_samples: 513,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// α grid is 2πk/alpha_points, k = 0..alpha_points.
    pub alpha_points: usize,
    pub durations: Vec<f64>,
    pub orders: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alpha_points: 64,
            durations: vec![10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0],
            orders: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    pub max_order: u32,
    pub k: (u32, u32),
    pub l: (u32, u32),
    pub m: (u32, u32),
    pub n: (u32, u32),
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        let t = Truncation::standard();
        Self {
            max_order: 2,
            k: t.k,
            l: t.l,
            m: t.m,
            n: t.n,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub numerics: NumericsConfig,
    pub sweep: SweepConfig,
    pub correction: CorrectionConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let l = &self.loop_;
        if !(l.r0.is_finite() && l.r0 > 0.0) {
            bail!("loop.r0: must be positive and finite, got {}", l.r0);
        }
        if !l.alpha.is_finite() {
            bail!("loop.alpha: must be finite");
        }
        if l.s != 1 && l.s != -1 {
            bail!("loop.s: must be +1 or -1, got {}", l.s);
        }
        if !(l.gamma_tf.is_finite() && l.gamma_tf > 0.0) {
            bail!("loop.gamma_tf: must be positive, got {}", l.gamma_tf);
        }
        let n = &self.numerics;
        if n.n_grid < 8 {
            bail!("numerics.n_grid: need at least 8 samples, got {}", n.n_grid);
        }
        if !(n.jump_tol > 0.0 && n.jump_tol < 1.0) {
            bail!("numerics.jump_tol: must lie in (0, 1), got {}", n.jump_tol);
        }
        if !(n.rel_tol >= 1e-13 && n.rel_tol < 1.0) {
            bail!("numerics.rel_tol: must lie in [1e-13, 1), got {}", n.rel_tol);
        }
        if !(n.abs_tol > 0.0) {
            bail!("numerics.abs_tol: must be positive, got {}", n.abs_tol);
        }
        if !(n.quad_tol > 0.0) {
            bail!("numerics.quad_tol: must be positive, got {}", n.quad_tol);
        }
        if !(n.svd_cutoff > 0.0 && n.svd_cutoff < 1.0) {
            bail!("numerics.svd_cutoff: must lie in (0, 1), got {}", n.svd_cutoff);
        }
        if n.output_samples < 2 {
            bail!("numerics.output_samples: need at least 2, got {}", n.output_samples);
        }
        let s = &self.sweep;
        if let Some(d) = s.durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            bail!("sweep.durations: entries must be positive, got {d}");
        }
        if let Some(o) = s.orders.iter().find(|o| !(1..=4).contains(*o)) {
            bail!("sweep.orders: entries must lie in 1..=4, got {o}");
        }
        let c = &self.correction;
        if !(1..=2).contains(&c.max_order) {
            bail!("correction.max_order: must be 1 or 2, got {}", c.max_order);
        }
        for (name, (lo, hi)) in [("k", c.k), ("l", c.l), ("m", c.m), ("n", c.n)] {
            if lo > hi {
                bail!("correction.{name}: lower bound {lo} exceeds upper bound {hi}");
            }
        }
        if self.truncation().basis().is_empty() {
            bail!("correction: truncation ranges select no basis function");
        }
        Ok(())
    }

    pub fn system(&self) -> SystemParams {
        SystemParams::unit()
    }

    pub fn orientation(&self) -> Orientation {
        Orientation::from_sign(self.loop_.s).expect("validated")
    }

    pub fn loop_spec(&self) -> LoopSpec {
        self.loop_with(self.loop_.alpha, self.loop_.gamma_tf)
    }

    pub fn loop_with(&self, alpha: f64, gamma_tf: f64) -> LoopSpec {
        let sys = self.system();
        let mut lp = LoopSpec::circular(&sys, self.loop_.r0, alpha, self.orientation(), gamma_tf / sys.gamma);
        lp.zero_coupling = self.loop_.zero_coupling;
        lp
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        let n = self.sweep.alpha_points;
        (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
    }

    pub fn settings(&self) -> Settings {
        Settings {
            n_grid: self.numerics.n_grid,
            jump_tol: self.numerics.jump_tol,
            rel_tol: self.numerics.rel_tol,
            abs_tol: self.numerics.abs_tol,
        }
    }

    pub fn synthesis_settings(&self) -> SynthesisSettings {
        SynthesisSettings {
            n_grid: self.numerics.n_grid,
            jump_tol: self.numerics.jump_tol,
            svd_cutoff: self.numerics.svd_cutoff,
        }
    }

    pub fn truncation(&self) -> Truncation {
        let c = &self.correction;
        Truncation {
            k: c.k,
            l: c.l,
            m: c.m,
            n: c.n,
        }
    }
}
