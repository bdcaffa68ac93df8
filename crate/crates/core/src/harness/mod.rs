//! Experiment orchestration: config in, result records out, CSV and SVG
//! emission.

pub mod config;
pub mod svg;
pub mod table;

pub use config::{Experiment, ExperimentConfig};
pub use svg::{render_svg, PlotKind, PlotSpec};
pub use table::{Cell, Column, Table};

use crate::control::{first_order_spurious, synthesize_corrected_loop, Field, Family};
use crate::dynamics::{build_spectral_frame, LoopSpec, Orientation};
use crate::magnus::{classify_gain_mode, default_gain_tol, efficiency_eta, GainMode};
use crate::metrics::{average_error_with, magnus_fidelity_error, normalized_probabilities};
use crate::propagation::exact_adiabatic;
use rayon::prelude::*;
use std::f64::consts::LN_10;
use std::path::{Path, PathBuf};

/// Loop parameters of one sweep point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputEcho {
    pub r0: f64,
    pub alpha: f64,
    pub s: i32,
    pub gamma_tf: f64,
    pub zero_coupling: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub experiment: Experiment,
    pub index: usize,
    pub echo: InputEcho,
    /// Values in the order of the experiment's scalar schema; NaN when the
    /// point failed.
    pub scalars: Vec<f64>,
    pub arrays: Vec<Table>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub experiment: Experiment,
    pub scalar_columns: Vec<Column>,
    pub records: Vec<ResultRecord>,
}

type PointResult = anyhow::Result<(Vec<f64>, Vec<Table>)>;

struct Point {
    echo: InputEcho,
    lp: LoopSpec,
}

fn gain_sign(m: GainMode) -> f64 {
    match m {
        GainMode::PlusIsGain => 1.0,
        GainMode::MinusIsGain => -1.0,
        GainMode::Degenerate => 0.0,
    }
}

fn echo_of(lp: &LoopSpec, cfg: &ExperimentConfig) -> InputEcho {
    InputEcho {
        r0: lp.r0,
        alpha: lp.alpha,
        s: lp.s.sign() as i32,
        gamma_tf: lp.t_f * cfg.system().gamma,
        zero_coupling: lp.zero_coupling,
    }
}

fn sample_indices(len: usize, want: usize) -> Vec<usize> {
    if len <= want {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..want)
        .map(|k| ((k as f64) * (len - 1) as f64 / (want - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

fn scalar_columns(cfg: &ExperimentConfig, exp: Experiment) -> Vec<Column> {
    let c = Column::new;
    match exp {
        Experiment::Trajectory => vec![
            c("im_big_lambda_tf", "1"),
            c("gain_mode", "sign"),
            c("p_gg", "1"),
            c("p_gl", "1"),
            c("p_lg", "1"),
            c("p_ll", "1"),
            c("eta_tf", "1"),
        ],
        Experiment::MagnusValidation => {
            let mut v = vec![c("im_big_lambda_tf", "1")];
            v.extend(cfg.sweep.orders.iter().map(|n| c(&format!("delta_phi_i_{n}"), "1")));
            v
        }
        Experiment::AlphaSweep => vec![c("eps_bar", "1"), c("im_big_lambda_tf", "1")],
        Experiment::DurationSweep => vec![
            c("eps_bar", "1"),
            c("one_minus_p_gg", "1"),
            c("eta_tf", "1"),
            c("im_big_lambda_tf", "1"),
        ],
        Experiment::Correction => {
            let mut v = vec![c("eps_bar_base", "1")];
            for n in 1..=cfg.correction.max_order {
                v.push(c(&format!("eps_bar_order_{n}"), "1"));
            }
            v.push(c("reduction_factor", "1"));
            v.push(c("y1_norm_base", "1/Gamma"));
            v.push(c("y1_norm_corrected", "1/Gamma"));
            for n in 1..=cfg.correction.max_order {
                v.push(c(&format!("lsq_residual_order_{n}"), "1/Gamma"));
            }
            v
        }
    }
}

fn trajectory_point(cfg: &ExperimentConfig, lp: &LoopSpec) -> PointResult {
    let sys = cfg.system();
    let (sf, traj) = exact_adiabatic(lp, &sys, &cfg.settings())?;
    let mode = classify_gain_mode(&sf, default_gain_tol(lp.t_f));
    let last = normalized_probabilities(traj.last(), mode)?;
    let eta = efficiency_eta(&sf, lp.t_f)?;
    let mut series = Table::new(
        "series",
        vec![
            Column::new("t", "1/Gamma"),
            Column::new("log10_abs2_phi_pp", "log10"),
            Column::new("log10_abs2_phi_pm", "log10"),
            Column::new("log10_abs2_phi_mp", "log10"),
            Column::new("log10_abs2_phi_mm", "log10"),
            Column::new("p_pp", "1"),
            Column::new("p_pm", "1"),
            Column::new("p_mp", "1"),
            Column::new("p_mm", "1"),
            Column::new("delta", "Gamma"),
            Column::new("g", "Gamma"),
        ],
    );
    for k in sample_indices(traj.samples.len(), cfg.numerics.output_samples) {
        let f = &traj.samples[k];
        let p = crate::metrics::eigenbasis_probabilities(f)?;
        let mut row: Vec<Cell> = vec![f.t.into()];
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            row.push((f.log_abs2(i, j) / LN_10).into());
        }
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            row.push(p.p[i][j].into());
        }
        row.push(sf.delta[k].into());
        row.push(sf.g[k].into());
        series.push(row);
    }
    Ok((
        vec![
            sf.big_lambda.last().unwrap().im,
            gain_sign(mode),
            last.p[0][0],
            last.p[0][1],
            last.p[1][0],
            last.p[1][1],
            eta,
        ],
        vec![series],
    ))
}

fn magnus_point(cfg: &ExperimentConfig, lp: &LoopSpec) -> PointResult {
    let (sf, traj) = exact_adiabatic(lp, &cfg.system(), &cfg.settings())?;
    let mut out = vec![sf.big_lambda.last().unwrap().im];
    for &n in &cfg.sweep.orders {
        out.push(magnus_fidelity_error(&traj, &sf, n)?);
    }
    Ok((out, vec![]))
}

fn alpha_point(cfg: &ExperimentConfig, lp: &LoopSpec) -> PointResult {
    let sys = cfg.system();
    let eps = average_error_with(lp, &sys, &cfg.settings())?;
    let sf = build_spectral_frame(
        &lp.with_orientation(Orientation::Plus),
        &sys,
        cfg.numerics.n_grid,
        cfg.numerics.jump_tol,
    )?;
    Ok((vec![eps, sf.big_lambda.last().unwrap().im], vec![]))
}

fn duration_point(cfg: &ExperimentConfig, lp: &LoopSpec) -> PointResult {
    let sys = cfg.system();
    let eps = average_error_with(lp, &sys, &cfg.settings())?;
    let (sf, traj) = exact_adiabatic(lp, &sys, &cfg.settings())?;
    let mode = classify_gain_mode(&sf, default_gain_tol(lp.t_f));
    let p = normalized_probabilities(traj.last(), mode)?;
    Ok((
        vec![
            eps,
            1.0 - p.p[0][0],
            efficiency_eta(&sf, lp.t_f)?,
            sf.big_lambda.last().unwrap().im,
        ],
        vec![],
    ))
}

fn family_label(field: Field, family: Family) -> &'static str {
    match (field, family) {
        (Field::Delta, Family::OneMinusCos) => "c_delta",
        (Field::Delta, Family::Sin) => "d_delta",
        (Field::Coupling, Family::OneMinusCos) => "c_g",
        (Field::Coupling, Family::Sin) => "d_g",
    }
}

fn correction_point(cfg: &ExperimentConfig, lp: &LoopSpec) -> PointResult {
    let sys = cfg.system();
    let settings = cfg.settings();
    let syn = synthesize_corrected_loop(
        lp,
        &sys,
        cfg.correction.max_order,
        &cfg.truncation(),
        &cfg.synthesis_settings(),
    )?;
    let base = lp.base();
    let eps_base = average_error_with(&base, &sys, &settings)?;
    let mut out = vec![eps_base];
    let mut last = eps_base;
    for n in 1..=syn.controls.len() {
        last = average_error_with(&base.with_controls(syn.controls[..n].to_vec()), &sys, &settings)?;
        out.push(last);
    }
    out.push(eps_base / last);
    out.push(first_order_spurious(&syn.frames, &[]).norm());
    out.push(first_order_spurious(&syn.frames, &syn.controls[..1]).norm());
    out.extend(syn.solutions.iter().map(|s| s.residual));

    let mut coeffs = Table::new(
        "coefficients",
        vec![
            Column::new("order", "1"),
            Column::new("family", "text"),
            Column::new("index", "1"),
            Column::new("value", "Gamma"),
        ],
    );
    for fc in &syn.controls {
        for b in fc.truncation.basis() {
            coeffs.push(vec![
                (fc.order as f64).into(),
                family_label(b.field, b.family).into(),
                (b.index as f64).into(),
                fc.coefficient(&b).into(),
            ]);
        }
    }
    let mut fields = Table::new(
        "fields",
        vec![
            Column::new("t", "1/Gamma"),
            Column::new("delta_base", "Gamma"),
            Column::new("g_base", "Gamma"),
            Column::new("delta_c", "Gamma"),
            Column::new("g_c", "Gamma"),
            Column::new("delta", "Gamma"),
            Column::new("g", "Gamma"),
        ],
    );
    let n = cfg.numerics.output_samples;
    let corrected = syn.corrected.with_orientation(lp.s);
    let base = base.with_orientation(lp.s);
    for k in 0..n {
        let t = lp.t_f * k as f64 / (n - 1) as f64;
        let (b, c) = (base.point(t), corrected.point(t));
        let (dc, gc) = corrected.control_fields(t);
        fields.push(vec![
            t.into(),
            b.delta.into(),
            b.g.into(),
            dc.into(),
            gc.into(),
            c.delta.into(),
            c.g.into(),
        ]);
    }
    Ok((out, vec![coeffs, fields]))
}

fn points(cfg: &ExperimentConfig, exp: Experiment) -> Vec<Point> {
    let mk = |lp: LoopSpec| Point {
        echo: echo_of(&lp, cfg),
        lp,
    };
    match exp {
        Experiment::Trajectory => [Orientation::Plus, Orientation::Minus]
            .into_iter()
            .map(|s| mk(cfg.loop_spec().with_orientation(s)))
            .collect(),
        Experiment::MagnusValidation | Experiment::DurationSweep => cfg
            .sweep
            .durations
            .iter()
            .map(|&d| mk(cfg.loop_with(cfg.loop_.alpha, d)))
            .collect(),
        Experiment::AlphaSweep => cfg
            .alpha_grid()
            .into_iter()
            .map(|a| mk(cfg.loop_with(a, cfg.loop_.gamma_tf)))
            .collect(),
        Experiment::Correction => vec![mk(cfg.loop_spec())],
    }
}

/// Runs every sweep point in the current rayon pool. A failing point is
/// flagged in its own record and does not affect the others.
pub fn run(cfg: &ExperimentConfig, exp: Experiment) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    if let Some(e) = cfg.experiment {
        if e != exp {
            anyhow::bail!(
                "experiment: config names {:?} but {:?} was requested",
                e.name(),
                exp.name()
            );
        }
    }
    let f: fn(&ExperimentConfig, &LoopSpec) -> PointResult = match exp {
        Experiment::Trajectory => trajectory_point,
        Experiment::MagnusValidation => magnus_point,
        Experiment::AlphaSweep => alpha_point,
        Experiment::DurationSweep => duration_point,
        Experiment::Correction => correction_point,
    };
    Ok(run_points(cfg, exp, f))
}

fn run_points<F>(cfg: &ExperimentConfig, exp: Experiment, f: F) -> RunOutput
where
    F: Fn(&ExperimentConfig, &LoopSpec) -> PointResult + Sync,
{
    let cols = scalar_columns(cfg, exp);
    let mut records: Vec<ResultRecord> = points(cfg, exp)
        .into_par_iter()
        .enumerate()
        .map(|(index, p)| {
            let (scalars, arrays, error) = match f(cfg, &p.lp) {
                Ok((s, a)) => (s, a, None),
                Err(e) => (vec![f64::NAN; cols.len()], vec![], Some(format!("{e:#}"))),
            };
            ResultRecord {
                experiment: exp,
                index,
                echo: p.echo,
                scalars,
                arrays,
                error,
            }
        })
        .collect();
    records.sort_by_key(|r| r.index);
    RunOutput {
        config: cfg.clone(),
        experiment: exp,
        scalar_columns: cols,
        records,
    }
}

impl RunOutput {
    /// One row per record: index, input echo, scalars and an error flag.
    pub fn summary_table(&self) -> Table {
        let mut cols = vec![
            Column::new("index", "1"),
            Column::new("r0", "Gamma"),
            Column::new("alpha", "rad"),
            Column::new("s", "sign"),
            Column::new("gamma_tf", "1"),
            Column::new("zero_coupling", "bool"),
        ];
        cols.extend(self.scalar_columns.iter().cloned());
        cols.push(Column::new("failed", "bool"));
        cols.push(Column::new("error", "text"));
        let mut t = Table::new(self.experiment.name(), cols);
        for r in &self.records {
            let e = &r.echo;
            let mut row: Vec<Cell> = vec![
                (r.index as f64).into(),
                e.r0.into(),
                e.alpha.into(),
                (e.s as f64).into(),
                e.gamma_tf.into(),
                (e.zero_coupling as u8 as f64).into(),
            ];
            row.extend(r.scalars.iter().map(|&x| Cell::Num(x)));
            row.push((r.error.is_some() as u8 as f64).into());
            row.push(r.error.clone().unwrap_or_default().into());
            t.push(row);
        }
        t
    }
}

/// Writes `<experiment>.csv`, `<experiment>_config.toml` and one
/// `<experiment>_<index>_<array>.csv` per array output.
pub fn emit_csv(out: &RunOutput, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = out.experiment.name();
    let mut written = Vec::new();
    let p = dir.join(format!("{name}.csv"));
    out.summary_table().write_csv(&p)?;
    written.push(p);
    let p = dir.join(format!("{name}_config.toml"));
    std::fs::write(&p, out.config.to_toml())?;
    written.push(p);
    for r in &out.records {
        for a in &r.arrays {
            let p = dir.join(format!("{name}_{:03}_{}.csv", r.index, a.name));
            a.write_csv(&p)?;
            written.push(p);
        }
    }
    Ok(written)
}
