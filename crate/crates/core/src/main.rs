use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use epflow::harness::{self, Experiment, ExperimentConfig, PlotKind, PlotSpec, Table};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "epflow", version, about = "Exceptional-point loop dynamics: exact flows, Magnus truncations and loop corrections")]
struct Cli {
    /// Worker threads for sweeps (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Accepted for scripting; every computation is deterministic and uses no RNG
    #[arg(long, global = true)]
    seedless: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; omitted sections take their defaults
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV file written by one of the experiment subcommands
    #[arg(long)]
    csv: PathBuf,

    #[arg(long)]
    x: String,

    /// Comma-separated y columns
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<String>,

    #[arg(long)]
    log_x: bool,

    #[arg(long)]
    log_y: bool,

    #[arg(long)]
    scatter: bool,

    #[arg(long)]
    title: Option<String>,

    /// SVG path, or a directory to place `<csv stem>.svg` in
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact flows for both orientations of one loop
    Trajectory(RunArgs),
    /// Time-averaged error of truncated interaction-frame flows over a duration sweep
    MagnusValidate(RunArgs),
    /// Average non-reciprocity error over the loop starting angle
    AlphaSweep(RunArgs),
    /// Average error and efficiency over the loop duration
    DurationSweep(RunArgs),
    /// Synthesize Fourier loop corrections and compare errors before and after
    Correct(RunArgs),
    /// Render one CSV as a static SVG plot
    Plot(PlotArgs),
}

fn run_experiment(exp: Experiment, args: &RunArgs) -> anyhow::Result<()> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = harness::run(&cfg, exp)?;
    let files = harness::emit_csv(&out, &dir)?;
    let failed = out.records.iter().filter(|r| r.error.is_some()).count();
    for r in out.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("point {} failed: {}", r.index, r.error.as_deref().unwrap_or(""));
    }
    println!(
        "{}: {} points ({} failed), wrote {} files to {}",
        exp.name(),
        out.records.len(),
        failed,
        files.len(),
        dir.display()
    );
    Ok(())
}

fn plot(args: &PlotArgs) -> anyhow::Result<()> {
    let table = Table::read_csv(&args.csv)?;
    let spec = PlotSpec {
        x: args.x.clone(),
        ys: args.y.clone(),
        log_x: args.log_x,
        log_y: args.log_y,
        kind: if args.scatter { PlotKind::Scatter } else { PlotKind::Line },
        title: args.title.clone().unwrap_or_else(|| table.name.clone()),
    };
    let svg = harness::render_svg(&table, &spec).with_context(|| format!("plotting {}", args.csv.display()))?;
    let stem = args.csv.file_stem().unwrap_or_default();
    let path = match &args.out {
        Some(p) if p.is_dir() => p.join(Path::new(stem).with_extension("svg")),
        Some(p) => p.clone(),
        None => args.csv.with_extension("svg"),
    };
    std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Trajectory(a) => run_experiment(Experiment::Trajectory, a),
        Command::MagnusValidate(a) => run_experiment(Experiment::MagnusValidation, a),
        Command::AlphaSweep(a) => run_experiment(Experiment::AlphaSweep, a),
        Command::DurationSweep(a) => run_experiment(Experiment::DurationSweep, a),
        Command::Correct(a) => run_experiment(Experiment::Correction, a),
        Command::Plot(a) => plot(a),
    }
}
