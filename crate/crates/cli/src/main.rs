use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use attikit::dataset::{extract_windows, load_trial, save_trial, Manifest, TrialFile, TrialMeta, Window, WindowSpec};
use attikit::eval::{evaluate, render_boxplots, render_report, Estimator, EstimatorRef, ReportFormat};
use attikit::imu::{simulate, SimulationSpec};
use attikit::loss::{loss_landscape, LossKind};
use attikit::nn::models::{build_model_b_with, ModelBConfig};
use attikit::nn::train::DEFAULT_PARAM_CAP;
use attikit::nn::{Model, ModelGraph, ModelKind, ToyProbe, WeightStore};
use attikit::sched::{geometric_grid, lr_at, lr_find, CycleForm, ScheduleSpec, StepChange};
use attikit::{Vec3, DEFAULT_SEED};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "attikit", version, about = "Attitude estimation toolkit")]
struct Cli {
    /// Seed for every random draw that is not seeded explicitly.
    #[arg(long, global = true, env = "ATTIKIT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Loss function utilities.
    Losses {
        #[command(subcommand)]
        command: LossesCommand,
    },
    /// Generate a synthetic IMU trial from a JSON spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a neural estimator over a trial.
    Infer(InferArgs),
    /// Sweep learning rates with short training probes.
    LrFind(LrFindArgs),
    /// Learning rate per step for a schedule.
    Schedule(ScheduleArgs),
    /// Score estimators on the trials of a manifest.
    Evaluate(EvaluateArgs),
}

#[derive(Subcommand)]
enum LossesCommand {
    /// Loss against rotation angle from π down to 0.
    Sweep {
        #[arg(long)]
        kind: LossKind,
        /// Rotation axis as `x,y,z`.
        #[arg(long, default_value = "1,0,0")]
        axis: String,
        #[arg(long, default_value_t = 181)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 200)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    stride: usize,
}

impl WindowArgs {
    fn spec(&self) -> Result<WindowSpec> {
        Ok(WindowSpec::new(self.window, self.stride)?)
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    trial: PathBuf,
    /// Sidecar JSON; defaults to the trial path with a `.json` extension.
    #[arg(long)]
    meta: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeModel {
    /// Model B with four LSTM units and eight dense units.
    MicroB,
    A,
    B,
}

#[derive(Args)]
struct LrFindArgs {
    #[arg(long, value_enum)]
    model: ProbeModel,
    /// A manifest (`.json`) or a single trial CSV with ground truth.
    #[arg(long)]
    data: PathBuf,
    /// Initial weights; drawn from the seed when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value = "qmea-nt")]
    loss: LossKind,
    #[arg(long, default_value_t = 5)]
    probe_steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    lr_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    lr_max: f64,
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Training windows, evenly picked from all trials.
    #[arg(long, default_value_t = 10)]
    max_windows: usize,
    #[arg(long, default_value_t = 24)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleKind {
    Constant,
    Exponential,
    Stepwise,
    Cyclical,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, value_enum)]
    kind: ScheduleKind,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    decay_rate: f64,
    #[arg(long, default_value_t = 100.0)]
    decay_step: f64,
    /// Multiply by this factor at each boundary.
    #[arg(long, conflicts_with = "amount")]
    factor: Option<f64>,
    /// Subtract this amount at each boundary.
    #[arg(long)]
    amount: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    boundaries: Vec<f64>,
    #[arg(long, default_value_t = 1e-4)]
    lower: f64,
    #[arg(long, default_value_t = 1e-2)]
    upper: f64,
    #[arg(long, default_value_t = 100.0)]
    stepsize: f64,
    /// `as-paper` keeps the printed cosine form, `triangular` stays within the bounds.
    #[arg(long, default_value = "as-paper")]
    clr_form: CycleForm,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `kind[:key=value,...]`: dead-reckon, cf, madgwick, mahony, ekf,
    /// model-a:weights=PATH, model-b:weights=PATH.
    #[arg(long = "estimator", required = true)]
    estimators: Vec<EstimatorRef>,
    /// Gain applied to every filter, e.g. `beta=0.05`.
    #[arg(long = "gain", value_parser = parse_gain)]
    gains: Vec<(String, f64)>,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write pooled per-estimator boxplot statistics as CSV.
    #[arg(long)]
    boxplots: Option<PathBuf>,
}

fn parse_gain(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("gain `{k}` needs a number, got `{v}`"))?;
    Ok((k.trim().to_owned(), v))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_axis(s: &str) -> Result<Vec3> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("axis `{s}` is not x,y,z"))?;
    let [x, y, z] = parts[..] else {
        bail!("axis `{s}` needs three components");
    };
    Ok(Vec3::new(x, y, z))
}

fn losses_sweep(kind: LossKind, axis: &str, steps: usize, out: Option<&Path>) -> Result<()> {
    let curve = loss_landscape(kind, parse_axis(axis)?, steps)?;
    let mut text = String::from("angle_rad,loss\n");
    for (angle, loss) in curve {
        writeln!(text, "{angle},{loss}")?;
    }
    emit(out, &text)
}

fn run_simulate(spec: &Path, out: &Path, seed: u64) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: SimulationSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
    let samples = simulate(&spec, seed)?;
    let meta = TrialMeta {
        name: spec.name.clone(),
        rate_hz: spec.trajectory.rate_hz,
        source: "simulated".into(),
    };
    save_trial(&TrialFile::new(meta, samples)?, out)?;
    Ok(())
}

fn run_infer(args: &InferArgs) -> Result<()> {
    let spec = args.window.spec()?;
    let trial = load_trial(&args.trial, args.meta.as_deref())?;
    let model = Model::new(args.model.build(spec.n)?, WeightStore::load(&args.weights)?)?;
    let mut text = String::from("t,qw,qx,qy,qz\n");
    for w in extract_windows(&trial, spec)? {
        let est = model.forward(&w)?;
        if est.degenerate {
            log::warn!("degenerate output at t = {}; identity written", w.t_center);
        }
        let [qw, qx, qy, qz] = est.q.to_array();
        writeln!(text, "{},{qw},{qx},{qy},{qz}", w.t_center)?;
    }
    emit(args.out.as_deref(), &text)
}

fn load_data(path: &Path) -> Result<Vec<TrialFile>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Ok(Manifest::load(path)?.load_trials()?)
    } else {
        Ok(vec![load_trial(path, None)?])
    }
}

fn training_windows(trials: &[TrialFile], spec: WindowSpec, max: usize) -> Result<Vec<Window>> {
    let mut all = Vec::new();
    for t in trials {
        all.extend(extract_windows(t, spec)?.into_iter().filter(|w| w.target.is_some()));
    }
    if all.is_empty() {
        bail!("no windows with ground truth in the training data");
    }
    if all.len() <= max {
        return Ok(all);
    }
    Ok((0..max).map(|i| all[i * all.len() / max].clone()).collect())
}

fn run_lr_find(args: &LrFindArgs, seed: u64) -> Result<()> {
    let graph: ModelGraph = match args.model {
        ProbeModel::MicroB => build_model_b_with(args.window, &ModelBConfig::micro())?,
        ProbeModel::A => ModelKind::A.build(args.window)?,
        ProbeModel::B => ModelKind::B.build(args.window)?,
    };
    let weights = match &args.weights {
        Some(p) => WeightStore::load(p)?,
        None => WeightStore::init(&graph, seed),
    };
    weights.check(&graph, false)?;
    let spec = WindowSpec::new(args.window, args.stride)?;
    let windows = training_windows(&load_data(&args.data)?, spec, args.max_windows)?;
    let probe = ToyProbe {
        graph: &graph,
        weights: &weights,
        windows: &windows,
        loss: args.loss,
        probe_steps: args.probe_steps,
    };
    let params = graph.param_count();
    if params > DEFAULT_PARAM_CAP {
        bail!(
            "{params} parameters exceed the finite-difference trainer cap of {DEFAULT_PARAM_CAP}; use --model micro-b"
        );
    }
    let grid = geometric_grid(args.lr_min, args.lr_max, args.points)?;
    let found = lr_find(&probe, &grid)?;
    let mut text = String::from("lr,loss\n");
    for (lr, loss) in &found.trace {
        writeln!(text, "{lr},{loss}")?;
    }
    emit(args.out.as_deref(), &text)?;
    eprintln!(
        "suggested lr {}{}",
        found.lr,
        if found.flat { " (flat trace)" } else { "" }
    );
    Ok(())
}

fn run_schedule(args: &ScheduleArgs) -> Result<()> {
    let spec = match args.kind {
        ScheduleKind::Constant => ScheduleSpec::constant(args.lr),
        ScheduleKind::Exponential => ScheduleSpec::Exponential {
            initial_lr: args.lr,
            decay_rate: args.decay_rate,
            decay_step: args.decay_step,
        },
        ScheduleKind::Stepwise => ScheduleSpec::Stepwise {
            initial_lr: args.lr,
            change: match (args.factor, args.amount) {
                (_, Some(a)) => StepChange::Amount(a),
                (Some(f), None) => StepChange::Factor(f),
                (None, None) => bail!("stepwise needs --factor or --amount"),
            },
            boundaries: args.boundaries.clone(),
        },
        ScheduleKind::Cyclical => ScheduleSpec::Cyclical {
            lower_bound: args.lower,
            upper_bound: args.upper,
            stepsize: args.stepsize,
            form: args.clr_form,
        },
    };
    let mut text = String::from("step,lr\n");
    for step in 0..args.steps {
        writeln!(text, "{step},{}", lr_at(&spec, step as f64)?)?;
    }
    emit(args.out.as_deref(), &text)
}

/// `Ok(true)` when every row succeeded.
fn run_evaluate(args: &EvaluateArgs) -> Result<bool> {
    let spec = args.window.spec()?;
    let trials = Manifest::load(&args.manifest)?.load_trials()?;
    let built: Vec<Box<dyn Estimator>> = args
        .estimators
        .iter()
        .map(|r| {
            r.build(&args.gains, spec)
                .with_context(|| format!("estimator {}", r.label()))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&dyn Estimator> = built.iter().map(|b| b.as_ref()).collect();
    let report = evaluate(&trials, &refs, spec)?;
    emit(args.out.as_deref(), &render_report(&report, args.format))?;
    if let Some(p) = &args.boxplots {
        emit(Some(p), &render_boxplots(&report))?;
    }
    Ok(!report.has_failures())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Losses {
            command: LossesCommand::Sweep { kind, axis, steps, out },
        } => losses_sweep(kind, &axis, steps, out.as_deref())?,
        Command::Simulate { spec, out } => run_simulate(&spec, &out, cli.seed)?,
        Command::Infer(args) => run_infer(&args)?,
        Command::LrFind(args) => run_lr_find(&args, cli.seed)?,
        Command::Schedule(args) => run_schedule(&args)?,
        Command::Evaluate(args) => {
            if !run_evaluate(&args)? {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
