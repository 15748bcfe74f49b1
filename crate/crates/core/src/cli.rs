//! The `isoc` command line: ground-truth generation, forward solves,
//! inversion, evaluation and trajectory sampling.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::isoc::{isoc_solve, predict, IsocConfig};
use crate::lqs::{self, LqsOptions};
use crate::model::{GroundTruthMoments, ModelBundle, ModelKind};
use crate::objective::{self, FitReport, ObjectiveConfig};
use crate::{io, lqg, montecarlo, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "isoc", version, about = "Forward and inverse LQG/LQS stochastic optimal control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write ground-truth measured moments for a model file.
    GenTruth(GenTruthArgs),
    /// Solve for gains and propagate the moments of a model file.
    Forward(ForwardArgs),
    /// Recover free cost weights and noise parameters from ground truth.
    Invert(InvertArgs),
    /// Compare two measured-moment files.
    Eval(EvalArgs),
    /// Simulate closed-loop trajectories.
    Sample(SampleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Lqg,
    Lqs,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lqg => ModelKind::Lqg,
            KindArg::Lqs => ModelKind::Lqs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TruthMode {
    Analytic,
    Sampled,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Override the model kind stored in the model file.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
}

impl ModelArgs {
    fn load(&self) -> Result<(ModelBundle, ModelKind)> {
        let bundle = ModelBundle::load(&self.model)?;
        let kind = self.kind.map_or(bundle.kind, ModelKind::from);
        Ok((bundle, kind))
    }
}

#[derive(Debug, Args)]
pub struct GenTruthArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "analytic")]
    pub mode: TruthMode,
    /// Sample count for `--mode sampled`.
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sampling.
    #[arg(long, env = "ISOC_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ground-truth measured moments (CSV).
    #[arg(long)]
    pub truth: PathBuf,
    /// Search configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "ISOC_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference measured moments (CSV).
    #[arg(long)]
    pub truth: PathBuf,
    /// Moments to score against the reference (CSV).
    #[arg(long)]
    pub predicted: PathBuf,
    /// Objective weights (JSON); uniform diagonal weights by default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write `report.json` and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "ISOC_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command invocation, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<InputFile>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub version: String,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

struct Run {
    command: &'static str,
    started: Instant,
    inputs: Vec<InputFile>,
    seed: Option<u64>,
    config: serde_json::Value,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Self { command, started: Instant::now(), inputs: Vec::new(), seed: None, config: serde_json::Value::Null }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputFile { path: path.to_path_buf(), sha256: sha256_file(path)? });
        Ok(())
    }

    fn finish(self, out: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            args: std::env::args().collect(),
            inputs: self.inputs,
            seed: self.seed,
            config: self.config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        io::write_json(&out.join("manifest.json"), &manifest)
    }
}

fn default_workers(workers: Option<usize>) -> usize {
    workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from)).max(1)
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn channel_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y_{i}")).collect()
}

fn solve_gains(bundle: &ModelBundle, kind: ModelKind) -> Result<(lqg::GainSchedule, Option<lqs::LqsDiagnostics>)> {
    match kind {
        ModelKind::Lqg => Ok((lqg::solve(bundle)?, None)),
        ModelKind::Lqs => {
            let (gains, state) = lqs::solve(bundle, LqsOptions::default())?;
            let diagnostics = state.diagnostics();
            if !diagnostics.converged {
                eprintln!(
                    "warning: LQS iteration stopped after {} sweeps with gain change {:e}",
                    diagnostics.iterations, diagnostics.gain_delta
                );
            }
            Ok((gains, Some(diagnostics)))
        }
    }
}

pub fn cmd_gen_truth(args: &GenTruthArgs) -> Result<()> {
    let mut run = Run::new("gen-truth");
    let (bundle, kind) = args.model.load()?;
    run.input(&args.model.model)?;
    let sys = &bundle.system;
    let truth = match args.mode {
        TruthMode::Analytic => predict(&bundle, kind, LqsOptions::default())?,
        TruthMode::Sampled => {
            run.seed = Some(args.seed);
            let (gains, _) = solve_gains(&bundle, kind)?;
            let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
            let pool = crate::isoc::worker_pool(default_workers(args.workers))?;
            let batch = pool.install(|| montecarlo::sample_trajectories(sys, &gains, &noise, args.samples, args.seed, kind))?;
            montecarlo::estimate_moments(&batch)?
        }
    };
    run.config = serde_json::json!({
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "kind": kind,
        "samples": (args.mode == TruthMode::Sampled).then_some(args.samples),
    });
    prepare_out(&args.out)?;
    io::write_moments_file(&args.out.join("truth.csv"), &truth)?;
    run.finish(&args.out)
}

pub fn cmd_forward(args: &ForwardArgs) -> Result<()> {
    let mut run = Run::new("forward");
    let (bundle, kind) = args.model.load()?;
    run.input(&args.model.model)?;
    let sys = &bundle.system;
    let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
    let (gains, diagnostics) = solve_gains(&bundle, kind)?;
    let trajectory = match kind {
        ModelKind::Lqg => lqg::propagate_moments(sys, &gains, &noise)?,
        ModelKind::Lqs => lqs::propagate_moments(sys, &gains, &noise)?,
    };
    let measured = trajectory.measured(sys);
    run.config = serde_json::json!({ "kind": kind });
    prepare_out(&args.out)?;
    io::write_json(&args.out.join("gains.json"), &gains)?;
    io::write_trajectory_file(&args.out.join("moments.csv"), &trajectory)?;
    io::write_moments_file(&args.out.join("measured.csv"), &measured)?;
    io::write_plot_file(&args.out.join("plot.csv"), &[("forward", &measured)], &channel_names(sys.n_measured()))?;
    if let Some(d) = diagnostics {
        io::write_json(&args.out.join("diagnostics.json"), &d)?;
    }
    run.finish(&args.out)
}

#[derive(Serialize)]
struct InvertOutput<'a> {
    #[serde(flatten)]
    result: &'a crate::isoc::IsocResult,
    trace_records: usize,
}

pub fn cmd_invert(args: &InvertArgs) -> Result<()> {
    let mut run = Run::new("invert");
    let (bundle, _) = args.model.load()?;
    let truth = io::read_moments_file(&args.truth)?;
    let mut cfg: IsocConfig = serde_json::from_slice(&std::fs::read(&args.config)?)?;
    if let Some(kind) = args.model.kind {
        cfg.kind = Some(kind.into());
    }
    bundle.validate()?;
    cfg.validate(&bundle)?;
    truth.validate(bundle.system.n_measured(), bundle.system.horizon)?;
    for path in [&args.model.model, &args.truth, &args.config] {
        run.input(path)?;
    }
    run.config = serde_json::to_value(&cfg)?;

    let workers = default_workers(args.workers);
    let result = isoc_solve(&truth, &bundle, &cfg, workers)?;
    let fitted = result.apply(&bundle)?;
    let predicted = predict(&fitted, result.kind, cfg.lqs)?;

    prepare_out(&args.out)?;
    io::write_json(&args.out.join("result.json"), &InvertOutput { result: &result, trace_records: result.trace.len() })?;
    io::write_json_lines(&args.out.join("trace.jsonl"), &result.trace)?;
    io::write_moments_file(&args.out.join("predicted.csv"), &predicted)?;
    io::write_plot_file(
        &args.out.join("plot.csv"),
        &[("truth", &truth), ("fitted", &predicted)],
        &channel_names(bundle.system.n_measured()),
    )?;
    println!("{}", format_report(&result.report));
    println!("evaluations: {}  wall time: {:.1} s", result.evaluations, result.wall_time_s);
    run.finish(&args.out)
}

/// Per-channel VAF table followed by the objective value.
pub fn format_report(report: &FitReport) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
    let mut text = format!("{:<8} {:>12} {:>12}\n", "channel", "mean VAF", "var VAF");
    for (i, (m, v)) in report.m_vaf.iter().zip(report.omega_vaf.diagonal()).enumerate() {
        let _ = writeln!(text, "{:<8} {:>12} {:>12}", format!("y_{}", i + 1), cell(*m), cell(v));
    }
    let _ = write!(text, "J_ISOC {:.6}", report.j_isoc);
    text
}

pub fn evaluate_files(truth: &GroundTruthMoments, predicted: &GroundTruthMoments, cfg: &ObjectiveConfig) -> Result<FitReport> {
    if truth.dim() != predicted.dim() || truth.len() != predicted.len() {
        return Err(Error::Dimension("moment files differ in dimension or length".into()));
    }
    objective::fit_report(predicted, truth, cfg)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut run = Run::new("eval");
    let truth = io::read_moments_file(&args.truth)?;
    let predicted = io::read_moments_file(&args.predicted)?;
    let cfg = match &args.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => ObjectiveConfig::diagonal(truth.dim(), 1.0, 1.0),
    };
    let report = evaluate_files(&truth, &predicted, &cfg)?;
    println!("{}", format_report(&report));
    if let Some(out) = &args.out {
        run.input(&args.truth)?;
        run.input(&args.predicted)?;
        run.config = serde_json::to_value(&cfg)?;
        prepare_out(out)?;
        io::write_json(&out.join("report.json"), &report)?;
        run.finish(out)?;
    }
    Ok(())
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let mut run = Run::new("sample");
    let (bundle, kind) = args.model.load()?;
    run.input(&args.model.model)?;
    run.seed = Some(args.seed);
    run.config = serde_json::json!({ "kind": kind, "samples": args.samples });
    let sys = &bundle.system;
    let (gains, _) = solve_gains(&bundle, kind)?;
    let noise = bundle.noise.assemble(&sys.b, &sys.h)?;
    let pool = crate::isoc::worker_pool(default_workers(args.workers))?;
    let batch = pool.install(|| montecarlo::sample_trajectories(sys, &gains, &noise, args.samples, args.seed, kind))?;
    prepare_out(&args.out)?;
    io::write_batch_files(&args.out.join("batch.csv"), &args.out.join("batch.json"), &batch)?;
    run.finish(&args.out)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenTruth(a) => cmd_gen_truth(a),
        Command::Forward(a) => cmd_forward(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sample(a) => cmd_sample(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
