//! `flashcap` command-line entry points and the review-session service.
//!
//! Usage errors exit with 2. Validation failures exit with 1 and print one
//! JSON line `{"error": kind, "message": text}` on stderr.

pub mod service;
pub mod session;

use std::ffi::OsString;
use std::fmt::Debug;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use flashcap_core::event::{read_any, write_csv, write_event_file};
use flashcap_core::labels::LabelError;
use flashcap_core::led::LedError;
use flashcap_core::timing::downsample;
use flashcap_core::{
    ablation_run, annotate_stream, detect_crossing, format_table, precision_recall, scenario, simulate, timing_error,
    trajectory_from_labels, AblationFlags, AnnotateError, ConfigError, EvalError, EventError, GroundTruthLabels, LabelSet,
    LedTable, LineSpec, PipelineConfig, SceneConfig, SimError, TimingError,
};
use serde_json::json;
use thiserror::Error;

use crate::session::SessionError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Led(#[from] LedError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("thresholds violated: {0}")]
    Threshold(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Leading identifier of a value's `Debug` form, i.e. its variant name.
fn variant(e: &impl Debug) -> String {
    let text = format!("{e:?}");
    text.split(|c: char| !c.is_alphanumeric() && c != '_').next().unwrap_or_default().to_owned()
}

impl CliError {
    /// Machine-readable name of the innermost failure.
    pub fn kind(&self) -> String {
        match self {
            CliError::Config(e) => variant(e),
            CliError::Event(e) => variant(e),
            CliError::Led(e) => variant(e),
            CliError::Label(e) => variant(e),
            CliError::Sim(e) => variant(e),
            CliError::Annotate(AnnotateError::Config(e)) | CliError::Eval(EvalError::Annotate(AnnotateError::Config(e))) => {
                variant(e)
            }
            CliError::Annotate(e) | CliError::Eval(EvalError::Annotate(e)) => variant(e),
            CliError::Eval(e) => variant(e),
            CliError::Timing(e) => variant(e),
            CliError::Session(e) => variant(e),
            CliError::Invalid(_) => "InvalidArgument".into(),
            CliError::Threshold(_) => "ThresholdViolated".into(),
            CliError::Io(_) => "Io".into(),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "flashcap", version, about = "Label blinking-LED markers in event-camera streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene to an event stream with ground truth.
    Simulate(SimulateArgs),
    /// Label an event stream.
    Annotate(AnnotateArgs),
    /// Score labels against ground truth.
    Eval(EvalArgs),
    /// Find when a joint crosses a line.
    Timing(TimingArgs),
    /// Score the complete pipeline and each single ablation.
    Ablate(AblateArgs),
    /// Build a review-session directory.
    Session(SessionArgs),
    /// Serve a review session over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in scenario name or path to a scene TOML file.
    scene: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cut the scene to this many milliseconds.
    #[arg(long)]
    duration_ms: Option<u64>,
    /// Event output, `.fevt` or `.csv`.
    #[arg(short, long)]
    out: PathBuf,
    /// Ground-truth labels output.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// LED table output.
    #[arg(long)]
    leds: Option<PathBuf>,
    /// Scene metadata output, including line-crossing truth.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Pipeline config TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_time_distance: bool,
    #[arg(long)]
    no_period_distance: bool,
    #[arg(long)]
    no_outlier_filter: bool,
    #[arg(long)]
    no_tracking: bool,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let base = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let flags = AblationFlags {
            no_time_distance: self.no_time_distance,
            no_period_distance: self.no_period_distance,
            no_outlier_filter: self.no_outlier_filter,
            no_tracking: self.no_tracking,
        };
        let cfg = flags.apply(&base);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    /// Event input, `.fevt` or `.csv`.
    input: PathBuf,
    #[arg(long)]
    leds: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    tol: f64,
    /// Exit with 1 when precision falls below this.
    #[arg(long)]
    min_precision: Option<f64>,
    /// Exit with 1 when recall falls below this.
    #[arg(long)]
    min_recall: Option<f64>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct TimingArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Line endpoints `x0,y0,x1,y1`.
    #[arg(long)]
    line: String,
    #[arg(long)]
    joint: String,
    /// Ignore crossings before this time, µs.
    #[arg(long, default_value_t = 0)]
    start: u64,
    /// Use the infinite line instead of the segment.
    #[arg(long)]
    unbounded: bool,
    /// Keep every n-th label sample.
    #[arg(long, default_value_t = 1)]
    downsample: usize,
    /// Reference crossing time, µs; adds `error_ms` to the output.
    #[arg(long)]
    reference: Option<f64>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    input: PathBuf,
    #[arg(long)]
    leds: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    tol: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SessionArgs {
    /// Session directory to create.
    dir: PathBuf,
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    leds: PathBuf,
    /// Auto labels; computed from the stream when omitted.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long, env = "FLASHCAP_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Annotate(a) => cmd_annotate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Timing(a) => cmd_timing(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Session(a) => cmd_session(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut scene = if Path::new(&a.scene).is_file() {
        let mut s = SceneConfig::load(&a.scene)?;
        s.seed = a.seed;
        s
    } else {
        scenario(&a.scene, a.seed)?
    };
    if let Some(ms) = a.duration_ms {
        scene = scene.truncated(ms * 1000);
    }
    let out = simulate(&scene)?;
    if is_csv(&a.out) {
        write_csv(fs::File::create(&a.out)?, out.stream.events())?;
    } else {
        write_event_file(&a.out, &out.stream)?;
    }
    if let Some(path) = &a.labels {
        fs::write(path, out.truth.to_flbl())?;
    }
    if let Some(path) = &a.leds {
        fs::write(path, out.leds.to_toml())?;
    }
    if let Some(path) = &a.meta {
        fs::write(path, out.metadata.to_toml())?;
    }
    println!(
        "{}",
        json!({
            "scene": scene.name,
            "seed": scene.seed,
            "events": out.stream.events().len(),
            "ticks": out.truth.ticks.len(),
            "leds": out.leds.len(),
        })
    );
    Ok(())
}

fn cmd_annotate(a: AnnotateArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let leds = LedTable::load(&a.leds)?;
    let stream = read_any(&a.input)?;
    let start = Instant::now();
    let annotation = annotate_stream(&stream, &leds, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    annotation.labels.save(&a.out)?;
    println!(
        "{}",
        json!({
            "labels": annotation.labels.label_count(),
            "ticks": annotation.labels.frames.len(),
            "seconds": elapsed,
            "events_per_second": stream.events().len() as f64 / elapsed.max(1e-9),
            "diagnostics": annotation.diagnostics,
        })
    );
    Ok(())
}

fn check_thresholds(precision: f64, recall: f64, min_p: Option<f64>, min_r: Option<f64>) -> Result<()> {
    let mut violated = Vec::new();
    if let Some(m) = min_p.filter(|&m| precision < m) {
        violated.push(format!("precision {precision:.6} < {m}"));
    }
    if let Some(m) = min_r.filter(|&m| recall < m) {
        violated.push(format!("recall {recall:.6} < {m}"));
    }
    if violated.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(violated.join(", ")))
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if !(a.tol >= 0.0) {
        return Err(CliError::Invalid(format!("tol must be non-negative, got {}", a.tol)));
    }
    let pred = LabelSet::load(&a.pred)?;
    let gt = GroundTruthLabels::load(&a.gt)?;
    let r = precision_recall(&pred, &gt, a.tol)?;
    if a.json {
        println!("{}", serde_json::to_string(&r).expect("report serializes"));
    } else {
        let pct = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.6}"));
        println!("tolerance_px {}", r.tolerance_px);
        println!("precision    {}", pct(r.precision));
        println!("recall       {}", pct(r.recall));
        println!("tp {}  fp {}  fn {}", r.tp, r.fp, r.fn_);
        println!("{:<16} {:>10} {:>10} {:>10}", "led", "tp", "fp", "fn");
        for (id, c) in &r.per_led {
            println!("{:<16} {:>10} {:>10} {:>10}", id, c.tp, c.fp, c.fn_);
        }
    }
    check_thresholds(r.precision_or_zero(), r.recall_or_zero(), a.min_precision, a.min_recall)
}

fn parse_line(text: &str) -> Result<[f64; 4]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Invalid(format!("line {text:?}: {e}")))?;
    parts.try_into().map_err(|_| CliError::Invalid(format!("line {text:?}: expected x0,y0,x1,y1")))
}

fn cmd_timing(a: TimingArgs) -> Result<()> {
    let [x0, y0, x1, y1] = parse_line(&a.line)?;
    let labels = LabelSet::load(&a.labels)?;
    if !labels.led_ids.contains(&a.joint) {
        return Err(CliError::Invalid(format!("unknown joint {:?}", a.joint)));
    }
    let line = LineSpec { bounded: !a.unbounded, ..LineSpec::new((x0, y0), (x1, y1), a.joint.clone(), a.start) };
    let traj = downsample(&trajectory_from_labels(&labels, &a.joint), a.downsample);
    let t = detect_crossing(&traj, &line)?;
    let mut out = json!({ "joint": a.joint, "t_cross_us": t, "samples": traj.len() });
    if let Some(reference) = a.reference {
        out["error_ms"] = json!(timing_error(t, reference));
    }
    println!("{out}");
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let base = match &a.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let leds = LedTable::load(&a.leds)?;
    let gt = GroundTruthLabels::load(&a.gt)?;
    let stream = read_any(&a.input)?;
    let rows = ablation_run(&stream, &gt, &leds, &base, &AblationFlags::singles(), a.tol)?;
    if a.json {
        println!("{}", serde_json::to_string(&rows).expect("rows serialize"));
    } else {
        print!("{}", format_table(&rows));
    }
    Ok(())
}

fn cmd_session(a: SessionArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let leds = LedTable::load(&a.leds)?;
    let stream = read_any(&a.stream)?;
    let labels = match &a.labels {
        Some(path) => LabelSet::load(path)?,
        None => annotate_stream(&stream, &leds, &cfg)?.labels,
    };
    let manifest = session::create(&a.dir, &stream, &leds, &labels, &cfg)?;
    println!("{}", json!({ "id": manifest.id, "dir": a.dir }));
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Invalid(format!("address {}:{}: {e}", a.host, a.port)))?;
    let state = service::AppState::open(&a.session)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(state, addr))?;
    Ok(())
}
