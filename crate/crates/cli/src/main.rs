//! `huddle`: conversation layouts, model fitting, occluder rigs and session
//! simulation from the command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid flags or input files,
//! 3 domain errors (unsupported group size, untabulated FoV, too little
//! data, rejected session config).
//!
//! Relative output paths are resolved against `$HUDDLE_OUT_DIR` when set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use huddle::fit::{fit_samples, read_samples_csv, DEFAULT_MAX_ORDER};
use huddle::fov::DEFAULT_OCCLUDER_DISTANCE_M;
use huddle::svg::layout_svg;
use huddle::{
    layout_for, occluder_layout, pearson, spearman, Aspect, DecomposedFov, FieldOfView, FitError, FovError,
    ModelError, ModelFile, ModelTable, OccluderRig, SourcePolicy, Target, Warning,
};
use huddle_session::meter::write_rate_csv;
use huddle_session::sim::{self, SimConfig, SimError};
use huddle_session::transcript::write_jsonl;
use huddle_session::Mode;
use serde::Serialize;

const OUT_DIR_ENV: &str = "HUDDLE_OUT_DIR";

#[derive(Parser)]
#[command(name = "huddle", version, about = "Life-size avatar placement and session simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Predict a conversation layout for a display FoV and group size.
    Layout(LayoutArgs),
    /// Fit a monotone placement model to observations.
    Fit(FitArgs),
    /// Compute the occluder rig that narrows a device FoV to a target FoV.
    Occluders(OccluderArgs),
    /// Simulate a full-mesh streaming session and report bandwidth.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    /// Regressed models.
    Model,
    /// Optimal placements from the headset study; only 30, 40 and 50 degrees.
    Pilot,
}

#[derive(Args)]
struct LayoutArgs {
    /// Diagonal field of view in degrees.
    #[arg(long)]
    fov: f64,
    /// Display aspect ratio as W:H. Recorded but does not change predictions.
    #[arg(long, default_value = "3:2")]
    aspect: String,
    /// Number of remote participants (1 to 4).
    #[arg(long)]
    remote_users: usize,
    #[arg(long, value_enum, default_value = "model")]
    source: Source,
    /// Model JSON whose entries replace the built-in models.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Also write a top-down SVG plot here.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Write the layout JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with columns fov_deg,scenario,target,value.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_target)]
    target: Target,
    /// Number of remote participants the fitted model covers.
    #[arg(long)]
    scenario: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ORDER)]
    max_order: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OccluderArgs {
    /// Device diagonal FoV in degrees.
    #[arg(long)]
    device_fov: f64,
    /// Target diagonal FoV in degrees.
    #[arg(long)]
    target_fov: f64,
    #[arg(long, default_value = "3:2")]
    aspect: String,
    /// Distance of the occluder plane from the eye in meters.
    #[arg(long, default_value_t = DEFAULT_OCCLUDER_DISTANCE_M)]
    distance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    peers: usize,
    #[arg(long, value_parser = parse_mode, default_value = "avatar")]
    mode: Mode,
    #[arg(long, default_value_t = 10.0)]
    duration_s: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frame rate of the mode's media stream.
    #[arg(long)]
    fps: Option<u32>,
    /// On-wire size of each video frame in bytes, header included.
    #[arg(long)]
    frame_bytes: Option<usize>,
    #[arg(long, default_value_t = 20)]
    latency_ms: u64,
    #[arg(long, default_value_t = 5)]
    jitter_ms: u64,
    /// Length of the rate reporting window.
    #[arg(long, default_value_t = 1000)]
    window_ms: u64,
    /// Display FoV used to pick the placement each peer advertises.
    #[arg(long, default_value_t = sim::DEFAULT_FOV_DEG)]
    fov: f64,
    /// Rate report CSV [default: rates.csv in the output directory].
    #[arg(long)]
    rates: Option<PathBuf>,
    /// Record every state-machine event as JSON lines.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Io(String),
    Usage(String),
    Domain(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Usage(m) | Failure::Domain(m) => m,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<FovError> for Failure {
    fn from(e: FovError) -> Self {
        match e {
            FovError::InvalidInput(_) => Failure::Usage(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidModel(_) => Failure::Usage(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Csv(_) | FitError::InvalidSample(_) | FitError::InvalidOrder(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn create(p: &Path) -> Result<BufWriter<File>, Failure> {
    let path = out_path(p);
    File::create(&path).map(BufWriter::new).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    match out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn warn(w: &Warning) {
    eprintln!("warning: {w}");
}

fn cmd_layout(a: &LayoutArgs) -> Result<(), Failure> {
    let aspect: Aspect = a.aspect.parse()?;
    let fov = FieldOfView::new(a.fov, aspect)?;
    let mut table = ModelTable::builtin();
    if let Some(path) = &a.models {
        let file = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let doc: ModelFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        table = table.with_overrides(doc.models)?;
    }
    let policy = match a.source {
        Source::Model => SourcePolicy::Model,
        Source::Pilot => SourcePolicy::Pilot,
    };
    let result = layout_for(&table, &fov, a.remote_users, policy)?;
    result.layout.warnings.iter().for_each(warn);
    if let Some(p) = &a.svg {
        let mut w = create(p)?;
        w.write_all(layout_svg(&result.layout).as_bytes())?;
        w.flush()?;
    }
    emit_json(&result, a.out.as_deref())
}

fn cmd_fit(a: &FitArgs) -> Result<(), Failure> {
    let file = File::open(&a.input).map_err(|e| Failure::Io(format!("{}: {e}", a.input.display())))?;
    let samples = read_samples_csv(BufReader::new(file))?;
    let (fit, fovs, values) = fit_samples(&samples, a.target, a.scenario, a.max_order)?;
    let r = pearson(&fovs, &values).ok();
    let rho = spearman(&fovs, &values).ok();
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.4}"));
    eprintln!("pearson r = {}, spearman rho = {}", fmt(r), fmt(rho));
    for c in fit.candidates.iter().filter(|c| !c.monotone) {
        eprintln!("order {} rejected: not monotone on [0, 180]", c.order);
    }
    let model = fit.to_model(a.target, a.scenario)?;
    let doc = ModelFile { models: vec![model], fit: Some(fit.summary(fovs.len(), r, rho)) };
    emit_json(&doc, a.out.as_deref())
}

#[derive(Serialize)]
struct OccluderReport {
    device: DecomposedFov,
    target: DecomposedFov,
    rig: OccluderRig,
}

fn cmd_occluders(a: &OccluderArgs) -> Result<(), Failure> {
    let aspect: Aspect = a.aspect.parse()?;
    let device = FieldOfView::new(a.device_fov, aspect)?;
    let target = FieldOfView::new(a.target_fov, aspect)?;
    let rig = occluder_layout(&device, &target, a.distance)?;
    if rig.degenerate {
        warn(&Warning::DegenerateOccluders);
    }
    let report = OccluderReport { device: device.decompose(), target: target.decompose(), rig };
    emit_json(&report, a.out.as_deref())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let cfg = SimConfig {
        fps: a.fps,
        frame_bytes: a.frame_bytes,
        latency_ms: a.latency_ms,
        jitter_ms: a.jitter_ms,
        window_ms: a.window_ms,
        fov_deg: a.fov,
        record_transcript: a.transcript.is_some(),
        ..SimConfig::new(a.peers, a.mode, a.duration_s, a.seed)
    };
    let report = sim::run(&cfg)?;

    let rates = a.rates.clone().unwrap_or_else(|| PathBuf::from("rates.csv"));
    write_rate_csv(&report.rates, create(&rates)?)?;
    if let Some(p) = &a.transcript {
        write_jsonl(&report.transcript, create(p)?)?;
    }
    for s in report.summary.streams.iter().filter(|s| !s.pass) {
        eprintln!(
            "stream {} over budget: max window {} bit/s, budget {} bit/s{}",
            s.stream_id,
            s.max_window_bits_per_s,
            s.budget_bits_per_s,
            if s.starved { " (starved)" } else { "" }
        );
    }
    emit_json(&report.summary, a.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Layout(a) => cmd_layout(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Occluders(a) => cmd_occluders(a),
        Cmd::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
