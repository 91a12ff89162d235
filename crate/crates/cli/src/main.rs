//! `atriumgeo` command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Reports go
//! to standard output as JSON, diagnostics to standard error.

mod commands;
mod json;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use atriumgeo::io::LabelMapping;
use atriumgeo::losses::LossConfig;
use atriumgeo::metrics::SurfaceScope;
use atriumgeo::{ElementShape, RegionMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "ATRIUMGEO_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] atriumgeo::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON input: {0}")]
    Json(#[from] serde_json::Error),
    /// Batch run where some cases failed; `report` still goes to stdout.
    #[error("{failed} case(s) failed")]
    Partial { report: String, failed: usize },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "atriumgeo", version, about = "Wall-band geometry priors, ROI losses and metrics for atrial scar segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cavity and wall signed distance maps.
    Sdm(SdmArgs),
    /// Morphological wall band around a cavity.
    Wallband(WallbandArgs),
    /// Wall band, boundary uncertainty band and their union.
    Bub(BubArgs),
    /// ROI Dice + weighted BCE for a logit volume.
    Loss(LossArgs),
    /// DSC, ASSD, centroid error and anatomical error rates.
    Metrics(MetricsArgs),
    /// Synthetic atrium with analytic ground truth.
    Phantom(PhantomArgs),
    /// Cavity mask to SDMs and supervision regions, optionally with loss and metrics.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SeArg {
    Disc,
    Ellipsoid,
}

impl From<SeArg> for ElementShape {
    fn from(s: SeArg) -> Self {
        match s {
            SeArg::Disc => ElementShape::Disc,
            SeArg::Ellipsoid => ElementShape::Ellipsoid,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegionArg {
    Wall,
    Effective,
}

impl From<RegionArg> for RegionMode {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::Wall => RegionMode::Wall,
            RegionArg::Effective => RegionMode::Effective,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Volume,
    Wall,
}

impl From<ScopeArg> for SurfaceScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Volume => SurfaceScope::Volume,
            ScopeArg::Wall => SurfaceScope::Wall,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Nifti,
    Raw,
}

#[derive(Debug, Args)]
struct InputOpts {
    /// Map every non-zero label in input masks to 1 instead of rejecting them.
    #[arg(long)]
    labels_nonzero: bool,
}

impl InputOpts {
    fn mapping(&self) -> LabelMapping {
        if self.labels_nonzero {
            LabelMapping::NonZero
        } else {
            LabelMapping::Strict
        }
    }
}

#[derive(Debug, Args)]
struct OutputOpts {
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Volume format for outputs; `raw` is a debug format.
    #[arg(long, value_enum, default_value = "nifti")]
    format: FormatArg,
}

impl OutputOpts {
    fn file(&self, stem: &str) -> String {
        match self.format {
            FormatArg::Nifti => format!("{stem}.nii.gz"),
            FormatArg::Raw => format!("{stem}.agv"),
        }
    }
}

#[derive(Debug, Args)]
struct WallOpts {
    /// Wall band half-width in mm.
    #[arg(long, default_value_t = 2.0)]
    tau_wall: f64,
    /// Structuring element family.
    #[arg(long, value_enum, default_value = "disc")]
    se: SeArg,
}

#[derive(Debug, Args)]
struct SdmArgs {
    #[arg(long)]
    cavity: PathBuf,
    #[command(flatten)]
    wall: WallOpts,
    /// SDM clip magnitude in mm.
    #[arg(long, default_value_t = 12.0)]
    clip: f64,
    /// Also write the unclipped SDMs in mm.
    #[arg(long)]
    raw_mm: bool,
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Debug, Args)]
struct WallbandArgs {
    #[arg(long)]
    cavity: PathBuf,
    #[command(flatten)]
    wall: WallOpts,
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Debug, Args)]
struct BubArgs {
    #[arg(long)]
    cavity: PathBuf,
    #[command(flatten)]
    wall: WallOpts,
    /// Boundary uncertainty band half-width in mm.
    #[arg(long, default_value_t = 3.0)]
    tau_band: f64,
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Debug, Args)]
struct LossOpts {
    #[arg(long, default_value_t = 1.0)]
    lambda_dice: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda_bce: f64,
    /// Weight of the global Dice term.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Upper clamp of the positive-class weight.
    #[arg(long, default_value_t = 10.0)]
    w_max: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// ROI the Dice and BCE terms are restricted to.
    #[arg(long, value_enum, default_value = "effective")]
    region: RegionArg,
}

impl LossOpts {
    fn config(&self) -> LossConfig {
        LossConfig {
            lambda_dice: self.lambda_dice,
            lambda_bce: self.lambda_bce,
            alpha: self.alpha,
            w_max: self.w_max,
            epsilon: self.eps,
            region_mode: self.region.into(),
        }
    }
}

#[derive(Debug, Args)]
struct LossArgs {
    /// Scar logits (scalar volume).
    #[arg(long)]
    logits: PathBuf,
    /// Scar ground truth mask.
    #[arg(long)]
    gt: PathBuf,
    /// Cavity mask the supervision regions are derived from.
    #[arg(long, required_unless_present = "roi", conflicts_with = "roi")]
    cavity: Option<PathBuf>,
    /// Explicit ROI mask, used as is.
    #[arg(long)]
    roi: Option<PathBuf>,
    #[command(flatten)]
    wall: WallOpts,
    #[arg(long, default_value_t = 3.0)]
    tau_band: f64,
    #[command(flatten)]
    loss: LossOpts,
    /// Write d(total)/d(logits) to this file.
    #[arg(long, value_name = "FILE")]
    grad_out: Option<PathBuf>,
    #[command(flatten)]
    input: InputOpts,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Predicted scar mask.
    #[arg(long, required_unless_present = "batch")]
    pred: Option<PathBuf>,
    /// Ground-truth scar mask.
    #[arg(long, required_unless_present = "batch")]
    gt: Option<PathBuf>,
    /// Ground-truth cavity mask.
    #[arg(long, required_unless_present = "batch")]
    cavity: Option<PathBuf>,
    /// Wall mask; derived from the cavity when omitted.
    #[arg(long)]
    wall: Option<PathBuf>,
    /// JSON list of cases `{"id", "pred", "gt", "cavity", "wall"?}`.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["pred", "gt", "cavity", "wall"])]
    batch: Option<PathBuf>,
    #[command(flatten)]
    wall_opts: WallOpts,
    /// Surfaces used for ASSD.
    #[arg(long, value_enum, default_value = "volume")]
    assd_scope: ScopeArg,
    #[command(flatten)]
    input: InputOpts,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// JSON phantom description; defaults are used for missing fields.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Overrides the seed in the description.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: OutputOpts,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    cavity: PathBuf,
    #[command(flatten)]
    wall: WallOpts,
    #[arg(long, default_value_t = 3.0)]
    tau_band: f64,
    #[arg(long, default_value_t = 12.0)]
    clip: f64,
    /// Scar logits; with --gt adds a loss report.
    #[arg(long, requires = "gt")]
    logits: Option<PathBuf>,
    /// Predicted scar mask; with --gt adds a metrics report.
    #[arg(long, requires = "gt")]
    pred: Option<PathBuf>,
    /// Ground-truth scar mask.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[command(flatten)]
    loss: LossOpts,
    #[arg(long, value_enum, default_value = "volume")]
    assd_scope: ScopeArg,
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    output: OutputOpts,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))
}

fn run(cli: Cli) -> Result<String, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Sdm(a) => commands::sdm(a),
        Command::Wallband(a) => commands::wallband(a),
        Command::Bub(a) => commands::bub(a),
        Command::Loss(a) => commands::loss(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Phantom(a) => commands::phantom(a),
        Command::Pipeline(a) => commands::pipeline(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Partial { report, .. } = &e {
                println!("{report}");
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
