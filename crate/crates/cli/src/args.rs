use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "hotcold",
    version,
    about = "Hot/cold block patch attacks on thermal person detectors"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON file with default values for any flag (snake_case keys).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub detector: Option<DetectorChoice>,
    /// Command line of an external detector process [default: $SSP_DETECTOR_CMD].
    #[arg(long, global = true)]
    pub detector_cmd: Option<String>,
    /// Number of external detector processes.
    #[arg(long, global = true)]
    pub pool_size: Option<usize>,
    #[arg(long, global = true)]
    pub score_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub iou_threshold: Option<f64>,
    /// Persons this tall or shorter (pixels) are dropped on load.
    #[arg(long, global = true)]
    pub min_person_height: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorChoice {
    Toy,
    External,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a universal block genome on a training split.
    Attack(AttackArgs),
    /// Write attacked copies of a split.
    Apply(ApplyArgs),
    /// Clean or attacked AP / ASR report.
    Evaluate(EvaluateArgs),
    /// Attack-and-evaluate table over m and l for HCB, R and MR.
    Sweep(SweepArgs),
    /// Evaluate the random block baselines.
    Baseline(BaselineArgs),
    /// Generate a synthetic thermal split.
    Synth(SynthArgs),
    /// Emit clean plus attacked copies for adversarial training.
    Augment(AugmentArgs),
    /// Build a manifest from YOLO-format label files.
    ImportYolo(ImportYoloArgs),
}

/// Search settings shared by `attack` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Block intensity in [0, 1]: low for cold paste, high for warm.
    #[arg(long)]
    pub pixel_value: Option<f64>,
    /// Swarm size.
    #[arg(long)]
    pub pop: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fitness on a seeded subset of this many training scenes.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Snap patch positions to a k x k lattice.
    #[arg(long)]
    pub position_grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Genome output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step trace output (CSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Patches per person.
    #[arg(long)]
    pub m: Option<usize>,
    /// Grid side as a fraction of person height.
    #[arg(long)]
    pub l: Option<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub genome: PathBuf,
    /// Output directory for images and manifest.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "png")]
    pub ext: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Attack with this genome; without it only the clean run is scored.
    #[arg(long)]
    pub genome: Option<PathBuf>,
    /// Full report (JSON); a summary is always printed.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Precision-recall curve (CSV).
    #[arg(long)]
    pub pr: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5, 6, 7])]
    pub m_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.06, 0.08, 0.10, 0.12, 0.14, 0.16])]
    pub l_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = ["HCB".to_string(), "R".to_string(), "MR".to_string()])]
    pub methods: Vec<String>,
    /// Seeds averaged per cell; defaults to the single --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Table output (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Keep rows already in --out and run only the missing cells.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineChoice {
    R,
    Mr,
    Both,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: BaselineChoice,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub pixel_value: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full reports keyed by arm (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "png")]
    pub ext: String,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub genome: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "png")]
    pub ext: String,
}

#[derive(Debug, Args)]
pub struct ImportYoloArgs {
    /// Directory of images.
    #[arg(long)]
    pub images: PathBuf,
    /// Directory of `<image stem>.txt` label files.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub person_class: u32,
    /// Manifest output (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}
