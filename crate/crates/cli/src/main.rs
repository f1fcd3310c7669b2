//! `scenaug`: command-line pipeline from scenario files to trained encoders
//! and evaluation reports.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid input or configuration,
//! 4 runtime failure. A failing command removes every output it wrote.

mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scenaug::ssl::{Objective, Variant};

const AFTER_HELP: &str = "\
Formats:
  scenarios   JSON documents {id, time_span, objects, map}; a .jsonl file holds
              one per line, a directory is read as its .json/.jsonl files in
              name order.
  labels      JSON lines {\"scenario_id\", \"y\": [5 bits], \"class_id\"}.
  grids       EXGT binary: \"EXGT\", u32 version, u32 C, H, W, u64 count, id
              table, then f32 little-endian values.
  model       EXMD binary checkpoint with layer dims and f32 weights.
  metrics     JSON {experiment, seed, acc, linear_acc, few_shot, stability}.
  config      JSON with optional sections seed, grid, policy, base_aug, train,
              eval, labels, synth, data, labels_path. Flags override it.";

#[derive(Parser, Debug)]
#[command(name = "scenaug", version, about = "Expert-guided traffic-scenario augmentation pipeline", after_help = AFTER_HELP)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate labeled synthetic scenarios into OUT/scenarios.jsonl and OUT/labels.jsonl.
    Synth(SynthArgs),
    /// Parse and validate scenarios into OUT/scenarios.jsonl (canonical) and OUT/report.json.
    Ingest(IngestArgs),
    /// Mine maneuver labels into a labeled-dataset JSONL file.
    MineLabels(MineArgs),
    /// Apply expert augmentations and write the augmented scenarios.
    Augment(AugmentArgs),
    /// Render EGO-fixed occupancy-grid sequences into an EXGT file.
    Rasterize(RasterizeArgs),
    /// Train an encoder; writes OUT/model.exmd and OUT/loss.csv.
    Train(TrainArgs),
    /// Evaluate a trained encoder and write a metrics JSON report.
    Eval(EvalArgs),
    /// Train and cluster over a grid of visible-region ranges.
    AblateVr(AblateArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON suite spec {count, seed, max_background, speed_range}; replaces the config `synth` section.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AugmentMode {
    /// Connectivity closure.
    Con,
    /// Visible-region filter.
    Vr,
    /// Both, intersected.
    Combined,
    /// Two views per scenario drawn from the augmentation policy.
    Policy,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: AugmentMode,
    /// Visible-region half aperture in degrees; sampled per scenario when absent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Visible-region range in meters; sampled per scenario when absent.
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write PNG frames of each original and augmented scenario here.
    #[arg(long)]
    render_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RasterizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training scenarios; defaults to the config `data` path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// baseagt, exagt, 40crop, base+vr or base+con.
    #[arg(long, default_value = "exagt")]
    variant: Variant,
    /// bt or vicreg; defaults to the config objective.
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum Task {
    Zeroshot,
    Linear,
    Fewshot,
    Stability,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Task::Zeroshot, Task::Linear, Task::Fewshot, Task::Stability])]
    tasks: Vec<Task>,
    /// Experiment name in the report; defaults to the model file stem.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// `key=v1,v2;key=...` over d_min, d_max, alpha_min, alpha_max. The first
    /// key varies fastest; the default yields the four standard rows.
    #[arg(long, default_value = "d_max=100,50;alpha_max=360,120")]
    grid: String,
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    epochs: Option<usize>,
    /// CSV table destination; the table is always printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(scenaug::Error),
}

impl From<scenaug::Error> for Failure {
    fn from(e: scenaug::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use scenaug::Error::*;
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(Io { .. } | Diverged { .. } | OutOfRange { .. }) => 4,
            Failure::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(4);
        }
    };
    let mut outputs = files::Outputs::default();
    match pool.install(|| commands::run(&cli, &mut outputs)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.rollback();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
