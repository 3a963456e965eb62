//! `facetrace`: dataset preparation, per-region property statistics, detector
//! evaluation and figure rendering for real / fake / synthetic face images.
//!
//! Exit status: 0 on success, 1 for bad input or configuration, 2 for
//! internal failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "facetrace",
    version,
    about = "Image-property statistics for real, deepfake and synthetic faces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Keep frontal faces, crop them square and write a seeded train/val/test split.
    ///
    /// Output: <out>/<class>/<split>/<image>.png and <out>/split_manifest.json.
    Preprocess(PreprocessArgs),
    /// Measure every image, then run the per-region, per-property ANOVA.
    ///
    /// Output: <out>/properties.csv, <out>/report.json and <out>/errors.tsv
    /// (one `path<TAB>error` line per unreadable image).
    Analyze(AnalyzeArgs),
    /// Confusion matrix and per-class / class-averaged metrics from a prediction log.
    ///
    /// The log has one `image_path,true_label,predicted_label` line per image
    /// with labels 0 (fake), 1 (real) or 2 (synthetic).
    Eval(EvalArgs),
    /// Render SVG figures from an analysis report.
    ///
    /// Files are named <plot-kind>_<property-or-region>.svg:
    /// lines_<property>.svg (class means over regions 1-9),
    /// pvalues_<property>.svg (-log10 p over regions 1-9),
    /// lines_region0.svg and pvalues_region0.svg (whole image, all properties).
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Settings file of `key = value` lines using the long flag names; flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Directory the landmark image paths are relative to.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Landmark file, one JSON object per line.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lowest accepted frontal ratio [default: 0.9].
    #[arg(long)]
    lo: Option<f64>,
    /// Highest accepted frontal ratio [default: 1.1].
    #[arg(long)]
    hi: Option<f64>,
    /// Side of the square output faces in pixels [default: 256].
    #[arg(long)]
    size: Option<usize>,
    /// Training images per class [default: 10000].
    #[arg(long)]
    train: Option<usize>,
    /// Validation images per class [default: 2000].
    #[arg(long)]
    val: Option<usize>,
    /// Test images per class [default: 10000].
    #[arg(long)]
    test: Option<usize>,
    /// Sampling seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset root containing fake/, real/ and synthetic/.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ceiling for -log10 p when p underflows to zero [default: 350].
    #[arg(long)]
    cap: Option<f64>,
    /// Worker threads, 0 = one per core [default: 0].
    #[arg(long)]
    workers: Option<usize>,
    /// Only measure and test the whole image (region 0).
    #[arg(long)]
    whole_image_only: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Prediction log.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Directory for eval.csv and eval.json; when omitted only the table is printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Analysis report written by `analyze`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output directory for the SVG files.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error tagged with the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

pub trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Eval(a) => commands::eval(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (Failure::Input(e) | Failure::Internal(e)) = &failure;
            eprintln!("error: {e:#}");
            ExitCode::from(failure.code())
        }
    }
}
