//! `haze` command-line interface.
//!
//! Exit status: 0 success, 2 usage or configuration error, 3 data or format
//! error, 4 numerical failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use haze_core::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match e {
            Error::Usage(_) | Error::Parameter(_) => EXIT_USAGE,
            Error::Numerical(_) => EXIT_NUMERICAL,
            Error::Dimension { .. } | Error::Format(_) | Error::Parse { .. } | Error::Io(_) => {
                EXIT_DATA
            }
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "haze",
    version,
    about = "Super-resolution and gaze estimation experiments on synthetic faces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `key=value` override, repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// High-frequency map of a PPM image.
    ExtractHf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        /// Write unscaled values as `channel,y,x,value` rows.
        #[arg(long)]
        raw: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain the super-resolution network under the L1 loss.
    PretrainSr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain the gaze network on HR images.
    PretrainGaze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Alternating two-phase training from pretrained checkpoints.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Pretrained SR checkpoint.
        #[arg(long)]
        sr: Option<PathBuf>,
        /// Pretrained gaze checkpoint.
        #[arg(long)]
        gaze: Option<PathBuf>,
        /// Continue from a combined checkpoint written by `train`.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean PSNR, SSIM and angular error, or an ablation sweep.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `val`, `train` or `all`.
        #[arg(long, default_value = "val")]
        split: String,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-sample CSV path.
        #[arg(long)]
        per_sample: Option<PathBuf>,
        /// Train and score every λ ∈ {0.2, 0.4, 0.5} and α ∈ {0, 0.1, 1}.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        sweep_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Super-resolve one LR image and predict gaze.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Ten comma-separated normalised coordinates: eyes, nose, mouth corners.
        #[arg(long)]
        landmarks: Option<String>,
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::Generate { out, common } => generate(&load_config(&common)?, &out),
        Command::ExtractHf {
            input,
            output,
            lambda,
            raw,
            common,
        } => {
            let cfg = load_config(&common)?;
            extract_hf(
                &input,
                &output,
                lambda.unwrap_or(cfg.lambda),
                raw.as_deref(),
            )
        }
        Command::PretrainSr {
            data,
            out,
            metrics,
            common,
        } => pretrain(
            &load_config(&common)?,
            Module::Sr,
            &data,
            &out,
            metrics.as_deref(),
        ),
        Command::PretrainGaze {
            data,
            out,
            metrics,
            common,
        } => pretrain(
            &load_config(&common)?,
            Module::Gaze,
            &data,
            &out,
            metrics.as_deref(),
        ),
        Command::Train {
            data,
            sr,
            gaze,
            resume,
            out,
            metrics,
            common,
        } => {
            let start = match (resume, sr, gaze) {
                (Some(r), _, _) => Start::Resume(r),
                (None, Some(s), Some(g)) => Start::Pretrained { sr: s, gaze: g },
                _ => {
                    return Err(CliError::usage(
                        "train needs --sr and --gaze checkpoints (run `haze pretrain-sr` and \
                         `haze pretrain-gaze` first) or --resume",
                    ))
                }
            };
            train(
                &load_config(&common)?,
                &data,
                start,
                &out,
                metrics.as_deref(),
            )
        }
        Command::Eval {
            data,
            checkpoint,
            split,
            report,
            per_sample,
            sweep,
            sweep_out,
            common,
        } => {
            let cfg = load_config(&common)?;
            let split = SplitChoice::parse(&split)?;
            if sweep {
                ablation_sweep(&cfg, &data, split, sweep_out.as_deref())
            } else {
                let ckpt = checkpoint.ok_or_else(|| {
                    CliError::usage("eval needs --checkpoint (or --sweep to train each setting)")
                })?;
                eval(
                    &cfg,
                    &data,
                    &ckpt,
                    split,
                    report.as_deref(),
                    per_sample.as_deref(),
                )
            }
        }
        Command::Infer {
            checkpoint,
            input,
            output,
            landmarks,
            overlay,
            common,
        } => {
            load_config(&common)?;
            infer(
                &checkpoint,
                &input,
                &output,
                landmarks.as_deref(),
                overlay.as_deref(),
            )
        }
    }
}

fn load_config(common: &Common) -> Result<config::RunConfig, CliError> {
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    config::RunConfig::load(common.config.as_deref(), &overrides)
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status, reporting failures on stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
