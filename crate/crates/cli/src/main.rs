//! `soundlm`: synthetic data, codec and LM training, tokenization,
//! continuation, evaluation and the resolution × codebook ablation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Args, Clone)]
pub struct Common {
    /// Output directory (default: config `output_dir`, then $SOUNDLM_OUT, then ./soundlm-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replace existing artifacts.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Eval,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum GridArg {
    /// 2/4/8 ms × 512/1024/2048.
    Full,
    /// The grid in the config's `[eval]` section.
    Config,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the synthetic clip set and its manifest.
    SynthData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a codec on the train split of a manifest.
    TrainCodec {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the log-mel + k-means tokenizer on the train split of a manifest.
    FitBaseline {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature hop in samples (160 = 10 ms, 32 = 2 ms).
        #[arg(long, default_value_t = 160)]
        hop: usize,
        #[arg(long, default_value_t = 2048)]
        k: usize,
        #[arg(long, default_value_t = 25)]
        iters: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Write token files for one clip or every clip of a manifest split.
    Tokenize {
        /// Codec or baseline checkpoint.
        #[arg(long, alias = "codec")]
        tokenizer: PathBuf,
        #[arg(long = "in", conflicts_with = "manifest", required_unless_present = "manifest")]
        input: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Train the language model on a directory of token files.
    TrainLm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        eval_tokens: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Continue an audio prompt and assemble the listening clip.
    Continue {
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        prompt: PathBuf,
        #[arg(long)]
        horizon_tokens: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Sampling defaults come from this config's `[sampling]` section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Reconstruction SNR of a codec over a manifest split.
    EvalSnr {
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Eval)]
        split: SplitArg,
    },
    /// Train and score one codec per grid cell.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = GridArg::Config)]
        grid: GridArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Join prompt, beep and continuation into one clip.
    PackCmos {
        #[arg(long)]
        prompt: PathBuf,
        #[arg(long)]
        continuation: PathBuf,
    },
    /// Print the config with every default applied.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Exit 2: the configuration or arguments are wrong. Exit 1: a stage failed.
pub enum Failure {
    Config(String),
    Runtime { stage: &'static str, message: String },
}

impl Failure {
    pub fn runtime(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Failure::Runtime {
            stage,
            message: e.to_string(),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Parser)]
#[command(name = "soundlm", version, about = "Discrete audio language modeling at desk scale")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = commands::run(cli.command, &cli.common, &argv);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: config: {}", one_line(&m));
            ExitCode::from(2)
        }
        Err(Failure::Runtime { stage, message }) => {
            eprintln!("error: {stage}: {}", one_line(&message));
            ExitCode::from(1)
        }
    }
}
