mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use capweight::{Category, Population, ReweightMode, ScoreKind};
use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

/// Exit codes: 0 success, 1 internal error, 2 schema error, 3 input
/// consistency error.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn internal(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: e.into(),
        }
    }

    pub fn schema(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: e.into(),
        }
    }

    pub fn consistency(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 3,
            error: e.into(),
        }
    }
}

impl From<capweight::Error> for CliError {
    fn from(e: capweight::Error) -> Self {
        let code = if e.is_schema()
            || matches!(
                e,
                capweight::Error::Config(_) | capweight::Error::SigmaRange(_)
            ) {
            2
        } else if e.is_consistency()
            || matches!(
                e,
                capweight::Error::EmptyPool
                    | capweight::Error::EmptyInput(_)
                    | capweight::Error::EmptyObjects(_)
                    | capweight::Error::AllRemoved(_)
            )
        {
            3
        } else {
            1
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::internal(e)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "capweight",
    version,
    about = "Caption noise scoring and attention reweighting"
)]
pub struct Cli {
    /// TOML file with pipeline settings (flags take precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for `template`, `inject` and `synth`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Which confidence score to use.
    #[arg(long, value_parser = parse_kind)]
    pub score_kind: Option<ScoreKind>,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long, value_parser = parse_population)]
    pub population: Option<Population>,

    /// Captions per batch when the population is `batch`.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a caption file with a built-in tokenizer into a token dump.
    Tokenize {
        #[arg(long)]
        captions: PathBuf,
        /// `whitespace` or `greedy`.
        #[arg(long, default_value = "whitespace")]
        tokenizer: String,
        /// Vocabulary for the greedy tokenizer, one piece per line.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Tokenizer tag written into the dump.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        bos: Option<u32>,
        #[arg(long)]
        eos: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build per-caption alignment maps between two token dumps.
    Align {
        /// Token dump whose tokens receive scores (e.g. the generator side).
        #[arg(long)]
        source: PathBuf,
        /// Token dump the scores live on (e.g. the captioner side).
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a log-prob dump into confidence score series.
    Score {
        #[arg(long)]
        logprobs: PathBuf,
        #[command(flatten)]
        kind: ScoreArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project score series through alignment maps.
    Project {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores, projection, threshold and weights in one pass; writes a sidecar.
    Weight {
        #[arg(long)]
        logprobs: PathBuf,
        /// Alignment from the weighted tokenizer to the log-prob tokenizer.
        /// Identity when omitted.
        #[arg(long)]
        alignment: Option<PathBuf>,
        #[command(flatten)]
        kind: ScoreArgs,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long, value_parser = parse_mode)]
        reweight_mode: Option<ReweightMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove flagged tokens from captions.
    Filter {
        #[arg(long)]
        tokens: PathBuf,
        /// Score series over the same tokenization as `--tokens`.
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an attribute-template caption corpus with slot metadata.
    Template {
        #[arg(long)]
        n: usize,
        /// Optional CSV of generator-side slot word counts.
        #[arg(long)]
        tally: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inject category-preserving hallucinations into a template corpus.
    Inject {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        rate: Option<f64>,
        /// Comma-separated subset of color,spatial,quantity,feature.
        #[arg(long, value_delimiter = ',', value_parser = parse_category)]
        categories: Option<Vec<Category>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a synthetic log-prob dump for a noisy corpus.
    Synth {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        clean_mean: Option<f64>,
        #[arg(long)]
        clean_std: Option<f64>,
        #[arg(long)]
        noisy_mean: Option<f64>,
        #[arg(long)]
        noisy_std: Option<f64>,
        /// Sets the noisy mean to clean mean + delta.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision/recall of the flagging rule over a σ sweep.
    Evaluate {
        #[arg(
            long,
            conflicts_with = "logprobs",
            required_unless_present = "logprobs"
        )]
        scores: Option<PathBuf>,
        #[arg(long)]
        logprobs: Option<PathBuf>,
        #[command(flatten)]
        kind: ScoreArgs,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score histogram over all and noisy tokens.
    Stats {
        #[arg(
            long,
            conflicts_with = "logprobs",
            required_unless_present = "logprobs"
        )]
        scores: Option<PathBuf>,
        #[arg(long)]
        logprobs: Option<PathBuf>,
        #[command(flatten)]
        kind: ScoreArgs,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hallucination rate from object existence judgments.
    Halrate {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Whole-word term counts over a caption file.
    Terms {
        #[arg(long)]
        captions: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        terms: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<ScoreKind, String> {
    s.parse().map_err(|e: capweight::Error| e.to_string())
}

fn parse_population(s: &str) -> Result<Population, String> {
    s.parse().map_err(|e: capweight::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ReweightMode, String> {
    s.parse().map_err(|e: capweight::Error| e.to_string())
}

fn parse_category(s: &str) -> Result<Category, String> {
    s.parse().map_err(|e: capweight::Error| e.to_string())
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Tokenize { .. } => "tokenize",
            Command::Align { .. } => "align",
            Command::Score { .. } => "score",
            Command::Project { .. } => "project",
            Command::Weight { .. } => "weight",
            Command::Filter { .. } => "filter",
            Command::Template { .. } => "template",
            Command::Inject { .. } => "inject",
            Command::Synth { .. } => "synth",
            Command::Evaluate { .. } => "evaluate",
            Command::Stats { .. } => "stats",
            Command::Halrate { .. } => "halrate",
            Command::Terms { .. } => "terms",
        }
    }

    pub fn overrides(&self, seed: Option<u64>) -> Overrides {
        let mut o = Overrides {
            seed,
            ..Default::default()
        };
        let threshold = |t: &ThresholdArgs, o: &mut Overrides| {
            o.sigma = t.sigma;
            o.population = t.population;
            o.batch_size = t.batch_size;
        };
        match self {
            Command::Score { kind, .. } => o.score_kind = kind.score_kind,
            Command::Weight {
                kind,
                threshold: t,
                reweight_mode,
                ..
            } => {
                o.score_kind = kind.score_kind;
                o.reweight_mode = *reweight_mode;
                threshold(t, &mut o);
            }
            Command::Filter { threshold: t, .. } => threshold(t, &mut o),
            Command::Inject {
                rate, categories, ..
            } => {
                o.rate = *rate;
                o.categories = categories.clone();
            }
            Command::Synth {
                clean_mean,
                clean_std,
                noisy_mean,
                noisy_std,
                delta,
                ..
            } => {
                o.clean_mean = *clean_mean;
                o.clean_std = *clean_std;
                o.noisy_mean = *noisy_mean;
                o.noisy_std = *noisy_std;
                o.delta = *delta;
            }
            Command::Evaluate { kind, sigmas, .. } => {
                o.score_kind = kind.score_kind;
                o.sigmas = sigmas.clone();
            }
            Command::Stats { kind, bins, .. } => {
                o.score_kind = kind.score_kind;
                o.bins = *bins;
            }
            _ => {}
        }
        o
    }
}

fn init_workers() {
    if let Some(n) = std::env::var("CAPWEIGHT_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a second initialization only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capweight: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
