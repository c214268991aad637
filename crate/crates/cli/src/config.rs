use std::path::Path;

use anyhow::Context;
use capweight::{Category, Population, ReweightMode, ScoreKind};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SIGMAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Values read from `--config`; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub score_kind: Option<ScoreKind>,
    pub sigma: Option<f64>,
    pub population: Option<Population>,
    pub reweight_mode: Option<ReweightMode>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub bins: Option<usize>,
    pub sigmas: Option<Vec<f64>>,
    pub rate: Option<f64>,
    pub categories: Option<Vec<Category>>,
    pub clean_mean: Option<f64>,
    pub clean_std: Option<f64>,
    pub noisy_mean: Option<f64>,
    pub noisy_std: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings: flags, then config file, then defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub score_kind: ScoreKind,
    pub sigma: f64,
    pub population: Population,
    pub reweight_mode: ReweightMode,
    pub batch_size: usize,
    pub seed: u64,
    pub bins: usize,
    pub sigmas: Vec<f64>,
    pub rate: f64,
    pub categories: Vec<Category>,
    pub clean_mean: f64,
    pub clean_std: f64,
    pub noisy_mean: f64,
    pub noisy_std: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            score_kind: ScoreKind::TextOnly,
            sigma: 0.30,
            population: Population::Corpus,
            reweight_mode: ReweightMode::LiteralMultiply,
            batch_size: 64,
            seed: 0,
            bins: 20,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            rate: 0.17,
            categories: Category::ALL.to_vec(),
            clean_mean: 0.4,
            clean_std: 0.2,
            noisy_mean: 0.7,
            noisy_std: 0.2,
        }
    }
}

/// Flag overrides collected from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub score_kind: Option<ScoreKind>,
    pub sigma: Option<f64>,
    pub population: Option<Population>,
    pub reweight_mode: Option<ReweightMode>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub bins: Option<usize>,
    pub sigmas: Option<Vec<f64>>,
    pub rate: Option<f64>,
    pub categories: Option<Vec<Category>>,
    pub clean_mean: Option<f64>,
    pub clean_std: Option<f64>,
    pub noisy_mean: Option<f64>,
    pub noisy_std: Option<f64>,
    pub delta: Option<f64>,
}

impl PipelineConfig {
    pub fn resolve(file: FileConfig, flags: Overrides) -> Self {
        let d = PipelineConfig::default();
        let clean_mean = flags.clean_mean.or(file.clean_mean).unwrap_or(d.clean_mean);
        let noisy_mean = flags
            .noisy_mean
            .or(flags.delta.map(|delta| clean_mean + delta))
            .or(file.noisy_mean)
            .unwrap_or(d.noisy_mean);
        PipelineConfig {
            score_kind: flags.score_kind.or(file.score_kind).unwrap_or(d.score_kind),
            sigma: flags.sigma.or(file.sigma).unwrap_or(d.sigma),
            population: flags.population.or(file.population).unwrap_or(d.population),
            reweight_mode: flags
                .reweight_mode
                .or(file.reweight_mode)
                .unwrap_or(d.reweight_mode),
            batch_size: flags.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
            bins: flags.bins.or(file.bins).unwrap_or(d.bins),
            sigmas: flags.sigmas.or(file.sigmas).unwrap_or(d.sigmas),
            rate: flags.rate.or(file.rate).unwrap_or(d.rate),
            categories: flags.categories.or(file.categories).unwrap_or(d.categories),
            clean_mean,
            clean_std: flags.clean_std.or(file.clean_std).unwrap_or(d.clean_std),
            noisy_mean,
            noisy_std: flags.noisy_std.or(file.noisy_std).unwrap_or(d.noisy_std),
        }
    }
}
