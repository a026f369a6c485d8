//! Flat key-value run configuration. Every key is optional; command-line
//! flags win over file values.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use reachlab::episode::{EpisodeConfig, InvalidActionPolicy};
use reachlab::metrics::{MarginMode, ScoreConfig};
use reachlab::policy::{TrainConfig, DEFAULT_BETA, DEFAULT_DIM};
use reachlab::sampler::{SamplerConfig, DEFAULT_MAX_TASK_LEN};
use reachlab::subtasks::SimilarityConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub min_len: Option<usize>,
    pub max_len: Option<usize>,
    pub max_attempts: Option<usize>,
    pub num_flows: Option<usize>,
    pub max_task_len: Option<usize>,
    pub jaccard_threshold: Option<f64>,
    pub drop_subsumed: Option<bool>,
    pub max_search_depth: Option<usize>,
    pub dim: Option<usize>,
    pub hash_seed: Option<u64>,
    pub beta: Option<f64>,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_steps: Option<usize>,
    pub invalid_action_policy: Option<InvalidActionPolicy>,
    pub margin: Option<f64>,
    pub margin_mode: Option<MarginMode>,
    pub timeout_secs: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub num_flows: usize,
    pub max_task_len: usize,
    pub similarity: SimilarityConfig,
    pub max_search_depth: Option<usize>,
    pub dim: usize,
    pub hash_seed: u64,
    pub beta: f64,
    pub train: TrainConfig,
    pub episode: EpisodeConfig,
    pub score: ScoreConfig,
    pub timeout_secs: f64,
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, seed: u64) -> Self {
        let defaults = SamplerConfig::default();
        let sampler = SamplerConfig {
            min_len: file.min_len.unwrap_or(defaults.min_len),
            max_len: file.max_len.unwrap_or(defaults.max_len),
            seed,
            max_attempts: file.max_attempts.unwrap_or(defaults.max_attempts),
        };
        let sim = SimilarityConfig::default();
        let train_defaults = TrainConfig::default();
        let episode = EpisodeConfig {
            max_steps: file.max_steps.unwrap_or(reachlab::episode::DEFAULT_MAX_STEPS),
            invalid_action_policy: file.invalid_action_policy.unwrap_or_default(),
        };
        let score_defaults = ScoreConfig::default();
        Self {
            seed,
            sampler,
            num_flows: file.num_flows.unwrap_or(50),
            max_task_len: file.max_task_len.unwrap_or(DEFAULT_MAX_TASK_LEN),
            similarity: SimilarityConfig {
                jaccard_threshold: file.jaccard_threshold.unwrap_or(sim.jaccard_threshold),
                drop_subsumed: file.drop_subsumed.unwrap_or(sim.drop_subsumed),
            },
            max_search_depth: file.max_search_depth,
            dim: file.dim.unwrap_or(DEFAULT_DIM),
            hash_seed: file.hash_seed.unwrap_or(0),
            beta: file.beta.unwrap_or(DEFAULT_BETA),
            train: TrainConfig {
                steps: file.steps.unwrap_or(train_defaults.steps),
                lr: file.lr.unwrap_or(train_defaults.lr),
                batch_size: file.batch_size,
                seed,
            },
            score: ScoreConfig {
                margin: file.margin.unwrap_or(score_defaults.margin),
                margin_mode: file.margin_mode.unwrap_or(score_defaults.margin_mode),
                max_steps: episode.max_steps,
            },
            episode,
            timeout_secs: file.timeout_secs.unwrap_or(30.0),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.sampler.validate()?;
        self.similarity.validate()?;
        self.episode.validate()?;
        anyhow::ensure!(self.dim.is_power_of_two(), "dim must be a power of two, got {}", self.dim);
        anyhow::ensure!(self.beta > 0.0 && self.beta.is_finite(), "beta must be positive, got {}", self.beta);
        anyhow::ensure!(self.train.lr.is_finite() && self.train.lr >= 0.0, "lr must be non-negative");
        anyhow::ensure!((0.0..=1.0).contains(&self.score.margin), "margin must lie in [0, 1]");
        anyhow::ensure!(self.timeout_secs > 0.0, "timeout_secs must be positive");
        anyhow::ensure!(self.max_search_depth != Some(0), "max_search_depth must be positive");
        Ok(())
    }
}
