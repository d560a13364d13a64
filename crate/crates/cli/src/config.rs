use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use hwrec::fusion::features::REFINEMENT_DIM;
use hwrec::fusion::FusionMode;
use hwrec::fusion::train::TrainHyper;
use hwrec::harness::StabilizePolicy;
use hwrec::metrics::CompositeSpec;
use hwrec::{MetricKind, WeightConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Weight presets leaning on one goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Speed,
    Energy,
    Accuracy,
}

fn thresholds() -> BTreeMap<MetricKind, f64> {
    BTreeMap::from([
        (MetricKind::ExecutionTimeMs, 100.0),
        (MetricKind::MemoryMb, 1024.0),
        (MetricKind::PowerW, 10.0),
        (MetricKind::CpuTempC, 70.0),
        (MetricKind::CarbonFootprint, 10.0),
        (MetricKind::Accuracy, 0.9),
    ])
}

impl Preset {
    pub fn weights(self) -> WeightConfig {
        use MetricKind::*;
        let weights = match self {
            Preset::Speed => vec![(ExecutionTimeMs, 0.7), (MemoryMb, 0.1), (PowerW, 0.1), (Accuracy, 0.1)],
            Preset::Energy => vec![(PowerW, 0.5), (CarbonFootprint, 0.2), (ExecutionTimeMs, 0.2), (Accuracy, 0.1)],
            Preset::Accuracy => vec![(Accuracy, 0.7), (ExecutionTimeMs, 0.1), (MemoryMb, 0.1), (PowerW, 0.1)],
        };
        WeightConfig::new(weights.into_iter().collect(), thresholds()).expect("preset weights are valid")
    }
}

/// Defaults read from `--config`; command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub weights: Option<WeightConfig>,
    pub preset: Option<Preset>,
    pub composite: Option<CompositeSpec>,
    pub policy: Option<StabilizePolicy>,
    pub hyper: Option<TrainSpec>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_json(&p.to_string_lossy()),
            None => Ok(Self::default()),
        }
    }

    /// `--weights` beats `--preset` beats the config file.
    pub fn resolve_weights(&self, weights: Option<&str>, preset: Option<Preset>) -> Result<Option<WeightConfig>> {
        let cfg = match (weights, preset) {
            (Some(w), _) => Some(read_json::<WeightConfig>(w)?),
            (None, Some(p)) => Some(p.weights()),
            (None, None) => self.weights.clone().or_else(|| self.preset.map(Preset::weights)),
        };
        if let Some(c) = &cfg {
            c.validate()?;
        }
        Ok(cfg)
    }
}

/// Scorer shape plus optimiser settings for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub margin: f64,
    pub token_dim: usize,
    pub heads: usize,
    pub fusion_mode: FusionMode,
    pub refine: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let h = TrainHyper::default();
        Self {
            lr: h.lr,
            epochs: h.epochs,
            seed: h.seed,
            margin: h.margin,
            token_dim: 8,
            heads: 2,
            fusion_mode: FusionMode::Add,
            refine: false,
        }
    }
}

impl TrainSpec {
    pub fn hyper(&self) -> TrainHyper {
        TrainHyper { lr: self.lr, epochs: self.epochs, seed: self.seed, margin: self.margin }
    }

    pub fn refine_dim(&self) -> usize {
        if self.refine {
            REFINEMENT_DIM
        } else {
            0
        }
    }
}

/// Parses `arg` as inline JSON when it starts with `{` or `[`, otherwise as
/// the path of a JSON file.
pub fn read_json<T: DeserializeOwned>(arg: &str) -> Result<T> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).context("malformed inline JSON");
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
    serde_json::from_str(&text).with_context(|| format!("malformed JSON in {arg}"))
}
