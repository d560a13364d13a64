//! Hardware-aware recommendation of pre-trained models.
//!
//! The crate covers the whole pipeline: benchmarking (model, dataset) pairs on
//! a device ([`harness`]), turning measurements into tunable rankings
//! ([`ranking`]), and two learned recommenders that predict those rankings
//! without benchmarking every candidate ([`fusion`] and [`shadow`]).
//! [`synthgen`] provides planted-truth worlds for desk-scale evaluation and
//! [`store`] persists registries, records and trained scorers.

pub mod domain;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod ranking;
pub mod shadow;
pub mod store;
pub mod synthgen;

pub use domain::{
    validate_registry, BenchmarkRecord, Combiner, Direction, FeatureDims, HardwareProfile, MetricGroup,
    MetricKind, ModelCard, Phase, RankMethod, RankingTable, TaskDescriptor, ValidationReport, WeightConfig,
};
pub use error::{Error, Result};
pub use fusion::{recommend_fusion, train_scorer, ScorerConfig, ScorerParams};
pub use ranking::{copeland_from_aggregates, kendall_tau, objective_score, weighted_copeland};
pub use shadow::{combine_selectors, SelectorKind, SelectorOutput};
pub use store::Store;
pub use synthgen::{generate_world, true_ranking, PlantedWorld, WorldSpec};
