//! Core data types shared across the crate.
//!
//! Values here carry no behaviour beyond construction-time checks and
//! [`validate_registry`]. All of them serialize to JSON with the field names
//! used in the registry files; metric maps are keyed by the snake_case metric
//! name.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ w_i = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelCard {
    pub id: String,
    pub name: String,
    pub architecture_family: String,
    pub param_count: u64,
    pub model_features: Vec<f64>,
    pub source_task: String,
}

impl ModelCard {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        architecture_family: impl Into<String>,
        param_count: u64,
        model_features: Vec<f64>,
        source_task: impl Into<String>,
    ) -> Result<Self> {
        let card = Self {
            id: id.into(),
            name: name.into(),
            architecture_family: architecture_family.into(),
            param_count,
            model_features,
            source_task: source_task.into(),
        };
        reject_own_violations(card.own_violations())?;
        Ok(card)
    }

    fn own_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("empty id".to_string());
        }
        if self.param_count < 1 {
            out.push(format!("param_count must be >= 1, got {}", self.param_count));
        }
        if self.model_features.iter().any(|v| !v.is_finite()) {
            out.push("model_features contains a non-finite value".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HardwareProfile {
    pub id: String,
    pub device_name: String,
    pub cpu_model: String,
    pub cpu_cores: u32,
    pub cpu_freq_mhz: f64,
    pub ram_mb: f64,
    pub storage_mb: f64,
    #[serde(default)]
    pub accelerator: Option<String>,
    pub hw_features: Vec<f64>,
}

impl HardwareProfile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        device_name: impl Into<String>,
        cpu_model: impl Into<String>,
        cpu_cores: u32,
        cpu_freq_mhz: f64,
        ram_mb: f64,
        storage_mb: f64,
        accelerator: Option<String>,
        hw_features: Vec<f64>,
    ) -> Result<Self> {
        let profile = Self {
            id: id.into(),
            device_name: device_name.into(),
            cpu_model: cpu_model.into(),
            cpu_cores,
            cpu_freq_mhz,
            ram_mb,
            storage_mb,
            accelerator,
            hw_features,
        };
        reject_own_violations(profile.own_violations())?;
        Ok(profile)
    }

    fn own_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("empty id".to_string());
        }
        if self.cpu_cores < 1 {
            out.push("cpu_cores must be >= 1".to_string());
        }
        for (name, v) in [
            ("cpu_freq_mhz", self.cpu_freq_mhz),
            ("ram_mb", self.ram_mb),
            ("storage_mb", self.storage_mb),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.hw_features.iter().any(|v| !v.is_finite()) {
            out.push("hw_features contains a non-finite value".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TaskDescriptor {
    pub id: String,
    pub dataset_name: String,
    pub num_classes: u32,
    pub num_samples: u64,
    pub input_shape: Vec<u32>,
    pub task_features: Vec<f64>,
}

impl TaskDescriptor {
    pub fn new(
        id: impl Into<String>,
        dataset_name: impl Into<String>,
        num_classes: u32,
        num_samples: u64,
        input_shape: Vec<u32>,
        task_features: Vec<f64>,
    ) -> Result<Self> {
        let task = Self {
            id: id.into(),
            dataset_name: dataset_name.into(),
            num_classes,
            num_samples,
            input_shape,
            task_features,
        };
        reject_own_violations(task.own_violations())?;
        Ok(task)
    }

    fn own_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("empty id".to_string());
        }
        if self.num_classes < 1 {
            out.push("num_classes must be >= 1".to_string());
        }
        if self.num_samples < 1 {
            out.push("num_samples must be >= 1".to_string());
        }
        if self.task_features.iter().any(|v| !v.is_finite()) {
            out.push("task_features contains a non-finite value".to_string());
        }
        out
    }
}

fn reject_own_violations(violations: Vec<String>) -> Result<()> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(violations.join("; ")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricGroup {
    Hardware,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

/// The benchmark metrics. The first five are hardware metrics (lower is
/// better), the last four are model-quality metrics stored as fractions.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ExecutionTimeMs,
    MemoryMb,
    PowerW,
    CpuTempC,
    CarbonFootprint,
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::ExecutionTimeMs,
        MetricKind::MemoryMb,
        MetricKind::PowerW,
        MetricKind::CpuTempC,
        MetricKind::CarbonFootprint,
        MetricKind::Accuracy,
        MetricKind::Precision,
        MetricKind::Recall,
        MetricKind::F1,
    ];

    pub const HARDWARE: [MetricKind; 5] = [
        MetricKind::ExecutionTimeMs,
        MetricKind::MemoryMb,
        MetricKind::PowerW,
        MetricKind::CpuTempC,
        MetricKind::CarbonFootprint,
    ];

    pub const MODEL: [MetricKind; 4] = [
        MetricKind::Accuracy,
        MetricKind::Precision,
        MetricKind::Recall,
        MetricKind::F1,
    ];

    pub fn group(self) -> MetricGroup {
        match self {
            MetricKind::ExecutionTimeMs
            | MetricKind::MemoryMb
            | MetricKind::PowerW
            | MetricKind::CpuTempC
            | MetricKind::CarbonFootprint => MetricGroup::Hardware,
            MetricKind::Accuracy | MetricKind::Precision | MetricKind::Recall | MetricKind::F1 => {
                MetricGroup::Model
            }
        }
    }

    pub fn direction(self) -> Direction {
        match self.group() {
            MetricGroup::Hardware => Direction::LowerIsBetter,
            MetricGroup::Model => Direction::HigherIsBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::ExecutionTimeMs => "execution_time_ms",
            MetricKind::MemoryMb => "memory_mb",
            MetricKind::PowerW => "power_w",
            MetricKind::CpuTempC => "cpu_temp_c",
            MetricKind::CarbonFootprint => "carbon_footprint",
            MetricKind::Accuracy => "accuracy",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
            MetricKind::F1 => "f1",
        }
    }

    pub fn parse(name: &str) -> Option<MetricKind> {
        MetricKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    BatchSweep,
    FixedBatch,
}

/// One measured forward pass.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchmarkRecord {
    pub model_id: String,
    pub task_id: String,
    pub hardware_id: String,
    pub batch_size: u32,
    /// Position of this pass within its phase, starting at 0.
    pub batch_index: u32,
    pub phase: Phase,
    pub metrics: BTreeMap<MetricKind, f64>,
    pub timestamp: DateTime<Utc>,
    pub stabilized: bool,
}

impl BenchmarkRecord {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size < 1 {
            out.push("batch_size must be >= 1".to_string());
        }
        for kind in MetricKind::HARDWARE {
            if !self.metrics.contains_key(&kind) {
                out.push(format!("missing hardware metric {kind}"));
            }
        }
        for (kind, v) in &self.metrics {
            if !v.is_finite() {
                out.push(format!("{kind} is not finite"));
            }
        }
        if let Some(&t) = self.metrics.get(&MetricKind::ExecutionTimeMs) {
            if t <= 0.0 {
                out.push(format!("execution_time_ms must be > 0, got {t}"));
            }
        }
        for kind in [MetricKind::MemoryMb, MetricKind::PowerW] {
            if let Some(&v) = self.metrics.get(&kind) {
                if v < 0.0 {
                    out.push(format!("{kind} must be >= 0, got {v}"));
                }
            }
        }
        for kind in MetricKind::MODEL {
            if let Some(&v) = self.metrics.get(&kind) {
                if !(0.0..=1.0).contains(&v) {
                    out.push(format!("{kind} must be a fraction in [0,1], got {v}"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        reject_own_violations(self.violations())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    #[default]
    Sum,
    Product,
}

/// Per-metric voter weights and normalisation thresholds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightConfig {
    pub weights: BTreeMap<MetricKind, f64>,
    pub thresholds: BTreeMap<MetricKind, f64>,
    /// How the objective combines per-metric hardware ratios.
    #[serde(default)]
    pub combiner: Combiner,
}

impl WeightConfig {
    pub fn new(
        weights: BTreeMap<MetricKind, f64>,
        thresholds: BTreeMap<MetricKind, f64>,
    ) -> Result<Self> {
        let config = Self {
            weights,
            thresholds,
            combiner: Combiner::Sum,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_combiner(mut self, combiner: Combiner) -> Self {
        self.combiner = combiner;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::invalid("weight config has no weights"));
        }
        for (kind, &w) in &self.weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(format!("weight for {kind} is {w}, outside [0,1]")));
            }
            match self.thresholds.get(kind) {
                Some(&t) if t > 0.0 && t.is_finite() => {}
                Some(&t) => {
                    return Err(Error::invalid(format!(
                        "threshold for {kind} must be strictly positive, got {t}"
                    )))
                }
                None => return Err(Error::invalid(format!("no threshold for weighted metric {kind}"))),
            }
        }
        for (kind, &t) in &self.thresholds {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!(
                    "threshold for {kind} must be strictly positive, got {t}"
                )));
            }
        }
        let sum: f64 = self.weights.values().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::invalid(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Keeps only the given metrics and renormalises their weights to sum to 1.
    pub fn restricted_to(&self, keep: &[MetricKind]) -> Result<Self> {
        let kept: BTreeMap<MetricKind, f64> = self
            .weights
            .iter()
            .filter(|(k, _)| keep.contains(k))
            .map(|(&k, &w)| (k, w))
            .collect();
        let total: f64 = kept.values().sum();
        if kept.is_empty() || total <= 0.0 {
            return Err(Error::invalid("restriction leaves no weight mass"));
        }
        let weights = kept.into_iter().map(|(k, w)| (k, w / total)).collect();
        let config = Self {
            weights,
            thresholds: self.thresholds.clone(),
            combiner: self.combiner,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn metric_kinds(&self) -> Vec<MetricKind> {
        self.weights.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Metric,
    Copeland,
    Objective,
    Fusion,
    Selector,
    Shadow,
    GroundTruth,
}

impl fmt::Display for RankMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RankMethod::Metric => "metric",
            RankMethod::Copeland => "copeland",
            RankMethod::Objective => "objective",
            RankMethod::Fusion => "fusion",
            RankMethod::Selector => "selector",
            RankMethod::Shadow => "shadow",
            RankMethod::GroundTruth => "ground_truth",
        };
        f.write_str(s)
    }
}

/// An ordered list of candidates, best first.
///
/// `ties` holds groups of positions (indices into `candidate_ids`) whose
/// scores are exactly equal; singletons are omitted.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankingTable {
    pub candidate_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub method: RankMethod,
    pub ties: Vec<Vec<usize>>,
}

impl RankingTable {
    /// Sorts by score descending; equal scores are ordered by id.
    pub fn from_scores(method: RankMethod, scored: Vec<(String, f64)>) -> Result<Self> {
        if let Some((id, s)) = scored.iter().find(|(_, s)| s.is_nan()) {
            return Err(Error::invalid(format!("score for {id} is NaN ({s})")));
        }
        let mut scored = scored;
        scored.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then_with(|| ia.cmp(ib)));
        let (ids, scores) = scored.into_iter().unzip();
        Self::from_ordered(method, ids, scores)
    }

    /// Builds a table whose order is already decided by the caller.
    pub fn from_ordered(method: RankMethod, ids: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if ids.len() != scores.len() {
            return Err(Error::dims("ranking scores", ids.len(), scores.len()));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate candidate {id} in ranking")));
            }
        }
        if scores.windows(2).any(|w| w[1] > w[0] || w[0].is_nan() || w[1].is_nan()) {
            return Err(Error::invalid("ranking scores must be non-increasing"));
        }
        let ties = tie_groups(&scores);
        Ok(Self {
            candidate_ids: ids,
            scores,
            method,
            ties,
        })
    }

    pub fn len(&self) -> usize {
        self.candidate_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate_ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.candidate_ids.iter().position(|c| c == id)
    }

    /// Dense rank level per candidate: 0 for the best group, tied candidates
    /// share a level.
    pub fn levels(&self) -> HashMap<&str, usize> {
        let mut level = 0;
        let mut out = HashMap::with_capacity(self.len());
        for (i, id) in self.candidate_ids.iter().enumerate() {
            if i > 0 && self.scores[i] != self.scores[i - 1] {
                level += 1;
            }
            out.insert(id.as_str(), level);
        }
        out
    }

    pub fn candidate_set(&self) -> HashSet<&str> {
        self.candidate_ids.iter().map(String::as_str).collect()
    }

    pub fn with_method(mut self, method: RankMethod) -> Self {
        self.method = method;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        match Self::from_ordered(self.method, self.candidate_ids.clone(), self.scores.clone()) {
            Ok(rebuilt) if rebuilt.ties == self.ties => Vec::new(),
            Ok(_) => vec!["tie groups do not match equal scores".to_string()],
            Err(e) => vec![e.to_string()],
        }
    }
}

fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=scores.len() {
        if i == scores.len() || scores[i] != scores[start] {
            if i - start > 1 {
                groups.push((start..i).collect());
            }
            start = i;
        }
    }
    groups
}

/// Registry-wide feature dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub model: usize,
    pub hardware: usize,
    pub task: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Model,
    Hardware,
    Task,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Model => "model",
            EntityKind::Hardware => "hardware",
            EntityKind::Task => "task",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: EntityKind,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, id: &str) -> bool {
        self.violations.iter().any(|v| v.id == id)
    }

    fn push(&mut self, entity: EntityKind, id: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            entity,
            id: id.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {} `{}`: {}", v.entity, v.id, v.message)?;
        }
        Ok(())
    }
}

/// Checks every registry invariant. Feature dimensions are taken from the
/// first entry of each list.
pub fn validate_registry(
    models: &[ModelCard],
    hardware: &[HardwareProfile],
    tasks: &[TaskDescriptor],
) -> ValidationReport {
    let dims = FeatureDims {
        model: models.first().map_or(0, |m| m.model_features.len()),
        hardware: hardware.first().map_or(0, |h| h.hw_features.len()),
        task: tasks.first().map_or(0, |t| t.task_features.len()),
    };
    validate_registry_with_dims(models, hardware, tasks, dims)
}

pub fn validate_registry_with_dims(
    models: &[ModelCard],
    hardware: &[HardwareProfile],
    tasks: &[TaskDescriptor],
    dims: FeatureDims,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    check_entities(
        &mut report,
        EntityKind::Model,
        models.iter().map(|m| (m.id.as_str(), m.own_violations(), m.model_features.len())),
        dims.model,
    );
    check_entities(
        &mut report,
        EntityKind::Hardware,
        hardware.iter().map(|h| (h.id.as_str(), h.own_violations(), h.hw_features.len())),
        dims.hardware,
    );
    check_entities(
        &mut report,
        EntityKind::Task,
        tasks.iter().map(|t| (t.id.as_str(), t.own_violations(), t.task_features.len())),
        dims.task,
    );
    report
}

fn check_entities<'a>(
    report: &mut ValidationReport,
    entity: EntityKind,
    items: impl Iterator<Item = (&'a str, Vec<String>, usize)>,
    dim: usize,
) {
    let mut seen = HashSet::new();
    for (id, own, len) in items {
        if !seen.insert(id) {
            report.push(entity, id, "duplicate id");
        }
        for msg in own {
            report.push(entity, id, msg);
        }
        if len != dim {
            report.push(
                entity,
                id,
                format!("feature vector has length {len}, registry dimension is {dim}"),
            );
        }
    }
}
