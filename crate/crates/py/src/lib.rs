//! Python bindings for `hwrec`.
//!
//! Structured inputs (weight configs, world specs, registries, training
//! sets) cross the boundary as JSON strings in the same shapes the CLI reads.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hwrec::domain::{HardwareProfile, ModelCard, TaskDescriptor};
use hwrec::fusion::train::{self, TrainExample, TrainHyper};
use hwrec::harness::{BenchPair, Harness, HarnessConfig, ManualClock};
use hwrec::ranking::{aggregate_records, MetricMap, Scope, Statistic};
use hwrec::store::RegistryKind;
use hwrec::synthgen::{idle_sensors, world_workload};
use hwrec::{MetricKind, RankingTable, SelectorKind, SelectorOutput, WeightConfig};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;

fn to_py(e: hwrec::Error) -> PyErr {
    use hwrec::Error::*;
    match e {
        UnknownId { .. } => PyKeyError::new_err(e.to_string()),
        Sensor { .. } | Workload { .. } | Diverged { .. } | Io(_) | Locked(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: DeserializeOwned>(what: &str, text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("malformed {what} JSON: {e}")))
}

fn dump<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn metric_map(metrics: BTreeMap<String, f64>) -> PyResult<MetricMap> {
    metrics
        .into_iter()
        .map(|(k, v)| {
            MetricKind::parse(&k)
                .map(|kind| (kind, v))
                .ok_or_else(|| PyValueError::new_err(format!("unknown metric `{k}`")))
        })
        .collect()
}

fn named(metrics: &MetricMap) -> BTreeMap<String, f64> {
    metrics.iter().map(|(k, v)| (k.name().to_string(), *v)).collect()
}

/// A ranked list of candidate models.
#[pyclass(name = "Ranking", module = "hwrec_py", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyRanking {
    inner: RankingTable,
}

#[pymethods]
impl PyRanking {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: RankingTable = parse("ranking", text)?;
        let problems = inner.violations();
        if !problems.is_empty() {
            return Err(PyValueError::new_err(problems.join("; ")));
        }
        Ok(Self { inner })
    }

    /// Builds a ranking from `{id: score}`; higher scores rank first.
    #[staticmethod]
    #[pyo3(signature = (scores, method = "metric"))]
    fn from_scores(scores: BTreeMap<String, f64>, method: &str) -> PyResult<Self> {
        let method = parse("method", &format!("\"{method}\""))?;
        let inner = RankingTable::from_scores(method, scores.into_iter().collect()).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.candidate_ids.clone()
    }

    #[getter]
    fn scores(&self) -> Vec<f64> {
        self.inner.scores.clone()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn ties(&self) -> Vec<Vec<usize>> {
        self.inner.ties.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        dump(&self.inner)
    }

    fn kendall_tau(&self, other: &PyRanking) -> PyResult<f64> {
        hwrec::kendall_tau(&self.inner, &other.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Ranking({:?}, method={})", self.inner.candidate_ids, self.inner.method)
    }
}

/// Weighted Copeland over per-model aggregates `{model: {metric: value}}`.
#[pyfunction]
fn weighted_copeland(aggregates: BTreeMap<String, BTreeMap<String, f64>>, weights_json: &str) -> PyResult<PyRanking> {
    let config: WeightConfig = parse("weight config", weights_json)?;
    let aggs = aggregates
        .into_iter()
        .map(|(id, m)| Ok((id, metric_map(m)?)))
        .collect::<PyResult<BTreeMap<_, _>>>()?;
    let inner = hwrec::copeland_from_aggregates(&aggs, &config).map_err(to_py)?;
    Ok(PyRanking { inner })
}

/// `f · Σ r_i^{w_i}` over the thresholded hardware metrics.
#[pyfunction]
fn objective_score(f_alpha: f64, hw_metrics: BTreeMap<String, f64>, weights_json: &str) -> PyResult<f64> {
    let config: WeightConfig = parse("weight config", weights_json)?;
    hwrec::objective_score(f_alpha, &metric_map(hw_metrics)?, &config).map_err(to_py)
}

#[pyfunction]
fn kendall_tau(a: &PyRanking, b: &PyRanking) -> PyResult<f64> {
    a.kendall_tau(b)
}

#[pyfunction]
fn f1_score(precision: f64, recall: f64) -> f64 {
    hwrec::metrics::f1_score(precision, recall)
}

/// Accuracy, macro precision, recall and f1 of a confusion matrix (rows are
/// the true class).
#[pyfunction]
fn classification_metrics(confusion: Vec<Vec<u64>>) -> PyResult<BTreeMap<String, f64>> {
    let report = hwrec::metrics::classification_metrics(&confusion).map_err(to_py)?;
    Ok(named(&report.as_metrics()))
}

/// Weighted Copeland over selector rankings, e.g. `[("task", r1), ("hardware", r2)]`.
#[pyfunction]
#[pyo3(signature = (outputs, weights = None))]
fn combine_selectors(outputs: Vec<(String, PyRanking)>, weights: Option<BTreeMap<String, f64>>) -> PyResult<PyRanking> {
    let kind = |name: &str| parse::<SelectorKind>("selector", &format!("\"{name}\""));
    let outputs = outputs
        .into_iter()
        .map(|(name, r)| Ok(SelectorOutput::new(kind(&name)?, r.inner)))
        .collect::<PyResult<Vec<_>>>()?;
    let weights = weights
        .map(|w| w.into_iter().map(|(k, v)| Ok((kind(&k)?, v))).collect::<PyResult<BTreeMap<_, _>>>())
        .transpose()?;
    let inner = hwrec::combine_selectors(&outputs, weights.as_ref()).map_err(to_py)?;
    Ok(PyRanking { inner })
}

/// A planted synthetic world.
#[pyclass(name = "World", module = "hwrec_py", frozen)]
pub struct PyWorld {
    inner: hwrec::PlantedWorld,
}

#[pymethods]
impl PyWorld {
    /// Generates a world from a spec such as `{"n_models": 6, "n_hardware": 2, "n_tasks": 2, "dims": 3, "seed": 7}`.
    #[staticmethod]
    fn generate(spec_json: &str) -> PyResult<Self> {
        let spec: hwrec::WorldSpec = parse("world spec", spec_json)?;
        Ok(Self { inner: hwrec::generate_world(&spec).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: hwrec::PlantedWorld::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn model_ids(&self) -> Vec<String> {
        self.inner.models.iter().map(|m| m.id.clone()).collect()
    }

    #[getter]
    fn hardware_ids(&self) -> Vec<String> {
        self.inner.hardware.iter().map(|h| h.id.clone()).collect()
    }

    #[getter]
    fn task_ids(&self) -> Vec<String> {
        self.inner.tasks.iter().map(|t| t.id.clone()).collect()
    }

    /// Registry JSON for `models`, `hardware` or `tasks`.
    fn registry_json(&self, kind: &str) -> PyResult<String> {
        match kind.parse::<RegistryKind>().map_err(to_py)? {
            RegistryKind::Models => dump(&self.inner.models),
            RegistryKind::Hardware => dump(&self.inner.hardware),
            RegistryKind::Tasks => dump(&self.inner.tasks),
        }
    }

    /// Ranking from the noiseless laws.
    fn true_ranking(&self, task_id: &str, hardware_id: &str, weights_json: &str) -> PyResult<PyRanking> {
        let config: WeightConfig = parse("weight config", weights_json)?;
        let truth = hwrec::true_ranking(&self.inner, task_id, hardware_id, &config).map_err(to_py)?;
        Ok(PyRanking { inner: truth.table })
    }

    /// Runs the benchmark protocol for every model on one (task, device)
    /// and returns mean aggregates `{model: {metric: value}}`.
    fn benchmark(&self, task_id: &str, hardware_id: &str) -> PyResult<BTreeMap<String, BTreeMap<String, f64>>> {
        let w = &self.inner;
        let (task, _) = w.task(task_id).map_err(to_py)?;
        let (hw, _) = w.hardware_profile(hardware_id).map_err(to_py)?;
        let pairs = w
            .models
            .iter()
            .map(|m| {
                let (workload, sensors) = world_workload(w, &m.id, task_id, hardware_id)?;
                Ok(BenchPair {
                    model_id: m.id.clone(),
                    task: task.clone(),
                    workload: Box::new(workload),
                    sensors: Some(Box::new(sensors)),
                    dataset_size: None,
                })
            })
            .collect::<hwrec::Result<Vec<_>>>()
            .map_err(to_py)?;
        let sensors = idle_sensors(w, hardware_id).map_err(to_py)?;
        let mut harness = Harness::with_clock(Box::new(sensors), HarnessConfig::default(), Box::new(ManualClock::default()))
            .map_err(to_py)?;
        let mut records = Vec::new();
        harness.benchmark_pairs(pairs, hw, &mut records).map_err(to_py)?;
        let aggs = aggregate_records(&records, &Scope::new(task_id, hardware_id), Statistic::Mean).map_err(to_py)?;
        Ok(aggs.values.iter().map(|(id, m)| (id.clone(), named(m))).collect())
    }

    /// Training examples (JSON) with noiseless ground truth for every
    /// (task, device) pair in the given lists; all ids when omitted.
    #[pyo3(signature = (weights_json, task_ids = None, hardware_ids = None))]
    fn training_set(&self, weights_json: &str, task_ids: Option<Vec<String>>, hardware_ids: Option<Vec<String>>) -> PyResult<String> {
        let config: WeightConfig = parse("weight config", weights_json)?;
        let w = &self.inner;
        let tasks = task_ids.unwrap_or_else(|| self.task_ids());
        let hws = hardware_ids.unwrap_or_else(|| self.hardware_ids());
        let mut set = Vec::new();
        for t in &tasks {
            for h in &hws {
                set.push(TrainExample {
                    task: Some(w.task(t).map_err(to_py)?.0.clone()),
                    hardware: Some(w.hardware_profile(h).map_err(to_py)?.0.clone()),
                    candidates: w.models.clone(),
                    truth: hwrec::true_ranking(w, t, h, &config).map_err(to_py)?,
                    refinement: None,
                });
            }
        }
        dump(&set)
    }

    fn __repr__(&self) -> String {
        format!(
            "World(seed={}, models={}, hardware={}, tasks={})",
            self.inner.seed,
            self.inner.models.len(),
            self.inner.hardware.len(),
            self.inner.tasks.len()
        )
    }
}

/// A trained similarity scorer.
#[pyclass(name = "Scorer", module = "hwrec_py", frozen)]
pub struct PyScorer {
    inner: hwrec::ScorerParams,
}

#[pymethods]
impl PyScorer {
    /// Trains on a JSON training set. `config_json` is a scorer config
    /// (`dims`, `token_dim`, `heads`, optional `source`, `fusion_mode`,
    /// `refine_dim`); `hyper_json` overrides `lr`, `epochs`, `seed`, `margin`.
    /// Returns the scorer and the per-epoch losses.
    #[staticmethod]
    #[pyo3(signature = (config_json, examples_json, hyper_json = None))]
    fn train(config_json: &str, examples_json: &str, hyper_json: Option<&str>) -> PyResult<(Self, Vec<f64>)> {
        let config: hwrec::ScorerConfig = parse("scorer config", config_json)?;
        let set: Vec<TrainExample> = parse("training set", examples_json)?;
        let hyper = match hyper_json {
            Some(text) => {
                let mut v: serde_json::Value = serde_json::to_value(TrainHyper::default()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
                let overrides: serde_json::Map<String, serde_json::Value> = parse("hyper", text)?;
                for (k, val) in overrides {
                    v[k] = val;
                }
                serde_json::from_value(v).map_err(|e| PyValueError::new_err(format!("malformed hyper JSON: {e}")))?
            }
            None => TrainHyper::default(),
        };
        let (inner, log) = hwrec::train_scorer(config, &set, &hyper).map_err(to_py)?;
        Ok((Self { inner }, log.epochs.iter().map(|e| e.loss).collect()))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: hwrec::ScorerParams::load(&path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: hwrec::ScorerParams::from_json(text).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    /// Mean Kendall tau over a JSON training set.
    fn mean_tau(&self, examples_json: &str) -> PyResult<f64> {
        let set: Vec<TrainExample> = parse("training set", examples_json)?;
        train::mean_tau(&self.inner, &set).map_err(to_py)
    }

    /// Ranks candidate models (registry JSON) for a task and an optional
    /// device, each given as JSON.
    #[pyo3(signature = (task_json, candidates_json, hardware_json = None))]
    fn recommend(&self, task_json: &str, candidates_json: &str, hardware_json: Option<&str>) -> PyResult<PyRanking> {
        let task: TaskDescriptor = parse("task", task_json)?;
        let candidates: Vec<ModelCard> = parse("candidates", candidates_json)?;
        let hardware: Option<HardwareProfile> = hardware_json.map(|h| parse("hardware", h)).transpose()?;
        let rec = hwrec::recommend_fusion(&task, hardware.as_ref(), &candidates, &self.inner, None, None).map_err(to_py)?;
        Ok(PyRanking { inner: rec.table })
    }
}

/// A store directory: registries, benchmark records and scorer artifacts.
#[pyclass(name = "Store", module = "hwrec_py")]
pub struct PyStore {
    inner: hwrec::Store,
}

#[pymethods]
impl PyStore {
    #[new]
    fn new(root: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: hwrec::Store::open(root).map_err(to_py)? })
    }

    /// Validates a registry file and loads it; returns the entry count.
    fn ingest(&self, kind: &str, path: PathBuf) -> PyResult<usize> {
        let kind = kind.parse::<RegistryKind>().map_err(to_py)?;
        Ok(self.inner.ingest_registry(&path, kind).map_err(to_py)?.count)
    }

    fn record_count(&self) -> PyResult<usize> {
        Ok(self.inner.records().map_err(to_py)?.len())
    }

    /// Weighted Copeland over the stored records for one (task, device).
    fn rank(&self, task_id: &str, hardware_id: &str, weights_json: &str) -> PyResult<PyRanking> {
        let config: WeightConfig = parse("weight config", weights_json)?;
        let records = self.inner.records().map_err(to_py)?;
        let aggs = aggregate_records(&records, &Scope::new(task_id, hardware_id), Statistic::Mean).map_err(to_py)?;
        let inner = hwrec::copeland_from_aggregates(&aggs.values, &config).map_err(to_py)?;
        Ok(PyRanking { inner })
    }
}

#[pymodule]
pub fn hwrec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRanking>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyScorer>()?;
    m.add_class::<PyStore>()?;
    m.add_function(wrap_pyfunction!(weighted_copeland, m)?)?;
    m.add_function(wrap_pyfunction!(objective_score, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(classification_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(combine_selectors, m)?)?;
    Ok(())
}
