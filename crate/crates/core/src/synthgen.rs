//! Planted-factor worlds: synthetic models, devices and datasets whose
//! benchmark behaviour follows known laws.
//!
//! For model `m`, device `h` and batch size `b`:
//!
//! ```text
//! latency_ms  = speed_h · exp(γ · u_m·v_h) · (overhead_m + per_sample_m · b)
//! memory_mb   = weights_mb_m + activation_mb_m · b
//! power_w     = base_power_h + load_m · efficiency_h
//! cpu_temp_c  = idle_temp_h + heat_h · power_w
//! accuracy    = k_mt / N_t,  k_mt = round(N_t · (0.35 + 0.6 · σ(q_m + 2·a_t·b_m)))
//! ```
//!
//! where `γ` is the interaction strength and `σ` the logistic function.
//! Every law is affine in `b`, so the mean over a fixed-batch pass equals
//! the law at the mean batch size. Accuracy counts are distinct per task.
//! Measurement noise multiplies hardware readings by `1 + noise_sigma · z`.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{HardwareProfile, MetricKind, ModelCard, RankMethod, TaskDescriptor, WeightConfig};
use crate::error::{Error, Result};
use crate::fusion::features::{fnv1a, task_features, HardwareEncoder};
use crate::fusion::GroundTruthRanking;
use crate::harness::{fixed_batch_sizes, SensorProvider, WorkResult, Workload};
use crate::metrics::{carbon_footprint, CompositeSpec};
use crate::ranking::{copeland_from_aggregates, MetricMap};

pub const ARCHITECTURES: [&str; 5] = ["resnet", "mobilenet", "efficientnet", "vit", "mlp"];
const CPU_MODELS: [&str; 5] = ["cortex-a53", "cortex-a72", "cortex-a76", "atom-x5", "core-i5"];
const IDLE_CPU_UTIL: f64 = 0.05;
const IDLE_RAM_UTIL: f64 = 0.30;

/// How a workload reports correct predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Deterministic running tally: after `i` samples exactly `round(acc·i)`
    /// are correct.
    #[default]
    Tally,
    /// Each prediction is an independent Bernoulli draw.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub n_models: usize,
    pub n_hardware: usize,
    pub n_tasks: usize,
    /// Dimension of the latent interaction and accuracy vectors.
    pub dims: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub interaction_strength: f64,
    #[serde(default = "default_buckets")]
    pub hash_buckets: usize,
    #[serde(default = "default_samples")]
    pub samples_range: (u64, u64),
    #[serde(default)]
    pub accuracy_mode: AccuracyMode,
}

fn default_buckets() -> usize {
    4
}

fn default_samples() -> (u64, u64) {
    (96, 320)
}

impl WorldSpec {
    pub fn new(n_models: usize, n_hardware: usize, n_tasks: usize, seed: u64) -> Self {
        Self {
            n_models,
            n_hardware,
            n_tasks,
            dims: 3,
            seed,
            noise_sigma: 0.0,
            interaction_strength: 0.0,
            hash_buckets: default_buckets(),
            samples_range: default_samples(),
            accuracy_mode: AccuracyMode::Tally,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_interaction(mut self, strength: f64) -> Self {
        self.interaction_strength = strength;
        self
    }

    pub fn with_dims(mut self, dims: usize) -> Self {
        self.dims = dims;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_models", self.n_models), ("n_hardware", self.n_hardware), ("n_tasks", self.n_tasks)] {
            if n == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if self.dims == 0 || self.hash_buckets == 0 {
            return Err(Error::invalid("dims and hash_buckets must be >= 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.interaction_strength.is_finite() {
            return Err(Error::invalid("interaction_strength must be finite"));
        }
        let (lo, hi) = self.samples_range;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("samples_range ({lo}, {hi}) is invalid")));
        }
        if self.n_models as u64 >= lo {
            return Err(Error::invalid(format!(
                "{} models need datasets of more than {} samples for distinct accuracies",
                self.n_models, self.n_models
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLatent {
    pub overhead_ms: f64,
    pub per_sample_ms: f64,
    pub weights_mb: f64,
    pub activation_mb: f64,
    pub load_w: f64,
    pub quality: f64,
    /// Interaction factor, paired with the device's `v`.
    pub u: Vec<f64>,
    /// Accuracy factor, paired with the task's `a`.
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareLatent {
    /// Latency multiplier; 2 means twice as slow as 1.
    pub speed: f64,
    pub base_power_w: f64,
    pub efficiency: f64,
    pub idle_temp_c: f64,
    pub heat_per_w: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLatent {
    pub a: Vec<f64>,
    /// Correct predictions over the full dataset, per model.
    pub correct: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub models: BTreeMap<String, ModelLatent>,
    pub hardware: BTreeMap<String, HardwareLatent>,
    pub tasks: BTreeMap<String, TaskLatent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedWorld {
    pub seed: u64,
    pub spec: WorldSpec,
    pub models: Vec<ModelCard>,
    pub hardware: Vec<HardwareProfile>,
    pub tasks: Vec<TaskDescriptor>,
    pub latent: Latents,
    pub noise_sigma: f64,
    pub interaction_strength: f64,
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn generate_world(spec: &WorldSpec) -> Result<PlantedWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.dims;
    let mut latent = Latents::default();

    let mut models = Vec::with_capacity(spec.n_models);
    for i in 0..spec.n_models {
        let id = format!("m{i:02}");
        let arch_idx = rng.random_range(0..ARCHITECTURES.len());
        let param_count = 10f64.powf(rng.random_range(5.0..8.0)).round() as u64;
        let mparams = param_count as f64 / 1e6;
        let l = ModelLatent {
            overhead_ms: rng.random_range(0.5..2.5),
            per_sample_ms: 0.05 * mparams.powf(0.8) * rng.random_range(0.7..1.3),
            weights_mb: 4.0 * mparams,
            activation_mb: 0.02 * mparams.sqrt() * rng.random_range(0.7..1.3),
            load_w: (0.5 + mparams.ln_1p()) * rng.random_range(0.8..1.2),
            quality: rng.random_range(-1.0..1.0),
            u: uniform_vec(&mut rng, k),
            b: uniform_vec(&mut rng, k),
        };
        let mut features = vec![(param_count as f64).ln() / 10.0];
        features.extend((0..ARCHITECTURES.len()).map(|a| if a == arch_idx { 1.0 } else { 0.0 }));
        features.push((l.overhead_ms + 32.0 * l.per_sample_ms).ln());
        features.push(l.load_w / 5.0);
        features.push(l.quality);
        features.extend(&l.u);
        features.extend(&l.b);
        models.push(ModelCard::new(
            &id,
            format!("{}-{i}", ARCHITECTURES[arch_idx]),
            ARCHITECTURES[arch_idx],
            param_count,
            features,
            "synthetic",
        )?);
        latent.models.insert(id, l);
    }

    let encoder = HardwareEncoder { buckets: spec.hash_buckets };
    let mut hardware = Vec::with_capacity(spec.n_hardware);
    for i in 0..spec.n_hardware {
        let id = format!("hw{i:02}");
        let cpu_model = CPU_MODELS[rng.random_range(0..CPU_MODELS.len())];
        let cores = rng.random_range(1..=8u32);
        let freq = rng.random_range(800.0..3000.0);
        let ram = 2f64.powi(rng.random_range(9..15));
        let storage = 2f64.powi(rng.random_range(13..18));
        let accelerator = rng.random_bool(0.3).then(|| "npu".to_string());
        let l = HardwareLatent {
            speed: rng.random_range(0.5f64..4.0),
            base_power_w: rng.random_range(1.0..5.0),
            efficiency: rng.random_range(0.5..2.0),
            idle_temp_c: rng.random_range(30.0..45.0),
            heat_per_w: rng.random_range(0.3..1.0),
            v: uniform_vec(&mut rng, k),
        };
        let mut features = encoder.encode(cpu_model, cores, freq, ram, storage, accelerator.as_deref());
        features.extend(&l.v);
        hardware.push(HardwareProfile::new(
            &id,
            format!("device-{i}"),
            cpu_model,
            cores,
            freq,
            ram,
            storage,
            accelerator,
            features,
        )?);
        latent.hardware.insert(id, l);
    }

    let mut tasks = Vec::with_capacity(spec.n_tasks);
    for i in 0..spec.n_tasks {
        let id = format!("t{i:02}");
        let num_classes = rng.random_range(2..=100u32);
        let num_samples = rng.random_range(spec.samples_range.0..=spec.samples_range.1);
        let side = [32u32, 64, 224][rng.random_range(0..3)];
        let shape = vec![3, side, side];
        let a = uniform_vec(&mut rng, k);
        let mut features = task_features(num_classes, num_samples, &shape);
        features.extend(&a);

        let mut taken = BTreeSet::new();
        let mut correct = BTreeMap::new();
        for m in &models {
            let ml = &latent.models[&m.id];
            let acc = 0.35 + 0.6 * sigmoid(ml.quality + 2.0 * dot(&a, &ml.b));
            let mut c = (acc * num_samples as f64).round() as u64;
            // nudge to the nearest free count so accuracies never tie
            let mut step = 1i64;
            while taken.contains(&c) {
                let cand = c as i64 + step;
                step = if step > 0 { -step } else { -step + 1 };
                if (1..num_samples as i64).contains(&cand) && !taken.contains(&(cand as u64)) {
                    c = cand as u64;
                }
            }
            taken.insert(c);
            correct.insert(m.id.clone(), c);
        }
        tasks.push(TaskDescriptor::new(&id, format!("synthetic-{i}"), num_classes, num_samples, shape, features)?);
        latent.tasks.insert(id, TaskLatent { a, correct });
    }

    Ok(PlantedWorld {
        seed: spec.seed,
        spec: spec.clone(),
        models,
        hardware,
        tasks,
        latent,
        noise_sigma: spec.noise_sigma,
        interaction_strength: spec.interaction_strength,
    })
}

impl PlantedWorld {
    pub fn model(&self, id: &str) -> Result<(&ModelCard, &ModelLatent)> {
        let card = self.models.iter().find(|m| m.id == id).ok_or_else(|| unknown("model", id))?;
        Ok((card, &self.latent.models[id]))
    }

    pub fn hardware_profile(&self, id: &str) -> Result<(&HardwareProfile, &HardwareLatent)> {
        let hw = self.hardware.iter().find(|h| h.id == id).ok_or_else(|| unknown("hardware", id))?;
        Ok((hw, &self.latent.hardware[id]))
    }

    pub fn task(&self, id: &str) -> Result<(&TaskDescriptor, &TaskLatent)> {
        let t = self.tasks.iter().find(|t| t.id == id).ok_or_else(|| unknown("task", id))?;
        Ok((t, &self.latent.tasks[id]))
    }

    /// Latency in ms of one batch, without noise.
    pub fn latency_law(&self, model_id: &str, hardware_id: &str, batch_size: f64) -> Result<f64> {
        let (_, m) = self.model(model_id)?;
        let (_, h) = self.hardware_profile(hardware_id)?;
        Ok(latency(m, h, self.interaction_strength, batch_size))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn unknown(kind: &'static str, id: &str) -> Error {
    Error::UnknownId { kind, id: id.to_string() }
}

fn latency(m: &ModelLatent, h: &HardwareLatent, gamma: f64, batch_size: f64) -> f64 {
    h.speed * (gamma * dot(&m.u, &h.v)).exp() * (m.overhead_ms + m.per_sample_ms * batch_size)
}

fn power(m: &ModelLatent, h: &HardwareLatent) -> f64 {
    h.base_power_w + m.load_w * h.efficiency
}

/// Noiseless aggregates a fixed-batch pass over the task's dataset would
/// measure, including the default composite footprint.
pub fn latent_metrics(world: &PlantedWorld, model_id: &str, task_id: &str, hardware_id: &str) -> Result<MetricMap> {
    latent_metrics_with(world, model_id, task_id, hardware_id, &CompositeSpec::default())
}

pub fn latent_metrics_with(
    world: &PlantedWorld,
    model_id: &str,
    task_id: &str,
    hardware_id: &str,
    composite: &CompositeSpec,
) -> Result<MetricMap> {
    let (_, m) = world.model(model_id)?;
    let (task, t) = world.task(task_id)?;
    let (_, h) = world.hardware_profile(hardware_id)?;
    let sizes = fixed_batch_sizes(task.num_samples)?;
    let mean_batch = task.num_samples as f64 / sizes.len() as f64;
    let p = power(m, h);
    let mut out = MetricMap::from([
        (MetricKind::ExecutionTimeMs, latency(m, h, world.interaction_strength, mean_batch)),
        (MetricKind::MemoryMb, m.weights_mb + m.activation_mb * mean_batch),
        (MetricKind::PowerW, p),
        (MetricKind::CpuTempC, h.idle_temp_c + h.heat_per_w * p),
    ]);
    out.insert(MetricKind::CarbonFootprint, carbon_footprint(&out, composite)?);
    out.insert(MetricKind::Accuracy, t.correct[model_id] as f64 / task.num_samples as f64);
    Ok(out)
}

/// Latent aggregates of every model for one (task, device).
pub fn latent_aggregates(world: &PlantedWorld, task_id: &str, hardware_id: &str) -> Result<BTreeMap<String, MetricMap>> {
    world
        .models
        .iter()
        .map(|m| Ok((m.id.clone(), latent_metrics(world, &m.id, task_id, hardware_id)?)))
        .collect()
}

/// Weighted Copeland over the noiseless laws.
pub fn true_ranking(
    world: &PlantedWorld,
    task_id: &str,
    hardware_id: &str,
    config: &WeightConfig,
) -> Result<GroundTruthRanking> {
    let aggregates = latent_aggregates(world, task_id, hardware_id)?;
    let table = copeland_from_aggregates(&aggregates, config)?.with_method(RankMethod::GroundTruth);
    Ok(GroundTruthRanking::new(Some(task_id.to_string()), Some(hardware_id.to_string()), table))
}

/// Smallest relative gap `|x − y| / max(|x|, |y|)` between any two models'
/// latent values, over the given metrics.
pub fn min_relative_gap(world: &PlantedWorld, task_id: &str, hardware_id: &str, kinds: &[MetricKind]) -> Result<f64> {
    let aggs = latent_aggregates(world, task_id, hardware_id)?;
    let mut gap = f64::INFINITY;
    for &kind in kinds {
        let values: Vec<f64> = aggs.values().map(|m| m[&kind]).collect();
        for (i, x) in values.iter().enumerate() {
            for y in &values[i + 1..] {
                let scale = x.abs().max(y.abs());
                if scale > 0.0 {
                    gap = gap.min((x - y).abs() / scale);
                }
            }
        }
    }
    Ok(gap)
}

#[derive(Debug)]
struct Shared {
    batch_size: u32,
    rng: ChaCha8Rng,
}

/// Forward passes following the world's latency and accuracy laws.
#[derive(Debug)]
pub struct SyntheticWorkload {
    model: ModelLatent,
    hardware: HardwareLatent,
    gamma: f64,
    sigma: f64,
    accuracy_mode: AccuracyMode,
    correct_total: u64,
    num_samples: u64,
    position: u64,
    description: String,
    shared: Rc<RefCell<Shared>>,
}

/// Sensor readings following the world's memory, power and temperature laws
/// for the batch most recently run by the paired workload.
#[derive(Debug)]
pub struct SyntheticSensors {
    model: Option<ModelLatent>,
    hardware: HardwareLatent,
    sigma: f64,
    shared: Rc<RefCell<Shared>>,
}

fn noisy(rng: &mut ChaCha8Rng, sigma: f64, value: f64) -> f64 {
    if sigma == 0.0 {
        return value;
    }
    let z: f64 = StandardNormal.sample(rng);
    value * (1.0 + sigma * z).max(1e-3)
}

impl Workload for SyntheticWorkload {
    fn forward(&mut self, batch_size: u32) -> Result<WorkResult> {
        let mut shared = self.shared.borrow_mut();
        shared.batch_size = batch_size;
        let law = latency(&self.model, &self.hardware, self.gamma, batch_size as f64);
        let latency_ms = noisy(&mut shared.rng, self.sigma, law);
        let b = batch_size as u64;
        let correct = match self.accuracy_mode {
            AccuracyMode::Tally => {
                // round(k·i/N) in integers
                let through = |i: u64| (2 * self.correct_total * i + self.num_samples) / (2 * self.num_samples);
                through(self.position + b) - through(self.position)
            }
            AccuracyMode::Bernoulli => {
                let p = self.correct_total as f64 / self.num_samples as f64;
                Binomial::new(b, p).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut shared.rng)
            }
        };
        self.position += b;
        Ok(WorkResult { latency_ms, correct, total: b, confusion: None })
    }

    fn description(&self) -> String {
        self.description.clone()
    }

    fn rewind(&mut self) {
        self.position = 0;
    }
}

impl SensorProvider for SyntheticSensors {
    fn cpu_util(&mut self) -> Result<f64> {
        Ok(IDLE_CPU_UTIL)
    }

    fn ram_util(&mut self) -> Result<f64> {
        Ok(IDLE_RAM_UTIL)
    }

    fn cpu_temp_c(&mut self) -> Result<f64> {
        let p = self.current_power();
        let mut shared = self.shared.borrow_mut();
        Ok(noisy(&mut shared.rng, self.sigma, self.hardware.idle_temp_c + self.hardware.heat_per_w * p))
    }

    fn power_w(&mut self) -> Result<f64> {
        let p = self.current_power();
        let mut shared = self.shared.borrow_mut();
        Ok(noisy(&mut shared.rng, self.sigma, p))
    }

    fn begin_window(&mut self) -> Result<()> {
        Ok(())
    }

    fn peak_memory_mb(&mut self) -> Result<f64> {
        let Some(m) = &self.model else { return Ok(0.0) };
        let mut shared = self.shared.borrow_mut();
        let value = m.weights_mb + m.activation_mb * shared.batch_size as f64;
        Ok(noisy(&mut shared.rng, self.sigma, value))
    }
}

impl SyntheticSensors {
    fn current_power(&self) -> f64 {
        match &self.model {
            Some(m) => power(m, &self.hardware),
            None => self.hardware.base_power_w,
        }
    }
}

/// Workload and sensors for one (model, task, device), sharing a noise
/// stream seeded from the world seed and the ids.
pub fn world_workload(
    world: &PlantedWorld,
    model_id: &str,
    task_id: &str,
    hardware_id: &str,
) -> Result<(SyntheticWorkload, SyntheticSensors)> {
    let (_, m) = world.model(model_id)?;
    let (task, t) = world.task(task_id)?;
    let (_, h) = world.hardware_profile(hardware_id)?;
    let seed = world.seed ^ fnv1a(&format!("{model_id}/{task_id}/{hardware_id}"));
    let shared = Rc::new(RefCell::new(Shared { batch_size: 0, rng: ChaCha8Rng::seed_from_u64(seed) }));
    let workload = SyntheticWorkload {
        model: m.clone(),
        hardware: h.clone(),
        gamma: world.interaction_strength,
        sigma: world.noise_sigma,
        accuracy_mode: world.spec.accuracy_mode,
        correct_total: t.correct[model_id],
        num_samples: task.num_samples,
        position: 0,
        description: format!("synthetic {model_id} on {task_id} @ {hardware_id}"),
        shared: Rc::clone(&shared),
    };
    let sensors = SyntheticSensors {
        model: Some(m.clone()),
        hardware: h.clone(),
        sigma: world.noise_sigma,
        shared,
    };
    Ok((workload, sensors))
}

/// Idle-device sensors for stabilization between runs.
pub fn idle_sensors(world: &PlantedWorld, hardware_id: &str) -> Result<SyntheticSensors> {
    let (_, h) = world.hardware_profile(hardware_id)?;
    let seed = world.seed ^ fnv1a(&format!("idle/{hardware_id}"));
    Ok(SyntheticSensors {
        model: None,
        hardware: h.clone(),
        sigma: 0.0,
        shared: Rc::new(RefCell::new(Shared { batch_size: 0, rng: ChaCha8Rng::seed_from_u64(seed) })),
    })
}
