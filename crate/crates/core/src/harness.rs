//! Benchmark harness: wait for the device to settle, sweep batch sizes
//! 1..=100 with one forward pass each, then run the dataset at batch size 32,
//! then settle again.
//!
//! Workloads and sensors are trait objects so real inference engines and
//! device counters can be attached without touching the measurement loop.
//! [`scripted`] holds deterministic fixtures; [`host`] reads the build
//! machine's counters; the synthetic provider lives in [`crate::synthgen`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::domain::{BenchmarkRecord, HardwareProfile, MetricKind, Phase, TaskDescriptor};
use crate::error::{Error, Result};
use crate::metrics::{carbon_footprint, classification_metrics, CompositeSpec};

pub mod host;
pub mod scripted;

pub const SWEEP_MAX_BATCH: u32 = 100;
pub const FIXED_BATCH_SIZE: u32 = 32;

/// Environment variable naming the default sensor provider.
pub const SENSOR_ENV: &str = "HWREC_SENSOR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkResult {
    pub latency_ms: f64,
    pub correct: u64,
    pub total: u64,
    /// Optional per-batch confusion matrix (rows true, columns predicted).
    #[serde(default)]
    pub confusion: Option<Vec<Vec<u64>>>,
}

pub trait Workload {
    fn forward(&mut self, batch_size: u32) -> Result<WorkResult>;

    fn description(&self) -> String;

    /// Restart iteration over the dataset. Called at the start of each phase.
    fn rewind(&mut self) {}
}

impl<W: Workload + ?Sized> Workload for Box<W> {
    fn forward(&mut self, batch_size: u32) -> Result<WorkResult> {
        (**self).forward(batch_size)
    }
    fn description(&self) -> String {
        (**self).description()
    }
    fn rewind(&mut self) {
        (**self).rewind()
    }
}

/// Device counters. Utilisations are fractions in [0,1].
pub trait SensorProvider {
    fn cpu_util(&mut self) -> Result<f64>;
    fn ram_util(&mut self) -> Result<f64>;
    fn cpu_temp_c(&mut self) -> Result<f64>;
    /// Mean power in watts over the current measurement window.
    fn power_w(&mut self) -> Result<f64>;
    /// Marks the start of a measurement window and records the memory baseline.
    fn begin_window(&mut self) -> Result<()>;
    /// High-water memory above the window baseline, in MB.
    fn peak_memory_mb(&mut self) -> Result<f64>;
}

impl<S: SensorProvider + ?Sized> SensorProvider for Box<S> {
    fn cpu_util(&mut self) -> Result<f64> {
        (**self).cpu_util()
    }
    fn ram_util(&mut self) -> Result<f64> {
        (**self).ram_util()
    }
    fn cpu_temp_c(&mut self) -> Result<f64> {
        (**self).cpu_temp_c()
    }
    fn power_w(&mut self) -> Result<f64> {
        (**self).power_w()
    }
    fn begin_window(&mut self) -> Result<()> {
        (**self).begin_window()
    }
    fn peak_memory_mb(&mut self) -> Result<f64> {
        (**self).peak_memory_mb()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Host,
    Scripted,
    Synthetic,
}

impl SensorKind {
    /// Reads [`SENSOR_ENV`], falling back to `Synthetic`.
    pub fn from_env() -> Result<Self> {
        match std::env::var(SENSOR_ENV) {
            Ok(v) if !v.is_empty() => v.parse(),
            _ => Ok(SensorKind::Synthetic),
        }
    }
}

impl FromStr for SensorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "host" => Ok(SensorKind::Host),
            "scripted" => Ok(SensorKind::Scripted),
            "synthetic" => Ok(SensorKind::Synthetic),
            other => Err(Error::invalid(format!(
                "unknown sensor provider `{other}` (expected host, scripted or synthetic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizePolicy {
    pub max_cpu_util: f64,
    pub max_ram_util: f64,
    pub temp_range_c: (f64, f64),
    pub poll_interval_ms: u64,
    pub timeout_ms: u64,
}

impl Default for StabilizePolicy {
    fn default() -> Self {
        Self {
            max_cpu_util: 0.20,
            max_ram_util: 0.80,
            temp_range_c: (0.0, 70.0),
            poll_interval_ms: 100,
            timeout_ms: 30_000,
        }
    }
}

impl StabilizePolicy {
    pub fn validate(&self) -> Result<()> {
        let (low, high) = self.temp_range_c;
        if low.is_nan() || high.is_nan() || low >= high {
            return Err(Error::invalid(format!("temperature range ({low}, {high}) is empty")));
        }
        for (name, v) in [("max_cpu_util", self.max_cpu_util), ("max_ram_util", self.max_ram_util)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0,1], got {v}")));
            }
        }
        if self.poll_interval_ms == 0 || self.timeout_ms == 0 {
            return Err(Error::invalid("poll interval and timeout must be positive"));
        }
        Ok(())
    }

    fn is_nominal(&self, r: &Readings) -> bool {
        r.cpu_util <= self.max_cpu_util
            && r.ram_util <= self.max_ram_util
            && r.temp_c >= self.temp_range_c.0
            && r.temp_c <= self.temp_range_c.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readings {
    pub cpu_util: f64,
    pub ram_util: f64,
    pub temp_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizeOutcome {
    pub stabilized: bool,
    pub waited_ms: u64,
    pub polls: u32,
    pub last_readings: Readings,
}

pub trait Clock {
    fn elapsed(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

/// Wall clock.
#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.origin.elapsed()
    }
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Virtual clock that only advances when slept on.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: std::cell::Cell<Duration>,
}

impl Clock for ManualClock {
    fn elapsed(&self) -> Duration {
        self.now.get()
    }
    fn sleep(&self, d: Duration) {
        self.now.set(self.now.get() + d)
    }
}

fn read_sensor(sensor: &'static str, value: Result<f64>) -> Result<f64> {
    match value {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Sensor {
            sensor,
            message: format!("non-finite reading {v}"),
        }),
        Err(Error::Sensor { sensor, message }) => Err(Error::Sensor { sensor, message }),
        Err(e) => Err(Error::Sensor {
            sensor,
            message: e.to_string(),
        }),
    }
}

fn read_fraction(sensor: &'static str, value: Result<f64>) -> Result<f64> {
    let v = read_sensor(sensor, value)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Sensor {
            sensor,
            message: format!("utilisation {v} outside [0,1]"),
        });
    }
    Ok(v)
}

/// Polls until CPU and RAM utilisation are at or below the policy limits and
/// the temperature is inside the range, or the timeout elapses.
pub fn stabilize(
    sensors: &mut dyn SensorProvider,
    policy: &StabilizePolicy,
    clock: &dyn Clock,
) -> Result<StabilizeOutcome> {
    policy.validate()?;
    let start = clock.elapsed();
    let timeout = Duration::from_millis(policy.timeout_ms);
    let poll = Duration::from_millis(policy.poll_interval_ms);
    let mut polls = 0;
    loop {
        let readings = Readings {
            cpu_util: read_fraction("cpu_util", sensors.cpu_util())?,
            ram_util: read_fraction("ram_util", sensors.ram_util())?,
            temp_c: read_sensor("cpu_temp_c", sensors.cpu_temp_c())?,
        };
        polls += 1;
        let waited = clock.elapsed().saturating_sub(start);
        let outcome = |stabilized| StabilizeOutcome {
            stabilized,
            waited_ms: waited.as_millis() as u64,
            polls,
            last_readings: readings,
        };
        if policy.is_nominal(&readings) {
            return Ok(outcome(true));
        }
        if waited >= timeout {
            return Ok(outcome(false));
        }
        clock.sleep(poll.min(timeout - waited));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunIds {
    pub model_id: String,
    pub task_id: String,
    pub hardware_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub phase: Phase,
    pub batch_index: u32,
    pub batch_size: u32,
    pub message: String,
}

/// Records of one phase plus the failure that cut it short, if any.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseOutcome {
    pub records: Vec<BenchmarkRecord>,
    pub failure: Option<BatchFailure>,
    pub correct: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub policy: StabilizePolicy,
    pub composite: CompositeSpec,
    /// Forward passes per sweep batch size.
    pub sweep_repeats: u32,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            policy: StabilizePolicy::default(),
            composite: CompositeSpec::default(),
            sweep_repeats: 1,
        }
    }
}

/// Destination for measured records.
pub trait RecordSink {
    fn append(&mut self, records: &[BenchmarkRecord]) -> Result<()>;
}

impl RecordSink for Vec<BenchmarkRecord> {
    fn append(&mut self, records: &[BenchmarkRecord]) -> Result<()> {
        self.extend_from_slice(records);
        Ok(())
    }
}

/// One (model, dataset) pair to benchmark.
pub struct BenchPair {
    pub model_id: String,
    pub task: TaskDescriptor,
    pub workload: Box<dyn Workload>,
    /// Sensors used while measuring this pair; the harness sensors otherwise.
    pub sensors: Option<Box<dyn SensorProvider>>,
    /// Samples to run at the fixed batch size; defaults to `task.num_samples`.
    pub dataset_size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PairStatus {
    Completed,
    Failed { failure: BatchFailure },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub model_id: String,
    pub task_id: String,
    pub status: PairStatus,
    pub records: usize,
    pub mean_latency_b32_ms: Option<f64>,
    pub peak_memory_mb: Option<f64>,
    pub mean_power_w: Option<f64>,
    pub accuracy: Option<f64>,
    pub correct: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub hardware_id: String,
    pub pairs: Vec<PairReport>,
    pub total_records: usize,
    pub stabilize_calls: usize,
}

impl RunReport {
    pub fn failed(&self) -> impl Iterator<Item = &PairReport> {
        self.pairs
            .iter()
            .filter(|p| matches!(p.status, PairStatus::Failed { .. }))
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "hardware {}: {} records, {} stabilize calls",
            self.hardware_id, self.total_records, self.stabilize_calls
        )?;
        writeln!(
            f,
            "{:<20} {:<16} {:>8} {:>12} {:>12} {:>10} {:>9}  status",
            "model", "task", "records", "lat@32 ms", "peak MB", "power W", "accuracy"
        )?;
        for p in &self.pairs {
            let status = match &p.status {
                PairStatus::Completed => "ok".to_string(),
                PairStatus::Failed { failure } => {
                    format!("failed at batch {} ({})", failure.batch_size, failure.message)
                }
            };
            writeln!(
                f,
                "{:<20} {:<16} {:>8} {:>12} {:>12} {:>10} {:>9}  {}",
                p.model_id,
                p.task_id,
                p.records,
                opt(p.mean_latency_b32_ms, 3),
                opt(p.peak_memory_mb, 2),
                opt(p.mean_power_w, 3),
                opt(p.accuracy, 4),
                status
            )?;
        }
        Ok(())
    }
}

/// Runs the measurement procedure. One harness serves one sequential run.
pub struct Harness {
    sensors: Box<dyn SensorProvider>,
    clock: Box<dyn Clock>,
    config: HarnessConfig,
    last: Option<StabilizeOutcome>,
    stabilize_calls: usize,
}

impl Harness {
    pub fn new(sensors: Box<dyn SensorProvider>, config: HarnessConfig) -> Result<Self> {
        Self::with_clock(sensors, config, Box::new(SystemClock::default()))
    }

    pub fn with_clock(
        sensors: Box<dyn SensorProvider>,
        config: HarnessConfig,
        clock: Box<dyn Clock>,
    ) -> Result<Self> {
        config.policy.validate()?;
        config.composite.validate()?;
        if config.sweep_repeats == 0 {
            return Err(Error::invalid("sweep_repeats must be >= 1"));
        }
        Ok(Self {
            sensors,
            clock,
            config,
            last: None,
            stabilize_calls: 0,
        })
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.config
    }

    pub fn stabilize_calls(&self) -> usize {
        self.stabilize_calls
    }

    pub fn last_stabilize(&self) -> Option<&StabilizeOutcome> {
        self.last.as_ref()
    }

    /// Stabilizes on the harness sensors. A timeout is not an error; the
    /// outcome is attached to every following record as `stabilized`.
    pub fn stabilize(&mut self) -> Result<StabilizeOutcome> {
        let outcome = stabilize(self.sensors.as_mut(), &self.config.policy, self.clock.as_ref())?;
        self.stabilize_calls += 1;
        self.last = Some(outcome.clone());
        Ok(outcome)
    }

    fn ensure_stabilized(&mut self) -> Result<bool> {
        match &self.last {
            Some(o) => Ok(o.stabilized),
            None => Ok(self.stabilize()?.stabilized),
        }
    }

    /// One forward pass (times `sweep_repeats`) for each batch size 1..=100.
    pub fn batch_sweep(
        &mut self,
        workload: &mut dyn Workload,
        sensors: Option<&mut dyn SensorProvider>,
        ids: &RunIds,
    ) -> Result<PhaseOutcome> {
        let stabilized = self.ensure_stabilized()?;
        let sizes: Vec<u32> = (1..=SWEEP_MAX_BATCH)
            .flat_map(|b| std::iter::repeat_n(b, self.config.sweep_repeats as usize))
            .collect();
        let sensors = match sensors {
            Some(s) => s,
            None => self.sensors.as_mut(),
        };
        Ok(run_phase(
            workload,
            sensors,
            ids,
            Phase::BatchSweep,
            &sizes,
            stabilized,
            &self.config.composite,
        ))
    }

    /// Runs `dataset_size` samples at batch size 32 (the last batch holds the
    /// remainder), then stabilizes again.
    pub fn fixed_batch_run(
        &mut self,
        workload: &mut dyn Workload,
        sensors: Option<&mut dyn SensorProvider>,
        ids: &RunIds,
        dataset_size: u64,
    ) -> Result<PhaseOutcome> {
        let sizes = fixed_batch_sizes(dataset_size)?;
        let stabilized = self.ensure_stabilized()?;
        let outcome = {
            let sensors = match sensors {
                Some(s) => s,
                None => self.sensors.as_mut(),
            };
            run_phase(
                workload,
                sensors,
                ids,
                Phase::FixedBatch,
                &sizes,
                stabilized,
                &self.config.composite,
            )
        };
        self.stabilize()?;
        Ok(outcome)
    }

    /// Benchmarks every pair on one device and appends all records to `sink`.
    /// A failing pair is reported and the remaining pairs still run.
    pub fn benchmark_pairs(
        &mut self,
        pairs: Vec<BenchPair>,
        hardware: &HardwareProfile,
        sink: &mut dyn RecordSink,
    ) -> Result<RunReport> {
        if pairs.is_empty() {
            return Err(Error::invalid("no (model, dataset) pairs to benchmark"));
        }
        self.stabilize()?;
        let mut reports = Vec::with_capacity(pairs.len());
        let mut total_records = 0;
        for mut pair in pairs {
            let ids = RunIds {
                model_id: pair.model_id.clone(),
                task_id: pair.task.id.clone(),
                hardware_id: hardware.id.clone(),
            };
            let dataset_size = pair.dataset_size.unwrap_or(pair.task.num_samples);

            let sweep = self.batch_sweep(pair.workload.as_mut(), pair_sensors(&mut pair.sensors), &ids)?;
            sink.append(&sweep.records)?;
            let mut failure = sweep.failure.clone();
            let mut fixed = PhaseOutcome::default();
            if failure.is_none() {
                fixed = self.fixed_batch_run(
                    pair.workload.as_mut(),
                    pair_sensors(&mut pair.sensors),
                    &ids,
                    dataset_size,
                )?;
                sink.append(&fixed.records)?;
                failure = fixed.failure.clone();
            } else {
                self.stabilize()?;
            }
            total_records += sweep.records.len() + fixed.records.len();
            reports.push(pair_report(&ids, &sweep, &fixed, failure));
        }
        Ok(RunReport {
            hardware_id: hardware.id.clone(),
            pairs: reports,
            total_records,
            stabilize_calls: self.stabilize_calls,
        })
    }
}

fn pair_sensors(sensors: &mut Option<Box<dyn SensorProvider>>) -> Option<&mut dyn SensorProvider> {
    sensors.as_mut().map(|s| s.as_mut() as &mut dyn SensorProvider)
}

/// Batch sizes for a fixed-batch pass over `dataset_size` samples.
pub fn fixed_batch_sizes(dataset_size: u64) -> Result<Vec<u32>> {
    if dataset_size == 0 {
        return Err(Error::invalid("dataset is empty"));
    }
    let full = dataset_size / FIXED_BATCH_SIZE as u64;
    let rem = (dataset_size % FIXED_BATCH_SIZE as u64) as u32;
    let mut sizes = vec![FIXED_BATCH_SIZE; full as usize];
    if rem > 0 {
        sizes.push(rem);
    }
    Ok(sizes)
}

fn run_phase(
    workload: &mut dyn Workload,
    sensors: &mut dyn SensorProvider,
    ids: &RunIds,
    phase: Phase,
    sizes: &[u32],
    stabilized: bool,
    composite: &CompositeSpec,
) -> PhaseOutcome {
    workload.rewind();
    let mut out = PhaseOutcome::default();
    for (index, &batch_size) in sizes.iter().enumerate() {
        match measure(workload, sensors, batch_size, composite) {
            Ok((metrics, result)) => {
                out.correct += result.correct;
                out.total += result.total;
                out.records.push(BenchmarkRecord {
                    model_id: ids.model_id.clone(),
                    task_id: ids.task_id.clone(),
                    hardware_id: ids.hardware_id.clone(),
                    batch_size,
                    batch_index: index as u32,
                    phase,
                    metrics,
                    timestamp: Utc::now(),
                    stabilized,
                });
            }
            Err(e) => {
                out.failure = Some(BatchFailure {
                    phase,
                    batch_index: index as u32,
                    batch_size,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    out
}

fn measure(
    workload: &mut dyn Workload,
    sensors: &mut dyn SensorProvider,
    batch_size: u32,
    composite: &CompositeSpec,
) -> Result<(BTreeMap<MetricKind, f64>, WorkResult)> {
    sensors.begin_window()?;
    let result = workload.forward(batch_size).map_err(|e| Error::Workload {
        batch: batch_size,
        message: e.to_string(),
    })?;
    let memory = read_sensor("peak_memory_mb", sensors.peak_memory_mb())?;
    let power = read_sensor("power_w", sensors.power_w())?;
    let temp = read_sensor("cpu_temp_c", sensors.cpu_temp_c())?;

    if !(result.latency_ms.is_finite() && result.latency_ms > 0.0) {
        return Err(Error::Workload {
            batch: batch_size,
            message: format!("non-positive latency {}", result.latency_ms),
        });
    }
    if result.correct > result.total {
        return Err(Error::Workload {
            batch: batch_size,
            message: format!("{} correct out of {}", result.correct, result.total),
        });
    }

    let mut metrics = BTreeMap::from([
        (MetricKind::ExecutionTimeMs, result.latency_ms),
        (MetricKind::MemoryMb, memory.max(0.0)),
        (MetricKind::PowerW, power.max(0.0)),
        (MetricKind::CpuTempC, temp),
    ]);
    metrics.insert(MetricKind::CarbonFootprint, carbon_footprint(&metrics, composite)?);
    if let Some(confusion) = &result.confusion {
        metrics.extend(classification_metrics(confusion)?.as_metrics());
    } else if result.total > 0 {
        metrics.insert(MetricKind::Accuracy, result.correct as f64 / result.total as f64);
    }
    Ok((metrics, result))
}

fn pair_report(
    ids: &RunIds,
    sweep: &PhaseOutcome,
    fixed: &PhaseOutcome,
    failure: Option<BatchFailure>,
) -> PairReport {
    let mean = |values: Vec<f64>| {
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let metric = |kind: MetricKind, r: &BenchmarkRecord| r.metrics.get(&kind).copied();
    let all = || sweep.records.iter().chain(&fixed.records);
    PairReport {
        model_id: ids.model_id.clone(),
        task_id: ids.task_id.clone(),
        status: match failure {
            None => PairStatus::Completed,
            Some(failure) => PairStatus::Failed { failure },
        },
        records: sweep.records.len() + fixed.records.len(),
        mean_latency_b32_ms: mean(
            all()
                .filter(|r| r.batch_size == FIXED_BATCH_SIZE)
                .filter_map(|r| metric(MetricKind::ExecutionTimeMs, r))
                .collect(),
        ),
        peak_memory_mb: all()
            .filter_map(|r| metric(MetricKind::MemoryMb, r))
            .reduce(f64::max),
        mean_power_w: mean(all().filter_map(|r| metric(MetricKind::PowerW, r)).collect()),
        accuracy: (fixed.total > 0).then(|| fixed.correct as f64 / fixed.total as f64),
        correct: fixed.correct,
        total: fixed.total,
    }
}
