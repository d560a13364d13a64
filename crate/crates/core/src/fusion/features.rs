//! Default encoders turning registry fields into feature vectors.

use crate::domain::MetricKind;
use crate::ranking::MetricMap;

/// Buckets used for one-hot hashing of categorical hardware fields.
pub const DEFAULT_HASH_BUCKETS: usize = 16;

/// Width of [`refinement_features`].
pub const REFINEMENT_DIM: usize = 4;

/// Width of [`task_features`].
pub const TASK_BASE_DIM: usize = 6;

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn hash_bucket(value: &str, buckets: usize) -> usize {
    (fnv1a(value) % buckets.max(1) as u64) as usize
}

/// Encodes numeric device fields plus one-hot hashed `cpu_model` and
/// `accelerator` (all zeros when there is no accelerator).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HardwareEncoder {
    pub buckets: usize,
}

impl Default for HardwareEncoder {
    fn default() -> Self {
        Self { buckets: DEFAULT_HASH_BUCKETS }
    }
}

impl HardwareEncoder {
    pub fn dim(&self) -> usize {
        4 + 2 * self.buckets
    }

    pub fn encode(
        &self,
        cpu_model: &str,
        cpu_cores: u32,
        cpu_freq_mhz: f64,
        ram_mb: f64,
        storage_mb: f64,
        accelerator: Option<&str>,
    ) -> Vec<f64> {
        let mut out = vec![
            cpu_cores as f64 / 8.0,
            cpu_freq_mhz / 2000.0,
            ram_mb.max(1.0).ln() / 10.0,
            storage_mb.max(1.0).ln() / 12.0,
        ];
        let mut cpu = vec![0.0; self.buckets];
        cpu[hash_bucket(cpu_model, self.buckets)] = 1.0;
        let mut accel = vec![0.0; self.buckets];
        if let Some(a) = accelerator {
            accel[hash_bucket(a, self.buckets)] = 1.0;
        }
        out.extend(cpu);
        out.extend(accel);
        out
    }
}

/// Dataset statistics: a constant 1, class count, log sample count and up to
/// three input-shape dimensions (zero padded).
pub fn task_features(num_classes: u32, num_samples: u64, input_shape: &[u32]) -> Vec<f64> {
    let mut out = vec![
        1.0,
        num_classes as f64 / 100.0,
        (num_samples.max(1) as f64).ln() / 10.0,
    ];
    for i in 0..3 {
        out.push(input_shape.get(i).map_or(0.0, |&v| v as f64 / 224.0));
    }
    out
}

/// Benchmark aggregates used to refine the top-K model tokens.
pub fn refinement_features(metrics: &MetricMap) -> Vec<f64> {
    let get = |k: MetricKind| metrics.get(&k).copied().unwrap_or(0.0);
    vec![
        get(MetricKind::ExecutionTimeMs).max(0.0).ln_1p(),
        get(MetricKind::MemoryMb).max(0.0).ln_1p(),
        get(MetricKind::PowerW).max(0.0).ln_1p(),
        get(MetricKind::Accuracy),
    ]
}
