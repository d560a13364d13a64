use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::FeatureDims;
use crate::error::{Error, Result};

/// Format version of serialized scorer files.
pub const SCORER_FORMAT_VERSION: u32 = 1;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::dims("matrix row", c, bad.len()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
        out
    }

    /// `self += alpha · u vᵀ`
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let s = alpha * ur;
            if s == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (a, &vc) in row.iter_mut().zip(v) {
                *a += s * vc;
            }
        }
    }

    fn check(&self, what: &str, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows {
            return Err(Error::dims(format!("{what} rows"), rows, self.rows));
        }
        if self.cols != cols {
            return Err(Error::dims(format!("{what} cols"), cols, self.cols));
        }
        if self.data.len() != rows * cols {
            return Err(Error::dims(format!("{what} data"), rows * cols, self.data.len()));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{what} has non-finite entries")));
        }
        Ok(())
    }
}

/// Which inputs form the task-side token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    /// Dataset features plus hardware features (the hardware-aware scorer).
    #[default]
    TaskAndHardware,
    /// Dataset features only; hardware is ignored.
    TaskOnly,
    /// Hardware features only; the dataset is ignored.
    HardwareOnly,
}

/// How hardware features join the task token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `μ = W_task·t + W_hw·h`, width d.
    #[default]
    Add,
    /// `μ = [W_task·t ; W_hw·h]`, width 2d.
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub dims: FeatureDims,
    /// Token width d.
    pub token_dim: usize,
    pub heads: usize,
    #[serde(default)]
    pub source: TokenSource,
    #[serde(default)]
    pub fusion_mode: FusionMode,
    /// Width of the per-model refinement features (0 disables refinement).
    #[serde(default)]
    pub refine_dim: usize,
}

impl ScorerConfig {
    pub fn new(dims: FeatureDims, token_dim: usize, heads: usize) -> Self {
        Self {
            dims,
            token_dim,
            heads,
            source: TokenSource::default(),
            fusion_mode: FusionMode::default(),
            refine_dim: 0,
        }
    }

    pub fn with_source(mut self, source: TokenSource) -> Self {
        self.source = source;
        self
    }

    pub fn with_fusion_mode(mut self, mode: FusionMode) -> Self {
        self.fusion_mode = mode;
        self
    }

    pub fn with_refine_dim(mut self, refine_dim: usize) -> Self {
        self.refine_dim = refine_dim;
        self
    }

    /// Width of the task token μ.
    pub fn task_token_dim(&self) -> usize {
        match (self.fusion_mode, self.source) {
            (FusionMode::Concat, TokenSource::TaskAndHardware) => 2 * self.token_dim,
            _ => self.token_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0 || self.heads == 0 {
            return Err(Error::invalid("token_dim and heads must be >= 1"));
        }
        Ok(())
    }
}

/// All trainable parameters of the token extractors and the similarity.
///
/// `w_model` maps model features to the model token, `w_task` and `w_hw` map
/// dataset and hardware features into the task token, each head scores
/// `(Q_h μ)·(K_h θ)/√d`, and `head_weights` mixes the heads. `w_refine`
/// projects refinement features into the refined model token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_model: Matrix,
    pub w_task: Matrix,
    pub w_hw: Matrix,
    pub query: Vec<Matrix>,
    pub key: Vec<Matrix>,
    pub head_weights: Vec<f64>,
    pub w_refine: Matrix,
}

impl Weights {
    pub fn zeros(config: &ScorerConfig) -> Self {
        let d = config.token_dim;
        let dmu = config.task_token_dim();
        Self {
            w_model: Matrix::zeros(d, config.dims.model),
            w_task: Matrix::zeros(d, config.dims.task),
            w_hw: Matrix::zeros(d, config.dims.hardware),
            query: (0..config.heads).map(|_| Matrix::zeros(d, dmu)).collect(),
            key: (0..config.heads).map(|_| Matrix::zeros(d, d)).collect(),
            head_weights: vec![0.0; config.heads],
            w_refine: Matrix::zeros(d, config.refine_dim),
        }
    }

    /// Every entry uniform in `[-1/√d, 1/√d]`.
    pub fn init(config: &ScorerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.token_dim;
        let dmu = config.task_token_dim();
        let b = 1.0 / (d as f64).sqrt();
        Self {
            w_model: Matrix::uniform(d, config.dims.model, b, &mut rng),
            w_task: Matrix::uniform(d, config.dims.task, b, &mut rng),
            w_hw: Matrix::uniform(d, config.dims.hardware, b, &mut rng),
            query: (0..config.heads).map(|_| Matrix::uniform(d, dmu, b, &mut rng)).collect(),
            key: (0..config.heads).map(|_| Matrix::uniform(d, d, b, &mut rng)).collect(),
            head_weights: (0..config.heads).map(|_| rng.random_range(-b..=b)).collect(),
            w_refine: Matrix::uniform(d, config.refine_dim, b, &mut rng),
        }
    }

    /// Flat views over every parameter, in a fixed order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.w_model.data,
            &mut self.w_task.data,
            &mut self.w_hw.data,
        ];
        out.extend(self.query.iter_mut().map(|m| m.data.as_mut_slice()));
        out.extend(self.key.iter_mut().map(|m| m.data.as_mut_slice()));
        out.push(&mut self.head_weights);
        out.push(&mut self.w_refine.data);
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.w_model.data, &self.w_task.data, &self.w_hw.data];
        out.extend(self.query.iter().map(|m| m.data.as_slice()));
        out.extend(self.key.iter().map(|m| m.data.as_slice()));
        out.push(&self.head_weights);
        out.push(&self.w_refine.data);
        out
    }

    /// `self += alpha · other`
    pub fn axpy(&mut self, alpha: f64, other: &Weights) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += alpha * b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, config: &ScorerConfig) -> Result<()> {
        let d = config.token_dim;
        let dmu = config.task_token_dim();
        self.w_model.check("w_model", d, config.dims.model)?;
        self.w_task.check("w_task", d, config.dims.task)?;
        self.w_hw.check("w_hw", d, config.dims.hardware)?;
        self.w_refine.check("w_refine", d, config.refine_dim)?;
        if self.query.len() != config.heads || self.key.len() != config.heads {
            return Err(Error::dims("attention heads", config.heads, self.query.len().min(self.key.len())));
        }
        if self.head_weights.len() != config.heads {
            return Err(Error::dims("head weights", config.heads, self.head_weights.len()));
        }
        for (q, k) in self.query.iter().zip(&self.key) {
            q.check("query", d, dmu)?;
            k.check("key", d, d)?;
        }
        if self.head_weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("head weights have non-finite entries"));
        }
        Ok(())
    }
}

/// A scorer: its configuration, parameters and training status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub version: u32,
    pub config: ScorerConfig,
    pub weights: Weights,
    /// Set once the parameters have gone through `train_scorer`.
    #[serde(default)]
    pub trained: bool,
}

impl ScorerParams {
    pub fn init(config: ScorerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = Weights::init(&config, seed);
        Ok(Self {
            version: SCORER_FORMAT_VERSION,
            config,
            weights,
            trained: false,
        })
    }

    pub fn from_weights(config: ScorerConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        weights.check(&config)?;
        Ok(Self {
            version: SCORER_FORMAT_VERSION,
            config,
            weights,
            trained: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCORER_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "scorer format version {} is not supported (expected {SCORER_FORMAT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        self.weights.check(&self.config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: ScorerParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
