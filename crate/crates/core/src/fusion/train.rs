//! Pairwise hinge training for the similarity scorer.
//!
//! For every pair `(a, b)` with `a` strictly above `b` in a ground-truth
//! table the loss adds `max(0, margin − (sim_a − sim_b))`; the total is
//! averaged over pairs. When refinement features are supplied the same loss
//! is added a second time on refined tokens, which trains `w_refine`.
//!
//! Gradients, with `q_h = Q_h μ`, `k_h = K_h θ`, `c = 1/√d`:
//!
//! ```text
//! ∂s/∂w_h = c q_h·k_h        ∂s/∂Q_h = w_h c k_h μᵀ      ∂s/∂K_h = w_h c q_h θᵀ
//! ∂s/∂θ   = Σ_h w_h c K_hᵀ q_h                ∂s/∂μ = Σ_h w_h c Q_hᵀ k_h
//! ∂s/∂W_model = (∂s/∂θ) xᵀ   ∂s/∂W_refine = (∂s/∂θ) rᵀ
//! ∂s/∂W_task  = (∂s/∂μ) tᵀ   ∂s/∂W_hw     = (∂s/∂μ) hᵀ
//! ```
//!
//! `∂s/∂θ` does not depend on θ and μ is shared by all candidates of one
//! example, so each example needs one outer product per parameter block.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::params::{FusionMode, ScorerConfig, ScorerParams, TokenSource, Weights};
use super::{model_token_vec, similarity_vec, task_token_vec, RefinementSource};
use crate::domain::{
    BenchmarkRecord, HardwareProfile, ModelCard, RankMethod, RankingTable, TaskDescriptor, WeightConfig,
};
use crate::error::{Error, Result};
use crate::ranking::{aggregate_records, copeland_from_aggregates, kendall_tau, Scope, Statistic};

/// Reference ordering a scorer is trained to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRanking {
    pub task_id: Option<String>,
    pub hardware_id: Option<String>,
    pub table: RankingTable,
}

impl GroundTruthRanking {
    pub fn new(task_id: Option<String>, hardware_id: Option<String>, table: RankingTable) -> Self {
        Self {
            task_id,
            hardware_id,
            table: table.with_method(RankMethod::GroundTruth),
        }
    }
}

/// Weighted Copeland over the mean fixed-batch aggregates of one
/// (task, device) scope. Records outside the scope are ignored.
pub fn ground_truth_from_records(
    records: &[BenchmarkRecord],
    scope: &Scope,
    config: &WeightConfig,
) -> Result<GroundTruthRanking> {
    let in_scope: Vec<BenchmarkRecord> = records
        .iter()
        .filter(|r| r.task_id == scope.task_id && r.hardware_id == scope.hardware_id)
        .cloned()
        .collect();
    let aggs = aggregate_records(&in_scope, scope, Statistic::Mean)?;
    let table = copeland_from_aggregates(&aggs.values, config)?.with_method(RankMethod::GroundTruth);
    Ok(GroundTruthRanking::new(
        Some(scope.task_id.clone()),
        Some(scope.hardware_id.clone()),
        table,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub task: Option<TaskDescriptor>,
    pub hardware: Option<HardwareProfile>,
    pub candidates: Vec<ModelCard>,
    pub truth: GroundTruthRanking,
    #[serde(default)]
    pub refinement: Option<RefinementSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub margin: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 200,
            seed: 0,
            margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_tau: f64,
}

/// Loss and mean training Kendall tau measured before each update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_tau\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{}", e.epoch, e.loss, e.train_tau);
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// An example with features resolved against one scorer configuration.
pub(crate) struct Prepared {
    task: Option<Vec<f64>>,
    hardware: Option<Vec<f64>>,
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
    refinement: Option<Vec<Vec<f64>>>,
    /// `(a, b)`: candidate `a` is strictly above `b` in the truth.
    pairs: Vec<(usize, usize)>,
    truth: RankingTable,
}

pub(crate) fn prepare(config: &ScorerConfig, set: &[TrainExample]) -> Result<Vec<Prepared>> {
    if set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    set.iter()
        .enumerate()
        .map(|(n, ex)| {
            let ids: Vec<String> = ex.candidates.iter().map(|c| c.id.clone()).collect();
            let candidate_set: HashSet<&str> = ids.iter().map(String::as_str).collect();
            if candidate_set != ex.truth.table.candidate_set() || ids.len() != ex.truth.table.len() {
                return Err(Error::CandidateMismatch(format!(
                    "example {n}: ground truth covers {:?}, candidates are {:?}",
                    ex.truth.table.candidate_ids, ids
                )));
            }
            let levels = ex.truth.table.levels();
            let mut pairs = Vec::new();
            for a in 0..ids.len() {
                for b in 0..ids.len() {
                    if levels[ids[a].as_str()] < levels[ids[b].as_str()] {
                        pairs.push((a, b));
                    }
                }
            }
            let task = ex.task.as_ref().map(|t| t.task_features.clone());
            let hardware = ex.hardware.as_ref().map(|h| h.hw_features.clone());
            let (task, hardware) = match config.source {
                TokenSource::TaskAndHardware => (task, hardware),
                TokenSource::TaskOnly => (task, None),
                TokenSource::HardwareOnly => (None, hardware),
            };
            let refinement = match (&ex.refinement, config.refine_dim) {
                (Some(src), r) if r > 0 => Some(
                    ids.iter()
                        .map(|id| src.features.get(id).cloned().unwrap_or_else(|| vec![0.0; r]))
                        .collect(),
                ),
                _ => None,
            };
            Ok(Prepared {
                task,
                hardware,
                ids,
                features: ex.candidates.iter().map(|c| c.model_features.clone()).collect(),
                refinement,
                pairs,
                truth: ex.truth.table.clone(),
            })
        })
        .collect()
}

pub(crate) struct LossEval {
    pub loss: f64,
    pub grad: Weights,
    pub mean_tau: f64,
}

/// Hinge loss over `scores`; returns the summed loss and adds ∓`1/norm` to
/// the coefficient of each active pair's winner/loser.
fn hinge(scores: &[f64], pairs: &[(usize, usize)], margin: f64, norm: f64, coef: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    for &(a, b) in pairs {
        let slack = margin - (scores[a] - scores[b]);
        if slack > 0.0 {
            loss += slack;
            coef[a] -= 1.0 / norm;
            coef[b] += 1.0 / norm;
        }
    }
    loss
}

pub(crate) fn evaluate(params: &ScorerParams, prepared: &[Prepared], margin: f64) -> Result<LossEval> {
    let cfg = &params.config;
    let w = &params.weights;
    let d = cfg.token_dim;
    let c = 1.0 / (d as f64).sqrt();

    let plain_pairs: usize = prepared.iter().map(|p| p.pairs.len()).sum();
    let refined_pairs: usize = prepared
        .iter()
        .filter(|p| p.refinement.is_some())
        .map(|p| p.pairs.len())
        .sum();
    let mut grad = Weights::zeros(cfg);
    let mut loss = 0.0;
    let mut tau_sum = 0.0;

    for ex in prepared {
        let n = ex.ids.len();
        let mu = task_token_vec(params, ex.task.as_deref(), ex.hardware.as_deref())?;
        let thetas = ex
            .features
            .iter()
            .map(|x| model_token_vec(params, x, None))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = thetas.iter().map(|t| similarity_vec(params, t, &mu)).collect();
        let predicted = RankingTable::from_scores(RankMethod::Fusion, ex.ids.iter().cloned().zip(scores.iter().copied()).collect())?;
        tau_sum += kendall_tau(&predicted, &ex.truth)?;

        let mut coef_plain = vec![0.0; n];
        if plain_pairs > 0 {
            loss += hinge(&scores, &ex.pairs, margin, plain_pairs as f64, &mut coef_plain) / plain_pairs as f64;
        }

        let mut coef_refined = vec![0.0; n];
        let mut refined_thetas = Vec::new();
        if let Some(rs) = &ex.refinement {
            refined_thetas = ex
                .features
                .iter()
                .zip(rs)
                .map(|(x, r)| model_token_vec(params, x, Some(r)))
                .collect::<Result<Vec<_>>>()?;
            let refined_scores: Vec<f64> = refined_thetas.iter().map(|t| similarity_vec(params, t, &mu)).collect();
            loss += hinge(&refined_scores, &ex.pairs, margin, refined_pairs as f64, &mut coef_refined)
                / refined_pairs as f64;
        }

        // Coefficient-weighted sums of the inputs that enter linearly.
        let mut sum_theta = vec![0.0; d];
        let mut sum_x = vec![0.0; cfg.dims.model];
        let mut sum_r = vec![0.0; cfg.refine_dim];
        let mut active = false;
        for i in 0..n {
            let (cp, cr) = (coef_plain[i], coef_refined[i]);
            if cp == 0.0 && cr == 0.0 {
                continue;
            }
            active = true;
            for (s, t) in sum_theta.iter_mut().zip(&thetas[i]) {
                *s += cp * t;
            }
            if cr != 0.0 {
                for (s, t) in sum_theta.iter_mut().zip(&refined_thetas[i]) {
                    *s += cr * t;
                }
                let r = &ex.refinement.as_ref().expect("refined coefficients imply refinement")[i];
                for (s, v) in sum_r.iter_mut().zip(r) {
                    *s += cr * v;
                }
            }
            for (s, v) in sum_x.iter_mut().zip(&ex.features[i]) {
                *s += (cp + cr) * v;
            }
        }
        if !active {
            continue;
        }

        let mut g_theta = vec![0.0; d];
        let mut g_mu = vec![0.0; cfg.task_token_dim()];
        for h in 0..cfg.heads {
            let (q, k, wh) = (&w.query[h], &w.key[h], w.head_weights[h]);
            let q_mu = q.matvec(&mu);
            let k_sum = k.matvec(&sum_theta);
            grad.head_weights[h] += c * q_mu.iter().zip(&k_sum).map(|(a, b)| a * b).sum::<f64>();
            grad.query[h].add_outer(wh * c, &k_sum, &mu);
            grad.key[h].add_outer(wh * c, &q_mu, &sum_theta);
            for (g, v) in g_theta.iter_mut().zip(k.matvec_t(&q_mu)) {
                *g += wh * c * v;
            }
            for (g, v) in g_mu.iter_mut().zip(q.matvec_t(&k_sum)) {
                *g += wh * c * v;
            }
        }
        grad.w_model.add_outer(1.0, &g_theta, &sum_x);
        if cfg.refine_dim > 0 {
            grad.w_refine.add_outer(1.0, &g_theta, &sum_r);
        }
        if let Some(t) = &ex.task {
            grad.w_task.add_outer(1.0, &g_mu[..d], t);
        }
        if let Some(hw) = &ex.hardware {
            let offset = match cfg.fusion_mode {
                FusionMode::Concat if cfg.source == TokenSource::TaskAndHardware => d,
                _ => 0,
            };
            grad.w_hw.add_outer(1.0, &g_mu[offset..offset + d], hw);
        }
    }
    Ok(LossEval {
        loss,
        grad,
        mean_tau: tau_sum / prepared.len() as f64,
    })
}

/// Mean hinge loss and its gradient at `params`.
pub fn loss_and_gradient(params: &ScorerParams, set: &[TrainExample], margin: f64) -> Result<(f64, Weights)> {
    params.validate()?;
    let prepared = prepare(&params.config, set)?;
    let eval = evaluate(params, &prepared, margin)?;
    Ok((eval.loss, eval.grad))
}

/// Initialises parameters from `hyper.seed` and trains them.
pub fn train_scorer(
    config: ScorerConfig,
    set: &[TrainExample],
    hyper: &TrainHyper,
) -> Result<(ScorerParams, TrainingLog)> {
    let params = ScorerParams::init(config, hyper.seed)?;
    train_scorer_from(params, set, hyper)
}

/// Full-batch gradient descent with a fixed learning rate.
pub fn train_scorer_from(
    mut params: ScorerParams,
    set: &[TrainExample],
    hyper: &TrainHyper,
) -> Result<(ScorerParams, TrainingLog)> {
    params.validate()?;
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {}", hyper.lr)));
    }
    if hyper.margin.is_nan() || hyper.margin < 0.0 {
        return Err(Error::invalid(format!("margin must be >= 0, got {}", hyper.margin)));
    }
    let prepared = prepare(&params.config, set)?;
    for (ex, p) in set.iter().zip(&prepared) {
        for c in &ex.candidates {
            if c.model_features.len() != params.config.dims.model {
                return Err(Error::dims(format!("model_features of {}", c.id), params.config.dims.model, c.model_features.len()));
            }
        }
        if let Some(rs) = &p.refinement {
            if let Some(bad) = rs.iter().find(|r| r.len() != params.config.refine_dim) {
                return Err(Error::dims("refinement features", params.config.refine_dim, bad.len()));
            }
        }
    }

    let mut log = TrainingLog::default();
    for epoch in 0..hyper.epochs {
        let eval = evaluate(&params, &prepared, hyper.margin)?;
        if !eval.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                lr: hyper.lr,
                detail: format!("loss is {}", eval.loss),
            });
        }
        log.epochs.push(EpochLog {
            epoch,
            loss: eval.loss,
            train_tau: eval.mean_tau,
        });
        params.weights.axpy(-hyper.lr, &eval.grad);
        if !params.weights.is_finite() {
            return Err(Error::Diverged {
                epoch,
                lr: hyper.lr,
                detail: format!("parameters became non-finite (max |grad| {:.3e})", eval.grad.max_abs()),
            });
        }
    }
    params.trained = true;
    Ok((params, log))
}

/// Mean held-out Kendall tau of `params` over `set`.
pub fn mean_tau(params: &ScorerParams, set: &[TrainExample]) -> Result<f64> {
    let prepared = prepare(&params.config, set)?;
    Ok(evaluate(params, &prepared, 0.0)?.mean_tau)
}

/// Per-example predicted rankings, keyed by position in `set`.
pub fn predict(params: &ScorerParams, set: &[TrainExample]) -> Result<BTreeMap<usize, RankingTable>> {
    let prepared = prepare(&params.config, set)?;
    prepared
        .iter()
        .enumerate()
        .map(|(n, ex)| {
            let mu = task_token_vec(params, ex.task.as_deref(), ex.hardware.as_deref())?;
            let scored = ex
                .ids
                .iter()
                .zip(&ex.features)
                .map(|(id, x)| Ok((id.clone(), similarity_vec(params, &model_token_vec(params, x, None)?, &mu))))
                .collect::<Result<Vec<_>>>()?;
            Ok((n, RankingTable::from_scores(RankMethod::Fusion, scored)?))
        })
        .collect()
}
