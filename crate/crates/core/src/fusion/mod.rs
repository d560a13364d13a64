//! Learned model/task matching with hardware-aware task tokens.
//!
//! Each model becomes a token `θ = W_model·x` and each query (a dataset,
//! optionally on a device) a token `μ = W_task·t + W_hw·h`. Candidates are
//! scored with a multi-head bilinear attention score
//!
//! ```text
//! sim(θ, μ) = Σ_h w_h · (Q_h μ)·(K_h θ) / √d
//! ```
//!
//! and ranked by it. All maps are linear so the pairwise hinge loss has
//! closed-form gradients (see [`train`]). The top-K candidates of a first
//! pass can be re-scored with refined tokens `θ* = θ + W_refine·r` built from
//! benchmark aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{HardwareProfile, ModelCard, RankMethod, RankingTable, TaskDescriptor};
use crate::error::{Error, Result};

pub mod features;
mod params;
pub mod train;

pub use params::{
    FusionMode, Matrix, ScorerConfig, ScorerParams, TokenSource, Weights, SCORER_FORMAT_VERSION,
};
pub use train::{ground_truth_from_records, train_scorer, train_scorer_from, GroundTruthRanking, TrainExample, TrainHyper, TrainingLog};

/// Refinement K when none is configured.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelToken {
    pub model_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskToken {
    pub task_id: Option<String>,
    pub hardware_id: Option<String>,
    pub vector: Vec<f64>,
}

fn check_len(what: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::dims(what, expected, v.len()));
    }
    Ok(())
}

pub(crate) fn model_token_vec(
    params: &ScorerParams,
    features: &[f64],
    refinement: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_len("model_features", features, params.config.dims.model)?;
    let mut theta = params.weights.w_model.matvec(features);
    if let Some(r) = refinement {
        check_len("refinement features", r, params.config.refine_dim)?;
        for (t, p) in theta.iter_mut().zip(params.weights.w_refine.matvec(r)) {
            *t += p;
        }
    }
    Ok(theta)
}

/// Builds μ from whichever inputs the scorer's [`TokenSource`] uses.
pub(crate) fn task_token_vec(
    params: &ScorerParams,
    task: Option<&[f64]>,
    hardware: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let cfg = &params.config;
    let w = &params.weights;
    let d = cfg.token_dim;
    let (task, hardware) = match cfg.source {
        TokenSource::TaskAndHardware => (task, hardware),
        TokenSource::TaskOnly => (task, None),
        TokenSource::HardwareOnly => (None, hardware),
    };
    match cfg.source {
        TokenSource::HardwareOnly if hardware.is_none() => {
            return Err(Error::Scorer("hardware-only scorer needs a hardware profile".into()))
        }
        TokenSource::TaskAndHardware | TokenSource::TaskOnly if task.is_none() => {
            return Err(Error::Scorer("scorer needs a task descriptor".into()))
        }
        _ => {}
    }
    if let Some(t) = task {
        check_len("task_features", t, cfg.dims.task)?;
    }
    if let Some(h) = hardware {
        check_len("hw_features", h, cfg.dims.hardware)?;
    }
    let task_part = task.map(|t| w.w_task.matvec(t));
    let hw_part = hardware.map(|h| w.w_hw.matvec(h));
    let mut mu = vec![0.0; cfg.task_token_dim()];
    if let Some(tp) = task_part {
        mu[..d].copy_from_slice(&tp);
    }
    if let Some(hp) = hw_part {
        let offset = match cfg.fusion_mode {
            FusionMode::Concat if cfg.source == TokenSource::TaskAndHardware => d,
            _ => 0,
        };
        for (m, v) in mu[offset..offset + d].iter_mut().zip(hp) {
            *m += v;
        }
    }
    Ok(mu)
}

pub(crate) fn similarity_vec(params: &ScorerParams, theta: &[f64], mu: &[f64]) -> f64 {
    let w = &params.weights;
    let scale = 1.0 / (params.config.token_dim as f64).sqrt();
    w.query
        .iter()
        .zip(&w.key)
        .zip(&w.head_weights)
        .map(|((q, k), &hw)| {
            let qm = q.matvec(mu);
            let kt = k.matvec(theta);
            hw * scale * qm.iter().zip(&kt).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

/// `θ_m = W_model · model_features`.
pub fn extract_model_token(card: &ModelCard, params: &ScorerParams) -> Result<ModelToken> {
    Ok(ModelToken {
        model_id: card.id.clone(),
        vector: model_token_vec(params, &card.model_features, None)?,
    })
}

/// `μ = W_task · task_features (+ W_hw · hw_features when hardware is given)`.
pub fn extract_task_token(
    task: &TaskDescriptor,
    hardware: Option<&HardwareProfile>,
    params: &ScorerParams,
) -> Result<TaskToken> {
    let hw_features = hardware.map(|h| h.hw_features.as_slice());
    Ok(TaskToken {
        task_id: Some(task.id.clone()),
        hardware_id: hardware.map(|h| h.id.clone()),
        vector: task_token_vec(params, Some(&task.task_features), hw_features)?,
    })
}

/// Token built from hardware features alone, for hardware-only scorers.
pub fn extract_hardware_token(hardware: &HardwareProfile, params: &ScorerParams) -> Result<TaskToken> {
    Ok(TaskToken {
        task_id: None,
        hardware_id: Some(hardware.id.clone()),
        vector: task_token_vec(params, None, Some(&hardware.hw_features))?,
    })
}

pub fn similarity(theta: &ModelToken, mu: &TaskToken, params: &ScorerParams) -> Result<f64> {
    check_len("model token", &theta.vector, params.config.token_dim)?;
    check_len("task token", &mu.vector, params.config.task_token_dim())?;
    Ok(similarity_vec(params, &theta.vector, &mu.vector))
}

/// Per-model refinement features, keyed by model id. Models without an entry
/// are refined with a zero vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementSource {
    pub features: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub table: RankingTable,
    /// Ids whose tokens were refined, in refined order.
    pub refined: Vec<String>,
    pub warnings: Vec<String>,
}

pub(crate) fn require_trained(params: &ScorerParams) -> Result<()> {
    if !params.trained {
        return Err(Error::Scorer("parameters have not been trained".into()));
    }
    params.validate()
}

/// Scores every candidate against the query token and sorts best first.
pub(crate) fn rank_candidates(
    params: &ScorerParams,
    mu: &[f64],
    candidates: &[ModelCard],
    method: RankMethod,
) -> Result<RankingTable> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate models"));
    }
    let scored = candidates
        .iter()
        .map(|c| Ok((c.id.clone(), similarity_vec(params, &model_token_vec(params, &c.model_features, None)?, mu))))
        .collect::<Result<Vec<_>>>()?;
    RankingTable::from_scores(method, scored)
}

/// Ranks candidates for a dataset on a device. With `top_k` and `refine`,
/// the first-pass top K are re-scored with refined tokens and reordered among
/// themselves; they stay ahead of every other candidate.
pub fn recommend_fusion(
    task: &TaskDescriptor,
    hardware: Option<&HardwareProfile>,
    candidates: &[ModelCard],
    params: &ScorerParams,
    top_k: Option<usize>,
    refine: Option<&RefinementSource>,
) -> Result<Recommendation> {
    require_trained(params)?;
    let mu = task_token_vec(
        params,
        Some(&task.task_features),
        hardware.map(|h| h.hw_features.as_slice()),
    )?;
    let first = rank_candidates(params, &mu, candidates, RankMethod::Fusion)?;
    let mut warnings = Vec::new();

    let (Some(mut k), Some(refine)) = (top_k, refine) else {
        return Ok(Recommendation { table: first, refined: Vec::new(), warnings });
    };
    if params.config.refine_dim == 0 {
        return Err(Error::Scorer("scorer was built without a refinement projection".into()));
    }
    if k > candidates.len() {
        warnings.push(format!("top_k {k} exceeds {} candidates; clamped", candidates.len()));
        k = candidates.len();
    }
    if k == 0 {
        return Ok(Recommendation { table: first, refined: Vec::new(), warnings });
    }

    let by_id: BTreeMap<&str, &ModelCard> = candidates.iter().map(|c| (c.id.as_str(), c)).collect();
    let zeros = vec![0.0; params.config.refine_dim];
    let mut refined = Vec::with_capacity(k);
    for id in &first.candidate_ids[..k] {
        let r = refine.features.get(id).unwrap_or(&zeros);
        let theta = model_token_vec(params, &by_id[id.as_str()].model_features, Some(r))?;
        refined.push((id.clone(), similarity_vec(params, &theta, &mu)));
    }
    refined.sort_by(|(ia, a), (ib, b)| b.total_cmp(a).then_with(|| ia.cmp(ib)));

    // Shift the refined block so its scores stay at or above the remainder.
    let rest_best = first.scores.get(k).copied().unwrap_or(f64::NEG_INFINITY);
    let refined_worst = refined.last().map_or(0.0, |(_, s)| *s);
    let shift = if rest_best > refined_worst { rest_best - refined_worst } else { 0.0 };

    let mut ids: Vec<String> = refined.iter().map(|(id, _)| id.clone()).collect();
    let mut scores: Vec<f64> = refined.iter().map(|(_, s)| s + shift).collect();
    ids.extend(first.candidate_ids[k..].iter().cloned());
    scores.extend(&first.scores[k..]);
    let refined_ids = ids[..k].to_vec();
    Ok(Recommendation {
        table: RankingTable::from_ordered(RankMethod::Fusion, ids, scores)?,
        refined: refined_ids,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FeatureDims;

    fn dims(m: usize, h: usize, t: usize) -> FeatureDims {
        FeatureDims { model: m, hardware: h, task: t }
    }

    fn card(id: &str, features: Vec<f64>) -> ModelCard {
        ModelCard::new(id, id, "resnet", 1000, features, "imagenet").unwrap()
    }

    fn task(features: Vec<f64>) -> TaskDescriptor {
        TaskDescriptor::new("t", "cifar", 10, 100, vec![3, 32, 32], features).unwrap()
    }

    fn hw(id: &str, features: Vec<f64>) -> HardwareProfile {
        HardwareProfile::new(id, id, "arm", 4, 1500.0, 4096.0, 1e4, None, features).unwrap()
    }

    fn identity_params(d: usize) -> ScorerParams {
        let config = ScorerConfig::new(dims(d, d, d), d, 1);
        let mut w = Weights::zeros(&config);
        w.w_model = Matrix::identity(d);
        w.w_task = Matrix::identity(d);
        w.w_hw = Matrix::identity(d);
        w.query[0] = Matrix::identity(d);
        w.key[0] = Matrix::identity(d);
        w.head_weights[0] = 1.0;
        let mut p = ScorerParams::from_weights(config, w).unwrap();
        p.trained = true;
        p
    }

    #[test]
    fn model_token_is_linear() {
        let p = ScorerParams::init(ScorerConfig::new(dims(3, 2, 2), 4, 2), 7).unwrap();
        let zero = extract_model_token(&card("m", vec![0.0; 3]), &p).unwrap();
        assert_eq!(zero.vector, vec![0.0; 4]);
        let id = identity_params(3);
        let t = extract_model_token(&card("m", vec![1.0, -2.0, 0.5]), &id).unwrap();
        assert_eq!(t.vector, vec![1.0, -2.0, 0.5]);
        assert!(extract_model_token(&card("m", vec![1.0]), &p).is_err());
    }

    #[test]
    fn tokens_are_reproducible() {
        let cfg = ScorerConfig::new(dims(3, 2, 2), 4, 2);
        let a = ScorerParams::init(cfg.clone(), 99).unwrap();
        let b = ScorerParams::init(cfg, 99).unwrap();
        let c = card("m", vec![0.3, -0.1, 2.0]);
        let ta = extract_model_token(&c, &a).unwrap();
        let tb = extract_model_token(&c, &b).unwrap();
        assert_eq!(
            ta.vector.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            tb.vector.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn task_token_hardware_term() {
        let p = ScorerParams::init(ScorerConfig::new(dims(3, 2, 2), 4, 2), 1).unwrap();
        let t = task(vec![0.4, 1.0]);
        let base = extract_task_token(&t, None, &p).unwrap();
        let zero_hw = extract_task_token(&t, Some(&hw("z", vec![0.0, 0.0])), &p).unwrap();
        assert_eq!(base.vector, zero_hw.vector);
        let a = extract_task_token(&t, Some(&hw("a", vec![1.0, 0.0])), &p).unwrap();
        let b = extract_task_token(&t, Some(&hw("b", vec![0.0, 1.0])), &p).unwrap();
        assert_ne!(a.vector, b.vector);
        assert!(extract_task_token(&t, Some(&hw("bad", vec![1.0])), &p).is_err());
    }

    #[test]
    fn concat_mode_widens_task_token() {
        let cfg = ScorerConfig::new(dims(3, 2, 2), 4, 1).with_fusion_mode(FusionMode::Concat);
        let p = ScorerParams::init(cfg, 3).unwrap();
        let tok = extract_task_token(&task(vec![1.0, 2.0]), Some(&hw("h", vec![1.0, 1.0])), &p).unwrap();
        assert_eq!(tok.vector.len(), 8);
        let only_task = extract_task_token(&task(vec![1.0, 2.0]), None, &p).unwrap();
        assert_eq!(&tok.vector[..4], &only_task.vector[..4]);
        assert_eq!(&only_task.vector[4..], &[0.0; 4]);
    }

    #[test]
    fn similarity_reduces_to_scaled_dot() {
        let p = identity_params(4);
        let theta = ModelToken { model_id: "m".into(), vector: vec![1.0, 2.0, 3.0, 4.0] };
        let mu = TaskToken { task_id: None, hardware_id: None, vector: vec![0.5, 0.0, -1.0, 2.0] };
        assert!((similarity(&theta, &mu, &p).unwrap() - (0.5 - 3.0 + 8.0) / 2.0).abs() < 1e-12);
        let zero = TaskToken { vector: vec![0.0; 4], ..mu };
        assert_eq!(similarity(&theta, &zero, &p).unwrap(), 0.0);
    }

    #[test]
    fn similarity_matches_straight_line_reimplementation() {
        let p = ScorerParams::init(ScorerConfig::new(dims(3, 2, 2), 5, 3), 11).unwrap();
        let theta = vec![0.1, -0.4, 0.9, 1.3, -0.2];
        let mu = vec![0.7, 0.2, -0.5, 0.0, 1.1];
        let d = 5;
        let mut expected = 0.0;
        for h in 0..3 {
            let q = &p.weights.query[h];
            let k = &p.weights.key[h];
            let mut dot = 0.0;
            for i in 0..d {
                let mut qi = 0.0;
                let mut ki = 0.0;
                for j in 0..d {
                    qi += q.get(i, j) * mu[j];
                    ki += k.get(i, j) * theta[j];
                }
                dot += qi * ki;
            }
            expected += p.weights.head_weights[h] * dot / (d as f64).sqrt();
        }
        let got = similarity_vec(&p, &theta, &mu);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn similarity_is_bilinear_in_model_token() {
        let p = ScorerParams::init(ScorerConfig::new(dims(3, 2, 2), 4, 2), 5).unwrap();
        let mu = vec![0.3, -1.0, 0.2, 0.8];
        let a = vec![1.0, 0.5, -0.2, 0.0];
        let b = vec![-0.3, 0.1, 0.9, 2.0];
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let scaled: Vec<f64> = a.iter().map(|x| 2.5 * x).collect();
        let (sa, sb) = (similarity_vec(&p, &a, &mu), similarity_vec(&p, &b, &mu));
        assert!((similarity_vec(&p, &sum, &mu) - (sa + sb)).abs() < 1e-12);
        assert!((similarity_vec(&p, &scaled, &mu) - 2.5 * sa).abs() < 1e-12);
    }

    fn refine_params() -> ScorerParams {
        let cfg = ScorerConfig::new(dims(2, 2, 2), 2, 1).with_refine_dim(2);
        let mut w = Weights::zeros(&cfg);
        w.w_model = Matrix::identity(2);
        w.w_task = Matrix::identity(2);
        w.query[0] = Matrix::identity(2);
        w.key[0] = Matrix::identity(2);
        w.head_weights[0] = 1.0;
        w.w_refine = Matrix::identity(2);
        let mut p = ScorerParams::from_weights(cfg, w).unwrap();
        p.trained = true;
        p
    }

    fn refine_candidates() -> Vec<ModelCard> {
        vec![
            card("a", vec![4.0, 0.0]),
            card("b", vec![3.0, 0.0]),
            card("c", vec![2.0, 0.0]),
            card("d", vec![1.0, 0.0]),
        ]
    }

    #[test]
    fn recommend_without_refinement_is_single_pass() {
        let p = refine_params();
        let r = recommend_fusion(&task(vec![1.0, 0.0]), None, &refine_candidates(), &p, None, None).unwrap();
        assert_eq!(r.table.candidate_ids, vec!["a", "b", "c", "d"]);
        assert!(r.refined.is_empty());
        assert_eq!(r.table.method, RankMethod::Fusion);
    }

    #[test]
    fn refinement_reorders_only_top_k() {
        let p = refine_params();
        // boost c, which is outside the top 2, and b, which is inside
        let source = RefinementSource {
            features: BTreeMap::from([
                ("b".to_string(), vec![5.0, 0.0]),
                ("c".to_string(), vec![50.0, 0.0]),
            ]),
        };
        let r = recommend_fusion(&task(vec![1.0, 0.0]), None, &refine_candidates(), &p, Some(2), Some(&source))
            .unwrap();
        assert_eq!(r.table.candidate_ids, vec!["b", "a", "c", "d"]);
        assert_eq!(r.refined, vec!["b", "a"]);
        assert!(r.table.violations().is_empty());
    }

    #[test]
    fn zero_refinement_changes_nothing() {
        let p = refine_params();
        let zeros = RefinementSource {
            features: refine_candidates().iter().map(|c| (c.id.clone(), vec![0.0, 0.0])).collect(),
        };
        let t = task(vec![1.0, 0.0]);
        let base = recommend_fusion(&t, None, &refine_candidates(), &p, None, None).unwrap();
        let all = recommend_fusion(&t, None, &refine_candidates(), &p, Some(4), Some(&zeros)).unwrap();
        assert_eq!(base.table, all.table);
        assert_eq!(all.refined.len(), 4);
    }

    #[test]
    fn top_k_is_clamped() {
        let p = refine_params();
        let r = recommend_fusion(
            &task(vec![1.0, 0.0]),
            None,
            &refine_candidates(),
            &p,
            Some(10),
            Some(&RefinementSource::default()),
        )
        .unwrap();
        assert_eq!(r.refined.len(), 4);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn untrained_params_are_rejected() {
        let mut p = refine_params();
        p.trained = false;
        assert!(matches!(
            recommend_fusion(&task(vec![1.0, 0.0]), None, &refine_candidates(), &p, None, None),
            Err(Error::Scorer(_))
        ));
    }

    #[test]
    fn scorer_json_round_trip() {
        let p = ScorerParams::init(ScorerConfig::new(dims(3, 2, 2), 4, 2).with_refine_dim(4), 5).unwrap();
        let back = ScorerParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
        let mut bad: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        bad["version"] = 99.into();
        assert!(ScorerParams::from_json(&bad.to_string()).is_err());
    }
}
