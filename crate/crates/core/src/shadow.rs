//! Independent selectors combined by Copeland voting.
//!
//! A task selector ranks candidates by task-only similarity, a hardware
//! selector by similarity to a hardware token. Any further ranking (energy,
//! cost) can join the vote as another [`SelectorOutput`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{HardwareProfile, ModelCard, RankMethod, RankingTable, TaskDescriptor};
use crate::error::{Error, Result};
use crate::fusion::{rank_candidates, require_trained, task_token_vec, ScorerParams, TokenSource};
use crate::ranking::copeland;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Task,
    Hardware,
    Energy,
    Cost,
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectorKind::Task => "task",
            SelectorKind::Hardware => "hardware",
            SelectorKind::Energy => "energy",
            SelectorKind::Cost => "cost",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorOutput {
    pub selector: SelectorKind,
    pub table: RankingTable,
}

impl SelectorOutput {
    pub fn new(selector: SelectorKind, table: RankingTable) -> Self {
        Self { selector, table }
    }
}

/// Combined ranking with the selector tables it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowResult {
    pub table: RankingTable,
    pub selectors: Vec<SelectorOutput>,
}

/// Ranks by task-only similarity. The scorer must take a task token; any
/// hardware projection it has is left unused.
pub fn task_selector(task: &TaskDescriptor, candidates: &[ModelCard], params: &ScorerParams) -> Result<SelectorOutput> {
    require_trained(params)?;
    if params.config.source == TokenSource::HardwareOnly {
        return Err(Error::Scorer("task selector needs a scorer with a task token".into()));
    }
    let mu = task_token_vec(params, Some(&task.task_features), None)?;
    Ok(SelectorOutput::new(
        SelectorKind::Task,
        rank_candidates(params, &mu, candidates, RankMethod::Selector)?,
    ))
}

/// Ranks by similarity to a token built from hardware features alone.
pub fn hardware_selector(
    hardware: &HardwareProfile,
    candidates: &[ModelCard],
    params: &ScorerParams,
) -> Result<SelectorOutput> {
    scorer_selector(SelectorKind::Hardware, hardware, candidates, params)
}

/// A hardware-token selector of any kind, e.g. an energy selector trained on
/// power-only ground truth.
pub fn scorer_selector(
    kind: SelectorKind,
    hardware: &HardwareProfile,
    candidates: &[ModelCard],
    params: &ScorerParams,
) -> Result<SelectorOutput> {
    require_trained(params)?;
    if params.config.source != TokenSource::HardwareOnly {
        return Err(Error::Scorer(format!(
            "{kind} selector needs a hardware-only scorer, got {:?}",
            params.config.source
        )));
    }
    let mu = task_token_vec(params, None, Some(&hardware.hw_features))?;
    Ok(SelectorOutput::new(kind, rank_candidates(params, &mu, candidates, RankMethod::Selector)?))
}

/// Copeland over selector rankings, one voter per selector. Weights default
/// to equal and are normalised to sum to 1; selectors missing from a weight
/// map get weight 0.
pub fn combine_selectors(
    outputs: &[SelectorOutput],
    weights: Option<&BTreeMap<SelectorKind, f64>>,
) -> Result<RankingTable> {
    if outputs.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 selectors, got {}", outputs.len())));
    }
    let raw: Vec<f64> = match weights {
        None => vec![1.0; outputs.len()],
        Some(map) => {
            let present: BTreeSet<SelectorKind> = outputs.iter().map(|o| o.selector).collect();
            if let Some(extra) = map.keys().find(|k| !present.contains(k)) {
                return Err(Error::WeightMismatch(format!("weight given for absent selector {extra}")));
            }
            outputs.iter().map(|o| map.get(&o.selector).copied().unwrap_or(0.0)).collect()
        }
    };
    if let Some(bad) = raw.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::WeightMismatch(format!("selector weight {bad} is not a finite non-negative number")));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::WeightMismatch("selector weights sum to 0".into()));
    }
    let voters: Vec<(&RankingTable, f64)> = outputs.iter().zip(&raw).map(|(o, w)| (&o.table, w / total)).collect();
    copeland(&voters, RankMethod::Shadow)
}

/// Runs the task and hardware selectors and combines them.
pub fn recommend_shadow(
    task: &TaskDescriptor,
    hardware: &HardwareProfile,
    candidates: &[ModelCard],
    task_params: &ScorerParams,
    hw_params: &ScorerParams,
    weights: Option<&BTreeMap<SelectorKind, f64>>,
) -> Result<ShadowResult> {
    let selectors = vec![
        task_selector(task, candidates, task_params)?,
        hardware_selector(hardware, candidates, hw_params)?,
    ];
    Ok(ShadowResult {
        table: combine_selectors(&selectors, weights)?,
        selectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FeatureDims;
    use crate::fusion::{Matrix, ScorerConfig, Weights};
    use proptest::prelude::*;

    fn table(ids: &[&str]) -> RankingTable {
        let n = ids.len();
        RankingTable::from_ordered(
            RankMethod::Selector,
            ids.iter().map(|s| s.to_string()).collect(),
            (0..n).map(|i| (n - i) as f64).collect(),
        )
        .unwrap()
    }

    fn out(kind: SelectorKind, ids: &[&str]) -> SelectorOutput {
        SelectorOutput::new(kind, table(ids))
    }

    #[test]
    fn unanimity() {
        let a = out(SelectorKind::Task, &["c", "a", "b"]);
        let b = out(SelectorKind::Hardware, &["c", "a", "b"]);
        let t = combine_selectors(&[a, b], None).unwrap();
        assert_eq!(t.candidate_ids, vec!["c", "a", "b"]);
        assert_eq!(t.method, RankMethod::Shadow);
        assert!(t.ties.is_empty());
    }

    #[test]
    fn degenerate_weights_follow_one_selector() {
        let a = out(SelectorKind::Task, &["b", "c", "a"]);
        let b = out(SelectorKind::Hardware, &["a", "c", "b"]);
        let w = BTreeMap::from([(SelectorKind::Task, 1.0), (SelectorKind::Hardware, 0.0)]);
        let t = combine_selectors(&[a, b], Some(&w)).unwrap();
        assert_eq!(t.candidate_ids, vec!["b", "c", "a"]);
    }

    #[test]
    fn reversed_rankings_tie_everything() {
        let a = out(SelectorKind::Task, &["a", "b", "c", "d"]);
        let b = out(SelectorKind::Hardware, &["d", "c", "b", "a"]);
        let t = combine_selectors(&[a, b], None).unwrap();
        // every pair splits 1/2 vs 1/2, so each candidate scores 3 × 0.5
        assert_eq!(t.candidate_ids, vec!["a", "b", "c", "d"]);
        assert_eq!(t.scores, vec![1.5; 4]);
        assert_eq!(t.ties, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn third_selector_joins_the_vote() {
        let a = out(SelectorKind::Task, &["a", "b", "c"]);
        let b = out(SelectorKind::Hardware, &["c", "b", "a"]);
        let e = out(SelectorKind::Energy, &["c", "a", "b"]);
        let t = combine_selectors(&[a, b, e], None).unwrap();
        // c beats a 2-1 and b 2-1; a vs b 2-1 for a
        assert_eq!(t.candidate_ids, vec!["c", "a", "b"]);
        assert_eq!(t.scores, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn mismatched_candidates_are_rejected() {
        let a = out(SelectorKind::Task, &["a", "b"]);
        let b = out(SelectorKind::Hardware, &["a", "c"]);
        assert!(matches!(combine_selectors(&[a, b], None), Err(Error::CandidateMismatch(_))));
        assert!(combine_selectors(&[out(SelectorKind::Task, &["a"])], None).is_err());
    }

    #[test]
    fn weights_are_normalised() {
        let a = out(SelectorKind::Task, &["a", "b", "c"]);
        let b = out(SelectorKind::Hardware, &["c", "b", "a"]);
        let e = out(SelectorKind::Energy, &["b", "a", "c"]);
        let w1 = BTreeMap::from([(SelectorKind::Task, 2.0), (SelectorKind::Hardware, 1.0), (SelectorKind::Energy, 1.0)]);
        let w2 = BTreeMap::from([(SelectorKind::Task, 0.5), (SelectorKind::Hardware, 0.25), (SelectorKind::Energy, 0.25)]);
        let outputs = [a, b, e];
        assert_eq!(combine_selectors(&outputs, Some(&w1)).unwrap(), combine_selectors(&outputs, Some(&w2)).unwrap());
        let bad = BTreeMap::from([(SelectorKind::Cost, 1.0)]);
        assert!(combine_selectors(&outputs, Some(&bad)).is_err());
    }

    fn params(source: TokenSource, trained: bool) -> ScorerParams {
        let cfg = ScorerConfig::new(FeatureDims { model: 2, hardware: 2, task: 2 }, 2, 1).with_source(source);
        let mut w = Weights::zeros(&cfg);
        w.w_model = Matrix::identity(2);
        w.w_task = Matrix::identity(2);
        w.w_hw = Matrix::identity(2);
        w.query[0] = Matrix::identity(2);
        w.key[0] = Matrix::identity(2);
        w.head_weights[0] = 1.0;
        let mut p = ScorerParams::from_weights(cfg, w).unwrap();
        p.trained = trained;
        p
    }

    fn card(id: &str, f: Vec<f64>) -> ModelCard {
        ModelCard::new(id, id, "cnn", 1, f, "src").unwrap()
    }

    fn hw(id: &str, f: Vec<f64>) -> HardwareProfile {
        HardwareProfile::new(id, id, "arm", 4, 1000.0, 2048.0, 1e4, None, f).unwrap()
    }

    #[test]
    fn selectors_rank_by_similarity() {
        let task = TaskDescriptor::new("t", "d", 2, 10, vec![], vec![1.0, 0.0]).unwrap();
        let cands = vec![card("x", vec![1.0, 0.0]), card("y", vec![0.0, 1.0])];
        let t = task_selector(&task, &cands, &params(TokenSource::TaskOnly, true)).unwrap();
        assert_eq!(t.table.candidate_ids, vec!["x", "y"]);
        assert_eq!(t.selector, SelectorKind::Task);

        let hp = params(TokenSource::HardwareOnly, true);
        let h1 = hardware_selector(&hw("h1", vec![1.0, 0.0]), &cands, &hp).unwrap();
        let h2 = hardware_selector(&hw("h2", vec![0.0, 1.0]), &cands, &hp).unwrap();
        assert_eq!(h1.table.candidate_ids, vec!["x", "y"]);
        assert_eq!(h2.table.candidate_ids, vec!["y", "x"]);

        let single = task_selector(&task, &cands[..1], &params(TokenSource::TaskOnly, true)).unwrap();
        assert_eq!(single.table.candidate_ids, vec!["x"]);
        let same = vec![card("p", vec![1.0, 1.0]), card("q", vec![1.0, 1.0])];
        let tied = task_selector(&task, &same, &params(TokenSource::TaskOnly, true)).unwrap();
        assert_eq!(tied.table.ties, vec![vec![0, 1]]);
    }

    #[test]
    fn selectors_check_their_scorer() {
        let task = TaskDescriptor::new("t", "d", 2, 10, vec![], vec![1.0, 0.0]).unwrap();
        let cands = vec![card("x", vec![1.0, 0.0])];
        assert!(task_selector(&task, &cands, &params(TokenSource::TaskOnly, false)).is_err());
        assert!(task_selector(&task, &cands, &params(TokenSource::HardwareOnly, true)).is_err());
        assert!(hardware_selector(&hw("h", vec![1.0, 0.0]), &cands, &params(TokenSource::TaskOnly, true)).is_err());
    }

    fn strict_order() -> impl Strategy<Value = Vec<usize>> {
        (2usize..6).prop_flat_map(|n| Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    }

    proptest! {
        #[test]
        fn unanimous_strict_orders_are_reproduced(order in strict_order(), voters in 2usize..5) {
            let ids: Vec<String> = order.iter().map(|i| format!("m{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let outputs: Vec<SelectorOutput> = (0..voters).map(|_| out(SelectorKind::Task, &refs)).collect();
            prop_assert_eq!(combine_selectors(&outputs, None).unwrap().candidate_ids, ids);
        }

        #[test]
        fn relabeling_permutes_output(a in strict_order(), seed in any::<u64>()) {
            let n = a.len();
            let mut b = a.clone();
            b.rotate_left((seed as usize) % n);
            let mut c = a.clone();
            c.reverse();
            let label = |i: usize| format!("m{i}");
            let relabel = |i: usize| format!("z{}", n - 1 - i);
            let run = |f: &dyn Fn(usize) -> String| {
                let outs: Vec<SelectorOutput> = [&a, &b, &c]
                    .iter()
                    .map(|o| {
                        let ids: Vec<String> = o.iter().map(|&i| f(i)).collect();
                        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                        out(SelectorKind::Task, &refs)
                    })
                    .collect();
                combine_selectors(&outs, None).unwrap()
            };
            let base = run(&label);
            let moved = run(&relabel);
            let score_of = |t: &RankingTable, id: &str| t.scores[t.position(id).unwrap()];
            for i in 0..n {
                prop_assert_eq!(score_of(&base, &label(i)), score_of(&moved, &relabel(i)));
            }
        }
    }
}
