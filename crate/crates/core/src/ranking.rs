//! Rankings built from benchmark data: per-metric orderings, weighted
//! Copeland aggregation, the threshold-normalised objective, and Kendall tau-b
//! for comparing rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{
    BenchmarkRecord, Combiner, Direction, MetricGroup, MetricKind, Phase, RankMethod, RankingTable,
    WeightConfig,
};
use crate::error::{Error, Result};

/// Pairwise tallies closer than this count as a tie.
pub const TALLY_TIE_EPS: f64 = 1e-12;

pub type MetricMap = BTreeMap<MetricKind, f64>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scope {
    pub task_id: String,
    pub hardware_id: String,
}

impl Scope {
    pub fn new(task_id: impl Into<String>, hardware_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            hardware_id: hardware_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    #[default]
    Mean,
    Median,
}

/// Per-model aggregate metric values for one (task, hardware) scope.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub values: BTreeMap<String, MetricMap>,
    pub warnings: Vec<String>,
}

/// Aggregates fixed-batch records per model. Sweep records are ignored.
///
/// With [`Statistic::Mean`], hardware metrics use the plain mean over passes
/// while model-quality metrics are weighted by batch size, so accuracy equals
/// the tally over the whole dataset.
pub fn aggregate_records(
    records: &[BenchmarkRecord],
    scope: &Scope,
    statistic: Statistic,
) -> Result<Aggregates> {
    if let Some(r) = records
        .iter()
        .find(|r| r.task_id != scope.task_id || r.hardware_id != scope.hardware_id)
    {
        return Err(Error::invalid(format!(
            "record for ({}, {}) outside scope ({}, {})",
            r.task_id, r.hardware_id, scope.task_id, scope.hardware_id
        )));
    }

    let mut by_model: BTreeMap<&str, Vec<&BenchmarkRecord>> = BTreeMap::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for r in records {
        seen.insert(&r.model_id);
        if r.phase == Phase::FixedBatch {
            by_model.entry(&r.model_id).or_default().push(r);
        }
    }

    let mut out = Aggregates::default();
    for model in &seen {
        let Some(rs) = by_model.get(model) else {
            out.warnings
                .push(format!("model {model} has no fixed-batch records; excluded"));
            continue;
        };
        let kinds: BTreeSet<MetricKind> = rs.iter().flat_map(|r| r.metrics.keys().copied()).collect();
        let mut metrics = MetricMap::new();
        for kind in kinds {
            let samples: Vec<(f64, f64)> = rs
                .iter()
                .filter_map(|r| r.metrics.get(&kind).map(|&v| (v, r.batch_size as f64)))
                .collect();
            let value = match statistic {
                Statistic::Mean if kind.group() == MetricGroup::Model => {
                    let weight: f64 = samples.iter().map(|(_, w)| w).sum();
                    samples.iter().map(|(v, w)| v * w).sum::<f64>() / weight
                }
                Statistic::Mean => samples.iter().map(|(v, _)| v).sum::<f64>() / samples.len() as f64,
                Statistic::Median => median(samples.iter().map(|(v, _)| *v).collect()),
            };
            metrics.insert(kind, value);
        }
        out.values.insert(model.to_string(), metrics);
    }
    Ok(out)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// A ranking of candidates by one metric, best first.
///
/// Scores are direction-adjusted: the raw value for higher-is-better metrics
/// and its negation for lower-is-better ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRanking {
    pub kind: MetricKind,
    pub table: RankingTable,
}

pub fn rank_by_metric(aggregates: &BTreeMap<String, MetricMap>, kind: MetricKind) -> Result<MetricRanking> {
    let mut scored = Vec::with_capacity(aggregates.len());
    for (model, metrics) in aggregates {
        let &value = metrics.get(&kind).ok_or_else(|| Error::MissingMetric {
            id: model.clone(),
            metric: kind,
        })?;
        let score = match kind.direction() {
            Direction::HigherIsBetter => value,
            Direction::LowerIsBetter => -value,
        };
        scored.push((model.clone(), score));
    }
    Ok(MetricRanking {
        kind,
        table: RankingTable::from_scores(RankMethod::Metric, scored)?,
    })
}

/// `wins[a][b]` is the total weight of voters placing `a` strictly above `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTally {
    pub candidates: Vec<String>,
    pub wins: Vec<Vec<f64>>,
}

impl PairwiseTally {
    /// Copeland score per candidate: beats + 0.5 * pairwise ties.
    pub fn copeland_scores(&self) -> Vec<f64> {
        let n = self.candidates.len();
        (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| b != a)
                    .map(|b| {
                        let margin = self.wins[a][b] - self.wins[b][a];
                        if margin > TALLY_TIE_EPS {
                            1.0
                        } else if margin < -TALLY_TIE_EPS {
                            0.0
                        } else {
                            0.5
                        }
                    })
                    .sum()
            })
            .collect()
    }
}

/// Builds the weighted pairwise tally. Candidates are indexed in id order.
pub fn pairwise_tally(voters: &[(&RankingTable, f64)]) -> Result<PairwiseTally> {
    let Some((first, _)) = voters.first() else {
        return Err(Error::invalid("no voters supplied"));
    };
    let reference = first.candidate_set();
    for (table, w) in voters {
        if table.candidate_set() != reference || table.len() != first.len() {
            return Err(Error::CandidateMismatch(format!(
                "voter over {:?} differs from {:?}",
                table.candidate_ids, first.candidate_ids
            )));
        }
        if !(0.0..=1.0).contains(w) {
            return Err(Error::WeightMismatch(format!("voter weight {w} outside [0,1]")));
        }
    }

    let mut candidates = first.candidate_ids.clone();
    candidates.sort();
    let n = candidates.len();
    let mut wins = vec![vec![0.0; n]; n];
    for (table, w) in voters {
        let levels = table.levels();
        let level: Vec<usize> = candidates.iter().map(|c| levels[c.as_str()]).collect();
        for a in 0..n {
            for b in 0..n {
                if level[a] < level[b] {
                    wins[a][b] += w;
                }
            }
        }
    }
    Ok(PairwiseTally { candidates, wins })
}

/// Weighted Copeland over arbitrary ranking tables, each voting with its
/// weight. Equal Copeland scores are ordered by id.
pub fn copeland(voters: &[(&RankingTable, f64)], method: RankMethod) -> Result<RankingTable> {
    let tally = pairwise_tally(voters)?;
    let scores = tally.copeland_scores();
    RankingTable::from_scores(method, tally.candidates.into_iter().zip(scores).collect())
}

/// Each metric ranking votes with its configured weight.
pub fn weighted_copeland(rankings: &[MetricRanking], config: &WeightConfig) -> Result<RankingTable> {
    config.validate()?;
    let supplied: BTreeSet<MetricKind> = rankings.iter().map(|r| r.kind).collect();
    let configured: BTreeSet<MetricKind> = config.weights.keys().copied().collect();
    if supplied != configured || supplied.len() != rankings.len() {
        return Err(Error::WeightMismatch(format!(
            "rankings for {supplied:?}, weights for {configured:?}"
        )));
    }
    let voters: Vec<(&RankingTable, f64)> = rankings
        .iter()
        .map(|r| (&r.table, config.weights[&r.kind]))
        .collect();
    copeland(&voters, RankMethod::Copeland)
}

/// Ranks every weighted metric and aggregates with [`weighted_copeland`].
pub fn copeland_from_aggregates(
    aggregates: &BTreeMap<String, MetricMap>,
    config: &WeightConfig,
) -> Result<RankingTable> {
    if aggregates.is_empty() {
        return Err(Error::invalid("no candidates to rank"));
    }
    let rankings = config
        .metric_kinds()
        .into_iter()
        .map(|k| rank_by_metric(aggregates, k))
        .collect::<Result<Vec<_>>>()?;
    weighted_copeland(&rankings, config)
}

/// Combined score `f · Σ_i r_i^{w_i}` (or the product, per
/// `config.combiner`) over every hardware metric with a threshold in the
/// config. `r_i = HW_i/T_i` for higher-is-better metrics and `T_i/HW_i` for
/// lower-is-better ones; unweighted metrics enter with exponent 0.
pub fn objective_score(f_alpha: f64, hw_metrics: &MetricMap, config: &WeightConfig) -> Result<f64> {
    if f_alpha.is_nan() || f_alpha < 0.0 || !f_alpha.is_finite() {
        return Err(Error::invalid(format!("f(alpha) must be finite and >= 0, got {f_alpha}")));
    }
    config.validate()?;
    let mut terms = Vec::new();
    for (&kind, &threshold) in &config.thresholds {
        if kind.group() != MetricGroup::Hardware {
            continue;
        }
        let w = config.weights.get(&kind).copied().unwrap_or(0.0);
        let &value = hw_metrics.get(&kind).ok_or_else(|| Error::MissingMetric {
            id: "objective candidate".into(),
            metric: kind,
        })?;
        let ratio = match kind.direction() {
            Direction::HigherIsBetter => value / threshold,
            Direction::LowerIsBetter => {
                if value <= 0.0 {
                    return Err(Error::invalid(format!(
                        "{kind} must be > 0 to invert its ratio, got {value}"
                    )));
                }
                threshold / value
            }
        };
        terms.push(ratio.powf(w));
    }
    let combined: f64 = match config.combiner {
        Combiner::Sum => terms.iter().sum(),
        Combiner::Product => terms.iter().product(),
    };
    Ok(f_alpha * combined)
}

pub fn rank_by_objective(
    candidates: &BTreeMap<String, (f64, MetricMap)>,
    config: &WeightConfig,
) -> Result<RankingTable> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to rank"));
    }
    let scored = candidates
        .iter()
        .map(|(id, (f, hw))| {
            objective_score(*f, hw, config)
                .map(|s| (id.clone(), s))
                .map_err(|e| Error::invalid(format!("candidate {id}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    RankingTable::from_scores(RankMethod::Objective, scored)
}

/// Objective ranking from aggregates, taking `f(α)` from `performance`.
pub fn objective_from_aggregates(
    aggregates: &BTreeMap<String, MetricMap>,
    performance: MetricKind,
    config: &WeightConfig,
) -> Result<RankingTable> {
    let candidates = aggregates
        .iter()
        .map(|(id, m)| {
            let &f = m.get(&performance).ok_or_else(|| Error::MissingMetric {
                id: id.clone(),
                metric: performance,
            })?;
            Ok((id.clone(), (f, m.clone())))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    rank_by_objective(&candidates, config)
}

/// Kendall tau-b between two rankings of the same candidates.
///
/// When either ranking places every candidate in one tie group (or there is
/// fewer than one pair), tau-b is undefined; this returns 1.0 if the two
/// rankings induce the same weak order and 0.0 otherwise.
pub fn kendall_tau(a: &RankingTable, b: &RankingTable) -> Result<f64> {
    if a.candidate_set() != b.candidate_set() || a.len() != b.len() {
        return Err(Error::CandidateMismatch(format!(
            "{:?} vs {:?}",
            a.candidate_ids, b.candidate_ids
        )));
    }
    let la = a.levels();
    let lb = b.levels();
    let ids = &a.candidate_ids;
    let (mut concordant, mut discordant, mut tied_a, mut tied_b) = (0i64, 0i64, 0i64, 0i64);
    let n = ids.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (ids[i].as_str(), ids[j].as_str());
            let da = la[x].cmp(&la[y]);
            let db = lb[x].cmp(&lb[y]);
            match (da.is_eq(), db.is_eq()) {
                (true, true) => {
                    tied_a += 1;
                    tied_b += 1;
                }
                (true, false) => tied_a += 1,
                (false, true) => tied_b += 1,
                (false, false) if da == db => concordant += 1,
                (false, false) => discordant += 1,
            }
        }
    }
    let pairs = (n * n.saturating_sub(1) / 2) as i64;
    let denom = (((pairs - tied_a) * (pairs - tied_b)) as f64).sqrt();
    if denom == 0.0 {
        let same = ids.iter().all(|x| {
            ids.iter()
                .all(|y| la[x.as_str()].cmp(&la[y.as_str()]) == lb[x.as_str()].cmp(&lb[y.as_str()]))
        });
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// Competition rank (1-based; ties share the smallest rank) per position.
pub fn competition_ranks(table: &RankingTable) -> Vec<usize> {
    let mut ranks = Vec::with_capacity(table.len());
    for i in 0..table.len() {
        if i > 0 && table.scores[i] == table.scores[i - 1] {
            ranks.push(ranks[i - 1]);
        } else {
            ranks.push(i + 1);
        }
    }
    ranks
}

/// CSV with header `rank,model_id,score,method`.
pub fn write_csv<W: Write>(table: &RankingTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "rank,model_id,score,method")?;
    for ((rank, id), score) in competition_ranks(table)
        .into_iter()
        .zip(&table.candidate_ids)
        .zip(&table.scores)
    {
        writeln!(out, "{rank},{id},{score},{}", table.method)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use chrono::Utc;

    fn table(ids: &[&str]) -> RankingTable {
        let n = ids.len();
        RankingTable::from_ordered(
            RankMethod::Metric,
            ids.iter().map(|s| s.to_string()).collect(),
            (0..n).map(|i| (n - i) as f64).collect(),
        )
        .unwrap()
    }

    fn record(model: &str, phase: Phase, latency: f64) -> BenchmarkRecord {
        BenchmarkRecord {
            model_id: model.into(),
            task_id: "t".into(),
            hardware_id: "h".into(),
            batch_size: 32,
            batch_index: 0,
            phase,
            metrics: BTreeMap::from([(MetricKind::ExecutionTimeMs, latency)]),
            timestamp: Utc::now(),
            stabilized: true,
        }
    }

    fn config(pairs: &[(MetricKind, f64)]) -> WeightConfig {
        WeightConfig::new(
            pairs.iter().copied().collect(),
            pairs.iter().map(|&(k, _)| (k, 1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn aggregate_singleton_and_mean() {
        let scope = Scope::new("t", "h");
        let one = aggregate_records(&[record("m1", Phase::FixedBatch, 42.0)], &scope, Statistic::Mean).unwrap();
        assert_eq!(one.values["m1"][&MetricKind::ExecutionTimeMs], 42.0);

        let two = [record("m1", Phase::FixedBatch, 80.0), record("m1", Phase::FixedBatch, 100.0)];
        let agg = aggregate_records(&two, &scope, Statistic::Mean).unwrap();
        assert_eq!(agg.values["m1"][&MetricKind::ExecutionTimeMs], 90.0);
        let med = aggregate_records(&two, &scope, Statistic::Median).unwrap();
        assert_eq!(med.values["m1"][&MetricKind::ExecutionTimeMs], 90.0);
    }

    #[test]
    fn aggregate_rejects_mixed_scope_and_warns_on_sweep_only() {
        let mut other = record("m1", Phase::FixedBatch, 1.0);
        other.hardware_id = "h2".into();
        assert!(aggregate_records(&[other], &Scope::new("t", "h"), Statistic::Mean).is_err());

        let agg = aggregate_records(
            &[record("m1", Phase::BatchSweep, 5.0), record("m2", Phase::FixedBatch, 5.0)],
            &Scope::new("t", "h"),
            Statistic::Mean,
        )
        .unwrap();
        assert!(!agg.values.contains_key("m1"));
        assert_eq!(agg.warnings.len(), 1);
        assert!(agg.warnings[0].contains("m1"));
    }

    #[test]
    fn model_metrics_are_sample_weighted() {
        let mut a = record("m", Phase::FixedBatch, 1.0);
        a.metrics.insert(MetricKind::Accuracy, 1.0);
        let mut b = a.clone();
        b.batch_size = 4;
        b.metrics.insert(MetricKind::Accuracy, 0.0);
        let agg = aggregate_records(&[a, b], &Scope::new("t", "h"), Statistic::Mean).unwrap();
        assert_relative_eq!(agg.values["m"][&MetricKind::Accuracy], 32.0 / 36.0);
    }

    #[test]
    fn rank_by_metric_respects_direction_and_ties() {
        let aggs = BTreeMap::from([
            ("m1".to_string(), MetricMap::from([(MetricKind::ExecutionTimeMs, 90.0), (MetricKind::Accuracy, 0.92)])),
            ("m2".to_string(), MetricMap::from([(MetricKind::ExecutionTimeMs, 120.0), (MetricKind::Accuracy, 0.92)])),
        ]);
        let lat = rank_by_metric(&aggs, MetricKind::ExecutionTimeMs).unwrap();
        assert_eq!(lat.table.candidate_ids, vec!["m1", "m2"]);
        let acc = rank_by_metric(&aggs, MetricKind::Accuracy).unwrap();
        assert_eq!(acc.table.ties, vec![vec![0, 1]]);

        let single = BTreeMap::from([("only".to_string(), MetricMap::from([(MetricKind::PowerW, 3.0)]))]);
        assert_eq!(rank_by_metric(&single, MetricKind::PowerW).unwrap().table.candidate_ids, vec!["only"]);
        let err = rank_by_metric(&aggs, MetricKind::PowerW).unwrap_err();
        assert!(err.to_string().contains("m1") && err.to_string().contains("power_w"));
    }

    #[test]
    fn copeland_single_voter() {
        let r = MetricRanking { kind: MetricKind::Accuracy, table: table(&["c", "a", "b"]) };
        let out = weighted_copeland(&[r], &config(&[(MetricKind::Accuracy, 1.0)])).unwrap();
        assert_eq!(out.candidate_ids, vec!["c", "a", "b"]);
        assert_eq!(out.scores, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn copeland_opposed_voters_tie_everywhere() {
        let rs = [
            MetricRanking { kind: MetricKind::Accuracy, table: table(&["a", "b", "c"]) },
            MetricRanking { kind: MetricKind::PowerW, table: table(&["c", "b", "a"]) },
        ];
        let out =
            weighted_copeland(&rs, &config(&[(MetricKind::Accuracy, 0.5), (MetricKind::PowerW, 0.5)])).unwrap();
        assert_eq!(out.scores, vec![1.0, 1.0, 1.0]);
        assert_eq!(out.candidate_ids, vec!["a", "b", "c"]);
        assert_eq!(out.ties, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn copeland_weighted_majority() {
        let rs = [
            MetricRanking { kind: MetricKind::Accuracy, table: table(&["a", "b", "c"]) },
            MetricRanking { kind: MetricKind::PowerW, table: table(&["b", "a", "c"]) },
        ];
        let out =
            weighted_copeland(&rs, &config(&[(MetricKind::Accuracy, 0.6), (MetricKind::PowerW, 0.4)])).unwrap();
        assert_eq!(out.candidate_ids, vec!["a", "b", "c"]);
        assert_eq!(out.scores, vec![2.0, 1.0, 0.0]);

        let tally = pairwise_tally(&[(&rs[0].table, 0.6), (&rs[1].table, 0.4)]).unwrap();
        for a in 0..3 {
            assert_eq!(tally.wins[a][a], 0.0);
            for b in 0..3 {
                assert!(tally.wins[a][b] + tally.wins[b][a] <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn copeland_rejects_mismatches() {
        let r1 = MetricRanking { kind: MetricKind::Accuracy, table: table(&["a", "b"]) };
        let r2 = MetricRanking { kind: MetricKind::PowerW, table: table(&["a", "z"]) };
        let cfg = config(&[(MetricKind::Accuracy, 0.5), (MetricKind::PowerW, 0.5)]);
        assert!(matches!(weighted_copeland(&[r1.clone(), r2], &cfg), Err(Error::CandidateMismatch(_))));
        assert!(matches!(weighted_copeland(&[r1], &cfg), Err(Error::WeightMismatch(_))));
    }

    #[test]
    fn objective_worked_example() {
        let cfg = config(&[(MetricKind::ExecutionTimeMs, 1.0)]);
        let cfg = WeightConfig {
            thresholds: BTreeMap::from([(MetricKind::ExecutionTimeMs, 100.0)]),
            ..cfg
        };
        let hw = MetricMap::from([(MetricKind::ExecutionTimeMs, 90.0)]);
        let s = objective_score(0.92, &hw, &cfg).unwrap();
        assert_relative_eq!(s, 0.92 * 100.0 / 90.0, epsilon = 1e-12);
        assert!((s - 1.0222).abs() < 5e-5);
        assert_eq!(objective_score(0.0, &hw, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn objective_unit_ratios_and_product() {
        let kinds = [MetricKind::ExecutionTimeMs, MetricKind::MemoryMb, MetricKind::PowerW];
        let cfg = WeightConfig::new(
            kinds.iter().map(|&k| (k, 1.0 / 3.0)).collect(),
            kinds.iter().map(|&k| (k, 7.0)).collect(),
        )
        .unwrap();
        let hw: MetricMap = kinds.iter().map(|&k| (k, 7.0)).collect();
        assert_relative_eq!(objective_score(0.5, &hw, &cfg).unwrap(), 1.5, epsilon = 1e-12);
        let product = cfg.with_combiner(Combiner::Product);
        assert_relative_eq!(objective_score(0.5, &hw, &product).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn objective_errors() {
        let cfg = config(&[(MetricKind::ExecutionTimeMs, 1.0)]);
        assert!(objective_score(1.0, &MetricMap::new(), &cfg).is_err());
        let zero = MetricMap::from([(MetricKind::ExecutionTimeMs, 0.0)]);
        assert!(objective_score(1.0, &zero, &cfg).is_err());
        let hw = MetricMap::from([(MetricKind::ExecutionTimeMs, 1.0)]);
        assert!(objective_score(-1.0, &hw, &cfg).is_err());
    }

    #[test]
    fn rank_by_objective_prefers_faster() {
        let cfg = WeightConfig::new(
            BTreeMap::from([(MetricKind::ExecutionTimeMs, 0.5), (MetricKind::Accuracy, 0.5)]),
            BTreeMap::from([(MetricKind::ExecutionTimeMs, 100.0), (MetricKind::Accuracy, 1.0)]),
        )
        .unwrap();
        let cands = BTreeMap::from([
            ("slow".to_string(), (0.9, MetricMap::from([(MetricKind::ExecutionTimeMs, 120.0)]))),
            ("fast".to_string(), (0.9, MetricMap::from([(MetricKind::ExecutionTimeMs, 90.0)]))),
        ]);
        let t = rank_by_objective(&cands, &cfg).unwrap();
        assert_eq!(t.candidate_ids, vec!["fast", "slow"]);
        assert_eq!(t.method, RankMethod::Objective);

        let single = BTreeMap::from([("x".to_string(), (0.1, MetricMap::from([(MetricKind::ExecutionTimeMs, 1.0)])))]);
        assert_eq!(rank_by_objective(&single, &cfg).unwrap().candidate_ids, vec!["x"]);
    }

    #[test]
    fn objective_accuracy_only_orders_by_f() {
        // All weight on accuracy; hardware metrics present with w = 0.
        let cfg = WeightConfig::new(
            BTreeMap::from([(MetricKind::Accuracy, 1.0)]),
            BTreeMap::from([
                (MetricKind::Accuracy, 1.0),
                (MetricKind::ExecutionTimeMs, 100.0),
                (MetricKind::PowerW, 5.0),
            ]),
        )
        .unwrap();
        let cands = BTreeMap::from([
            ("a".to_string(), (0.7, MetricMap::from([(MetricKind::ExecutionTimeMs, 10.0), (MetricKind::PowerW, 1.0)]))),
            ("b".to_string(), (0.9, MetricMap::from([(MetricKind::ExecutionTimeMs, 500.0), (MetricKind::PowerW, 9.0)]))),
            ("c".to_string(), (0.8, MetricMap::from([(MetricKind::ExecutionTimeMs, 50.0), (MetricKind::PowerW, 2.0)]))),
        ]);
        assert_eq!(rank_by_objective(&cands, &cfg).unwrap().candidate_ids, vec!["b", "c", "a"]);
    }

    #[test]
    fn kendall_examples() {
        let a = table(&["x", "y", "z"]);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &table(&["z", "y", "x"])).unwrap(), -1.0);
        assert_relative_eq!(kendall_tau(&a, &table(&["x", "z", "y"])).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert!(kendall_tau(&a, &table(&["x", "y", "w"])).is_err());
    }

    #[test]
    fn kendall_tau_b_with_ties() {
        // a: x > y = z ; b: x > y > z. nc = 2, nd = 0, ties_a = 1, ties_b = 0.
        let a = RankingTable::from_ordered(
            RankMethod::Metric,
            vec!["x".into(), "y".into(), "z".into()],
            vec![2.0, 1.0, 1.0],
        )
        .unwrap();
        let b = table(&["x", "y", "z"]);
        assert_relative_eq!(kendall_tau(&a, &b).unwrap(), 2.0 / (2.0f64 * 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        let single = table(&["x"]);
        assert_eq!(kendall_tau(&single, &single).unwrap(), 1.0);
    }

    #[test]
    fn csv_export() {
        let t = RankingTable::from_ordered(
            RankMethod::Copeland,
            vec!["a".into(), "b".into(), "c".into()],
            vec![2.0, 1.0, 1.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rank,model_id,score,method\n1,a,2,copeland\n2,b,1,copeland\n2,c,1,copeland\n"
        );
    }
}
