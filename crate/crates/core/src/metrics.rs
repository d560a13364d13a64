//! Metric computation: classification quality from a confusion matrix, the
//! carbon-footprint composite, and threshold normalisation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{MetricGroup, MetricKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub kind: MetricKind,
    pub value: f64,
}

impl MetricSample {
    pub fn new(kind: MetricKind, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("{kind} sample is not finite")));
        }
        if kind != MetricKind::CpuTempC && value < 0.0 {
            return Err(Error::invalid(format!("{kind} sample must be >= 0, got {value}")));
        }
        Ok(Self { kind, value })
    }
}

/// Accuracy, macro precision/recall and their harmonic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Classes that were never predicted; each contributed precision 0.
    pub zero_predicted: Vec<usize>,
    /// Classes with no true samples; each contributed recall 0.
    pub zero_actual: Vec<usize>,
}

impl ClassificationReport {
    pub fn as_metrics(&self) -> BTreeMap<MetricKind, f64> {
        BTreeMap::from([
            (MetricKind::Accuracy, self.accuracy),
            (MetricKind::Precision, self.precision),
            (MetricKind::Recall, self.recall),
            (MetricKind::F1, self.f1),
        ])
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Rows are the true class, columns the predicted class. Precision and recall
/// are macro-averaged over all classes, including the binary case.
pub fn classification_metrics(confusion: &[Vec<u64>]) -> Result<ClassificationReport> {
    let k = confusion.len();
    if k == 0 {
        return Err(Error::Undefined("empty confusion matrix".into()));
    }
    if let Some(row) = confusion.iter().find(|r| r.len() != k) {
        return Err(Error::dims("confusion matrix row", k, row.len()));
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::Undefined("confusion matrix is all zeros".into()));
    }

    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut zero_predicted = Vec::new();
    let mut zero_actual = Vec::new();
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let actual: u64 = confusion[c].iter().sum();
        if predicted == 0 {
            zero_predicted.push(c);
        } else {
            precision_sum += tp / predicted as f64;
        }
        if actual == 0 {
            zero_actual.push(c);
        } else {
            recall_sum += tp / actual as f64;
        }
    }
    let precision = precision_sum / k as f64;
    let recall = recall_sum / k as f64;
    Ok(ClassificationReport {
        accuracy: trace as f64 / total as f64,
        precision,
        recall,
        f1: f1_score(precision, recall),
        zero_predicted,
        zero_actual,
    })
}

/// Linear composite over hardware metrics: `offset + Σ coefficient·value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSpec {
    pub coefficients: BTreeMap<MetricKind, f64>,
    #[serde(default)]
    pub offset: f64,
}

impl Default for CompositeSpec {
    /// Illustrative weighting only; swap in a published formula as needed.
    fn default() -> Self {
        Self {
            coefficients: BTreeMap::from([
                (MetricKind::PowerW, 1.0),
                (MetricKind::ExecutionTimeMs, 0.001),
                (MetricKind::MemoryMb, 0.001),
                (MetricKind::CpuTempC, 0.0),
            ]),
            offset: 0.0,
        }
    }
}

impl CompositeSpec {
    pub fn validate(&self) -> Result<()> {
        for (&kind, &c) in &self.coefficients {
            if kind.group() != MetricGroup::Hardware || kind == MetricKind::CarbonFootprint {
                return Err(Error::invalid(format!(
                    "composite may only reference measured hardware metrics, found {kind}"
                )));
            }
            if !c.is_finite() {
                return Err(Error::invalid(format!("coefficient for {kind} is not finite")));
            }
        }
        if !self.offset.is_finite() {
            return Err(Error::invalid("composite offset is not finite"));
        }
        Ok(())
    }
}

pub fn carbon_footprint(metrics: &BTreeMap<MetricKind, f64>, spec: &CompositeSpec) -> Result<f64> {
    spec.validate()?;
    let mut total = spec.offset;
    for (&kind, &coefficient) in &spec.coefficients {
        let value = metrics.get(&kind).ok_or_else(|| Error::MissingMetric {
            id: "carbon footprint input".into(),
            metric: kind,
        })?;
        total += coefficient * value;
    }
    Ok(total)
}

/// `value / threshold`.
pub fn normalize(kind: MetricKind, value: f64, threshold: f64) -> Result<f64> {
    if threshold.is_nan() || threshold <= 0.0 || !threshold.is_finite() {
        return Err(Error::invalid(format!(
            "threshold for {kind} must be strictly positive, got {threshold}"
        )));
    }
    Ok(value / threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_classifier() {
        let r = classification_metrics(&[vec![50, 0], vec![0, 50]]).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        let r = classification_metrics(&[vec![45, 5], vec![10, 40]]).unwrap();
        assert_relative_eq!(r.accuracy, 0.85, epsilon = 1e-15);
        // class 0: p = 45/55, r = 45/50; class 1: p = 40/45, r = 40/50
        assert_relative_eq!(r.precision, (45.0 / 55.0 + 40.0 / 45.0) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(r.recall, 0.85, epsilon = 1e-15);
    }

    #[test]
    fn f1_of_sample_row() {
        assert_relative_eq!(f1_score(0.88, 0.85), 0.864_739_884_393_063_6, epsilon = 1e-12);
        assert!((f1_score(0.88, 0.85) - 0.8647).abs() < 5e-5);
    }

    #[test]
    fn degenerate_matrices() {
        assert!(matches!(
            classification_metrics(&[vec![0, 0], vec![0, 0]]),
            Err(Error::Undefined(_))
        ));
        assert!(classification_metrics(&[vec![1, 2]]).is_err());
        let r = classification_metrics(&[vec![10, 0], vec![5, 0]]).unwrap();
        assert_eq!(r.zero_predicted, vec![1]);
        assert_relative_eq!(r.precision, (10.0 / 15.0) / 2.0);
    }

    #[test]
    fn carbon_composite() {
        let metrics = BTreeMap::from([(MetricKind::PowerW, 5.0), (MetricKind::ExecutionTimeMs, 90.0)]);
        let zero = CompositeSpec {
            coefficients: BTreeMap::new(),
            offset: 10.9,
        };
        assert_eq!(carbon_footprint(&metrics, &zero).unwrap(), 10.9);

        let spec = CompositeSpec {
            coefficients: BTreeMap::from([(MetricKind::PowerW, 1.0), (MetricKind::ExecutionTimeMs, 0.01)]),
            offset: 0.0,
        };
        assert_relative_eq!(carbon_footprint(&metrics, &spec).unwrap(), 5.9, epsilon = 1e-12);

        let doubled: BTreeMap<_, _> = metrics.iter().map(|(&k, &v)| (k, 2.0 * v)).collect();
        let shifted = CompositeSpec { offset: 3.0, ..spec.clone() };
        let base = carbon_footprint(&metrics, &shifted).unwrap() - 3.0;
        assert_relative_eq!(carbon_footprint(&doubled, &shifted).unwrap() - 3.0, 2.0 * base, epsilon = 1e-12);
    }

    #[test]
    fn carbon_missing_metric_is_named() {
        let err = carbon_footprint(&BTreeMap::new(), &CompositeSpec::default()).unwrap_err();
        assert!(err.to_string().contains("execution_time_ms"), "{err}");
    }

    #[test]
    fn composite_rejects_model_metrics() {
        let spec = CompositeSpec {
            coefficients: BTreeMap::from([(MetricKind::Accuracy, 1.0)]),
            offset: 0.0,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_relative_eq!(normalize(MetricKind::ExecutionTimeMs, 90.0, 100.0).unwrap(), 0.9);
        assert_eq!(normalize(MetricKind::PowerW, 7.5, 7.5).unwrap(), 1.0);
        assert_eq!(normalize(MetricKind::MemoryMb, 3072.0, 1024.0).unwrap(), 3.0);
        assert!(normalize(MetricKind::MemoryMb, 1.0, 0.0).is_err());
        assert!(normalize(MetricKind::MemoryMb, 1.0, -2.0).is_err());
    }

    #[test]
    fn metric_sample_bounds() {
        assert!(MetricSample::new(MetricKind::CpuTempC, -5.0).is_ok());
        assert!(MetricSample::new(MetricKind::PowerW, -0.1).is_err());
        assert!(MetricSample::new(MetricKind::PowerW, f64::NAN).is_err());
    }

    fn confusion_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..5).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0u64..40, k), k))
    }

    proptest! {
        #[test]
        fn permutation_invariant(m in confusion_strategy(), seed in any::<u64>()) {
            prop_assume!(m.iter().flatten().sum::<u64>() > 0);
            let k = m.len();
            let mut perm: Vec<usize> = (0..k).collect();
            perm.rotate_left((seed as usize) % k);
            if seed % 2 == 0 { perm.swap(0, k - 1); }
            let permuted: Vec<Vec<u64>> =
                (0..k).map(|i| (0..k).map(|j| m[perm[i]][perm[j]]).collect()).collect();
            let a = classification_metrics(&m).unwrap();
            let b = classification_metrics(&permuted).unwrap();
            prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }

        #[test]
        fn f1_between_precision_and_recall(p in 1e-6f64..1.0, r in 1e-6f64..1.0) {
            let f = f1_score(p, r);
            prop_assert!(f <= p.max(r) + 1e-12);
            prop_assert!(f >= p.min(r) - 1e-12);
        }

        #[test]
        fn outputs_are_fractions(m in confusion_strategy()) {
            prop_assume!(m.iter().flatten().sum::<u64>() > 0);
            let r = classification_metrics(&m).unwrap();
            for v in [r.accuracy, r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn normalize_scale_invariant(v in 0.0f64..1e4, t in 1e-3f64..1e4, a in 1e-3f64..1e3) {
            let x = normalize(MetricKind::ExecutionTimeMs, v, t).unwrap();
            let y = normalize(MetricKind::ExecutionTimeMs, a * v, a * t).unwrap();
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
