use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Full,
    Low,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "full_resource" => Ok(ThresholdMode::Full),
            "low" | "low_resource" => Ok(ThresholdMode::Low),
            other => Err(Error::Config(format!("unknown threshold mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    /// Fixed threshold taking precedence over the mode rule.
    pub threshold: Option<f64>,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Full,
            threshold: None,
        }
    }
}

impl ThresholdPolicy {
    pub fn full() -> Self {
        ThresholdPolicy::default()
    }

    pub fn low() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Low,
            threshold: None,
        }
    }

    /// Decision threshold for a label set of size `k`.
    pub fn threshold(&self, k: usize) -> f64 {
        match (self.threshold, self.mode) {
            (Some(t), _) => t,
            (None, ThresholdMode::Full) if k < 400 => 0.4,
            (None, ThresholdMode::Full) => 0.2,
            (None, ThresholdMode::Low) => 0.3,
        }
    }
}

/// Labels whose probability strictly exceeds `tau`.
pub fn predict_labels<S: Scalar>(probs: &[S], tau: f64) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.as_f64() > tau)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_label: BTreeMap<usize, LabelCounts>,
    pub documents: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro-averaged precision, recall and F1 over all (document, label)
/// decisions. Duplicate labels within a set count once.
pub fn micro_f1(gold: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::dim("micro_f1", &[gold.len()], &[pred.len()]));
    }
    let mut per_label: BTreeMap<usize, LabelCounts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let g: BTreeSet<usize> = g.iter().copied().collect();
        let p: BTreeSet<usize> = p.iter().copied().collect();
        for &l in g.union(&p) {
            let c = per_label.entry(l).or_default();
            match (g.contains(&l), p.contains(&l)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
    }
    let (tp, fp, fn_) = per_label
        .values()
        .fold((0, 0, 0), |(a, b, c), x| (a + x.tp, b + x.fp, c + x.fn_));
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        per_label,
        documents: gold.len(),
    })
}

/// Running sum over labels (most frequent first) of the per-label true
/// positive difference `multi - mono`.
pub fn cumulative_tp_diff(
    mono: &[Vec<usize>],
    multi: &[Vec<usize>],
    gold: &[Vec<usize>],
    label_order: &[usize],
) -> Result<Vec<i64>> {
    if mono.len() != gold.len() || multi.len() != gold.len() {
        return Err(Error::dim(
            "cumulative_tp_diff",
            &[mono.len(), multi.len()],
            &[gold.len()],
        ));
    }
    let known: BTreeSet<usize> = label_order.iter().copied().collect();
    let tps = |pred: &[Vec<usize>]| -> Result<BTreeMap<usize, i64>> {
        let mut out = BTreeMap::new();
        for (g, p) in gold.iter().zip(pred) {
            let g: BTreeSet<usize> = g.iter().copied().collect();
            for &l in g.iter().chain(p) {
                if !known.contains(&l) {
                    return Err(Error::UnknownLabel(l.to_string()));
                }
            }
            let p: BTreeSet<usize> = p.iter().copied().collect();
            for &l in g.intersection(&p) {
                *out.entry(l).or_insert(0) += 1;
            }
        }
        Ok(out)
    };
    let a = tps(mono)?;
    let b = tps(multi)?;
    let mut acc = 0;
    Ok(label_order
        .iter()
        .map(|l| {
            acc += b.get(l).unwrap_or(&0) - a.get(l).unwrap_or(&0);
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(ThresholdPolicy::full().threshold(344), 0.4);
        assert_eq!(ThresholdPolicy::full().threshold(399), 0.4);
        assert_eq!(ThresholdPolicy::full().threshold(400), 0.2);
        assert_eq!(ThresholdPolicy::full().threshold(809), 0.2);
        assert_eq!(ThresholdPolicy::low().threshold(809), 0.3);
        let fixed = ThresholdPolicy {
            threshold: Some(0.5),
            ..ThresholdPolicy::low()
        };
        assert_eq!(fixed.threshold(3), 0.5);
    }

    #[test]
    fn strict_threshold() {
        assert_eq!(predict_labels(&[0.41, 0.39], 0.4), vec![0]);
        assert_eq!(predict_labels(&[0.4, 0.4], 0.4), Vec::<usize>::new());
    }

    #[test]
    fn worked_example() {
        let r = micro_f1(&[vec![1, 2], vec![3]], &[vec![1], vec![3, 2]]).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (2, 1, 1));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_label[&2], LabelCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn degenerate_cases() {
        let gold = vec![vec![0, 1], vec![2]];
        assert_eq!(micro_f1(&gold, &gold).unwrap().f1, 1.0);
        let r = micro_f1(&gold, &[vec![], vec![]]).unwrap();
        assert_eq!((r.f1, r.precision, r.recall), (0.0, 0.0, 0.0));
        assert!(micro_f1(&gold, &[vec![]]).is_err());
        assert_eq!(micro_f1(&[], &[]).unwrap().f1, 0.0);
    }

    #[test]
    fn cumulative_diffs() {
        let gold = vec![vec![0, 1], vec![0]];
        let same = vec![vec![0], vec![]];
        assert_eq!(cumulative_tp_diff(&same, &same, &gold, &[0, 1]).unwrap(), vec![0, 0]);
        let extra = vec![vec![0], vec![0]];
        assert_eq!(cumulative_tp_diff(&same, &extra, &gold, &[0, 1]).unwrap(), vec![1, 1]);

        let gold = vec![vec![0, 1], vec![0, 1], vec![0]];
        let mono = vec![vec![1], vec![], vec![]];
        let multi = vec![vec![0], vec![0], vec![]];
        assert_eq!(cumulative_tp_diff(&mono, &multi, &gold, &[0, 1]).unwrap(), vec![2, 1]);
        assert!(cumulative_tp_diff(&mono, &multi, &gold, &[0]).is_err());
    }
}
