use serde::Serialize;

use crate::error::{Error, Result};

/// Confusion-cell counts over a set of windows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    /// Counts `(prediction, truth)` pairs.
    pub fn tally(pairs: impl IntoIterator<Item = (u8, u8)>) -> Self {
        let mut c = Self::default();
        for (pred, truth) in pairs {
            c.add(pred, truth);
        }
        c
    }

    pub fn add(&mut self, prediction: u8, truth: u8) {
        match (prediction != 0, truth != 0) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Precision, recall and F1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 with the zero-count conventions: no positives at all
/// (`tp = fp = fn = 0`) scores 1 across the board; `tp = 0` with any false
/// positive or negative scores 0.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    if c.tp == 0 {
        let v = if c.fp == 0 && c.fn_ == 0 { 1.0 } else { 0.0 };
        return Metrics {
            precision: v,
            recall: v,
            f1: v,
        };
    }
    let tp = c.tp as f64;
    let precision = tp / (tp + c.fp as f64);
    let recall = tp / (tp + c.fn_ as f64);
    Metrics {
        precision,
        recall,
        f1: 2.0 * precision * recall / (precision + recall),
    }
}

/// Predictions and truths of one run plus their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub predictions: Vec<u8>,
    pub truths: Vec<u8>,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

pub fn evaluate_run(predictions: &[u8], truths: &[u8]) -> Result<DetectionResult> {
    if predictions.len() != truths.len() {
        return Err(Error::ShapeMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    let counts = ConfusionCounts::tally(predictions.iter().copied().zip(truths.iter().copied()));
    Ok(DetectionResult {
        predictions: predictions.to_vec(),
        truths: truths.to_vec(),
        counts,
        metrics: metrics(&counts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(tp: usize, tn: usize, fp: usize, fn_: usize) -> ConfusionCounts {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    #[test]
    fn special_cases() {
        let ones = Metrics {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
        assert_eq!(metrics(&c(1, 0, 0, 0)), ones);
        assert_eq!(metrics(&c(0, 0, 0, 0)), ones);
        assert_eq!(metrics(&c(0, 7, 0, 0)), ones);
        assert_eq!(metrics(&c(0, 0, 3, 0)), Metrics::default());
        assert_eq!(metrics(&c(0, 2, 0, 4)), Metrics::default());
    }

    #[test]
    fn run_examples() {
        assert_eq!(
            evaluate_run(&[0, 1, 0, 1], &[0, 1, 0, 1])
                .unwrap()
                .metrics
                .f1,
            1.0
        );
        let r = evaluate_run(&[0, 0, 0], &[0, 1, 0]).unwrap();
        assert_eq!((r.counts.tp, r.counts.fn_, r.metrics.f1), (0, 1, 0.0));
        let r = evaluate_run(&[1, 1, 0], &[1, 0, 0]).unwrap();
        assert_eq!(r.counts, c(1, 1, 1, 0));
        assert_eq!(r.metrics.precision, 0.5);
        assert_eq!(r.metrics.recall, 1.0);
        assert!((r.metrics.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(evaluate_run(&[1], &[1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..50),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::seeded_rng(seed));
            let split = |v: &[(u8, u8)]| -> (Vec<u8>, Vec<u8>) { v.iter().copied().unzip() };
            let (p1, t1) = split(&pairs);
            let (p2, t2) = split(&shuffled);
            prop_assert_eq!(
                evaluate_run(&p1, &t1).unwrap().metrics,
                evaluate_run(&p2, &t2).unwrap().metrics
            );
        }
    }
}
