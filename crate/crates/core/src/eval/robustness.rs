use std::ops::Range;

use serde::Serialize;

use super::metrics::{evaluate_run, Metrics};
use crate::error::{Error, Result};

/// Contiguous split of `len` items into `parts` subsets of `len / parts`
/// items each; the remainder goes to the last subset.
pub fn subset_bounds(len: usize, parts: usize) -> Result<Vec<Range<usize>>> {
    if parts == 0 || len < parts {
        return Err(Error::invalid(format!(
            "cannot split {len} windows into {parts} subsets"
        )));
    }
    let size = len / parts;
    Ok((0..parts)
        .map(|i| {
            let start = i * size;
            let end = if i + 1 == parts { len } else { start + size };
            start..end
        })
        .collect())
}

/// Mean and population standard deviation of one metric triple.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Summary {
    pub mean: Metrics,
    pub std: Metrics,
}

/// Metrics on each subset and their summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub subsets: Vec<Metrics>,
    pub summary: Summary,
}

impl RobustnessReport {
    pub fn f1s(&self) -> Vec<f64> {
        self.subsets.iter().map(|m| m.f1).collect()
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn subset_robustness(
    predictions: &[u8],
    truths: &[u8],
    n_subsets: usize,
) -> Result<RobustnessReport> {
    if predictions.len() != truths.len() {
        return Err(Error::ShapeMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    let subsets = subset_bounds(predictions.len(), n_subsets)?
        .into_iter()
        .map(|r| Ok(evaluate_run(&predictions[r.clone()], &truths[r])?.metrics))
        .collect::<Result<Vec<_>>>()?;

    let (p_mean, p_std) = mean_std(subsets.iter().map(|m| m.precision));
    let (r_mean, r_std) = mean_std(subsets.iter().map(|m| m.recall));
    let (f_mean, f_std) = mean_std(subsets.iter().map(|m| m.f1));
    Ok(RobustnessReport {
        subsets,
        summary: Summary {
            mean: Metrics {
                precision: p_mean,
                recall: r_mean,
                f1: f_mean,
            },
            std: Metrics {
                precision: p_std,
                recall: r_std,
                f1: f_std,
            },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn remainder_goes_last() {
        let sizes: Vec<usize> = subset_bounds(25, 10)
            .unwrap()
            .iter()
            .map(|r| r.len())
            .collect();
        assert_eq!(sizes, [vec![2; 9], vec![7]].concat());
        assert!(subset_bounds(9, 10).is_err());
    }

    #[test]
    fn identical_perfect_subsets() {
        let truths: Vec<u8> = (0..100).map(|i| u8::from(i % 10 == 3)).collect();
        let r = subset_robustness(&truths, &truths, 10).unwrap();
        assert_eq!(r.subsets.len(), 10);
        assert_eq!(r.summary.mean.f1, 1.0);
        assert_eq!(r.summary.std.f1, 0.0);
    }

    #[test]
    fn all_normal_subset_counts_as_perfect() {
        // first subset all normal and correctly predicted, the rest missed
        let mut truths = vec![0u8; 100];
        for t in truths.iter_mut().skip(10).step_by(5) {
            *t = 1;
        }
        let preds = vec![0u8; 100];
        let r = subset_robustness(&preds, &truths, 10).unwrap();
        assert_eq!(r.subsets[0].f1, 1.0);
        assert!(r.subsets[1..].iter().all(|m| m.f1 == 0.0));
        assert!((r.summary.mean.f1 - 0.1).abs() < 1e-15);
        assert!((r.summary.std.f1 - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn subsets_tile(len in 10usize..500, parts in 1usize..11) {
            let b = subset_bounds(len, parts).unwrap();
            prop_assert_eq!(b.len(), parts);
            prop_assert_eq!(b[0].start, 0);
            prop_assert_eq!(b.last().unwrap().end, len);
            for w in b.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
        }
    }
}
