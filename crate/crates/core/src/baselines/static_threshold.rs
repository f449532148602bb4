use crate::error::{Error, Result};
use crate::eval::{metrics, ConfusionCounts, Metrics};

/// Best fixed threshold and the metrics it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticThresholdResult {
    pub threshold: f64,
    pub metrics: Metrics,
}

/// Searches every distinct cut of the sorted scores for the highest F1
/// under the rule "anomalous iff score > threshold".
///
/// Candidates are the midpoints between consecutive distinct scores, one
/// value below the minimum (halfway to zero, or just under a zero minimum)
/// and one above the maximum (halfway to one, or the maximum itself). Ties
/// go to the smallest threshold.
pub fn optimal_static_threshold(scores: &[f64], truths: &[u8]) -> Result<StaticThresholdResult> {
    if scores.is_empty() {
        return Err(Error::invalid(
            "static threshold search needs at least one score",
        ));
    }
    if scores.len() != truths.len() {
        return Err(Error::ShapeMismatch {
            expected: scores.len(),
            actual: truths.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::DataQuality("scores must be finite".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let min = scores[order[0]];
    let max = scores[*order.last().unwrap()];

    // everything flagged at the lowest candidate
    let anomalies = truths.iter().filter(|&&t| t != 0).count();
    let mut counts = ConfusionCounts {
        tp: anomalies,
        fp: scores.len() - anomalies,
        tn: 0,
        fn_: 0,
    };
    let below = if min > 0.0 { min / 2.0 } else { min - 1e-9 };
    let mut best = StaticThresholdResult {
        threshold: below,
        metrics: metrics(&counts),
    };

    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        // unflag the whole group of equal scores
        while i < order.len() && scores[order[i]] == value {
            if truths[order[i]] != 0 {
                counts.tp -= 1;
                counts.fn_ += 1;
            } else {
                counts.fp -= 1;
                counts.tn += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            (value + scores[order[i]]) / 2.0
        } else if max < 1.0 {
            (max + 1.0) / 2.0
        } else {
            max
        };
        let m = metrics(&counts);
        if m.f1 > best.metrics.f1 {
            best = StaticThresholdResult {
                threshold,
                metrics: m,
            };
        }
    }
    Ok(best)
}
