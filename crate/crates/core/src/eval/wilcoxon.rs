use crate::error::{Error, Result};

/// Signed-rank statistic and exact two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Number of non-zero differences used.
    pub n: usize,
    pub p_value: f64,
}

/// Exact two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied magnitudes get average ranks. The
/// null distribution of `W⁺` is counted over all `2ⁿ` sign assignments of
/// the observed ranks (by subset-sum counting on doubled ranks, which keeps
/// every count an integer), and `p = min(1, 2·P(W⁺ ≤ min(W⁺, W⁻)))`.
pub fn wilcoxon_two_tailed(sample_a: &[f64], sample_b: &[f64]) -> Result<WilcoxonResult> {
    if sample_a.len() != sample_b.len() {
        return Err(Error::ShapeMismatch {
            expected: sample_a.len(),
            actual: sample_b.len(),
        });
    }
    if sample_a.iter().chain(sample_b).any(|v| !v.is_finite()) {
        return Err(Error::DataQuality("Wilcoxon samples must be finite".into()));
    }
    let diffs: Vec<f64> = sample_a
        .iter()
        .zip(sample_b)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Degenerate(
            "all paired differences are zero; the signed-rank test is undefined".into(),
        ));
    }
    if n > 60 {
        return Err(Error::invalid(format!(
            "exact signed-rank test supports at most 60 pairs, got {n}"
        )));
    }

    let doubled = doubled_ranks(&diffs);
    let plus2: u64 = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total2: u64 = doubled.iter().sum();
    let minus2 = total2 - plus2;
    let low2 = plus2.min(minus2);

    // counts[s] = number of sign assignments with doubled W⁺ equal to s
    let mut counts = vec![0u128; total2 as usize + 1];
    counts[0] = 1;
    for &r in &doubled {
        let r = r as usize;
        for s in (r..counts.len()).rev() {
            counts[s] += counts[s - r];
        }
    }
    let tail: u128 = counts[..=low2 as usize].iter().sum();
    let p = (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0);

    Ok(WilcoxonResult {
        statistic: low2 as f64 / 2.0,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        n,
        p_value: p,
    })
}

/// Twice the average rank of each |difference|, so ties stay integral.
fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0u64; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1; their average doubled is i+j+2
        for &idx in &order[i..=j] {
            ranks[idx] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}
