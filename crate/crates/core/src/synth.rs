//! Seeded synthetic series with labeled, contiguous anomaly segments.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePattern {
    Sine,
    MixtureOfSines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Independent ±(5–10)σ jumps at every point of the segment.
    Spike,
    /// Constant ±(3–6)σ offset over the segment.
    LevelShift,
    /// Extra Gaussian noise with 4σ standard deviation.
    NoiseBurst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n: usize,
    pub m: usize,
    pub pattern: BasePattern,
    /// Period of the dominant sine, in samples.
    pub period: f64,
    pub noise_std: f64,
    pub anomaly_rate: f64,
    pub kinds: Vec<AnomalyKind>,
    pub min_segment: usize,
    pub max_segment: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            m: 1,
            pattern: BasePattern::MixtureOfSines,
            period: 50.0,
            noise_std: 0.1,
            anomaly_rate: 0.05,
            kinds: vec![
                AnomalyKind::Spike,
                AnomalyKind::LevelShift,
                AnomalyKind::NoiseBurst,
            ],
            min_segment: 20,
            max_segment: 60,
            seed: 7,
        }
    }
}

/// A generated series together with its noise- and anomaly-free signal.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub series: TimeSeries,
    /// Row-major clean base signal, same shape as the series.
    pub clean: Vec<f64>,
    /// Half-open `[start, end)` anomaly segments in time order.
    pub segments: Vec<(usize, usize, AnomalyKind)>,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::invalid("synthetic series needs n >= 1 and m >= 1"));
        }
        if !(0.0..=0.5).contains(&self.anomaly_rate) {
            return Err(Error::invalid("anomaly_rate must lie in [0, 0.5]"));
        }
        if self.min_segment < 1 || self.max_segment < self.min_segment {
            return Err(Error::invalid("need 1 <= min_segment <= max_segment"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        if self.period.is_nan() || self.period <= 1.0 {
            return Err(Error::invalid("period must exceed one sample"));
        }
        if self.anomaly_rate > 0.0 && self.kinds.is_empty() {
            return Err(Error::invalid(
                "anomalies requested but no anomaly kinds enabled",
            ));
        }
        Ok(())
    }
}

/// Draws segment lengths summing to `target`, or to the nearest reachable
/// total when no segment count can hit it exactly.
fn segment_lengths(cfg: &SynthConfig, target: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let (lo, hi) = (cfg.min_segment, cfg.max_segment);
    // reachable totals are the union of [c·lo, c·hi] over segment counts c
    let mut best: Option<(usize, usize, usize)> = None; // (distance, count, total)
    for count in 1..=cfg.n / lo + 1 {
        let total = target.clamp(count * lo, count * hi);
        let dist = total.abs_diff(target);
        if best.is_none_or(|(d, _, _)| dist < d) {
            best = Some((dist, count, total));
        }
        if count * lo > target {
            break;
        }
    }
    let (dist, count, total) = best.expect("at least one segment count is tried");
    if dist as f64 > 0.2 * target as f64 || total + count - 1 > cfg.n {
        return Err(Error::invalid(format!(
            "anomaly_rate {} cannot be met with segments of {}..={} points in a series of {}",
            cfg.anomaly_rate, lo, hi, cfg.n
        )));
    }
    let mut lengths = vec![lo; count];
    let mut spare = total - count * lo;
    while spare > 0 {
        let i = rng.gen_range(0..count);
        if lengths[i] < hi {
            lengths[i] += 1;
            spare -= 1;
        }
    }
    Ok(lengths)
}

pub fn generate(cfg: &SynthConfig) -> Result<TimeSeries> {
    Ok(generate_detailed(cfg)?.series)
}

pub fn generate_detailed(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let (n, m) = (cfg.n, cfg.m);

    let phases: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..TAU)).collect();
    let mut clean = Vec::with_capacity(n * m);
    for i in 0..n {
        let t = i as f64;
        for &phase in &phases {
            let base = (TAU * t / cfg.period + phase).sin();
            let v = match cfg.pattern {
                BasePattern::Sine => base,
                BasePattern::MixtureOfSines => {
                    base + 0.5 * (TAU * t / (cfg.period / 3.7) + 2.0 * phase).sin()
                        + 0.3 * (TAU * t / (cfg.period * 4.3) + 0.5 * phase).sin()
                }
            };
            clean.push(v);
        }
    }

    let sigma = cfg.noise_std;
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut values: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
    let mut labels = vec![0u8; n];

    let target = (cfg.anomaly_rate * n as f64).round() as usize;
    let mut segments = Vec::new();
    if target > 0 {
        let mut lengths = segment_lengths(cfg, target, &mut rng)?;
        lengths.shuffle(&mut rng);
        let count = lengths.len();
        let free = n - lengths.iter().sum::<usize>() - (count - 1);
        let mut cuts: Vec<usize> = (0..count).map(|_| rng.gen_range(0..=free)).collect();
        cuts.sort_unstable();

        // anomalies are scaled by the noise level, with a floor so noiseless
        // series still get visible anomalies
        let scale = sigma.max(0.05);
        let mut cursor = 0;
        let mut prev_cut = 0;
        for (idx, (&len, &cut)) in lengths.iter().zip(&cuts).enumerate() {
            let start = cursor + (cut - prev_cut) + usize::from(idx > 0);
            let end = start + len;
            let kind = *cfg.kinds.choose(&mut rng).unwrap();
            let channels: Vec<usize> = if m == 1 {
                vec![0]
            } else {
                let k = rng.gen_range(1..=m);
                rand::seq::index::sample(&mut rng, m, k).into_vec()
            };
            inject(kind, &mut values, m, start..end, &channels, scale, &mut rng);
            labels[start..end].iter_mut().for_each(|l| *l = 1);
            segments.push((start, end, kind));
            cursor = end;
            prev_cut = cut;
        }
    }

    let channels = (0..m).map(|c| format!("x{c}")).collect();
    let series = TimeSeries::new("synthetic", channels, values, Some(labels))?;
    Ok(SynthOutput {
        series,
        clean,
        segments,
    })
}

fn inject(
    kind: AnomalyKind,
    values: &mut [f64],
    m: usize,
    rows: std::ops::Range<usize>,
    channels: &[usize],
    scale: f64,
    rng: &mut impl Rng,
) {
    let sign = |rng: &mut dyn rand::RngCore| if rng.gen::<bool>() { 1.0 } else { -1.0 };
    match kind {
        AnomalyKind::Spike => {
            for i in rows {
                for &c in channels {
                    values[i * m + c] += sign(rng) * rng.gen_range(5.0..10.0) * scale;
                }
            }
        }
        AnomalyKind::LevelShift => {
            for &c in channels {
                let shift = sign(rng) * rng.gen_range(3.0..6.0) * scale;
                for i in rows.clone() {
                    values[i * m + c] += shift;
                }
            }
        }
        AnomalyKind::NoiseBurst => {
            let burst = Normal::new(0.0, 4.0 * scale).unwrap();
            for i in rows {
                for &c in channels {
                    values[i * m + c] += burst.sample(rng);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_rate_has_no_anomalies() {
        let cfg = SynthConfig {
            n: 500,
            anomaly_rate: 0.0,
            ..SynthConfig::default()
        };
        let s = generate(&cfg).unwrap();
        assert!(s.point_labels().unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn labeled_fraction_near_target() {
        let cfg = SynthConfig {
            n: 10_000,
            anomaly_rate: 0.05,
            ..SynthConfig::default()
        };
        let s = generate(&cfg).unwrap();
        let frac = s
            .point_labels()
            .unwrap()
            .iter()
            .filter(|&&l| l == 1)
            .count() as f64
            / 10_000.0;
        assert!((0.04..=0.06).contains(&frac), "{frac}");
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig {
            n: 2000,
            m: 3,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: 8,
            ..cfg.clone()
        };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn unsatisfiable_configs_rejected() {
        let tiny = SynthConfig {
            n: 100,
            anomaly_rate: 0.05,
            min_segment: 20,
            max_segment: 30,
            ..SynthConfig::default()
        };
        assert!(generate(&tiny).is_err());
        let bad = SynthConfig {
            anomaly_rate: 0.7,
            ..SynthConfig::default()
        };
        assert!(generate(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn segments_contiguous_and_separable(seed in any::<u64>(), m in 1usize..3, rate in 0.02f64..0.2) {
            let cfg = SynthConfig { n: 3000, m, anomaly_rate: rate, seed, ..SynthConfig::default() };
            let out = generate_detailed(&cfg).unwrap();
            let labels = out.series.point_labels().unwrap();
            let mut expected = vec![0u8; cfg.n];
            for pair in out.segments.windows(2) {
                prop_assert!(pair[0].1 < pair[1].0, "segments touch or overlap");
            }
            for &(s, e, _) in &out.segments {
                prop_assert!(e - s >= 1);
                expected[s..e].iter_mut().for_each(|l| *l = 1);
            }
            prop_assert_eq!(labels, &expected[..]);
            let total = labels.iter().filter(|&&l| l == 1).count() as f64;
            let target = rate * cfg.n as f64;
            prop_assert!((total - target).abs() <= 0.2 * target + 1.0);

            let mut dev = [0.0f64; 2];
            let mut cnt = [0usize; 2];
            for (i, &label) in labels.iter().enumerate() {
                let l = label as usize;
                for c in 0..m {
                    dev[l] += (out.series.row(i)[c] - out.clean[i * m + c]).abs();
                    cnt[l] += 1;
                }
            }
            prop_assert!(dev[1] / cnt[1] as f64 > dev[0] / cnt[0] as f64);
            prop_assert!(out.series.values().iter().all(|v| v.is_finite()));
        }
    }
}
