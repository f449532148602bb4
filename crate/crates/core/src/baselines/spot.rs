//! DSPOT: streaming peaks-over-threshold with moving-average drift removal.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::gpd::{fit_gpd, gpd_quantile, GpdFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspotConfig {
    /// Target tail probability.
    pub q: f64,
    /// Moving-average depth; 0 disables drift correction (plain SPOT).
    pub depth: usize,
    /// Empirical quantile of the calibration data used as the tail level.
    pub level: f64,
}

impl Default for DspotConfig {
    fn default() -> Self {
        Self {
            q: 1e-3,
            depth: 10,
            level: 0.98,
        }
    }
}

/// Streaming state.
#[derive(Debug, Clone)]
pub struct SpotState {
    cfg: DspotConfig,
    init_threshold: f64,
    excesses: Vec<f64>,
    fit: GpdFit,
    z_q: f64,
    n_seen: usize,
    drift: VecDeque<f64>,
}

/// Output of one [`SpotState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotStep {
    pub alarm: u8,
    /// Alarm level on the raw score scale (`z_q` plus the drift mean).
    pub threshold: f64,
    /// Alarm level on the drift-corrected scale.
    pub z_q: f64,
}

impl SpotState {
    /// Calibrates on `initial` scores: removes drift, picks the tail level,
    /// fits the GPD to the excesses and computes the first alarm level.
    pub fn init(initial: &[f64], cfg: DspotConfig) -> Result<Self> {
        if !(cfg.q > 0.0 && cfg.q < 1.0 - cfg.level && cfg.level > 0.0) {
            return Err(Error::invalid(format!(
                "need 0 < q < 1 - level and level > 0, got q={} level={}",
                cfg.q, cfg.level
            )));
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataQuality(
                "calibration scores must be finite".into(),
            ));
        }
        if initial.len() <= cfg.depth {
            return Err(Error::invalid(format!(
                "calibration needs more than depth = {} scores, got {}",
                cfg.depth,
                initial.len()
            )));
        }
        let mut drift: VecDeque<f64> = initial[..cfg.depth].iter().copied().collect();
        let mut corrected = Vec::with_capacity(initial.len() - cfg.depth);
        for &x in &initial[cfg.depth..] {
            corrected.push(x - mean(&drift));
            if cfg.depth > 0 {
                drift.pop_front();
                drift.push_back(x);
            }
        }

        let mut sorted = corrected.clone();
        sorted.sort_by(f64::total_cmp);
        let idx = ((cfg.level * sorted.len() as f64) as usize).min(sorted.len() - 1);
        let init_threshold = sorted[idx];
        let excesses: Vec<f64> = corrected
            .iter()
            .filter(|&&v| v > init_threshold)
            .map(|v| v - init_threshold)
            .collect();
        if excesses.is_empty() {
            return Err(Error::Degenerate(
                "no calibration score exceeds the initial tail level; use a larger calibration set or a lower level".into(),
            ));
        }
        let fit = fit_gpd(&excesses)?;
        let n_seen = corrected.len();
        let z_q =
            gpd_quantile(&fit, init_threshold, cfg.q, n_seen, excesses.len()).max(init_threshold);
        Ok(Self {
            cfg,
            init_threshold,
            excesses,
            fit,
            z_q,
            n_seen,
            drift,
        })
    }

    pub fn init_threshold(&self) -> f64 {
        self.init_threshold
    }

    pub fn z_q(&self) -> f64 {
        self.z_q
    }

    pub fn fit(&self) -> GpdFit {
        self.fit
    }

    pub fn n_tail(&self) -> usize {
        self.excesses.len()
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }

    pub fn drift_len(&self) -> usize {
        self.drift.len()
    }

    /// Processes one score. Alarms leave the model and drift buffer
    /// untouched; tail values refit the GPD.
    pub fn step(&mut self, score: f64) -> Result<SpotStep> {
        if !score.is_finite() {
            return Err(Error::DataQuality(format!("non-finite score {score}")));
        }
        let drift_mean = mean(&self.drift);
        let corrected = score - drift_mean;
        let threshold = self.z_q + drift_mean;
        if corrected > self.z_q {
            return Ok(SpotStep {
                alarm: 1,
                threshold,
                z_q: self.z_q,
            });
        }
        self.n_seen += 1;
        if corrected > self.init_threshold {
            self.excesses.push(corrected - self.init_threshold);
            if let Ok(fit) = fit_gpd(&self.excesses) {
                self.fit = fit;
            }
            self.z_q = gpd_quantile(
                &self.fit,
                self.init_threshold,
                self.cfg.q,
                self.n_seen,
                self.excesses.len(),
            )
            .max(self.init_threshold);
        }
        if self.cfg.depth > 0 {
            self.drift.pop_front();
            self.drift.push_back(score);
        }
        Ok(SpotStep {
            alarm: 0,
            threshold,
            z_q: self.z_q,
        })
    }

    /// Runs [`step`](Self::step) over a stream.
    pub fn run(&mut self, scores: &[f64]) -> Result<Vec<SpotStep>> {
        scores.iter().map(|&s| self.step(s)).collect()
    }
}

fn mean(values: &VecDeque<f64>) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand_distr::{Distribution, Exp, Normal};

    fn normal_stream(n: usize, seed: u64) -> Vec<f64> {
        let d = Normal::new(0.0, 1.0).unwrap();
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn constant_calibration_has_empty_tail() {
        let err = SpotState::init(&[0.4; 500], DspotConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn below_tail_leaves_threshold() {
        let calib = normal_stream(2000, 1);
        let mut s = SpotState::init(
            &calib,
            DspotConfig {
                depth: 0,
                ..DspotConfig::default()
            },
        )
        .unwrap();
        let z = s.z_q();
        let out = s.step(-5.0).unwrap();
        assert_eq!(out.alarm, 0);
        assert_eq!(s.z_q(), z);
        assert_eq!(s.step(z + 1.0).unwrap().alarm, 1);
    }

    #[test]
    fn threshold_never_below_tail_level() {
        let calib = normal_stream(2000, 2);
        let mut s = SpotState::init(&calib, DspotConfig::default()).unwrap();
        for x in normal_stream(5000, 3) {
            s.step(x).unwrap();
            assert!(s.z_q() >= s.init_threshold());
            assert!(s.drift_len() <= 10);
        }
    }

    #[test]
    fn alarm_rate_tracks_q() {
        let d = Exp::new(1.0).unwrap();
        let mut rng = seeded_rng(4);
        let data: Vec<f64> = (0..105_000).map(|_| d.sample(&mut rng)).collect();
        let cfg = DspotConfig::default();
        let mut s = SpotState::init(&data[..5000], cfg).unwrap();
        let alarms: usize = s
            .run(&data[5000..])
            .unwrap()
            .iter()
            .map(|o| o.alarm as usize)
            .sum();
        let rate = alarms as f64 / 100_000.0;
        assert!(rate > cfg.q / 3.0 && rate < cfg.q * 3.0, "rate {rate}");
    }

    #[test]
    fn deterministic_alarms() {
        let calib = normal_stream(1000, 5);
        let stream = normal_stream(3000, 6);
        let run = || {
            let mut s = SpotState::init(&calib, DspotConfig::default()).unwrap();
            s.run(&stream).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = SpotState::init(&normal_stream(1000, 7), DspotConfig::default()).unwrap();
        assert!(s.step(f64::NAN).is_err());
    }
}
