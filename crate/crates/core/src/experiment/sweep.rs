//! One-parameter sweeps over `l`, `k` or `(α, β)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::pipeline::{detect_adt, load_series, prepare, score_splits, train_agent, train_scorer};
use super::plot::{line_chart_svg, Series};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::eval::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    L,
    K,
    /// Values are α; β is set to `1 − α`.
    AlphaBeta,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l" => Ok(Self::L),
            "k" => Ok(Self::K),
            "alpha_beta" => Ok(Self::AlphaBeta),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (expected l, k or alpha_beta)"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L => "l",
            Self::K => "k",
            Self::AlphaBeta => "alpha_beta",
        })
    }
}

/// Returns `base` with the swept parameter set to `value`.
pub fn with_value(
    base: &ExperimentConfig,
    param: SweepParam,
    value: f64,
) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let count = |v: f64| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!(
                "{param} must be a positive integer, got {v}"
            )))
        }
    };
    match param {
        SweepParam::L => cfg.l = count(value)?,
        SweepParam::K => cfg.k = count(value)?,
        SweepParam::AlphaBeta => {
            cfg.alpha = value;
            cfg.beta = 1.0 - value;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub metrics: Metrics,
    pub train_ms: u128,
}

/// Trains the scorer once and then one agent per value, in parallel, each
/// with seed `base_seed + index`. `k` changes the agent segment's minimum
/// length but not the windows, so the scorer is shared by every run.
pub fn run_sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = with_value(base, param, v)?;
            cfg.seed = base.seed.wrapping_add(i as u64);
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let prepared = prepare(base, &load_series(base)?).map_err(|e| e.in_phase("preprocess"))?;
    let (ae, _) = train_scorer(base, &prepared).map_err(|e| e.in_phase("train-ae"))?;
    let scored = score_splits(&ae, &prepared).map_err(|e| e.in_phase("score"))?;

    configs
        .par_iter()
        .zip(values)
        .map(|(cfg, &value)| {
            let (policy, _, train_time) =
                train_agent(cfg, &scored.adt_train).map_err(|e| e.in_phase("train-adt"))?;
            let run = detect_adt(&policy, &scored.test, cfg.env_config()?)
                .map_err(|e| e.in_phase("detect"))?;
            log::info!("{param}={value}: F1 {:.4}", run.result.metrics.f1);
            Ok(SweepRow {
                value,
                seed: cfg.seed,
                metrics: run.result.metrics,
                train_ms: train_time.as_millis(),
            })
        })
        .collect()
}

/// Writes `sweep_<param>.csv` and `sweep_<param>.svg` into the output
/// directory. The CSV's `train_ms` column is wall-clock time and so varies
/// between reruns.
pub fn write_sweep(base: &ExperimentConfig, param: SweepParam, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["param", "value", "seed", "P", "R", "F1", "train_ms"])?;
    for r in rows {
        w.write_record([
            param.to_string(),
            r.value.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.metrics.precision),
            format!("{:.6}", r.metrics.recall),
            format!("{:.6}", r.metrics.f1),
            r.train_ms.to_string(),
        ])?;
    }
    let dir = &base.output_dir;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&dir.join(format!("sweep_{param}.csv")), &bytes)?;

    let max_ms = rows.iter().map(|r| r.train_ms).max().unwrap_or(0).max(1) as f64;
    let series = [
        Series {
            name: "F1",
            points: rows.iter().map(|r| (r.value, r.metrics.f1)).collect(),
        },
        Series {
            name: "train time (relative)",
            points: rows
                .iter()
                .map(|r| (r.value, r.train_ms as f64 / max_ms))
                .collect(),
        },
    ];
    let svg = line_chart_svg(&format!("Effect of {param}"), &param.to_string(), &series)?;
    write_atomic(&dir.join(format!("sweep_{param}.svg")), svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_parameter_names() {
        assert_eq!("l".parse::<SweepParam>().unwrap(), SweepParam::L);
        assert_eq!(
            "alpha_beta".parse::<SweepParam>().unwrap(),
            SweepParam::AlphaBeta
        );
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn values_are_applied_and_checked() {
        let base = ExperimentConfig::default();
        assert_eq!(
            with_value(&base, SweepParam::L, 10.0)
                .unwrap()
                .agent_config()
                .l,
            10
        );
        assert_eq!(with_value(&base, SweepParam::K, 15.0).unwrap().k, 15);
        let ab = with_value(&base, SweepParam::AlphaBeta, 0.5).unwrap();
        assert_eq!((ab.alpha, ab.beta), (0.5, 0.5));
        assert!(with_value(&base, SweepParam::L, 1.5).is_err());
        assert!(with_value(&base, SweepParam::K, 0.0).is_err());
        assert!(with_value(&base, SweepParam::AlphaBeta, 1.5).is_err());
        assert!(run_sweep(&base, SweepParam::L, &[]).is_err());
    }
}
