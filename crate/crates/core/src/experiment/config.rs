//! Experiment configuration and `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::AgentConfig;
use crate::baselines::DspotConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::scorer::AeConfig;
use crate::synth::SynthConfig;
use crate::timeseries::CsvSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synth(SynthConfig),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

/// Which rows the min-max record is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeOn {
    /// Rows covered by the autoencoder training windows.
    Train,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Splits {
    /// Leading fraction of windows reserved for the autoencoder.
    pub ae_train: f64,
    /// Fraction of windows, right after the autoencoder region, used to
    /// train the agent.
    pub adt_train: f64,
}

impl Default for Splits {
    fn default() -> Self {
        Self {
            ae_train: 0.3,
            adt_train: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Baselines {
    #[serde(rename = "static")]
    pub static_threshold: bool,
    /// `null` disables DSPOT.
    pub dspot: Option<DspotConfig>,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            static_threshold: true,
            dspot: Some(DspotConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Dataset name written to the results table.
    pub name: String,
    pub data: DataSource,
    pub tau: usize,
    pub k: usize,
    /// Action-hold period during agent training.
    pub l: usize,
    pub alpha: f64,
    pub beta: f64,
    pub agent: AgentConfig,
    pub ae: AeConfig,
    pub baselines: Baselines,
    pub splits: Splits,
    pub normalize_on: NormalizeOn,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Fill the `wall_ms` column and write `timings.csv`. Off by default so
    /// reruns are byte-identical.
    pub report_wall_time: bool,
    pub subsets: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            data: DataSource::Synth(SynthConfig::default()),
            tau: 10,
            k: 2,
            l: 1,
            alpha: 0.9,
            beta: 0.1,
            agent: AgentConfig::default(),
            ae: AeConfig::default(),
            baselines: Baselines::default(),
            splits: Splits::default(),
            normalize_on: NormalizeOn::Train,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            report_wall_time: false,
            subsets: 10,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; `None` starts from the defaults. Overrides are
    /// applied to the JSON tree (with defaults filled in) before it is
    /// deserialized again, so they are checked exactly like keys in the file.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        let mut tree = serde_json::to_value(base)?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        EnvConfig::new(self.k, self.alpha, self.beta)
    }

    /// Agent settings with the top-level `l` filled in.
    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            l: self.l,
            ..self.agent.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.tau == 0 {
            return bad("tau must be positive".into());
        }
        let s = self.splits;
        if !(s.ae_train > 0.0 && s.adt_train > 0.0 && s.ae_train + s.adt_train < 1.0) {
            return bad(format!(
                "split fractions must be positive and leave a test region, got ae_train={} adt_train={}",
                s.ae_train, s.adt_train
            ));
        }
        if self.subsets == 0 {
            return bad("subsets must be positive".into());
        }
        if let DataSource::Csv(src) = &self.data {
            if !src.path.exists() {
                return bad(format!("data file {} not found", src.path.display()));
            }
        }
        self.env_config()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.agent_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Sets `a.b.c=value` in a JSON tree. The value is parsed as JSON when it
/// can be and taken as a string otherwise. Intermediate keys must exist.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut parts = key.split('.').peekable();
    let mut node = tree;
    while let Some(part) = parts.next() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override `{key}`: `{part}` is not inside an object"
            ))
        })?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(part)
            .ok_or_else(|| Error::Config(format!("override `{key}`: no key `{part}`")))?;
    }
    Err(Error::Config(format!(
        "override `{assignment}` has an empty key"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.agent_config().l, 1);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = ExperimentConfig::load(
            None,
            &[
                "k=5".into(),
                "agent.episodes=30".into(),
                "data.synth.n=500".into(),
                "baselines.dspot=null".into(),
                "name=yahoo".into(),
                "alpha=0.5".into(),
                "beta=0.5".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.agent.episodes, 30);
        assert_eq!(cfg.name, "yahoo");
        assert!(cfg.baselines.dspot.is_none());
        match cfg.data {
            DataSource::Synth(s) => assert_eq!(s.n, 500),
            _ => panic!("expected synth data"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::load(None, &["bogus=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["agent.bogus=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["nothere.x=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["k".into()]).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::load(None, &["alpha=0.5".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["splits.ae_train=0.99".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["l=0".into()]).is_err());
    }

    #[test]
    fn config_file_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"tau": 12, "l": 10, "agent": {"episodes": 7}}"#).unwrap();
        // `ae` is absent from the file but still overridable
        let cfg =
            ExperimentConfig::load(Some(&path), &["seed=3".into(), "ae.epochs=4".into()]).unwrap();
        assert_eq!(
            (cfg.tau, cfg.l, cfg.agent.episodes, cfg.seed),
            (12, 10, 7, 3)
        );
        assert_eq!((cfg.k, cfg.ae.epochs), (2, 4));
    }
}
