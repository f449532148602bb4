//! The thresholding MDP.
//!
//! State: mean and sample variance of the last `k` scores plus the fraction
//! of those `k` windows that landed in each confusion cell. Action: the
//! threshold, active (`δ = 0`) or passive (`δ = 1`). Reward:
//! `α·(n_tp − n_fp − n_fn) + β·n_tn` over the same `k` windows.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ConfusionCounts;
use crate::scorer::ScoredWindow;

/// Binary threshold choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// `δ = 0`: flag every strictly positive score.
    Active = 0,
    /// `δ = 1`: flag nothing.
    Passive = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Active, Action::Passive];

    pub fn threshold(self) -> f64 {
        match self {
            Action::Active => 0.0,
            Action::Passive => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Action::Active),
            1 => Ok(Action::Passive),
            _ => Err(Error::invalid(format!("action index {i} out of range"))),
        }
    }
}

/// Prediction is anomalous iff `score > δ`.
pub fn classify(score: f64, action: Action) -> u8 {
    u8::from(score > action.threshold())
}

/// Lookback and reward weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl EnvConfig {
    pub fn new(k: usize, alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self { k, alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be non-negative"));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "alpha + beta must equal 1, got {} + {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Observation handed to the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub mu: f64,
    pub sigma: f64,
    pub rho_tp: f64,
    pub rho_tn: f64,
    pub rho_fp: f64,
    pub rho_fn: f64,
}

impl EnvState {
    pub const DIM: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.mu,
            self.sigma,
            self.rho_tp,
            self.rho_tn,
            self.rho_fp,
            self.rho_fn,
        ]
    }
}

/// One classified window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub score: f64,
    pub truth: u8,
    pub prediction: u8,
}

/// Result of [`ThresholdEnv::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub terminal: bool,
    pub prediction: u8,
    pub counts: ConfusionCounts,
}

/// State over the `k` most recent records (`records.len()` must be `k`).
pub fn compute_state(records: &[Record], k: usize) -> Result<EnvState> {
    if k < 1 || records.len() != k {
        return Err(Error::InvalidState(format!(
            "state needs exactly k = {k} classified windows, have {}",
            records.len()
        )));
    }
    let kf = k as f64;
    let mu = records.iter().map(|r| r.score).sum::<f64>() / kf;
    let sigma = if k == 1 {
        0.0
    } else {
        records.iter().map(|r| (r.score - mu).powi(2)).sum::<f64>() / (kf - 1.0)
    };
    let counts = ConfusionCounts::tally(records.iter().map(|r| (r.prediction, r.truth)));
    Ok(EnvState {
        mu,
        sigma,
        rho_tp: counts.tp as f64 / kf,
        rho_tn: counts.tn as f64 / kf,
        rho_fp: counts.fp as f64 / kf,
        rho_fn: counts.fn_ as f64 / kf,
    })
}

/// `α·(n_tp − n_fp − n_fn) + β·n_tn`.
pub fn compute_reward(counts: &ConfusionCounts, cfg: &EnvConfig) -> f64 {
    let good = counts.tp as f64 - counts.fp as f64 - counts.fn_ as f64;
    cfg.alpha * good + cfg.beta * counts.tn as f64
}

/// One pass over a scored segment. The first `k` windows are warm-up,
/// classified passively; each [`step`](Self::step) then classifies one window.
#[derive(Debug, Clone)]
pub struct ThresholdEnv<'a> {
    windows: &'a [ScoredWindow],
    cfg: EnvConfig,
    recent: VecDeque<Record>,
    cursor: usize,
    started: bool,
}

impl<'a> ThresholdEnv<'a> {
    pub fn new(windows: &'a [ScoredWindow], cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        if windows.len() <= cfg.k {
            return Err(Error::invalid(format!(
                "segment of {} windows is too short for k = {}",
                windows.len(),
                cfg.k
            )));
        }
        if let Some(w) = windows.iter().find(|w| !(0.0..=1.0).contains(&w.score)) {
            return Err(Error::invalid(format!(
                "score {} of window {} outside [0, 1]",
                w.score, w.window_index
            )));
        }
        Ok(Self {
            windows,
            cfg,
            recent: VecDeque::with_capacity(cfg.k),
            cursor: cfg.k,
            started: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Steps in one episode, `segment length − k`.
    pub fn episode_len(&self) -> usize {
        self.windows.len() - self.cfg.k
    }

    /// Index of the window the next step classifies.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn is_terminal(&self) -> bool {
        self.cursor >= self.windows.len()
    }

    /// Classifies the warm-up windows with `δ = 1` and returns the first state.
    pub fn reset(&mut self) -> Result<EnvState> {
        self.recent.clear();
        for w in &self.windows[..self.cfg.k] {
            self.recent.push_back(Record {
                score: w.score,
                truth: w.truth,
                prediction: classify(w.score, Action::Passive),
            });
        }
        self.cursor = self.cfg.k;
        self.started = true;
        compute_state(self.recent.make_contiguous(), self.cfg.k)
    }

    /// Records of the warm-up or most recent `k` windows.
    pub fn recent(&self) -> impl Iterator<Item = &Record> {
        self.recent.iter()
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if !self.started {
            return Err(Error::InvalidState("step called before reset".into()));
        }
        if self.is_terminal() {
            return Err(Error::InvalidState(
                "step called on a finished episode".into(),
            ));
        }
        let w = self.windows[self.cursor];
        let prediction = classify(w.score, action);
        if self.recent.len() == self.cfg.k {
            self.recent.pop_front();
        }
        self.recent.push_back(Record {
            score: w.score,
            truth: w.truth,
            prediction,
        });
        self.cursor += 1;

        let records = self.recent.make_contiguous();
        let counts = ConfusionCounts::tally(records.iter().map(|r| (r.prediction, r.truth)));
        Ok(StepOutcome {
            next_state: compute_state(records, self.cfg.k)?,
            reward: compute_reward(&counts, &self.cfg),
            terminal: self.is_terminal(),
            prediction,
            counts,
        })
    }
}
