//! Agent-based dynamic thresholding (ADT) for time-series anomaly detection.
//!
//! An autoencoder turns sliding windows into anomaly scores in `[0, 1]`; a DQN
//! agent then switches the detection threshold between an active mode
//! (`δ = 0`, flag every positive score) and a passive mode (`δ = 1`, flag
//! nothing). Two reference thresholders (optimal static and DSPOT) and the
//! evaluation protocol used to compare them live alongside.
//!
//! Module map:
//! - [`timeseries`]: series model, min-max scaling, sliding windows, CSV IO
//! - [`nn`]: small MLP with analytic backprop, SGD/Adam, weight files
//! - [`scorer`]: autoencoder anomaly scorer
//! - [`env`]: the thresholding MDP
//! - [`agent`]: DQN learner with action holding
//! - [`baselines`]: optimal static threshold, GPD fitting, DSPOT
//! - [`eval`]: point-adjusted metrics, subset robustness, Wilcoxon test
//! - [`synth`]: seeded synthetic series with injected anomalies
//! - [`experiment`]: config, four-phase pipeline, benchmark, sweeps, plots

pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod scorer;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};

/// Deterministic RNG used throughout; seeded from config.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
