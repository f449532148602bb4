//! Autoencoder anomaly scorer.
//!
//! Trained on normal windows only with a per-window MSE objective. The raw
//! anomaly measure is the L2 reconstruction error; [`AutoEncoder::score`]
//! maps it into `[0, 1]` with a min/max normalizer fitted separately.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{read_mlp, write_mlp, Gradients, Mlp, Optimizer, OutputActivation};
use crate::timeseries::{Window, WindowSequence};
use crate::Rng;

/// Autoencoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training must cut the mean reconstruction error by at least this
    /// factor relative to the untrained network.
    pub min_improvement: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            latent: 16,
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            min_improvement: 1.0,
        }
    }
}

/// Affine map from raw reconstruction error to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreNormalizer {
    pub min: f64,
    pub max: f64,
}

impl ScoreNormalizer {
    pub fn apply(&self, raw: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return if raw > self.max { 1.0 } else { 0.0 };
        }
        ((raw - self.min) / span).clamp(0.0, 1.0)
    }
}

/// Encoder/decoder pair over flattened `τ × m` windows.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder {
    encoder: Mlp,
    decoder: Mlp,
    tau: usize,
    width: usize,
    normalizer: Option<ScoreNormalizer>,
}

/// Per-epoch losses and before/after mean reconstruction error.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub initial_error: f64,
    pub final_error: f64,
}

/// Window index, normalized score and point-adjusted truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredWindow {
    pub window_index: usize,
    pub score: f64,
    pub truth: u8,
}

impl AutoEncoder {
    /// Untrained autoencoder `[τm, hidden, latent] → [latent, hidden, τm]`
    /// with a sigmoid reconstruction layer.
    pub fn new(tau: usize, width: usize, cfg: &AeConfig, rng: &mut Rng) -> Result<Self> {
        let input = tau * width;
        let encoder = Mlp::new(
            &[input, cfg.hidden, cfg.latent],
            OutputActivation::Identity,
            rng,
        )?;
        let decoder = Mlp::new(
            &[cfg.latent, cfg.hidden, input],
            OutputActivation::Sigmoid,
            rng,
        )?;
        Ok(Self {
            encoder,
            decoder,
            tau,
            width,
            normalizer: None,
        })
    }

    /// Assembles an autoencoder from parts, checking shapes.
    pub fn from_parts(encoder: Mlp, decoder: Mlp, tau: usize, width: usize) -> Result<Self> {
        let input = tau * width;
        if encoder.input_len() != input || decoder.output_len() != input {
            return Err(Error::invalid(format!(
                "encoder/decoder do not map {input} values back to {input}"
            )));
        }
        if encoder.output_len() != decoder.input_len() {
            return Err(Error::invalid("encoder output and decoder input differ"));
        }
        Ok(Self {
            encoder,
            decoder,
            tau,
            width,
            normalizer: None,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_len()
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn normalizer(&self) -> Option<ScoreNormalizer> {
        self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: ScoreNormalizer) -> Result<()> {
        if !(normalizer.min >= 0.0 && normalizer.max >= normalizer.min) {
            return Err(Error::invalid(format!(
                "normalizer needs 0 <= min <= max, got {normalizer:?}"
            )));
        }
        self.normalizer = Some(normalizer);
        Ok(())
    }

    fn check_window(&self, data: &[f64]) -> Result<()> {
        let expected = self.tau * self.width;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(())
    }

    pub fn reconstruct(&self, data: &[f64]) -> Result<Vec<f64>> {
        self.check_window(data)?;
        self.decoder.predict(&self.encoder.predict(data)?)
    }

    /// `‖x − AE(x)‖₂` for the flattened window.
    pub fn reconstruction_error(&self, window: &Window) -> Result<f64> {
        let recon = self.reconstruct(&window.data)?;
        Ok(l2_distance(&window.data, &recon))
    }

    /// Raw errors for every window, in order.
    pub fn reconstruction_errors(&self, windows: &WindowSequence) -> Result<Vec<f64>> {
        windows
            .windows()
            .par_iter()
            .map(|w| self.reconstruction_error(w))
            .collect()
    }

    /// Fits the score normalizer to the min and max raw error over `windows`.
    pub fn fit_normalizer(&mut self, windows: &WindowSequence) -> Result<ScoreNormalizer> {
        if windows.is_empty() {
            return Err(Error::invalid(
                "cannot fit score normalizer on zero windows",
            ));
        }
        let errors = self.reconstruction_errors(windows)?;
        let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let normalizer = ScoreNormalizer { min, max };
        self.set_normalizer(normalizer)?;
        Ok(normalizer)
    }

    /// Normalized anomaly score in `[0, 1]`.
    pub fn score(&self, window: &Window) -> Result<f64> {
        let normalizer = self
            .normalizer
            .ok_or_else(|| Error::InvalidState("score normalizer has not been fitted".into()))?;
        Ok(normalizer.apply(self.reconstruction_error(window)?))
    }

    /// Scores every window, carrying its index and truth label along.
    pub fn score_all(&self, windows: &WindowSequence) -> Result<Vec<ScoredWindow>> {
        windows
            .windows()
            .par_iter()
            .enumerate()
            .map(|(i, w)| {
                Ok(ScoredWindow {
                    window_index: i,
                    score: self.score(w)?,
                    truth: w.label,
                })
            })
            .collect()
    }

    /// Writes the model: a header with τ, m, latent size and normalizer,
    /// followed by the encoder and decoder weight blocks.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        for v in [self.tau, self.width, self.latent_dim()] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        match self.normalizer {
            Some(n) => {
                out.write_all(&[1])?;
                out.write_all(&n.min.to_le_bytes())?;
                out.write_all(&n.max.to_le_bytes())?;
            }
            None => out.write_all(&[0; 17])?,
        }
        write_mlp(&self.encoder, out)?;
        write_mlp(&self.decoder, out)
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::DataQuality("not an autoencoder model".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if u32::from_le_bytes(word) != MODEL_VERSION {
            return Err(Error::DataQuality(
                "unsupported autoencoder model version".into(),
            ));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            *d = u64::from_le_bytes(b) as usize;
        }
        let mut norm = [0u8; 17];
        input.read_exact(&mut norm)?;
        let encoder = read_mlp(input)?;
        let decoder = read_mlp(input)?;
        let [tau, width, latent] = dims;
        let mut ae = Self::from_parts(encoder, decoder, tau, width)?;
        if ae.latent_dim() != latent {
            return Err(Error::DataQuality(
                "latent size disagrees with header".into(),
            ));
        }
        if norm[0] == 1 {
            let min = f64::from_le_bytes(norm[1..9].try_into().unwrap());
            let max = f64::from_le_bytes(norm[9..17].try_into().unwrap());
            ae.set_normalizer(ScoreNormalizer { min, max })?;
        }
        Ok(ae)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        crate::experiment::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut cursor = bytes.as_slice();
        let ae = Self::read_from(&mut cursor).map_err(|e| Error::ModelFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if !cursor.is_empty() {
            return Err(Error::ModelFile {
                path: path.to_path_buf(),
                message: "trailing bytes".into(),
            });
        }
        Ok(ae)
    }
}

const MODEL_MAGIC: &[u8; 4] = b"ADTA";
const MODEL_VERSION: u32 = 1;

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn mean_error(ae: &AutoEncoder, windows: &WindowSequence) -> Result<f64> {
    let errors = ae.reconstruction_errors(windows)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Trains an autoencoder on normal windows with minibatch Adam on the
/// per-window mean squared error.
pub fn train_ae(
    normal_windows: &WindowSequence,
    cfg: &AeConfig,
    rng: &mut Rng,
) -> Result<(AutoEncoder, TrainReport)> {
    if normal_windows.is_empty() {
        return Err(Error::invalid(
            "autoencoder needs at least one training window",
        ));
    }
    if let Some(w) = normal_windows.windows().iter().find(|w| w.label != 0) {
        return Err(Error::DataQuality(format!(
            "training window starting at {} is labeled anomalous; the autoencoder trains on normal data only",
            w.start_index
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid("epochs and batch size must be positive"));
    }

    let mut ae = AutoEncoder::new(normal_windows.tau(), normal_windows.width(), cfg, rng)?;
    let initial_error = mean_error(&ae, normal_windows)?;
    let mut enc_opt = Optimizer::adam(cfg.learning_rate)?;
    let mut dec_opt = Optimizer::adam(cfg.learning_rate)?;
    let dim = normal_windows.input_len() as f64;

    let mut order: Vec<usize> = (0..normal_windows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut enc_grads = Gradients::zeros_like(&ae.encoder);
            let mut dec_grads = Gradients::zeros_like(&ae.decoder);
            let scale = 2.0 / (dim * batch.len() as f64);
            for &i in batch {
                let x = &normal_windows.windows()[i].data;
                let (z, enc_cache) = ae.encoder.forward(x)?;
                let (y, dec_cache) = ae.decoder.forward(&z)?;
                let mut err = Vec::with_capacity(y.len());
                for (yi, xi) in y.iter().zip(x) {
                    total += (yi - xi).powi(2) / dim;
                    err.push(scale * (yi - xi));
                }
                let dz = ae
                    .decoder
                    .accumulate_backward(&dec_cache, &err, &mut dec_grads)?;
                ae.encoder
                    .accumulate_backward(&enc_cache, &dz, &mut enc_grads)?;
            }
            enc_opt.apply(&mut ae.encoder, &enc_grads)?;
            dec_opt.apply(&mut ae.decoder, &dec_grads)?;
        }
        let loss = total / normal_windows.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "autoencoder loss became non-finite at epoch {epoch}"
            )));
        }
        log::trace!("ae epoch {epoch}: mse {loss:.6}");
        epoch_losses.push(loss);
    }

    let final_error = mean_error(&ae, normal_windows)?;
    if final_error * cfg.min_improvement >= initial_error && initial_error > 0.0 {
        return Err(Error::Divergence(format!(
            "autoencoder error {final_error:.6} did not improve on {initial_error:.6} by a factor of {}",
            cfg.min_improvement
        )));
    }
    log::debug!("ae trained: mean error {initial_error:.5} -> {final_error:.5}");
    Ok((
        ae,
        TrainReport {
            epoch_losses,
            initial_error,
            final_error,
        },
    ))
}
