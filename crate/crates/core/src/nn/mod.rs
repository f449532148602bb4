//! Small fully-connected network with analytic backpropagation.
//!
//! Hidden layers use ReLU; the output layer is identity or sigmoid. The same
//! type backs the autoencoder halves and the Q-network.

mod optim;
mod persist;

pub use optim::{Algorithm, Optimizer};
pub use persist::{read_mlp, write_mlp};

use rand::Rng;

use crate::error::{Error, Result};

/// Output-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
    output: OutputActivation,
}

/// Per-parameter derivatives, shaped like the owning [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Layer inputs recorded by [`Mlp::forward`] for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::invalid(format!(
            "layer sizes {sizes:?} need at least two positive entries"
        )));
    }
    Ok(())
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|p| Layer {
                inputs: p[0],
                outputs: p[1],
                weights: vec![0.0; p[0] * p[1]],
                biases: vec![0.0; p[1]],
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            output,
        })
    }

    /// He-style uniform initialization: weights in `±sqrt(6 / fan_in)`,
    /// biases zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Weights of layer `i`, row-major `outputs × inputs`.
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.layers[i].weights
    }

    pub fn weights_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.layers[i].weights
    }

    pub fn biases(&self, i: usize) -> &[f64] {
        &self.layers[i].biases
    }

    pub fn biases_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.layers[i].biases
    }

    /// Visits every parameter in storage order (per layer: weights, biases).
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::ShapeMismatch {
                expected: self.input_len(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, idx: usize, input: &[f64]) -> Vec<f64> {
        let layer = &self.layers[idx];
        let last = idx + 1 == self.layers.len();
        layer
            .weights
            .chunks_exact(layer.inputs)
            .zip(&layer.biases)
            .map(|(row, b)| {
                let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
                match (last, self.output) {
                    (false, _) => z.max(0.0),
                    (true, OutputActivation::Identity) => z,
                    (true, OutputActivation::Sigmoid) => sigmoid(z),
                }
            })
            .collect()
    }

    /// Runs the network and keeps what [`Mlp::backward`] needs.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for i in 0..self.layers.len() {
            let next = self.layer_forward(i, activations.last().unwrap());
            activations.push(next);
        }
        let output = activations.last().unwrap().clone();
        Ok((output, ForwardCache { activations }))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for i in 0..self.layers.len() {
            x = self.layer_forward(i, &x);
        }
        Ok(x)
    }

    /// Gradients of a loss whose derivative with respect to the network
    /// output is `output_error`.
    pub fn backward(&self, cache: &ForwardCache, output_error: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_backward(cache, output_error, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but adds into `grads`, for minibatches.
    /// Returns the derivative of the loss with respect to the network input.
    pub fn accumulate_backward(
        &self,
        cache: &ForwardCache,
        output_error: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if cache.activations.len() != self.layers.len() + 1
            || cache.activations[0].len() != self.input_len()
        {
            return Err(Error::invalid(
                "forward cache does not belong to this network",
            ));
        }
        if output_error.len() != self.output_len() {
            return Err(Error::ShapeMismatch {
                expected: self.output_len(),
                actual: output_error.len(),
            });
        }
        if !grads.matches(self) {
            return Err(Error::invalid(
                "gradient buffer shape does not match network",
            ));
        }

        let out = cache.activations.last().unwrap();
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Identity => output_error.to_vec(),
            OutputActivation::Sigmoid => output_error
                .iter()
                .zip(out)
                .map(|(e, y)| e * y * (1.0 - y))
                .collect(),
        };

        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let input = &cache.activations[idx];
            let gw = &mut grads.weights[idx];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grads.biases[idx][o] += d;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if idx == 0 {
                return Ok(prev);
            }
            // relu'(z) = 1 iff the stored activation is positive
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        unreachable!("network has at least one layer")
    }

    /// Copies all parameters from `other` (same shape).
    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::invalid(
                "cannot copy between differently shaped networks",
            ));
        }
        self.clone_from(other);
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers.len()
            && net.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].len() == l.weights.len() && self.biases[i].len() == l.biases.len()
            })
    }

    /// Same storage order as [`Mlp::params`].
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|g| g == 0.0)
    }
}
