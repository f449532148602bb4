use super::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Algorithm {
    pub const ADAM: Algorithm = Algorithm::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

/// First-order optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Optimizer {
    algorithm: Algorithm,
    learning_rate: f64,
    first_moment: Option<Gradients>,
    second_moment: Option<Gradients>,
    step: u64,
}

impl Optimizer {
    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            algorithm,
            learning_rate,
            first_moment: None,
            second_moment: None,
            step: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(Algorithm::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(Algorithm::ADAM, learning_rate)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one descent step. Non-finite gradients are rejected before
    /// anything is modified.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.matches(net) {
            return Err(Error::invalid("gradient shape does not match network"));
        }
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Sgd => {
                for (p, g) in net.params_mut().zip(grads.values()) {
                    *p -= lr * g;
                }
            }
            Algorithm::Adam { beta1, beta2, eps } => {
                let m = self
                    .first_moment
                    .get_or_insert_with(|| Gradients::zeros_like(net));
                let v = self
                    .second_moment
                    .get_or_insert_with(|| Gradients::zeros_like(net));
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in net
                    .params_mut()
                    .zip(grads.values())
                    .zip(m.values_mut())
                    .zip(v.values_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;

    fn scalar_net(w: f64) -> Mlp {
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        net.weights_mut(0)[0] = w;
        net
    }

    fn grad(net: &Mlp, g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(net);
        grads.weights[0][0] = g;
        grads
    }

    #[test]
    fn sgd_step() {
        let mut net = scalar_net(1.0);
        let g = grad(&net, 2.0);
        Optimizer::sgd(0.1).unwrap().apply(&mut net, &g).unwrap();
        assert!((net.weights(0)[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for mut opt in [Optimizer::sgd(0.1).unwrap(), Optimizer::adam(0.1).unwrap()] {
            let mut net = scalar_net(1.0);
            let g = grad(&net, 0.0);
            opt.apply(&mut net, &g).unwrap();
            assert_eq!(net.weights(0)[0], 1.0);
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn adam_first_step_matches_hand_recurrence() {
        // m1 = 0.1 g, v1 = 0.001 g², bias-corrected m̂ = g, v̂ = g²,
        // so Δ = lr · g / (|g| + eps).
        let (lr, g, eps) = (1e-3, -0.37, 1e-8);
        let mut net = scalar_net(0.5);
        let grads = grad(&net, g);
        Optimizer::adam(lr)
            .unwrap()
            .apply(&mut net, &grads)
            .unwrap();
        let m1 = 0.1 * g;
        let v1 = 0.001 * g * g;
        let expected = 0.5 - lr * (m1 / 0.1) / ((v1 / 0.001f64).sqrt() + eps);
        assert!((net.weights(0)[0] - expected).abs() < 1e-15);
        assert!((net.weights(0)[0] - (0.5 + lr)).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut net = scalar_net(1.0);
        let g = grad(&net, f64::NAN);
        let err = Optimizer::adam(0.1)
            .unwrap()
            .apply(&mut net, &g)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert_eq!(net.weights(0)[0], 1.0);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        assert!(Optimizer::sgd(0.0).is_err());
        assert!(Optimizer::adam(-1.0).is_err());
    }
}
