use super::{check_len, NeuralError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub algorithm: Algorithm,
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    pub steps: u64,
}

impl Optimizer {
    pub fn new(algorithm: Algorithm, lr: f64) -> Result<Self, NeuralError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NeuralError::InvalidConfig(format!("learning rate must be > 0, got {lr}")));
        }
        Ok(Self { algorithm, lr, m: Vec::new(), v: Vec::new(), steps: 0 })
    }

    pub fn sgd(lr: f64) -> Result<Self, NeuralError> {
        Self::new(Algorithm::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Result<Self, NeuralError> {
        Self::new(Algorithm::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }, lr)
    }

    /// Updates `params` in place. A non-finite gradient leaves both the
    /// parameters and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NeuralError> {
        check_len("gradient", params.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NeuralError::Divergence(format!("non-finite gradient at index {i}")));
        }
        match self.algorithm {
            Algorithm::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Algorithm::Adam { beta1, beta2, eps } => {
                if self.m.len() != params.len() {
                    if self.steps != 0 {
                        check_len("Adam moments", self.m.len(), params.len())?;
                    }
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                }
                let t = (self.steps + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= self.lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}
