//! Minimal trainable building blocks: dense layers, an LSTM cell, optimizers,
//! finite-difference gradient checking, and a text parameter format.
//!
//! All arithmetic is `f64`. Models expose their parameters as a flat vector
//! through [`Parameterized`]; gradients returned by `backward` use the same
//! ordering, so an [`Optimizer`] can update any model uniformly.

mod dense;
mod gradcheck;
mod lstm;
mod optim;
mod params;

pub use dense::{Activation, DenseCache, DenseLayer, InputAnchor, Mlp, MlpCache};
pub use gradcheck::{grad_check, relative_error};
pub use lstm::{LstmCell, LstmTrace};
pub use optim::{Algorithm, Optimizer};
pub use params::{LayerSpec, ParamFile, ParamReader, FORMAT_HEADER};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch { what: String, expected: usize, got: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("backward called without a matching forward cache")]
    MissingCache,
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter file: {0}")]
    Format(String),
}

pub fn check_len(what: &str, expected: usize, got: usize) -> Result<(), NeuralError> {
    if expected == got {
        Ok(())
    } else {
        Err(NeuralError::ShapeMismatch { what: what.to_string(), expected, got })
    }
}

/// A model whose trainable parameters can be viewed as one flat vector.
pub trait Parameterized {
    fn param_count(&self) -> usize;
    /// Appends all parameters to `out` in canonical order.
    fn export_params(&self, out: &mut Vec<f64>);
    /// Overwrites parameters from the front of `src`, returning how many were read.
    fn import_params(&mut self, src: &[f64]) -> usize;

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.export_params(&mut out);
        out
    }

    fn set_params(&mut self, src: &[f64]) -> Result<(), NeuralError> {
        check_len("parameter vector", self.param_count(), src.len())?;
        self.import_params(src);
        Ok(())
    }

    /// Applies one optimizer step with a flat gradient in canonical order.
    fn apply_gradients(&mut self, opt: &mut Optimizer, grads: &[f64]) -> Result<(), NeuralError> {
        let mut p = self.params();
        opt.step(&mut p, grads)?;
        self.set_params(&p)
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Dense row-major matrix-vector product `m (rows x cols) * v`.
pub(crate) fn matvec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &m[r * cols..(r + 1) * cols];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// `out += m^T * v` for a row-major `m (rows x cols)`.
pub(crate) fn matvec_t_acc(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let vr = v[r];
        if vr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vr;
        }
    }
}

/// `g += a ⊗ b` for a row-major gradient of shape `(a.len() x b.len())`.
pub(crate) fn outer_acc(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gi, bi) in row.iter_mut().zip(b) {
            *gi += ar * bi;
        }
    }
}
