use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, matvec, matvec_t_acc, outer_acc, NeuralError, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
    Softplus,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative given the pre-activation `z` and the output `a = f(z)`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => sigmoid(z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "linear" => Activation::Linear,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            "softplus" => Activation::Softplus,
            _ => return None,
        })
    }
}

/// Fully connected layer `a = f(W x + b)` with `W` stored row-major (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub output: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs, activation);
        for w in &mut layer.weights {
            *w = rng.gen_range(-limit..=limit);
        }
        layer
    }

    pub fn identity(n: usize, activation: Activation) -> Self {
        let mut layer = Self::zeros(n, n, activation);
        for i in 0..n {
            layer.weights[i * n + i] = 1.0;
        }
        layer
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NeuralError> {
        check_len("dense input", self.inputs, x.len())?;
        let mut pre = vec![0.0; self.outputs];
        matvec(&self.weights, self.outputs, self.inputs, x, &mut pre);
        for (p, b) in pre.iter_mut().zip(&self.bias) {
            *p += b;
        }
        let output: Vec<f64> = pre.iter().map(|&z| self.activation.apply(z)).collect();
        Ok((output.clone(), DenseCache { input: x.to_vec(), pre, output }))
    }

    /// Output only, without building a cache.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        check_len("dense input", self.inputs, x.len())?;
        let mut pre = vec![0.0; self.outputs];
        matvec(&self.weights, self.outputs, self.inputs, x, &mut pre);
        Ok(pre
            .iter()
            .zip(&self.bias)
            .map(|(z, b)| self.activation.apply(z + b))
            .collect())
    }

    /// Accumulates parameter gradients into `grads` (weights then bias) and
    /// returns the gradient with respect to the layer input.
    pub fn backward_into(&self, cache: &DenseCache, dout: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, NeuralError> {
        check_len("dense output gradient", self.outputs, dout.len())?;
        if cache.input.len() != self.inputs || cache.pre.len() != self.outputs {
            return Err(NeuralError::MissingCache);
        }
        check_len("dense gradient buffer", self.param_count(), grads.len())?;
        let dz: Vec<f64> = dout
            .iter()
            .zip(cache.pre.iter().zip(&cache.output))
            .map(|(d, (&z, &a))| d * self.activation.derivative(z, a))
            .collect();
        let (gw, gb) = grads.split_at_mut(self.weights.len());
        outer_acc(gw, &dz, &cache.input);
        for (g, d) in gb.iter_mut().zip(&dz) {
            *g += d;
        }
        let mut dx = vec![0.0; self.inputs];
        matvec_t_acc(&self.weights, self.outputs, self.inputs, &dz, &mut dx);
        Ok(dx)
    }

    pub fn backward(&self, cache: &DenseCache, dout: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
        let mut grads = vec![0.0; self.param_count()];
        let dx = self.backward_into(cache, dout, &mut grads)?;
        Ok((grads, dx))
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

impl Parameterized for DenseLayer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn export_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }

    fn import_params(&mut self, src: &[f64]) -> usize {
        let nw = self.weights.len();
        let nb = self.bias.len();
        self.weights.copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..nw + nb]);
        nw + nb
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    pub layers: Vec<DenseCache>,
}

/// First-layer pre-activation of a reference input, so that inputs differing
/// from it in a few positions can be evaluated without the full first matvec.
#[derive(Debug, Clone, PartialEq)]
pub struct InputAnchor {
    input: Vec<f64>,
    pre: Vec<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(|c| c.output.as_slice()).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_len("layer chaining", pair[0].outputs, pair[1].inputs)?;
        }
        Ok(Self { layers })
    }

    /// Builds `sizes[0] -> sizes[1] -> ... ` with `hidden` activations and an
    /// `output` activation on the last layer.
    pub fn xavier<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self, NeuralError> {
        if sizes.len() < 2 {
            return Err(NeuralError::InvalidConfig("need input and output sizes".into()));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::xavier(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), NeuralError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&cur)?;
            caches.push(cache);
            cur = out;
        }
        Ok((cur, MlpCache { layers: caches }))
    }

    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    pub fn anchor(&self, x: &[f64]) -> Result<InputAnchor, NeuralError> {
        let first = &self.layers[0];
        check_len("dense input", first.inputs, x.len())?;
        let mut pre = vec![0.0; first.outputs];
        matvec(&first.weights, first.outputs, first.inputs, x, &mut pre);
        Ok(InputAnchor { input: x.to_vec(), pre })
    }

    /// Same as [`Mlp::infer`], touching only the first-layer columns where `x`
    /// differs from the anchor input.
    pub fn infer_near(&self, anchor: &InputAnchor, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let first = &self.layers[0];
        check_len("dense input", first.inputs, x.len())?;
        check_len("anchor input", first.inputs, anchor.input.len())?;
        let mut pre = anchor.pre.clone();
        for (i, (v, a)) in x.iter().zip(&anchor.input).enumerate() {
            let d = v - a;
            if d != 0.0 {
                for (r, z) in pre.iter_mut().enumerate() {
                    *z += first.weights[r * first.inputs + i] * d;
                }
            }
        }
        let mut cur: Vec<f64> = pre.iter().zip(&first.bias).map(|(z, b)| first.activation.apply(z + b)).collect();
        for layer in &self.layers[1..] {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward_into(&self, cache: &MlpCache, dout: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, NeuralError> {
        if cache.layers.len() != self.layers.len() {
            return Err(NeuralError::MissingCache);
        }
        check_len("network gradient buffer", self.param_count(), grads.len())?;
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        let mut d = dout.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let g = &mut grads[offsets[i]..offsets[i] + layer.param_count()];
            d = layer.backward_into(&cache.layers[i], &d, g)?;
        }
        Ok(d)
    }

    pub fn backward(&self, cache: &MlpCache, dout: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
        let mut grads = vec![0.0; self.param_count()];
        let dx = self.backward_into(cache, dout, &mut grads)?;
        Ok((grads, dx))
    }
}

impl Parameterized for Mlp {
    fn param_count(&self) -> usize {
        self.layers.iter().map(Parameterized::param_count).sum()
    }

    fn export_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            l.export_params(out);
        }
    }

    fn import_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for l in &mut self.layers {
            off += l.import_params(&src[off..]);
        }
        off
    }
}
