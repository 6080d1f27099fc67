use rand::Rng;

use super::dense::sigmoid;
use super::{check_len, matvec, matvec_t_acc, outer_acc, NeuralError, Parameterized};

/// Largest hidden size admitted by the cell.
pub const MAX_HIDDEN: usize = 144;

/// A single LSTM cell unrolled over a sequence.
///
/// Gate rows are stacked in the order input, forget, candidate, output, so
/// `w_input` is `(4 * hidden) x inputs`, `w_recurrent` is `(4 * hidden) x hidden`
/// and `bias` has `4 * hidden` entries. The state starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub inputs: usize,
    pub hidden: usize,
    pub w_input: Vec<f64>,
    pub w_recurrent: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Everything recorded by a forward pass; `h[0]` and `c[0]` are the zero state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub xs: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Post-activation gates per step, laid out like the stacked weight rows.
    pub gates: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn steps(&self) -> usize {
        self.xs.len()
    }

    /// Hidden states `h_1..h_T`.
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.h[1..]
    }

    pub fn last_hidden(&self) -> &[f64] {
        &self.h[self.h.len() - 1]
    }
}

impl LstmCell {
    pub fn zeros(inputs: usize, hidden: usize) -> Result<Self, NeuralError> {
        if hidden == 0 || hidden > MAX_HIDDEN {
            return Err(NeuralError::InvalidConfig(format!(
                "LSTM hidden size must be in 1..={MAX_HIDDEN}, got {hidden}"
            )));
        }
        Ok(Self {
            inputs,
            hidden,
            w_input: vec![0.0; 4 * hidden * inputs],
            w_recurrent: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        })
    }

    /// Weights uniform in [-0.08, 0.08], zero bias.
    pub fn small_uniform<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Result<Self, NeuralError> {
        let mut cell = Self::zeros(inputs, hidden)?;
        for w in cell.w_input.iter_mut().chain(cell.w_recurrent.iter_mut()) {
            *w = rng.gen_range(-0.08..=0.08);
        }
        Ok(cell)
    }

    /// One cell application from `(h, c)`; returns `(h', c', gates)`.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NeuralError> {
        check_len("LSTM input", self.inputs, x.len())?;
        check_len("LSTM hidden state", self.hidden, h.len())?;
        let n = self.hidden;
        let mut z = self.bias.clone();
        let mut tmp = vec![0.0; 4 * n];
        matvec(&self.w_input, 4 * n, self.inputs, x, &mut tmp);
        for (a, b) in z.iter_mut().zip(&tmp) {
            *a += b;
        }
        matvec(&self.w_recurrent, 4 * n, n, h, &mut tmp);
        for (a, b) in z.iter_mut().zip(&tmp) {
            *a += b;
        }
        let mut gates = vec![0.0; 4 * n];
        for u in 0..n {
            gates[u] = sigmoid(z[u]);
            gates[n + u] = sigmoid(z[n + u]);
            gates[2 * n + u] = z[2 * n + u].tanh();
            gates[3 * n + u] = sigmoid(z[3 * n + u]);
        }
        let mut c_new = vec![0.0; n];
        let mut h_new = vec![0.0; n];
        for u in 0..n {
            c_new[u] = gates[n + u] * c[u] + gates[u] * gates[2 * n + u];
            h_new[u] = gates[3 * n + u] * c_new[u].tanh();
        }
        Ok((h_new, c_new, gates))
    }

    pub fn forward_sequence(&self, seq: &[Vec<f64>]) -> Result<LstmTrace, NeuralError> {
        if seq.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let n = self.hidden;
        let mut trace = LstmTrace {
            xs: Vec::with_capacity(seq.len()),
            h: vec![vec![0.0; n]],
            c: vec![vec![0.0; n]],
            gates: Vec::with_capacity(seq.len()),
        };
        for x in seq {
            let t = trace.h.len() - 1;
            let (h, c, g) = self.step(x, &trace.h[t], &trace.c[t])?;
            trace.xs.push(x.clone());
            trace.h.push(h);
            trace.c.push(c);
            trace.gates.push(g);
        }
        Ok(trace)
    }

    /// Backpropagation through time.
    ///
    /// `dh[t]` is the loss gradient with respect to `h_{t+1}` (one entry per
    /// step). Returns the flat parameter gradient and the per-step input
    /// gradients.
    pub fn backward(&self, trace: &LstmTrace, dh: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>), NeuralError> {
        let steps = trace.steps();
        if steps == 0 || trace.h.len() != steps + 1 || trace.gates.len() != steps {
            return Err(NeuralError::MissingCache);
        }
        check_len("LSTM output gradients", steps, dh.len())?;
        let n = self.hidden;
        let ni = self.inputs;
        let mut grads = vec![0.0; self.param_count()];
        let (g_wi, rest) = grads.split_at_mut(4 * n * ni);
        let (g_wh, g_b) = rest.split_at_mut(4 * n * n);
        let mut dx = vec![Vec::new(); steps];
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let mut da = vec![0.0; 4 * n];
        for t in (0..steps).rev() {
            check_len("LSTM output gradient", n, dh[t].len())?;
            let g = &trace.gates[t];
            let c_prev = &trace.c[t];
            let c_t = &trace.c[t + 1];
            for u in 0..n {
                let (ig, fg, cg, og) = (g[u], g[n + u], g[2 * n + u], g[3 * n + u]);
                let dh_u = dh[t][u] + dh_next[u];
                let tc = c_t[u].tanh();
                let dc = dc_next[u] + dh_u * og * (1.0 - tc * tc);
                da[u] = dc * cg * ig * (1.0 - ig);
                da[n + u] = dc * c_prev[u] * fg * (1.0 - fg);
                da[2 * n + u] = dc * ig * (1.0 - cg * cg);
                da[3 * n + u] = dh_u * tc * og * (1.0 - og);
                dc_next[u] = dc * fg;
            }
            outer_acc(g_wi, &da, &trace.xs[t]);
            outer_acc(g_wh, &da, &trace.h[t]);
            for (b, d) in g_b.iter_mut().zip(&da) {
                *b += d;
            }
            let mut dxt = vec![0.0; ni];
            matvec_t_acc(&self.w_input, 4 * n, ni, &da, &mut dxt);
            dx[t] = dxt;
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&self.w_recurrent, 4 * n, n, &da, &mut dh_next);
        }
        Ok((grads, dx))
    }
}

impl Parameterized for LstmCell {
    fn param_count(&self) -> usize {
        self.w_input.len() + self.w_recurrent.len() + self.bias.len()
    }

    fn export_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w_input);
        out.extend_from_slice(&self.w_recurrent);
        out.extend_from_slice(&self.bias);
    }

    fn import_params(&mut self, src: &[f64]) -> usize {
        let a = self.w_input.len();
        let b = self.w_recurrent.len();
        let c = self.bias.len();
        self.w_input.copy_from_slice(&src[..a]);
        self.w_recurrent.copy_from_slice(&src[a..a + b]);
        self.bias.copy_from_slice(&src[a + b..a + b + c]);
        a + b + c
    }
}
