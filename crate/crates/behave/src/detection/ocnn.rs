use rand::seq::SliceRandom;
use rand::Rng;

use super::{DetectionError, FeatureScaler, Orientation, UnlabeledFeatures};
use crate::neural::{Activation, DenseLayer, NeuralError, Optimizer, ParamFile, Parameterized};
use crate::par::{map_slice, ExecMode};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcnnConfig {
    pub nu: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub kappa: f64,
    pub orientation: Orientation,
    /// Relative loss change under which training stops early; 0 disables.
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for OcnnConfig {
    fn default() -> Self {
        Self {
            nu: 0.04,
            hidden: 32,
            epochs: 20,
            batch: 32,
            lr: 1e-3,
            kappa: 4.0,
            orientation: Orientation::Standard,
            plateau_tol: 0.0,
            seed: 0,
        }
    }
}

impl OcnnConfig {
    /// Per-request detector trained on clean records: upward deviations in
    /// any feature move toward the origin.
    pub fn sr_preset() -> Self {
        Self { nu: 0.005, orientation: Orientation::Headroom { offset: 3.0 }, ..Self::default() }
    }

    /// Series detector over encoder features, where anomalies may deviate in
    /// either direction.
    pub fn tr_preset() -> Self {
        Self { nu: 0.005, hidden: 16, lr: 5e-3, orientation: Orientation::Magnitude { offset: 3.0 }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |m: &str| Err(DetectionError::InvalidConfig(m.to_string()));
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return bad("nu must lie in (0, 1)");
        }
        if self.hidden == 0 || self.batch == 0 || self.epochs == 0 {
            return bad("hidden size, batch and epochs must be positive");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        Ok(())
    }
}

/// One-class network `s(x) = <w, sigmoid(V x + b)>` with boundary `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcnnModel {
    pub hidden: DenseLayer,
    pub w: Vec<f64>,
    pub r: f64,
    pub nu: f64,
    pub kappa: f64,
    pub scaler: FeatureScaler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcnnReport {
    pub loss_curve: Vec<f64>,
    pub epochs_run: usize,
    /// Share of training points whose margin is negative under the final model.
    pub below_boundary: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    /// Normality in [0, 1].
    pub p: f64,
    pub margin: f64,
    pub timestamp: f64,
}

impl DetectionResult {
    pub fn is_anomalous(&self) -> bool {
        self.p < 0.5
    }
}

/// The `nu` order statistic of `scores`, used as the boundary.
fn quantile(scores: &[f64], nu: f64) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((nu * s.len() as f64).floor() as usize).min(s.len() - 1);
    s[k]
}

impl OcnnModel {
    pub fn input_size(&self) -> usize {
        self.hidden.inputs
    }

    /// Score of an already scaled input.
    pub fn raw_score(&self, x: &[f64]) -> Result<f64, DetectionError> {
        let h = self.hidden.infer(x)?;
        Ok(h.iter().zip(&self.w).map(|(a, b)| a * b).sum())
    }

    pub fn margin(&self, features: &[f64]) -> Result<f64, DetectionError> {
        let x = self.scaler.transform(features)?;
        Ok(self.raw_score(&x)? - self.r)
    }

    /// Full training objective on scaled rows at the current boundary.
    pub fn objective(&self, rows: &[Vec<f64>]) -> Result<f64, DetectionError> {
        let reg = 0.5 * (self.w.iter().map(|v| v * v).sum::<f64>() + self.hidden.weight_sq_norm());
        let mut hinge = 0.0;
        for x in rows {
            hinge += (self.r - self.raw_score(x)?).max(0.0);
        }
        Ok(reg + hinge / (self.nu * rows.len() as f64) - self.r)
    }

    /// Gradient of the objective over `rows` (regularizer included once),
    /// in [`Parameterized`] order, with the hinge averaged over the rows.
    pub fn objective_grad(&self, rows: &[&[f64]]) -> Result<Vec<f64>, DetectionError> {
        let nh = self.hidden.param_count();
        let mut g = vec![0.0; nh + self.w.len()];
        let scale = 1.0 / (self.nu * rows.len() as f64);
        for x in rows {
            let (h, cache) = self.hidden.forward(x)?;
            let s: f64 = h.iter().zip(&self.w).map(|(a, b)| a * b).sum();
            if self.r - s > 0.0 {
                let dout: Vec<f64> = self.w.iter().map(|w| -scale * w).collect();
                self.hidden.backward_into(&cache, &dout, &mut g[..nh])?;
                for (gw, hv) in g[nh..].iter_mut().zip(&h) {
                    *gw -= scale * hv;
                }
            }
        }
        let nw = self.hidden.weights.len();
        for (gv, v) in g[..nw].iter_mut().zip(&self.hidden.weights) {
            *gv += v;
        }
        for (gw, w) in g[nh..].iter_mut().zip(&self.w) {
            *gw += w;
        }
        Ok(g)
    }

    pub fn to_param_file(&self) -> ParamFile {
        let mut f = ParamFile::new("ocnn");
        f.push_dense(&self.hidden);
        f.push_vector("w", &self.w);
        f.push_vector("scaler_mean", &self.scaler.mean);
        f.push_vector("scaler_std", &self.scaler.std);
        f.push_vector("boundary", &[self.r, self.nu, self.kappa]);
        f.push_vector("orientation", &self.scaler.encode_orientation());
        f
    }

    pub fn from_param_file(f: &ParamFile) -> Result<Self, NeuralError> {
        let mut rd = f.reader();
        let hidden = rd.dense()?;
        let w = rd.vector("w")?;
        let mean = rd.vector("scaler_mean")?;
        let std = rd.vector("scaler_std")?;
        let b = rd.vector("boundary")?;
        let o = rd.vector("orientation")?;
        let orientation = FeatureScaler::decode_orientation(&o).ok_or_else(|| NeuralError::Format("unknown OCNN orientation".into()))?;
        if b.len() != 3 || w.len() != hidden.outputs || mean.len() != hidden.inputs || std.len() != hidden.inputs {
            return Err(NeuralError::Format("inconsistent OCNN manifest".into()));
        }
        Ok(Self {
            hidden,
            w,
            r: b[0],
            nu: b[1],
            kappa: b[2],
            scaler: FeatureScaler { mean, std, orientation },
        })
    }
}

impl Parameterized for OcnnModel {
    fn param_count(&self) -> usize {
        self.hidden.param_count() + self.w.len()
    }

    fn export_params(&self, out: &mut Vec<f64>) {
        self.hidden.export_params(out);
        out.extend_from_slice(&self.w);
    }

    fn import_params(&mut self, src: &[f64]) -> usize {
        let n = self.hidden.import_params(src);
        let m = self.w.len();
        self.w.copy_from_slice(&src[n..n + m]);
        n + m
    }
}

pub fn train_ocnn(corpus: &UnlabeledFeatures, cfg: &OcnnConfig) -> Result<(OcnnModel, OcnnReport), DetectionError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(DetectionError::EmptyCorpus);
    }
    let scaler = FeatureScaler::fit(&corpus.rows, cfg.orientation)?;
    let rows: Vec<Vec<f64>> = corpus
        .rows
        .iter()
        .map(|r| scaler.transform(r))
        .collect::<Result<_, _>>()?;
    let mut rng = substream(cfg.seed, "ocnn", 0);
    let d = corpus.width();
    let hidden = DenseLayer::xavier(d, cfg.hidden, Activation::Sigmoid, &mut rng);
    let limit = (6.0 / (cfg.hidden + 1) as f64).sqrt();
    let w = (0..cfg.hidden).map(|_| rng.gen_range(-limit..=limit)).collect();
    let mut model = OcnnModel { hidden, w, r: 0.0, nu: cfg.nu, kappa: cfg.kappa, scaler };
    let scores = |m: &OcnnModel| rows.iter().map(|x| m.raw_score(x)).collect::<Result<Vec<f64>, _>>();
    model.r = quantile(&scores(&model)?, cfg.nu);

    let mut opt = Optimizer::adam(cfg.lr)?;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| rows[i].as_slice()).collect();
            let g = model.objective_grad(&batch)?;
            model
                .apply_gradients(&mut opt, &g)
                .map_err(|e| DetectionError::Diverged(e.to_string()))?;
        }
        model.r = quantile(&scores(&model)?, cfg.nu);
        let loss = model.objective(&rows)?;
        if !loss.is_finite() {
            return Err(DetectionError::Diverged(format!("OCNN loss became {loss}")));
        }
        let plateau = curve
            .last()
            .map_or(false, |prev: &f64| (prev - loss).abs() <= cfg.plateau_tol * prev.abs().max(1.0));
        curve.push(loss);
        if cfg.plateau_tol > 0.0 && plateau {
            break;
        }
    }
    let final_scores = scores(&model)?;
    let below = final_scores.iter().filter(|s| **s < model.r).count() as f64 / rows.len() as f64;
    let report = OcnnReport { epochs_run: curve.len(), loss_curve: curve, below_boundary: below };
    Ok((model, report))
}

/// Normality of one raw feature vector.
pub fn ocnn_score(model: &OcnnModel, features: &[f64], timestamp: f64) -> Result<DetectionResult, DetectionError> {
    let margin = model.margin(features)?;
    let p = crate::neural::Activation::Sigmoid.apply(model.kappa * margin);
    Ok(DetectionResult { p, margin, timestamp })
}

/// Scores `(features, timestamp)` rows, in input order.
pub fn ocnn_score_batch(model: &OcnnModel, rows: &[(Vec<f64>, f64)], mode: ExecMode) -> Result<Vec<DetectionResult>, DetectionError> {
    map_slice(mode, rows, |(f, t)| ocnn_score(model, f, *t)).into_iter().collect()
}
