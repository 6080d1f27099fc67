use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DetectionError, SeriesScaler, UnlabeledSeries};
use crate::neural::{
    Activation, DenseCache, DenseLayer, LstmCell, LstmTrace, Mlp, MlpCache, NeuralError, Optimizer, ParamFile,
    Parameterized,
};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanEdConfig {
    /// Feature vector length.
    pub n_o: usize,
    pub lstm_hidden: usize,
    pub disc_hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for GanEdConfig {
    fn default() -> Self {
        Self { n_o: 16, lstm_hidden: 64, disc_hidden: 32, epochs: 20, batch: 32, lr: 1e-3, seed: 0 }
    }
}

/// Encoder E (LSTM, pooled `[h_T, mean h, max h, min h]`, linear head), generator G (tanh
/// projection of `z`, LSTM fed the projection plus a time-of-day phase, linear
/// per-step head) and discriminator D (MLP on the flattened series joined
/// with its feature vector, emitting a logit).
#[derive(Debug, Clone, PartialEq)]
pub struct GanEdModel {
    pub enc_lstm: LstmCell,
    pub enc_head: DenseLayer,
    pub gen_in: DenseLayer,
    pub gen_lstm: LstmCell,
    pub gen_out: DenseLayer,
    pub disc: Mlp,
    pub series_len: usize,
    pub n_o: usize,
    pub scaler: SeriesScaler,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GanEdReport {
    pub d_loss: Vec<f64>,
    pub eg_loss: Vec<f64>,
}

pub(crate) struct EncoderPass {
    trace: LstmTrace,
    head: DenseCache,
    argmax: Vec<usize>,
    argmin: Vec<usize>,
    pub(crate) feature: Vec<f64>,
}

pub(crate) struct GeneratorPass {
    proj: DenseCache,
    trace: LstmTrace,
    outs: Vec<DenseCache>,
    pub(crate) series: Vec<Vec<f64>>,
}

fn softplus(x: f64) -> f64 {
    Activation::Softplus.apply(x)
}

fn sigmoid(x: f64) -> f64 {
    Activation::Sigmoid.apply(x)
}

impl GanEdModel {
    pub fn new(series_len: usize, cfg: &GanEdConfig, scaler: SeriesScaler) -> Result<Self, DetectionError> {
        if series_len == 0 || cfg.n_o == 0 || cfg.disc_hidden == 0 {
            return Err(DetectionError::InvalidConfig("GAN-ED sizes must be positive".into()));
        }
        let mut rng = substream(cfg.seed, "gan-ed-init", 0);
        let nc = cfg.lstm_hidden;
        Ok(Self {
            enc_lstm: LstmCell::small_uniform(3, nc, &mut rng)?,
            enc_head: DenseLayer::xavier(4 * nc, cfg.n_o, Activation::Linear, &mut rng),
            gen_in: DenseLayer::xavier(cfg.n_o, nc, Activation::Tanh, &mut rng),
            gen_lstm: LstmCell::small_uniform(nc + 2, nc, &mut rng)?,
            gen_out: DenseLayer::xavier(nc, 3, Activation::Linear, &mut rng),
            disc: Mlp::xavier(&[3 * series_len + cfg.n_o, cfg.disc_hidden, 1], Activation::Tanh, Activation::Linear, &mut rng)?,
            series_len,
            n_o: cfg.n_o,
            scaler,
        })
    }

    fn check_len(&self, len: usize) -> Result<(), DetectionError> {
        if len == self.series_len {
            Ok(())
        } else {
            Err(DetectionError::InvalidInput(format!("series length {len}, model expects {}", self.series_len)))
        }
    }

    pub(crate) fn encode_scaled(&self, xs: &[Vec<f64>]) -> Result<EncoderPass, DetectionError> {
        self.check_len(xs.len())?;
        let trace = self.enc_lstm.forward_sequence(xs)?;
        let nc = self.enc_lstm.hidden;
        let mut pooled = trace.last_hidden().to_vec();
        let mut mean = vec![0.0; nc];
        let mut argmax = vec![0usize; nc];
        let mut argmin = vec![0usize; nc];
        let outputs = trace.outputs();
        for (t, h) in outputs.iter().enumerate() {
            for (u, v) in h.iter().enumerate() {
                mean[u] += v / xs.len() as f64;
                if *v > outputs[argmax[u]][u] {
                    argmax[u] = t;
                }
                if *v < outputs[argmin[u]][u] {
                    argmin[u] = t;
                }
            }
        }
        pooled.extend(mean);
        pooled.extend(argmax.iter().enumerate().map(|(u, &t)| outputs[t][u]));
        pooled.extend(argmin.iter().enumerate().map(|(u, &t)| outputs[t][u]));
        let (feature, head) = self.enc_head.forward(&pooled)?;
        Ok(EncoderPass { trace, head, argmax, argmin, feature })
    }

    /// Adds encoder parameter gradients for `dfeature` into `g` (enc_lstm then enc_head).
    fn encoder_backward(&self, pass: &EncoderPass, dfeature: &[f64], g: &mut [f64]) -> Result<(), NeuralError> {
        let nl = self.enc_lstm.param_count();
        let (g_lstm, g_head) = g.split_at_mut(nl);
        let dpooled = self.enc_head.backward_into(&pass.head, dfeature, g_head)?;
        let nc = self.enc_lstm.hidden;
        let steps = pass.trace.steps();
        let mut dh = vec![dpooled[nc..2 * nc].iter().map(|v| v / steps as f64).collect::<Vec<f64>>(); steps];
        for (d, v) in dh[steps - 1].iter_mut().zip(&dpooled[..nc]) {
            *d += v;
        }
        for (u, &t) in pass.argmax.iter().enumerate() {
            dh[t][u] += dpooled[2 * nc + u];
        }
        for (u, &t) in pass.argmin.iter().enumerate() {
            dh[t][u] += dpooled[3 * nc + u];
        }
        let (gl, _) = self.enc_lstm.backward(&pass.trace, &dh)?;
        for (a, b) in g_lstm.iter_mut().zip(gl) {
            *a += b;
        }
        Ok(())
    }

    pub(crate) fn generate(&self, z: &[f64]) -> Result<GeneratorPass, DetectionError> {
        let (u, proj) = self.gen_in.forward(z)?;
        let t_len = self.series_len;
        let inputs: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                let phase = 2.0 * PI * t as f64 / t_len as f64;
                let mut v = u.clone();
                v.push(phase.sin());
                v.push(phase.cos());
                v
            })
            .collect();
        let trace = self.gen_lstm.forward_sequence(&inputs)?;
        let mut outs = Vec::with_capacity(t_len);
        let mut series = Vec::with_capacity(t_len);
        for h in trace.outputs() {
            let (y, c) = self.gen_out.forward(h)?;
            series.push(y);
            outs.push(c);
        }
        Ok(GeneratorPass { proj, trace, outs, series })
    }

    /// Adds generator gradients for `dseries` into `g` (gen_in, gen_lstm, gen_out).
    fn generator_backward(&self, pass: &GeneratorPass, dseries: &[Vec<f64>], g: &mut [f64]) -> Result<(), NeuralError> {
        let n_in = self.gen_in.param_count();
        let n_l = self.gen_lstm.param_count();
        let (g_in, rest) = g.split_at_mut(n_in);
        let (g_l, g_out) = rest.split_at_mut(n_l);
        let dh: Vec<Vec<f64>> = pass
            .outs
            .iter()
            .zip(dseries)
            .map(|(c, d)| self.gen_out.backward_into(c, d, g_out))
            .collect::<Result<_, _>>()?;
        let (gl, dx) = self.gen_lstm.backward(&pass.trace, &dh)?;
        for (a, b) in g_l.iter_mut().zip(gl) {
            *a += b;
        }
        let nc = self.gen_in.outputs;
        let mut du = vec![0.0; nc];
        for d in &dx {
            for (a, b) in du.iter_mut().zip(&d[..nc]) {
                *a += b;
            }
        }
        self.gen_in.backward_into(&pass.proj, &du, g_in)?;
        Ok(())
    }

    fn disc_input(series: &[Vec<f64>], feature: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = series.iter().flatten().copied().collect();
        v.extend_from_slice(feature);
        v
    }

    /// D's logit and cache for a (series, feature) pair.
    pub(crate) fn discriminate(&self, series: &[Vec<f64>], feature: &[f64]) -> Result<(f64, MlpCache), DetectionError> {
        let (out, cache) = self.disc.forward(&Self::disc_input(series, feature))?;
        Ok((out[0], cache))
    }

    pub fn scale(&self, series: &[[f64; 3]]) -> Vec<Vec<f64>> {
        self.scaler.transform(series)
    }

    fn enc_count(&self) -> usize {
        self.enc_lstm.param_count() + self.enc_head.param_count()
    }

    fn gen_count(&self) -> usize {
        self.gen_in.param_count() + self.gen_lstm.param_count() + self.gen_out.param_count()
    }

    /// D's loss and parameter gradient for precomputed E and G passes.
    pub(crate) fn disc_terms(&self, real: &[Vec<f64>], z: &[f64], e: &EncoderPass, g: &GeneratorPass, grad: &mut [f64], weight: f64) -> Result<f64, DetectionError> {
        let (lr, cr) = self.discriminate(real, &e.feature)?;
        let (lf, cf) = self.discriminate(&g.series, z)?;
        self.disc.backward_into(&cr, &[weight * (sigmoid(lr) - 1.0)], grad)?;
        self.disc.backward_into(&cf, &[weight * sigmoid(lf)], grad)?;
        Ok(softplus(-lr) + softplus(lf))
    }

    /// E/G loss and gradient (E's parameters then G's) for precomputed passes.
    pub(crate) fn eg_terms(&self, real: &[Vec<f64>], z: &[f64], e: &EncoderPass, g: &GeneratorPass, grad: &mut [f64], weight: f64) -> Result<f64, DetectionError> {
        let (lr, cr) = self.discriminate(real, &e.feature)?;
        let (lf, cf) = self.discriminate(&g.series, z)?;
        let mut scratch = vec![0.0; self.disc.param_count()];
        let dreal = self.disc.backward_into(&cr, &[weight * sigmoid(lr)], &mut scratch)?;
        let dfake = self.disc.backward_into(&cf, &[weight * (sigmoid(lf) - 1.0)], &mut scratch)?;
        let flat = 3 * self.series_len;
        let (ge, gg) = grad.split_at_mut(self.enc_count());
        self.encoder_backward(e, &dreal[flat..], ge)?;
        let dseries: Vec<Vec<f64>> = dfake[..flat].chunks(3).map(<[f64]>::to_vec).collect();
        self.generator_backward(g, &dseries, gg)?;
        Ok(softplus(lr) + softplus(-lf))
    }

    /// Loss D minimizes on one real series and one noise draw.
    pub fn disc_loss(&self, real: &[Vec<f64>], z: &[f64]) -> Result<f64, DetectionError> {
        Ok(self.disc_loss_grad(real, z)?.0)
    }

    /// Loss E and G minimize on one real series and one noise draw.
    pub fn eg_loss(&self, real: &[Vec<f64>], z: &[f64]) -> Result<f64, DetectionError> {
        Ok(self.eg_loss_grad(real, z)?.0)
    }

    /// D's loss with its gradient with respect to D's parameters.
    pub fn disc_loss_grad(&self, real: &[Vec<f64>], z: &[f64]) -> Result<(f64, Vec<f64>), DetectionError> {
        let e = self.encode_scaled(real)?;
        let g = self.generate(z)?;
        let mut grad = vec![0.0; self.disc.param_count()];
        let l = self.disc_terms(real, z, &e, &g, &mut grad, 1.0)?;
        Ok((l, grad))
    }

    /// E/G loss with its gradient with respect to E's then G's parameters.
    pub fn eg_loss_grad(&self, real: &[Vec<f64>], z: &[f64]) -> Result<(f64, Vec<f64>), DetectionError> {
        let e = self.encode_scaled(real)?;
        let g = self.generate(z)?;
        let mut grad = vec![0.0; self.enc_count() + self.gen_count()];
        let l = self.eg_terms(real, z, &e, &g, &mut grad, 1.0)?;
        Ok((l, grad))
    }

    pub fn disc_params(&self) -> Vec<f64> {
        self.disc.params()
    }

    pub fn set_disc_params(&mut self, p: &[f64]) -> Result<(), NeuralError> {
        self.disc.set_params(p)
    }

    pub fn eg_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.enc_count() + self.gen_count());
        self.enc_lstm.export_params(&mut v);
        self.enc_head.export_params(&mut v);
        self.gen_in.export_params(&mut v);
        self.gen_lstm.export_params(&mut v);
        self.gen_out.export_params(&mut v);
        v
    }

    pub fn set_eg_params(&mut self, p: &[f64]) -> Result<(), NeuralError> {
        crate::neural::check_len("E/G parameters", self.enc_count() + self.gen_count(), p.len())?;
        let mut off = self.enc_lstm.import_params(p);
        off += self.enc_head.import_params(&p[off..]);
        off += self.gen_in.import_params(&p[off..]);
        off += self.gen_lstm.import_params(&p[off..]);
        self.gen_out.import_params(&p[off..]);
        Ok(())
    }

    pub fn to_param_file(&self) -> ParamFile {
        let mut f = ParamFile::new("gan-ed");
        f.push_lstm(&self.enc_lstm);
        f.push_dense(&self.enc_head);
        f.push_dense(&self.gen_in);
        f.push_lstm(&self.gen_lstm);
        f.push_dense(&self.gen_out);
        for l in &self.disc.layers {
            f.push_dense(l);
        }
        f.push_vector("series_scaler", &self.scaler.to_flat());
        f.push_vector("shape", &[self.series_len as f64, self.n_o as f64]);
        f
    }

    pub fn from_param_file(f: &ParamFile) -> Result<Self, NeuralError> {
        let mut rd = f.reader();
        let enc_lstm = rd.lstm()?;
        let enc_head = rd.dense()?;
        let gen_in = rd.dense()?;
        let gen_lstm = rd.lstm()?;
        let gen_out = rd.dense()?;
        let d1 = rd.dense()?;
        let d2 = rd.dense()?;
        let sc = rd.vector("series_scaler")?;
        let shape = rd.vector("shape")?;
        let bad = || NeuralError::Format("inconsistent GAN-ED manifest".into());
        if shape.len() != 2 {
            return Err(bad());
        }
        let scaler = SeriesScaler::from_flat(&sc).filter(|s| s.len() == shape[0] as usize).ok_or_else(bad)?;
        Ok(Self {
            enc_lstm,
            enc_head,
            gen_in,
            gen_lstm,
            gen_out,
            disc: Mlp::new(vec![d1, d2])?,
            series_len: shape[0] as usize,
            n_o: shape[1] as usize,
            scaler,
        })
    }
}

fn noise<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Alternating one-step schedule per mini-batch: a D step on the batch, then
/// a joint E/G step against the updated D.
pub fn train_gan_ed(corpus: &UnlabeledSeries, cfg: &GanEdConfig) -> Result<(GanEdModel, GanEdReport), DetectionError> {
    if corpus.is_empty() {
        return Err(DetectionError::EmptyCorpus);
    }
    if corpus.len() < cfg.batch || cfg.batch == 0 {
        return Err(DetectionError::CorpusTooSmall { got: corpus.len(), batch: cfg.batch });
    }
    let scaler = SeriesScaler::fit(&corpus.series)?;
    let scaled: Vec<Vec<Vec<f64>>> = corpus.series.iter().map(|s| scaler.transform(s)).collect();
    let mut model = GanEdModel::new(scaled[0].len(), cfg, scaler)?;
    let mut rng = substream(cfg.seed, "gan-ed-train", 0);
    let mut d_opt = Optimizer::adam(cfg.lr)?;
    let mut eg_opt = Optimizer::adam(cfg.lr)?;
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    let mut report = GanEdReport::default();
    let diverged = |e: NeuralError| DetectionError::Diverged(e.to_string());
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut eg_sum, mut seen) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch) {
            let zs: Vec<Vec<f64>> = chunk.iter().map(|_| noise(&mut rng, cfg.n_o)).collect();
            let w = 1.0 / chunk.len() as f64;
            let passes: Vec<(EncoderPass, GeneratorPass)> = chunk
                .iter()
                .zip(&zs)
                .map(|(&i, z)| Ok((model.encode_scaled(&scaled[i])?, model.generate(z)?)))
                .collect::<Result<_, DetectionError>>()?;
            let mut gd = vec![0.0; model.disc.param_count()];
            for ((&i, z), (e, g)) in chunk.iter().zip(&zs).zip(&passes) {
                d_sum += model.disc_terms(&scaled[i], z, e, g, &mut gd, w)?;
            }
            let mut p = model.disc_params();
            d_opt.step(&mut p, &gd).map_err(diverged)?;
            model.set_disc_params(&p)?;

            let mut geg = vec![0.0; model.enc_count() + model.gen_count()];
            for ((&i, z), (e, g)) in chunk.iter().zip(&zs).zip(&passes) {
                eg_sum += model.eg_terms(&scaled[i], z, e, g, &mut geg, w)?;
            }
            let mut p = model.eg_params();
            eg_opt.step(&mut p, &geg).map_err(diverged)?;
            model.set_eg_params(&p)?;
            seen += chunk.len();
        }
        let (dl, el) = (d_sum / seen as f64, eg_sum / seen as f64);
        if !(dl.is_finite() && el.is_finite()) {
            return Err(DetectionError::Diverged(format!("GAN-ED losses became {dl}, {el}")));
        }
        report.d_loss.push(dl);
        report.eg_loss.push(el);
    }
    Ok((model, report))
}

/// Feature vector `E(x)` of a raw series.
pub fn encode_series(model: &GanEdModel, series: &[[f64; 3]]) -> Result<Vec<f64>, DetectionError> {
    model.check_len(series.len())?;
    let xs = model.scale(series);
    Ok(model.encode_scaled(&xs)?.feature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;

    fn toy_corpus(n: usize, len: usize, seed: u64) -> UnlabeledSeries {
        let mut rng = substream(seed, "toy-series", 0);
        let series = (0..n)
            .map(|_| {
                let amp: f64 = rng.gen_range(0.8..1.2);
                (0..len)
                    .map(|t| {
                        let s = (2.0 * PI * t as f64 / len as f64).sin();
                        [10.0 + 5.0 * amp * s, 20.0 + 8.0 * amp * s, 3.0 + amp * s]
                    })
                    .collect()
            })
            .collect();
        UnlabeledSeries { series }
    }

    fn small_cfg() -> GanEdConfig {
        GanEdConfig { n_o: 4, lstm_hidden: 5, disc_hidden: 6, epochs: 2, batch: 4, lr: 1e-3, seed: 3 }
    }

    #[test]
    fn encoder_output_has_feature_length() {
        let c = toy_corpus(8, 144, 1);
        let cfg = GanEdConfig { n_o: 16, lstm_hidden: 8, epochs: 1, batch: 8, ..GanEdConfig::default() };
        let (m, _) = train_gan_ed(&c, &cfg).unwrap();
        let e = encode_series(&m, &c.series[0]).unwrap();
        assert_eq!(e.len(), 16);
        assert_eq!(e, encode_series(&m, &c.series[0]).unwrap());
        assert!(encode_series(&m, &c.series[0][..100]).is_err());
    }

    #[test]
    fn discriminator_gradient_passes_grad_check() {
        let c = toy_corpus(4, 6, 2);
        let (m, _) = train_gan_ed(&c, &small_cfg()).unwrap();
        let real = m.scale(&c.series[1]);
        let z = noise(&mut substream(9, "z", 0), 4);
        let (_, g) = m.disc_loss_grad(&real, &z).unwrap();
        let err = grad_check(&m.disc_params(), &g, |p| {
            let mut mm = m.clone();
            mm.set_disc_params(p).unwrap();
            mm.disc_loss(&real, &z).unwrap()
        }, 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn encoder_generator_gradient_passes_grad_check() {
        let c = toy_corpus(4, 6, 4);
        let (m, _) = train_gan_ed(&c, &small_cfg()).unwrap();
        let real = m.scale(&c.series[2]);
        let z = noise(&mut substream(9, "z", 1), 4);
        let (_, g) = m.eg_loss_grad(&real, &z).unwrap();
        let err = grad_check(&m.eg_params(), &g, |p| {
            let mut mm = m.clone();
            mm.set_eg_params(p).unwrap();
            mm.eg_loss(&real, &z).unwrap()
        }, 1e-5);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn untrained_discriminator_is_at_chance_on_average() {
        // One random D can lean either way; across initializations the
        // accuracy centers on one half.
        let c = toy_corpus(32, 24, 5);
        let scaler = SeriesScaler::fit(&c.series).unwrap();
        let mut total = 0.0;
        let inits = 20;
        for seed in 0..inits {
            let cfg = GanEdConfig { lstm_hidden: 8, seed, ..GanEdConfig::default() };
            let m = GanEdModel::new(24, &cfg, scaler.clone()).unwrap();
            let mut rng = substream(seed, "z", 0);
            let mut correct = 0;
            for s in &c.series {
                let real = m.scale(s);
                let e = m.encode_scaled(&real).unwrap();
                let z = noise(&mut rng, m.n_o);
                let g = m.generate(&z).unwrap();
                let (lr, _) = m.discriminate(&real, &e.feature).unwrap();
                let (lf, _) = m.discriminate(&g.series, &z).unwrap();
                correct += usize::from(lr > 0.0) + usize::from(lf <= 0.0);
            }
            total += correct as f64 / (2.0 * c.len() as f64);
        }
        let acc = total / inits as f64;
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn training_is_deterministic() {
        let c = toy_corpus(8, 12, 6);
        let (a, ra) = train_gan_ed(&c, &small_cfg()).unwrap();
        let (b, rb) = train_gan_ed(&c, &small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn small_corpus_rejected() {
        let c = toy_corpus(3, 12, 7);
        assert!(matches!(train_gan_ed(&c, &small_cfg()), Err(DetectionError::CorpusTooSmall { .. })));
    }

    #[test]
    fn param_file_round_trip() {
        let c = toy_corpus(4, 6, 8);
        let (m, _) = train_gan_ed(&c, &small_cfg()).unwrap();
        let back = GanEdModel::from_param_file(&ParamFile::parse(&m.to_param_file().to_text()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
