use rand::Rng;

use super::{level_of, AfterActionState, EdrlConfig, EdrlError};
use crate::neural::{Activation, InputAnchor, Mlp, ParamFile, Parameterized};

/// Softplus input giving an output of exactly 1.
const UNIT_SOFTPLUS: f64 = 0.541_324_854_612_918_1;

/// Index of a server's partial state: `sum_k level_k * L^k`.
pub fn partial_index(available: &[f64], capacity: &[f64], levels: usize) -> usize {
    available
        .iter()
        .zip(capacity)
        .rev()
        .fold(0, |acc, (a, c)| acc * levels + level_of(*a, *c, levels))
}

fn share(available: f64, capacity: f64) -> f64 {
    if capacity > 0.0 {
        available / capacity
    } else {
        0.0
    }
}

fn budget_feature(budget: f64, reference_cost: f64) -> f64 {
    let rel = if reference_cost > 0.0 { budget / reference_cost } else { 0.0 };
    rel.min(2.0)
}

/// Per-server value tables plus a feature network weighting each server's
/// entry by the whole after-action state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    pub servers: usize,
    pub types: usize,
    pub levels: usize,
    pub omega: usize,
    /// Row-major `servers x omega`.
    pub values: Vec<f64>,
    pub net: Mlp,
    /// Weights fixed at 1 instead of the network output.
    pub indicator: bool,
}

/// The pieces of one value evaluation needed for a semi-gradient update.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParts {
    pub value: f64,
    pub phi: Vec<f64>,
    pub indices: Vec<usize>,
    pub features: Vec<f64>,
}

impl ValueModel {
    pub fn new<R: Rng + ?Sized>(servers: usize, types: usize, cfg: &EdrlConfig, rng: &mut R) -> Result<Self, EdrlError> {
        cfg.validate()?;
        if servers == 0 || types == 0 {
            return Err(EdrlError::Shape("need at least one server and one resource type".into()));
        }
        let omega = cfg
            .levels
            .checked_pow(types as u32)
            .filter(|&o| o.saturating_mul(servers) <= 1 << 24)
            .ok_or_else(|| EdrlError::InvalidConfig("partial-state table too large".into()))?;
        let mut sizes = vec![Self::input_width(servers, types)];
        sizes.extend(&cfg.hidden);
        sizes.push(servers);
        let mut net = Mlp::xavier(&sizes, Activation::Relu, Activation::Softplus, rng)?;
        let last = net.layers.last_mut().expect("network has layers");
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|b| *b = UNIT_SOFTPLUS);
        Ok(Self { servers, types, levels: cfg.levels, omega, values: vec![0.0; servers * omega], net, indicator: cfg.indicator })
    }

    pub fn input_width(servers: usize, types: usize) -> usize {
        servers * types + types + 2
    }

    /// Availability shares per server, demand, budget relative to the
    /// reference cost, and episode progress.
    pub fn features(&self, after: &AfterActionState) -> Vec<f64> {
        let mut f = Vec::with_capacity(Self::input_width(self.servers, self.types));
        for (a, c) in after.available.iter().zip(&after.capacity) {
            f.extend(a.iter().zip(c).map(|(a, c)| share(*a, *c)));
        }
        f.extend(&after.demand);
        f.push(budget_feature(after.budget, after.reference_cost));
        f.push(after.progress);
        f
    }

    fn check(&self, after: &AfterActionState) -> Result<(), EdrlError> {
        if after.available.len() != self.servers || after.demand.len() != self.types || after.available.iter().any(|a| a.len() != self.types) {
            return Err(EdrlError::Shape(format!(
                "after-action state does not match a {}-server, {}-type model",
                self.servers, self.types
            )));
        }
        Ok(())
    }

    pub fn indices(&self, after: &AfterActionState) -> Vec<usize> {
        after
            .available
            .iter()
            .zip(&after.capacity)
            .enumerate()
            .map(|(j, (a, c))| j * self.omega + partial_index(a, c, self.levels))
            .collect()
    }

    pub fn evaluate(&self, after: &AfterActionState) -> Result<ValueParts, EdrlError> {
        self.check(after)?;
        let indices = self.indices(after);
        let features = self.features(after);
        let phi = if self.indicator { vec![1.0; self.servers] } else { self.net.infer(&features)? };
        let value = phi.iter().zip(&indices).map(|(p, &i)| p * self.values[i]).sum();
        Ok(ValueParts { value, phi, indices, features })
    }

    /// First-layer anchor for evaluating many after-states close to `after`.
    pub fn anchor(&self, after: &AfterActionState) -> Result<Option<InputAnchor>, EdrlError> {
        self.check(after)?;
        if self.indicator {
            return Ok(None);
        }
        Ok(Some(self.net.anchor(&self.features(after))?))
    }

    /// [`ValueModel::evaluate`] of `base` with the servers in `changed` given
    /// new availability and the budget replaced, reusing `base_parts` and an
    /// anchor taken at `base`.
    pub fn evaluate_patched(
        &self,
        anchor: Option<&InputAnchor>,
        base: &AfterActionState,
        base_parts: &ValueParts,
        changed: &[(usize, Vec<f64>)],
        budget: f64,
    ) -> Result<ValueParts, EdrlError> {
        let k = self.types;
        let mut indices = base_parts.indices.clone();
        let mut features = base_parts.features.clone();
        if indices.len() != self.servers || features.len() != Self::input_width(self.servers, k) {
            return Err(EdrlError::Shape("base evaluation does not match the model".into()));
        }
        for (j, avail) in changed {
            let j = *j;
            if j >= self.servers || avail.len() != k {
                return Err(EdrlError::Shape(format!("patch for server {j} does not match the model")));
            }
            let cap = &base.capacity[j];
            indices[j] = j * self.omega + partial_index(avail, cap, self.levels);
            for (f, (a, c)) in features[j * k..(j + 1) * k].iter_mut().zip(avail.iter().zip(cap)) {
                *f = share(*a, *c);
            }
        }
        features[self.servers * k + k] = budget_feature(budget, base.reference_cost);
        let phi = if self.indicator {
            vec![1.0; self.servers]
        } else if let Some(anchor) = anchor {
            self.net.infer_near(anchor, &features)?
        } else {
            self.net.infer(&features)?
        };
        let value = phi.iter().zip(&indices).map(|(p, &i)| p * self.values[i]).sum();
        Ok(ValueParts { value, phi, indices, features })
    }

    pub fn approximate_value(&self, after: &AfterActionState) -> Result<f64, EdrlError> {
        Ok(self.evaluate(after)?.value)
    }

    /// Gradient of `0.5 * (target - prediction)^2` with respect to the
    /// network parameters, holding the table fixed.
    pub fn feature_gradient(&self, parts: &ValueParts, target: f64) -> Result<Vec<f64>, EdrlError> {
        let (phi, cache) = self.net.forward(&parts.features)?;
        let pred: f64 = phi.iter().zip(&parts.indices).map(|(p, &i)| p * self.values[i]).sum();
        let delta = target - pred;
        let dout: Vec<f64> = parts.indices.iter().map(|&i| -delta * self.values[i]).collect();
        let (grads, _) = self.net.backward(&cache, &dout)?;
        Ok(grads)
    }

    pub fn to_param_file(&self) -> ParamFile {
        let mut f = ParamFile::new("edrl-value");
        for l in &self.net.layers {
            f.push_dense(l);
        }
        f.push_vector("values", &self.values);
        f.push_vector(
            "shape",
            &[self.servers as f64, self.types as f64, self.levels as f64, if self.indicator { 1.0 } else { 0.0 }],
        );
        f
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite()) && self.net.params().iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use crate::rng::substream;

    fn after(available: Vec<Vec<f64>>) -> AfterActionState {
        let k = available[0].len();
        AfterActionState {
            capacity: vec![vec![1.0; k]; available.len()],
            available,
            budget: 0.5,
            demand: vec![0.3; k],
            reference_cost: 1.0,
            progress: 0.25,
        }
    }

    fn model(servers: usize, types: usize, indicator: bool) -> ValueModel {
        let cfg = EdrlConfig { levels: 4, indicator, hidden: vec![8, 8], ..EdrlConfig::default() };
        ValueModel::new(servers, types, &cfg, &mut substream(1, "value-test", 0)).unwrap()
    }

    #[test]
    fn partial_index_is_mixed_radix() {
        assert_eq!(partial_index(&[0.0, 0.0], &[1.0, 1.0], 4), 0);
        assert_eq!(partial_index(&[0.3, 0.0], &[1.0, 1.0], 4), 1);
        assert_eq!(partial_index(&[0.0, 0.3], &[1.0, 1.0], 4), 4);
        assert_eq!(partial_index(&[1.0, 1.0], &[1.0, 1.0], 4), 15);
    }

    #[test]
    fn indicator_mode_sums_selected_entries() {
        let mut m = model(2, 2, true);
        let s = after(vec![vec![1.0, 1.0], vec![0.0, 0.3]]);
        assert_eq!(m.approximate_value(&s).unwrap(), 0.0);
        let idx = m.indices(&s);
        m.values[idx[0]] = 3.0;
        m.values[idx[1]] = 4.0;
        assert_eq!(m.approximate_value(&s).unwrap(), 7.0);
    }

    #[test]
    fn learned_mode_starts_as_indicator() {
        let mut learned = model(2, 2, false);
        let mut ind = model(2, 2, true);
        let s = after(vec![vec![0.6, 0.2], vec![0.9, 0.3]]);
        let idx = learned.indices(&s);
        for m in [&mut learned, &mut ind] {
            m.values[idx[0]] = 1.5;
            m.values[idx[1]] = -2.0;
        }
        let parts = learned.evaluate(&s).unwrap();
        assert!(parts.phi.iter().all(|p| (p - 1.0).abs() < 1e-12));
        assert!((parts.value - ind.approximate_value(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = model(2, 2, true);
        assert!(m.evaluate(&after(vec![vec![1.0, 1.0]])).is_err());
    }

    #[test]
    fn feature_gradient_matches_finite_differences() {
        let mut m = model(2, 3, false);
        let mut rng = substream(5, "perturb", 0);
        let mut p = m.net.params();
        for v in p.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        m.net.set_params(&p).unwrap();
        for (i, v) in m.values.iter_mut().enumerate() {
            *v = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
        }
        let s = after(vec![vec![0.6, 0.2, 0.7], vec![0.9, 0.3, 0.1]]);
        let parts = m.evaluate(&s).unwrap();
        let target = 1.3;
        let analytic = m.feature_gradient(&parts, target).unwrap();
        let probe = m.clone();
        let worst = grad_check(
            &p,
            &analytic,
            |q| {
                let mut mm = probe.clone();
                mm.net.set_params(q).unwrap();
                let v = mm.approximate_value(&s).unwrap();
                0.5 * (target - v).powi(2)
            },
            1e-6,
        );
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn patched_evaluation_matches_full() {
        for indicator in [false, true] {
            let mut m = model(3, 2, indicator);
            m.values.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f64 * 0.1);
            let base = after(vec![vec![0.6, 0.2], vec![0.9, 0.3], vec![0.4, 0.4]]);
            let anchor = m.anchor(&base).unwrap();
            assert_eq!(anchor.is_none(), indicator);
            let base_parts = m.evaluate(&base).unwrap();
            let mut near = base.clone();
            near.available[1] = vec![0.5, 0.1];
            near.budget = 0.3;
            let full = m.evaluate(&near).unwrap();
            let fast = m.evaluate_patched(anchor.as_ref(), &base, &base_parts, &[(1, vec![0.5, 0.1])], 0.3).unwrap();
            assert_eq!(full.indices, fast.indices);
            assert_eq!(full.features, fast.features);
            assert!(full.phi.iter().zip(&fast.phi).all(|(a, b)| (a - b).abs() < 1e-12));
            assert!((full.value - fast.value).abs() < 1e-12);
            assert!(m.evaluate_patched(None, &base, &base_parts, &[(3, vec![0.5, 0.1])], 0.3).is_err());
        }
    }
}
