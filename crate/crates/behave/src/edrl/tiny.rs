use rand::Rng;

use super::{ComprehensiveState, EdrlAgent, EdrlConfig, EdrlError, RateContext};
use crate::behavior::{truncated_normal, AppClass, AppKind, DEMAND_UNIT_SCALE};
use crate::par::ExecMode;
use crate::rfta::{exhaustive_oracle, reference_cost, CostMatrix, DeviceSpec, ResourceVector, RftaInstance};
use crate::rng::{substream, StreamRng};

const TINY_SERVERS: usize = 2;
const TINY_CAPACITY: f64 = 0.6;

/// Two servers and one device per application class, with per-type unit
/// costs shared by both servers and every device fully regular.
pub fn tiny_instance(seed: u64) -> RftaInstance {
    let mut rng = substream(seed, "tiny-instance", 0);
    let types = DEMAND_UNIT_SCALE.len();
    let row: Vec<f64> = (0..types).map(|_| rng.gen_range(0.5..1.5)).collect();
    let devices = AppKind::ALL
        .iter()
        .map(|&kind| {
            let app = AppClass::default_for(kind);
            let demand = app.demand_ranges.iter().zip(DEMAND_UNIT_SCALE).map(|(iv, s)| truncated_normal(&mut rng, *iv) / s).collect();
            DeviceSpec {
                demand: ResourceVector::new(demand).expect("demand ranges are positive"),
                gamma: 1.0,
                xi: app.priority,
                data_size: 1.0,
                max_requests: Some(1.0),
            }
        })
        .collect();
    RftaInstance {
        devices,
        capacities: vec![ResourceVector::new(vec![TINY_CAPACITY; types]).expect("positive"); TINY_SERVERS],
        costs: CostMatrix::new(vec![row; TINY_SERVERS]).expect("positive costs"),
        tau: vec![1.0; types],
        units: vec![1.0; types],
    }
}

/// One-shot episodes: every device requests once, in an order drawn with
/// probability proportional to arrival rate, against fresh capacities.
#[derive(Debug, Clone)]
pub struct TinyEnv {
    pub instance: RftaInstance,
    pub budgets: Vec<f64>,
    pub lambdas: Vec<f64>,
    reference: Vec<f64>,
}

impl TinyEnv {
    pub fn new(instance: RftaInstance) -> Result<Self, EdrlError> {
        let budgets = instance.budgets()?;
        let reference = instance.devices.iter().map(|d| reference_cost(&d.demand, &instance.costs).unwrap_or(0.0)).collect();
        let lambdas = AppKind::ALL.iter().cycle().take(instance.devices.len()).map(|&k| AppClass::default_for(k).arrival_rate).collect();
        Ok(Self { instance, budgets, lambdas, reference })
    }

    /// Weighted sampling without replacement.
    pub fn request_order<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut left: Vec<usize> = (0..self.lambdas.len()).filter(|&i| self.lambdas[i] > 0.0).collect();
        let mut order = Vec::with_capacity(left.len());
        while !left.is_empty() {
            let total: f64 = left.iter().map(|&i| self.lambdas[i]).sum();
            let mut pick = rng.gen::<f64>() * total;
            let mut at = left.len() - 1;
            for (pos, &i) in left.iter().enumerate() {
                if pick < self.lambdas[i] {
                    at = pos;
                    break;
                }
                pick -= self.lambdas[i];
            }
            order.push(left.remove(at));
        }
        order
    }

    /// Runs one episode and returns its total gain.
    pub fn run_episode<R: Rng + ?Sized>(&self, agent: &mut EdrlAgent, epsilon: f64, learn: bool, episode: usize, rng: &mut R) -> Result<f64, EdrlError> {
        let order = self.request_order(rng);
        let capacity: Vec<Vec<f64>> = self.instance.capacities.iter().map(|c| c.to_vec()).collect();
        let mut available = capacity.clone();
        let ctx = RateContext::constant(1.0);
        let n = order.len().max(1) as f64;
        let mut total = 0.0;
        for (t, &i) in order.iter().enumerate() {
            let state = ComprehensiveState {
                available: available.clone(),
                capacity: capacity.clone(),
                demand: self.instance.devices[i].demand.to_vec(),
                budget: self.budgets[i],
                reference_cost: self.reference[i],
                progress: t as f64 / n,
                epoch: episode,
            };
            let choice = agent.act(&state, &self.instance.costs, &ctx, epsilon, learn, rng)?;
            total += choice.action.served();
            available = choice.after.available;
        }
        if learn {
            agent.finish_episode()?;
        }
        Ok(total)
    }
}

fn episode_rng(seed: u64, tag: &str, episode: usize) -> StreamRng {
    substream(seed, tag, episode as u64)
}

/// Trains an episodic agent and returns it with the per-episode gain curve.
pub fn train_tiny(env: &TinyEnv, cfg: EdrlConfig, episodes: usize, seed: u64) -> Result<(EdrlAgent, Vec<f64>), EdrlError> {
    let servers = env.instance.servers();
    let types = env.instance.types();
    let mut agent = EdrlAgent::new(servers, types, cfg, true, &mut substream(seed, "tiny-agent", 0))?;
    let mut curve = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let eps = agent.cfg.epsilon_at(ep, episodes);
        let mut rng = episode_rng(seed, "tiny-train", ep);
        curve.push(env.run_episode(&mut agent, eps, true, ep, &mut rng)?);
    }
    Ok((agent, curve))
}

/// Mean greedy gain over `episodes` request orders, without learning.
pub fn evaluate_tiny(env: &TinyEnv, agent: &EdrlAgent, episodes: usize, seed: u64) -> Result<f64, EdrlError> {
    let mut frozen = agent.clone();
    let mut sum = 0.0;
    for ep in 0..episodes {
        let mut rng = episode_rng(seed, "tiny-eval", ep);
        sum += env.run_episode(&mut frozen, 0.0, false, ep, &mut rng)?;
    }
    Ok(sum / episodes.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyReport {
    pub seed: u64,
    pub oracle_gain: f64,
    pub edrl_gain: f64,
    pub ratio: f64,
    pub curve: Vec<f64>,
}

impl TinyReport {
    pub fn run(seed: u64, cfg: EdrlConfig, episodes: usize, eval_episodes: usize, grid_step: f64) -> Result<Self, EdrlError> {
        let env = TinyEnv::new(tiny_instance(seed))?;
        let oracle = exhaustive_oracle(&env.instance, &env.budgets, grid_step, ExecMode::auto())?;
        let (agent, curve) = train_tiny(&env, cfg, episodes, seed)?;
        let edrl_gain = evaluate_tiny(&env, &agent, eval_episodes, seed)?;
        let ratio = if oracle.gain > 0.0 { edrl_gain / oracle.gain } else { 1.0 };
        Ok(Self { seed, oracle_gain: oracle.gain, edrl_gain, ratio, curve })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_instance_is_deterministic_and_valid() {
        let a = tiny_instance(3);
        assert_eq!(a, tiny_instance(3));
        assert_ne!(a, tiny_instance(4));
        a.validate().unwrap();
        assert_eq!(a.devices.len(), 4);
        assert_eq!(a.servers(), 2);
    }

    #[test]
    fn request_order_is_a_permutation() {
        let env = TinyEnv::new(tiny_instance(1)).unwrap();
        let mut rng = substream(1, "order", 0);
        for _ in 0..20 {
            let mut o = env.request_order(&mut rng);
            o.sort_unstable();
            assert_eq!(o, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let env = TinyEnv::new(tiny_instance(2)).unwrap();
        let cfg = EdrlConfig { levels: 4, hidden: vec![8], fill_action: false, ..EdrlConfig::default() };
        let (_, a) = train_tiny(&env, cfg.clone(), 30, 5).unwrap();
        let (_, b) = train_tiny(&env, cfg, 30, 5).unwrap();
        assert_eq!(a, b);
    }
}
