use super::{fitting_fraction, AllocationMatrix, CostMatrix, RftaError, RftaInstance};
use crate::par::{map_range, ExecMode};

/// Largest admissible number of joint allocations.
pub const ORACLE_NODE_CAP: f64 = 1e7;

const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Demand fraction per device and server.
    pub fractions: Vec<Vec<f64>>,
    pub allocation: AllocationMatrix,
    pub gain: f64,
    /// Search-tree nodes visited.
    pub nodes: u64,
}

/// Per-server demand fractions for one device, in lexicographic order.
#[derive(Debug, Clone)]
struct DeviceOptions {
    fractions: Vec<Vec<f64>>,
    gains: Vec<f64>,
}

fn grid_levels(limit: f64, step: f64) -> usize {
    ((limit / step) + 1e-9).floor().max(0.0) as usize
}

fn device_options(instance: &RftaInstance, i: usize, budget: f64, step: f64) -> DeviceOptions {
    let d = &instance.devices[i];
    let cap_total = d.max_requests.unwrap_or(f64::INFINITY);
    let per_server_cost: Vec<f64> = (0..instance.servers()).map(|j| instance.costs.bundle_cost(j, &d.demand)).collect();
    let levels: Vec<usize> = (0..instance.servers())
        .map(|j| {
            if !instance.costs.sells(j, &d.demand) || !(budget > 0.0) {
                return 0;
            }
            let by_cap = fitting_fraction(&d.demand, &instance.capacities[j]);
            let by_budget = budget / per_server_cost[j];
            grid_levels(by_cap.min(by_budget).min(cap_total), step)
        })
        .collect();
    let mut fractions = Vec::new();
    let mut gains = Vec::new();
    let mut idx = vec![0usize; levels.len()];
    loop {
        let f: Vec<f64> = idx.iter().map(|&m| m as f64 * step).collect();
        let total: f64 = f.iter().sum();
        let cost: f64 = f.iter().zip(&per_server_cost).map(|(a, c)| a * c).sum();
        if total <= cap_total + 1e-9 && cost <= budget + 1e-9 * budget.abs().max(1.0) {
            gains.push(total);
            fractions.push(f);
        }
        // Odometer increment with the first server most significant.
        let mut pos = levels.len();
        loop {
            if pos == 0 {
                return DeviceOptions { fractions, gains };
            }
            pos -= 1;
            if idx[pos] < levels[pos] {
                idx[pos] += 1;
                for later in idx.iter_mut().skip(pos + 1) {
                    *later = 0;
                }
                break;
            }
        }
    }
}

fn all_options(instance: &RftaInstance, budgets: &[f64], step: f64) -> Result<Vec<DeviceOptions>, RftaError> {
    instance.validate()?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(RftaError::InvalidGrid(step));
    }
    if budgets.len() != instance.devices.len() {
        return Err(RftaError::Shape("one budget per device required".into()));
    }
    // A device whose own grid is over the cap fails before materializing it.
    for (i, d) in instance.devices.iter().enumerate() {
        let mut per_device = 1.0f64;
        for j in 0..instance.servers() {
            let mut lim = fitting_fraction(&d.demand, &instance.capacities[j]).min(d.max_requests.unwrap_or(f64::INFINITY));
            lim = if budgets[i] > 0.0 { lim.min(budgets[i] / instance.costs.bundle_cost(j, &d.demand)) } else { 0.0 };
            per_device *= (grid_levels(lim, step) + 1) as f64;
        }
        if per_device > ORACLE_NODE_CAP {
            return Err(RftaError::SearchCapExceeded { size: per_device, cap: ORACLE_NODE_CAP });
        }
    }
    let opts: Vec<DeviceOptions> = (0..instance.devices.len()).map(|i| device_options(instance, i, budgets[i], step)).collect();
    let size = opts.iter().map(|o| o.gains.len() as f64).product::<f64>();
    if size > ORACLE_NODE_CAP {
        return Err(RftaError::SearchCapExceeded { size, cap: ORACLE_NODE_CAP });
    }
    Ok(opts)
}

/// Number of joint allocations the oracle would enumerate.
pub fn oracle_search_size(instance: &RftaInstance, budgets: &[f64], step: f64) -> Result<f64, RftaError> {
    Ok(all_options(instance, budgets, step)?.iter().map(|o| o.gains.len() as f64).product())
}

/// Joint grid size `(1 + 1/step)^servers` of a single request.
pub fn request_search_size(servers: usize, step: f64) -> f64 {
    ((1.0 / step + 1e-9).floor() + 1.0).powi(servers as i32)
}

/// Best grid allocation for one request against the current free
/// capacities: per-server fractions with total at most `max_fraction`,
/// within `budget`, fitting every server. Ties go to the lexicographically
/// first vector with the first server most significant.
pub fn oracle_request(
    demand: &[f64],
    budget: f64,
    available: &[Vec<f64>],
    costs: &CostMatrix,
    step: f64,
    max_fraction: f64,
) -> Result<Vec<f64>, RftaError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(RftaError::InvalidGrid(step));
    }
    let servers = available.len();
    let size = request_search_size(servers, step);
    if size > ORACLE_NODE_CAP {
        return Err(RftaError::SearchCapExceeded { size, cap: ORACLE_NODE_CAP });
    }
    let unit: Vec<f64> = (0..servers).map(|j| costs.bundle_cost(j, demand)).collect();
    let levels: Vec<usize> = (0..servers)
        .map(|j| {
            if !costs.sells(j, demand) || !(budget > 0.0) {
                return 0;
            }
            grid_levels(fitting_fraction(demand, &available[j]).min(budget / unit[j]).min(max_fraction), step)
        })
        .collect();
    let mut best = vec![0.0; servers];
    let mut best_total = 0.0;
    let mut idx = vec![0usize; servers];
    loop {
        let f: Vec<f64> = idx.iter().map(|&m| m as f64 * step).collect();
        let total: f64 = f.iter().sum();
        let cost: f64 = f.iter().zip(&unit).map(|(a, c)| a * c).sum();
        if total <= max_fraction + 1e-9 && cost <= budget + 1e-9 * budget.abs().max(1.0) && total > best_total + TIE {
            best_total = total;
            best = f;
        }
        let mut pos = servers;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            if idx[pos] < levels[pos] {
                idx[pos] += 1;
                for later in idx.iter_mut().skip(pos + 1) {
                    *later = 0;
                }
                break;
            }
        }
    }
}

struct Search<'a> {
    instance: &'a RftaInstance,
    opts: &'a [DeviceOptions],
    /// Best achievable gain from device `i` onward, ignoring capacity.
    suffix_bound: Vec<f64>,
    used: Vec<Vec<f64>>,
    choice: Vec<usize>,
    best_gain: f64,
    best_choice: Option<Vec<usize>>,
    nodes: u64,
}

impl Search<'_> {
    fn fits(&self, i: usize, f: &[f64]) -> bool {
        let x = &self.instance.devices[i].demand;
        f.iter().enumerate().all(|(j, &fj)| {
            fj == 0.0
                || x.iter()
                    .zip(&self.used[j])
                    .zip(self.instance.capacities[j].iter())
                    .all(|((&xk, &u), &c)| u + fj * xk <= c + 1e-9 * c.max(1.0))
        })
    }

    fn apply(&mut self, i: usize, f: &[f64], sign: f64) {
        let x = &self.instance.devices[i].demand;
        for (j, &fj) in f.iter().enumerate() {
            if fj != 0.0 {
                for (u, &xk) in self.used[j].iter_mut().zip(x.iter()) {
                    *u += sign * fj * xk;
                }
            }
        }
    }

    fn dfs(&mut self, i: usize, acc: f64) {
        self.nodes += 1;
        if i == self.opts.len() {
            if self.best_choice.is_none() || acc > self.best_gain + TIE {
                self.best_gain = acc;
                self.best_choice = Some(self.choice.clone());
            }
            return;
        }
        if self.best_choice.is_some() && acc + self.suffix_bound[i] <= self.best_gain + TIE {
            return;
        }
        for o in 0..self.opts[i].gains.len() {
            let f = &self.opts[i].fractions[o];
            if !self.fits(i, f) {
                continue;
            }
            let f = f.clone();
            self.apply(i, &f, 1.0);
            self.choice[i] = o;
            self.dfs(i + 1, acc + self.opts[i].gains[o]);
            self.apply(i, &f, -1.0);
        }
    }
}

/// Best total gain over the demand-fraction grid, with ties resolved toward
/// the lexicographically first allocation.
pub fn exhaustive_oracle(instance: &RftaInstance, budgets: &[f64], grid_step: f64, mode: ExecMode) -> Result<OracleResult, RftaError> {
    let opts = all_options(instance, budgets, grid_step)?;
    let n = opts.len();
    let mut suffix_bound = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_bound[i] = suffix_bound[i + 1] + opts[i].gains.iter().copied().fold(0.0, f64::max);
    }
    let fresh = || Search {
        instance,
        opts: &opts,
        suffix_bound: suffix_bound.clone(),
        used: vec![vec![0.0; instance.types()]; instance.servers()],
        choice: vec![0; n],
        best_gain: 0.0,
        best_choice: None,
        nodes: 0,
    };
    let (gain, choice, nodes) = if n == 0 {
        (0.0, Vec::new(), 1)
    } else {
        let branches = map_range(mode, opts[0].gains.len(), |o| {
            let mut s = fresh();
            s.nodes = 1;
            let f = opts[0].fractions[o].clone();
            if s.fits(0, &f) {
                s.apply(0, &f, 1.0);
                s.choice[0] = o;
                s.dfs(1, opts[0].gains[o]);
            }
            (s.best_gain, s.best_choice, s.nodes)
        });
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut nodes = 0;
        for (g, c, visited) in branches {
            nodes += visited;
            if let Some(c) = c {
                if best.as_ref().map_or(true, |(bg, _)| g > bg + TIE) {
                    best = Some((g, c));
                }
            }
        }
        let (g, c) = best.expect("the all-zero allocation is always admissible");
        (g, c, nodes)
    };
    let fractions: Vec<Vec<f64>> = if n == 0 {
        Vec::new()
    } else {
        choice.iter().enumerate().map(|(i, &o)| opts[i].fractions[o].clone()).collect()
    };
    let allocation = instance.allocation_from_fractions(&fractions);
    Ok(OracleResult { fractions, allocation, gain, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfta::{feasible, gain, CostMatrix, DeviceSpec, GainMode, ResourceVector};

    fn rv(v: &[f64]) -> ResourceVector {
        ResourceVector::new(v.to_vec()).unwrap()
    }

    fn device(demand: &[f64], cap: Option<f64>) -> DeviceSpec {
        DeviceSpec { demand: rv(demand), gamma: 1.0, xi: 1.0, data_size: 1.0, max_requests: cap }
    }

    fn two_by_two() -> RftaInstance {
        RftaInstance {
            devices: vec![device(&[0.6, 0.2], Some(1.0)), device(&[0.3, 0.5], Some(1.0))],
            capacities: vec![rv(&[0.5, 0.5]), rv(&[0.8, 0.4])],
            costs: CostMatrix::new(vec![vec![1.0, 1.2], vec![0.7, 1.5]]).unwrap(),
            tau: vec![1.0; 2],
            units: vec![1.0; 2],
        }
    }

    /// Plain enumeration over every per-device grid point, written without
    /// reference to the search above.
    fn brute_force(inst: &RftaInstance, budgets: &[f64], step: f64) -> f64 {
        let levels = (1.0 / step).round() as usize;
        let (n, jn) = (inst.devices.len(), inst.servers());
        let digits = n * jn;
        let total = (levels + 1).pow(digits as u32);
        let mut best = 0.0f64;
        for code in 0..total {
            let mut c = code;
            let mut fr = vec![vec![0.0; jn]; n];
            for row in fr.iter_mut() {
                for f in row.iter_mut() {
                    *f = (c % (levels + 1)) as f64 * step;
                    c /= levels + 1;
                }
            }
            if fr.iter().zip(&inst.devices).any(|(r, d)| r.iter().sum::<f64>() > d.max_requests.unwrap_or(f64::INFINITY) + 1e-9) {
                continue;
            }
            let y = inst.allocation_from_fractions(&fr);
            if !feasible(&y, inst, budgets).unwrap().is_empty() {
                continue;
            }
            let g: f64 = (0..n).map(|i| gain(y.device(i), &inst.devices[i].demand, GainMode::Continuous).unwrap()).sum();
            best = best.max(g);
        }
        best
    }

    #[test]
    fn single_device_exact_budget() {
        let inst = RftaInstance {
            devices: vec![device(&[0.5, 0.5], Some(1.0))],
            capacities: vec![rv(&[1.0, 1.0])],
            costs: CostMatrix::new(vec![vec![1.0, 1.0]]).unwrap(),
            tau: vec![1.0; 2],
            units: vec![1.0; 2],
        };
        let r = exhaustive_oracle(&inst, &[1.0], 0.1, ExecMode::Sequential).unwrap();
        assert!((r.gain - 1.0).abs() < 1e-12);
        assert_eq!(r.allocation.row(0, 0), &[0.5, 0.5]);
    }

    #[test]
    fn zero_budget_gets_nothing() {
        let inst = two_by_two();
        let r = exhaustive_oracle(&inst, &[0.0, 0.0], 0.25, ExecMode::Sequential).unwrap();
        assert_eq!(r.gain, 0.0);
        assert!(r.allocation.is_empty_for(0) && r.allocation.is_empty_for(1));
    }

    #[test]
    fn matches_brute_force_on_two_by_two() {
        let inst = two_by_two();
        for budgets in [[1.0, 1.0], [0.5, 2.0], [0.3, 0.3], [5.0, 5.0]] {
            let r = exhaustive_oracle(&inst, &budgets, 0.25, ExecMode::Sequential).unwrap();
            let b = brute_force(&inst, &budgets, 0.25);
            assert!((r.gain - b).abs() < 1e-9, "budgets {budgets:?}: oracle {} brute {b}", r.gain);
            assert!(feasible(&r.allocation, &inst, &budgets).unwrap().is_empty());
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let inst = two_by_two();
        let a = exhaustive_oracle(&inst, &[1.0, 1.0], 0.25, ExecMode::Sequential).unwrap();
        let b = exhaustive_oracle(&inst, &[1.0, 1.0], 0.25, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let inst = RftaInstance {
            devices: vec![device(&[1.0], Some(1.0))],
            capacities: vec![rv(&[1.0]), rv(&[1.0])],
            costs: CostMatrix::new(vec![vec![1.0], vec![1.0]]).unwrap(),
            tau: vec![1.0],
            units: vec![1.0],
        };
        let r = exhaustive_oracle(&inst, &[1.0], 0.5, ExecMode::Sequential).unwrap();
        assert_eq!(r.fractions, vec![vec![0.0, 1.0]]);
    }

    #[test]
    fn request_oracle_prefers_largest_feasible_total() {
        let costs = CostMatrix::new(vec![vec![1.0], vec![1.0]]).unwrap();
        let f = oracle_request(&[1.0], 10.0, &[vec![0.3], vec![0.6]], &costs, 0.25, 1.0).unwrap();
        assert_eq!(f, vec![0.25, 0.5]);
        let f = oracle_request(&[1.0], 0.5, &[vec![1.0], vec![1.0]], &costs, 0.25, 1.0).unwrap();
        assert_eq!(f, vec![0.0, 0.5]);
        assert_eq!(oracle_request(&[1.0], 0.0, &[vec![1.0], vec![1.0]], &costs, 0.25, 1.0).unwrap(), vec![0.0, 0.0]);
        let many = CostMatrix::new(vec![vec![1.0]; 12]).unwrap();
        assert!(oracle_request(&[1.0], 1.0, &vec![vec![1.0]; 12], &many, 0.25, 1.0).is_err());
    }

    #[test]
    fn refuses_oversized_search() {
        let inst = RftaInstance {
            devices: vec![device(&[0.1], None); 12],
            capacities: vec![rv(&[10.0]); 4],
            costs: CostMatrix::new(vec![vec![1.0]; 4]).unwrap(),
            tau: vec![1.0],
            units: vec![1.0],
        };
        let err = exhaustive_oracle(&inst, &[100.0; 12], 0.1, ExecMode::Sequential).unwrap_err();
        assert!(matches!(err, RftaError::SearchCapExceeded { .. }));
        assert!(exhaustive_oracle(&inst, &[1.0; 12], 0.0, ExecMode::Sequential).is_err());
    }
}
