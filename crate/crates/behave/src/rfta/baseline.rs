use std::cmp::Ordering;

use rand::Rng;

use super::{fitting_fraction, AllocationMatrix, CostMatrix, RftaInstance};

const EPS: f64 = 1e-12;
const RANDOM_ATTEMPTS: usize = 32;

/// Balanced bundles bought from the cheapest servers first, ties broken by
/// larger free share and then by index. Returns per-server demand fractions.
pub fn greedy_request(demand: &[f64], budget: f64, available: &[Vec<f64>], costs: &CostMatrix, max_fraction: f64) -> Vec<f64> {
    let servers = available.len();
    let mut fractions = vec![0.0; servers];
    if !(budget > 0.0) {
        return fractions;
    }
    let unit: Vec<f64> = (0..servers).map(|j| costs.bundle_cost(j, demand)).collect();
    let fit: Vec<f64> = available.iter().map(|a| fitting_fraction(demand, a)).collect();
    let mut order: Vec<usize> = (0..servers).filter(|&j| costs.sells(j, demand)).collect();
    order.sort_by(|&a, &b| {
        unit[a]
            .partial_cmp(&unit[b])
            .unwrap_or(Ordering::Equal)
            .then(fit[b].partial_cmp(&fit[a]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    let (mut money, mut room) = (budget, max_fraction);
    for j in order {
        if money <= EPS || room <= EPS {
            break;
        }
        let f = (money / unit[j]).min(fit[j]).min(room);
        if f > EPS {
            fractions[j] = f;
            money -= f * unit[j];
            room -= f;
        }
    }
    fractions
}

/// A random server and a random nonzero grid fraction, redrawn until the
/// pair is affordable and fits; nothing after repeated rejections.
pub fn random_request<R: Rng + ?Sized>(
    demand: &[f64],
    budget: f64,
    available: &[Vec<f64>],
    costs: &CostMatrix,
    grid: &[f64],
    max_fraction: f64,
    rng: &mut R,
) -> Vec<f64> {
    let servers = available.len();
    let mut fractions = vec![0.0; servers];
    let choices: Vec<f64> = grid.iter().copied().filter(|&f| f > 0.0).collect();
    if !(budget > 0.0) || choices.is_empty() || servers == 0 {
        return fractions;
    }
    for _ in 0..RANDOM_ATTEMPTS {
        let j = rng.gen_range(0..servers);
        let f = choices[rng.gen_range(0..choices.len())];
        let affordable = f * costs.bundle_cost(j, demand) <= budget * (1.0 + 1e-9);
        if costs.sells(j, demand) && affordable && f <= fitting_fraction(demand, &available[j]) + 1e-12 && f <= max_fraction + 1e-12 {
            fractions[j] = f;
            break;
        }
    }
    fractions
}

fn commit(instance: &RftaInstance, i: usize, fractions: &[f64], available: &mut [Vec<f64>], y: &mut AllocationMatrix) {
    let demand = &instance.devices[i].demand;
    for (j, &f) in fractions.iter().enumerate() {
        if f > 0.0 {
            let amounts = demand.scaled(f);
            for (a, v) in available[j].iter_mut().zip(&amounts) {
                *a = (*a - v).max(0.0);
            }
            y.add(i, j, &amounts);
        }
    }
}

/// Devices in descending `xi * gamma` order each run [`greedy_request`].
pub fn greedy_allocate(instance: &RftaInstance, budgets: &[f64]) -> AllocationMatrix {
    let mut order: Vec<usize> = (0..instance.devices.len()).collect();
    let key = |i: usize| instance.devices[i].xi * instance.devices[i].gamma;
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut available: Vec<Vec<f64>> = instance.capacities.iter().map(|c| c.to_vec()).collect();
    let mut y = AllocationMatrix::zeros(instance.devices.len(), instance.servers(), instance.types());
    for i in order {
        let d = &instance.devices[i];
        let fr = greedy_request(&d.demand, budgets[i], &available, &instance.costs, d.max_requests.unwrap_or(f64::INFINITY));
        commit(instance, i, &fr, &mut available, &mut y);
    }
    y
}

/// Devices in index order each run [`random_request`].
pub fn random_allocate<R: Rng + ?Sized>(instance: &RftaInstance, budgets: &[f64], grid: &[f64], rng: &mut R) -> AllocationMatrix {
    let mut available: Vec<Vec<f64>> = instance.capacities.iter().map(|c| c.to_vec()).collect();
    let mut y = AllocationMatrix::zeros(instance.devices.len(), instance.servers(), instance.types());
    for (i, d) in instance.devices.iter().enumerate() {
        let fr = random_request(&d.demand, budgets[i], &available, &instance.costs, grid, d.max_requests.unwrap_or(1.0), rng);
        commit(instance, i, &fr, &mut available, &mut y);
    }
    y
}
