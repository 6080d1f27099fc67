use super::{AllocationMatrix, ResourceVector, RftaError, RftaInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMode {
    /// Fractional served-request count.
    #[default]
    Continuous,
    /// Whole served requests only.
    Floor,
}

/// Served-request count `sum_j min_k y_jk / x_k` over types with positive
/// demand. `rows` holds one `demand.len()`-wide block per server.
pub fn gain(rows: &[f64], demand: &[f64], mode: GainMode) -> Result<f64, RftaError> {
    let k = demand.len();
    if k == 0 || rows.len() % k != 0 {
        return Err(RftaError::Shape(format!("{} amounts for {k} resource types", rows.len())));
    }
    if !demand.iter().any(|&x| x > 0.0) {
        return Err(RftaError::ZeroDemand);
    }
    let g: f64 = rows
        .chunks(k)
        .map(|y| {
            y.iter()
                .zip(demand)
                .filter(|(_, x)| **x > 0.0)
                .map(|(y, x)| y / x)
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .sum();
    Ok(match mode {
        GainMode::Continuous => g,
        GainMode::Floor => (g + 1e-9).floor(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Spending exceeds the device budget.
    Budget { device: usize },
    /// Total holdings exceed a server's capacity for one type.
    Capacity { server: usize, rtype: usize },
    /// A used server supplies a demanded type in a non-positive amount.
    Positivity { device: usize, server: usize, rtype: usize },
    /// A type is allocated where its unit cost is zero.
    ZeroCost { device: usize, server: usize, rtype: usize },
}

/// A violated constraint and its slack (negative means violated by that much).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub slack: f64,
}

fn tolerance(scale: f64) -> f64 {
    1e-9 * scale.abs().max(1.0)
}

/// Every constraint `alloc` violates for `instance` under `budgets`.
pub fn feasible(alloc: &AllocationMatrix, instance: &RftaInstance, budgets: &[f64]) -> Result<Vec<Violation>, RftaError> {
    let (n, j_count, k_count) = (instance.devices.len(), instance.servers(), instance.types());
    if alloc.devices() != n || alloc.servers() != j_count || alloc.types() != k_count || budgets.len() != n {
        return Err(RftaError::Shape("allocation, instance and budgets disagree".into()));
    }
    let mut out = Vec::new();
    for (i, &b) in budgets.iter().enumerate() {
        let slack = b - alloc.device_cost(i, &instance.costs);
        if slack < -tolerance(b) {
            out.push(Violation { kind: ViolationKind::Budget { device: i }, slack });
        }
    }
    for (j, cap) in instance.capacities.iter().enumerate() {
        for (k, &c) in cap.iter().enumerate() {
            let held: f64 = (0..n).map(|i| alloc.get(i, j, k)).sum();
            let slack = c - held;
            if slack < -tolerance(c) {
                out.push(Violation { kind: ViolationKind::Capacity { server: j, rtype: k }, slack });
            }
        }
    }
    for (i, d) in instance.devices.iter().enumerate() {
        for j in 0..j_count {
            let row = alloc.row(i, j);
            if !row.iter().any(|&v| v != 0.0) {
                continue;
            }
            for (k, &y) in row.iter().enumerate() {
                if (d.demand[k] > 0.0 && y <= 0.0) || y < 0.0 {
                    out.push(Violation { kind: ViolationKind::Positivity { device: i, server: j, rtype: k }, slack: y });
                }
                if y > 0.0 && instance.costs.get(j, k) == 0.0 {
                    out.push(Violation { kind: ViolationKind::ZeroCost { device: i, server: j, rtype: k }, slack: -y });
                }
            }
        }
    }
    Ok(out)
}

/// `min(1, min_{i != q} Z_i(y_i) / Z_i((B_i / B_q) y_q))`, skipping pairs
/// with `B_q = 0` or an empty rescaled bundle.
pub fn envy_freeness_index(alloc: &AllocationMatrix, budgets: &[f64], demands: &[ResourceVector]) -> Result<f64, RftaError> {
    let n = alloc.devices();
    if budgets.len() != n || demands.len() != n {
        return Err(RftaError::Shape("allocation, budgets and demands disagree".into()));
    }
    let own: Vec<f64> = (0..n)
        .map(|i| gain(alloc.device(i), &demands[i], GainMode::Continuous))
        .collect::<Result<_, _>>()?;
    let mut worst: Option<f64> = None;
    for i in 0..n {
        for q in 0..n {
            if i == q || !(budgets[q] > 0.0) {
                continue;
            }
            let envied = budgets[i] / budgets[q] * gain(alloc.device(q), &demands[i], GainMode::Continuous)?;
            if envied <= 0.0 {
                continue;
            }
            let ratio = own[i] / envied;
            worst = Some(worst.map_or(ratio, |w| w.min(ratio)));
        }
    }
    worst.map(|w| w.min(1.0)).ok_or(RftaError::NoValidPairs)
}
