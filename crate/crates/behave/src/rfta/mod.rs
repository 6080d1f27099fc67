//! Budget-constrained multi-resource allocation: budgets from behavior
//! indices, Leontief gain, constraint checking, the budget-scaled
//! envy-freeness index, and reference allocators.
//!
//! Every allocator here hands out balanced bundles, so a device's share of a
//! server is fully described by a fraction `f` of its demand vector.

mod baseline;
mod budget;
mod gain;
mod oracle;

pub use baseline::{greedy_allocate, greedy_request, random_allocate, random_request};
pub use budget::{device_budget, normalized_budget, reference_cost, ultimate_budget};
pub use gain::{envy_freeness_index, feasible, gain, GainMode, Violation, ViolationKind};
pub use oracle::{exhaustive_oracle, oracle_request, oracle_search_size, request_search_size, OracleResult, ORACLE_NODE_CAP};

use std::ops::Deref;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RftaError {
    #[error("{what} must be nonnegative and finite, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("BRDI {0} lies outside [0, 1]")]
    GammaOutOfRange(f64),
    #[error("demand vector has no positive entry")]
    ZeroDemand,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no device pair with a positive budget and a comparable bundle")]
    NoValidPairs,
    #[error("search space of {size:.3e} nodes exceeds the cap of {cap:.0e}")]
    SearchCapExceeded { size: f64, cap: f64 },
    #[error("invalid grid step {0}")]
    InvalidGrid(f64),
}

/// Nonnegative amounts indexed by resource type.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceVector(Vec<f64>);

impl ResourceVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RftaError> {
        if let Some(&v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(RftaError::Negative { what: "resource amount", value: v });
        }
        Ok(Self(values))
    }

    pub fn zeros(types: usize) -> Self {
        Self(vec![0.0; types])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn has_positive(&self) -> bool {
        self.0.iter().any(|&v| v > 0.0)
    }

    pub fn scaled(&self, f: f64) -> Vec<f64> {
        self.0.iter().map(|v| v * f).collect()
    }
}

impl Deref for ResourceVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Unit cost `c[j][k]` of resource type `k` at server `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    servers: usize,
    types: usize,
    c: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, RftaError> {
        let servers = rows.len();
        let types = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != types) {
            return Err(RftaError::Shape("cost rows differ in length".into()));
        }
        let c: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(&v) = c.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(RftaError::Negative { what: "unit cost", value: v });
        }
        Ok(Self { servers, types, c })
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.c[j * self.types + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.c[j * self.types..(j + 1) * self.types]
    }

    /// Cost of `amounts` bought at server `j`.
    pub fn bundle_cost(&self, j: usize, amounts: &[f64]) -> f64 {
        self.row(j).iter().zip(amounts).map(|(c, y)| c * y).sum()
    }

    /// Whether every type demanded by `demand` can be bought at server `j`.
    pub fn sells(&self, j: usize, demand: &[f64]) -> bool {
        self.row(j).iter().zip(demand).all(|(&c, &x)| x <= 0.0 || c > 0.0)
    }
}

/// Amounts `y[i][j][k]` held by device `i` at server `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMatrix {
    devices: usize,
    servers: usize,
    types: usize,
    y: Vec<f64>,
}

impl AllocationMatrix {
    pub fn zeros(devices: usize, servers: usize, types: usize) -> Self {
        Self { devices, servers, types, y: vec![0.0; devices * servers * types] }
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn types(&self) -> usize {
        self.types
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.servers + j) * self.types + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.y[self.idx(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let at = self.idx(i, j, k);
        self.y[at] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, amounts: &[f64]) {
        let at = self.idx(i, j, 0);
        for (y, a) in self.y[at..at + self.types].iter_mut().zip(amounts) {
            *y += a;
        }
    }

    /// Device `i`'s amounts at server `j`.
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let at = self.idx(i, j, 0);
        &self.y[at..at + self.types]
    }

    /// Device `i`'s amounts at every server, server-major.
    pub fn device(&self, i: usize) -> &[f64] {
        let at = self.idx(i, 0, 0);
        &self.y[at..at + self.servers * self.types]
    }

    pub fn device_cost(&self, i: usize, costs: &CostMatrix) -> f64 {
        (0..self.servers).map(|j| costs.bundle_cost(j, self.row(i, j))).sum()
    }

    pub fn is_empty_for(&self, i: usize) -> bool {
        self.device(i).iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub demand: ResourceVector,
    pub gamma: f64,
    pub xi: f64,
    pub data_size: f64,
    /// Upper bound on the demand multiples one device may receive in total.
    pub max_requests: Option<f64>,
}

/// A static allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RftaInstance {
    pub devices: Vec<DeviceSpec>,
    pub capacities: Vec<ResourceVector>,
    pub costs: CostMatrix,
    /// Processing factor per resource type.
    pub tau: Vec<f64>,
    /// Processing units per resource type.
    pub units: Vec<f64>,
}

impl RftaInstance {
    pub fn types(&self) -> usize {
        self.costs.types()
    }

    pub fn servers(&self) -> usize {
        self.capacities.len()
    }

    pub fn validate(&self) -> Result<(), RftaError> {
        let (j, k) = (self.servers(), self.types());
        if self.costs.servers() != j {
            return Err(RftaError::Shape(format!("{} cost rows for {j} servers", self.costs.servers())));
        }
        if self.tau.len() != k || self.units.len() != k {
            return Err(RftaError::Shape("tau and units need one entry per resource type".into()));
        }
        for cap in &self.capacities {
            if cap.len() != k {
                return Err(RftaError::Shape("capacity vector length".into()));
            }
            if let Some(&v) = cap.iter().find(|v| **v <= 0.0) {
                return Err(RftaError::NonPositive { what: "capacity", value: v });
            }
        }
        for d in &self.devices {
            if d.demand.len() != k {
                return Err(RftaError::Shape("demand vector length".into()));
            }
            if !d.demand.has_positive() {
                return Err(RftaError::ZeroDemand);
            }
            if !(0.0..=1.0).contains(&d.gamma) {
                return Err(RftaError::GammaOutOfRange(d.gamma));
            }
            if !(d.xi > 0.0) {
                return Err(RftaError::NonPositive { what: "priority", value: d.xi });
            }
        }
        Ok(())
    }

    /// Per-device budgets in cost units: the normalized budget times the
    /// cost of the device's demand at its cheapest server.
    pub fn budgets(&self) -> Result<Vec<f64>, RftaError> {
        self.validate()?;
        self.devices
            .iter()
            .map(|d| {
                let b = normalized_budget(d.gamma, d.xi, d.data_size, &self.tau, &self.units)?;
                Ok(b * reference_cost(&d.demand, &self.costs).unwrap_or(0.0))
            })
            .collect()
    }

    /// Turns per-device, per-server demand fractions into an allocation.
    pub fn allocation_from_fractions(&self, fractions: &[Vec<f64>]) -> AllocationMatrix {
        let mut y = AllocationMatrix::zeros(self.devices.len(), self.servers(), self.types());
        for (i, (d, fs)) in self.devices.iter().zip(fractions).enumerate() {
            for (j, &f) in fs.iter().enumerate() {
                if f > 0.0 {
                    y.add(i, j, &d.demand.scaled(f));
                }
            }
        }
        y
    }
}

/// Largest fraction of `demand` that fits into `available`.
pub fn fitting_fraction(demand: &[f64], available: &[f64]) -> f64 {
    demand
        .iter()
        .zip(available)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, a)| (a / x).max(0.0))
        .fold(f64::INFINITY, f64::min)
}
