use super::{CostMatrix, RftaError};

/// Budget of a fully regular device: `xi * sum_k DA / (tau_k * U_k)`.
pub fn ultimate_budget(xi: f64, data_size: f64, tau: &[f64], units: &[f64]) -> Result<f64, RftaError> {
    if tau.len() != units.len() {
        return Err(RftaError::Shape("tau and units differ in length".into()));
    }
    if !(data_size >= 0.0 && data_size.is_finite()) {
        return Err(RftaError::Negative { what: "data size", value: data_size });
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(RftaError::Negative { what: "priority", value: xi });
    }
    let mut sum = 0.0;
    for (&t, &u) in tau.iter().zip(units) {
        if !(t > 0.0) {
            return Err(RftaError::NonPositive { what: "processing factor", value: t });
        }
        if !(u > 0.0) {
            return Err(RftaError::NonPositive { what: "processing units", value: u });
        }
        sum += data_size / (t * u);
    }
    Ok(xi * sum)
}

pub fn device_budget(gamma: f64, b_ultimate: f64) -> Result<f64, RftaError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(RftaError::GammaOutOfRange(gamma));
    }
    if !(b_ultimate >= 0.0 && b_ultimate.is_finite()) {
        return Err(RftaError::Negative { what: "ultimate budget", value: b_ultimate });
    }
    Ok(gamma * b_ultimate)
}

/// Device budget divided by the ultimate budget of a priority-1 device with
/// the same data size, so it lies in `[0, 1]` whenever `xi <= 1`.
pub fn normalized_budget(gamma: f64, xi: f64, data_size: f64, tau: &[f64], units: &[f64]) -> Result<f64, RftaError> {
    let reference = ultimate_budget(1.0, data_size, tau, units)?;
    let raw = device_budget(gamma, ultimate_budget(xi, data_size, tau, units)?)?;
    Ok(if reference > 0.0 { raw / reference } else { 0.0 })
}

/// Cost of one full demand bundle at the cheapest server selling every
/// demanded type, or `None` when no server does.
pub fn reference_cost(demand: &[f64], costs: &CostMatrix) -> Option<f64> {
    (0..costs.servers())
        .filter(|&j| costs.sells(j, demand))
        .map(|j| costs.bundle_cost(j, demand))
        .fold(None, |best, c| Some(best.map_or(c, |b: f64| b.min(c))))
}
