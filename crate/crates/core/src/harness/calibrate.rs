//! Quadratic-utility calibration from a baseline operating point and a price
//! elasticity.
//!
//! With linear demand `d(p)` through the baseline `(p₀, d₀_t)` at elasticity
//! `ε = (dd/dp)(p/d)`, matching marginal utility to price gives
//! `β_t = -p₀ / (ε d₀_t)` and `α_t = p₀ + β_t d₀_t`. The consumption cap is
//! set where marginal utility reaches zero, `d̄_t = α_t / β_t`.

use crate::error::{Error, Result};
use crate::model::{Device, DeviceFleet};

const BETA_MIN: f64 = 1e-6;

/// Builds a one-device fleet representing the building's aggregate flexible
/// demand.
pub fn calibrate_fleet(
    baseline_demand: &[f64],
    baseline_price: f64,
    elasticity: f64,
) -> Result<DeviceFleet> {
    if baseline_demand.is_empty() {
        return Err(Error::invalid("calibration", "empty baseline demand"));
    }
    if !(elasticity < 0.0) {
        return Err(Error::invalid("calibration", "elasticity must be negative"));
    }
    if !(baseline_price > 0.0) {
        return Err(Error::invalid("calibration", "baseline price must be positive"));
    }
    let horizon = baseline_demand.len();
    let mut alpha = Vec::with_capacity(horizon);
    let mut beta = Vec::with_capacity(horizon);
    let mut d_max = Vec::with_capacity(horizon);
    for (t, &d0) in baseline_demand.iter().enumerate() {
        if !(d0 > 0.0) {
            return Err(Error::invalid(
                "calibration",
                format!("baseline demand must be positive at step {t}"),
            ));
        }
        let b = -baseline_price / (elasticity * d0);
        if b < BETA_MIN {
            return Err(Error::invalid(
                "calibration",
                format!("beta = {b:.2e} below {BETA_MIN:.0e} at step {t}; elasticity too large"),
            ));
        }
        let a = baseline_price + b * d0;
        alpha.push(a);
        beta.push(b);
        d_max.push(a / b);
    }
    let device = Device::new(alpha, beta, d_max, vec![0.0; horizon])?;
    DeviceFleet::new(vec![device], horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point_calibration() {
        let fleet = calibrate_fleet(&[1.0], 0.12, -0.1).unwrap();
        let dev = fleet.device(0);
        assert!((dev.beta[0] - 1.2).abs() < 1e-12);
        assert!((dev.alpha[0] - 1.32).abs() < 1e-12);
        // Marginal utility equals the price at the baseline point.
        assert!((dev.marginal(0, 1.0) - 0.12).abs() < 1e-12);
        // Implied elasticity at the baseline: (dd/dp)(p/d) = -p/(β d).
        let eps = -0.12 / (dev.beta[0] * 1.0);
        assert!((eps - (-0.1)).abs() < 1e-12);
    }

    #[test]
    fn extreme_elasticity_is_rejected() {
        assert!(calibrate_fleet(&[1.0], 0.12, -1e9).is_err());
        assert!(calibrate_fleet(&[1.0], 0.12, 0.1).is_err());
        assert!(calibrate_fleet(&[0.0], 0.12, -0.1).is_err());
    }

    #[test]
    fn price_scaling_leaves_chosen_demand_unchanged() {
        let fleet1 = calibrate_fleet(&[0.8], 0.12, -0.1).unwrap();
        let fleet2 = calibrate_fleet(&[0.8], 0.24, -0.1).unwrap();
        // First-order condition α - β d = p has the same root after scaling
        // both the price and the calibrated coefficients by k.
        let d1 = (fleet1.device(0).alpha[0] - 0.12) / fleet1.device(0).beta[0];
        let d2 = (fleet2.device(0).alpha[0] - 0.24) / fleet2.device(0).beta[0];
        assert!((d1 - d2).abs() < 1e-12);
        assert!((d1 - 0.8).abs() < 1e-12);
    }
}
