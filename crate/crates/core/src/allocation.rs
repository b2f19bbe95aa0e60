//! Concave allocation of a net quantity `v` between battery power and device
//! consumption.
//!
//! For one step `t` the helper value is
//!
//! ```text
//! h(v) = max { U(d) + γ e :  1'd + e = v,  d in its boxes,  -e̲ <= e <= ē }
//! ```
//!
//! With quadratic device utilities every device contributes a linearly
//! decreasing marginal-value segment (from `α - β d_min` down to
//! `α - β d_max`) and the battery contributes a flat segment at the salvage
//! rate `γ` of width `e̲ + ē`. The maximizer is the water-filling allocation:
//! quantity goes to sources in order of marginal value until the total is
//! `v`. `h` is concave and piecewise quadratic; its derivative `h'` is the
//! water level, piecewise linear and nonincreasing.
//!
//! Conventions on flat stretches of `h'`:
//! - ties at the battery's flat marginal `γ` allocate the battery last, so
//!   [`AllocationProblem::h_prime_inv`] returns the right endpoint of a flat
//!   set (the largest `v` with `h'(v) >= price`);
//! - [`AllocationProblem::h_prime`] returns the left limit at breakpoints
//!   (the largest supergradient element).

use crate::error::{Error, Result};
use crate::model::{clamp, BatterySpec, DeviceFleet};

/// Result of splitting `v` into battery power and a demand bundle.
#[derive(Debug, Clone)]
pub struct AllocationResult {
    /// Battery power `e` (positive charges).
    pub battery: f64,
    /// Per-device consumption.
    pub demand: Vec<f64>,
    /// Objective `U(d) + γ e = h(v)`.
    pub value: f64,
    /// Water level `h'(v)`.
    pub marginal: f64,
}

/// One marginal-value segment of the water-filling profile, kept for
/// reporting and debugging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalSegment {
    /// Device index, or `None` for the battery segment.
    pub source: Option<usize>,
    pub price_high: f64,
    pub price_low: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy)]
struct DeviceSlice {
    /// Marginal value at the lower consumption bound.
    top: f64,
    beta: f64,
    d_min: f64,
    width: f64,
}

/// The single-step allocation problem, with breakpoints preprocessed so that
/// evaluations cost `O(log K)` after an `O(K log K)` build.
#[derive(Debug, Clone)]
pub struct AllocationProblem {
    devices: Vec<DeviceSlice>,
    salvage: f64,
    charge_limit: f64,
    discharge_limit: f64,
    /// Mandatory consumption `Σ d_min`.
    base_demand: f64,
    /// Utility of the mandatory consumption.
    base_utility: f64,
    /// Breakpoint prices, strictly decreasing.
    bp_price: Vec<f64>,
    /// Device mass with marginal value >= bp_price[i].
    bp_mass: Vec<f64>,
    /// Device mass with marginal value >= salvage.
    mass_at_salvage: f64,
}

const DOMAIN_TOL: f64 = 1e-9;

impl AllocationProblem {
    /// Builds the allocation problem for step `t` of a fleet/battery pair.
    pub fn at_step(
        fleet: &DeviceFleet,
        battery: &BatterySpec,
        salvage: f64,
        t: usize,
    ) -> Result<Self> {
        if t >= fleet.horizon() {
            return Err(Error::out_of_range(
                "step index",
                format!("t={t} but fleet horizon is {}", fleet.horizon()),
            ));
        }
        let mut devices = Vec::with_capacity(fleet.len());
        let mut base_demand = 0.0;
        let mut base_utility = 0.0;
        for dev in fleet.devices() {
            let width = dev.d_max[t] - dev.d_min[t];
            base_demand += dev.d_min[t];
            base_utility += dev.utility(t, dev.d_min[t]);
            devices.push(DeviceSlice {
                top: dev.marginal(t, dev.d_min[t]),
                beta: dev.beta[t],
                d_min: dev.d_min[t],
                width,
            });
        }

        // Collect breakpoint prices: each device's segment endpoints. Zero
        // width devices contribute nothing.
        let mut prices: Vec<f64> = Vec::with_capacity(2 * devices.len());
        for d in &devices {
            if d.width > 0.0 {
                prices.push(d.top);
                prices.push(d.top - d.beta * d.width);
            }
        }
        prices.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prices.dedup();

        let mass_fn = |p: f64| -> f64 {
            devices
                .iter()
                .map(|d| clamp((d.top - p) / d.beta, 0.0, d.width))
                .sum()
        };
        let bp_mass: Vec<f64> = prices.iter().map(|&p| mass_fn(p)).collect();
        let mass_at_salvage = mass_fn(salvage);

        Ok(Self {
            devices,
            salvage,
            charge_limit: battery.charge_limit,
            discharge_limit: battery.discharge_limit,
            base_demand,
            base_utility,
            bp_price: prices,
            bp_mass,
            mass_at_salvage,
        })
    }

    /// Lower end of the domain: `-e̲` plus mandatory consumption.
    pub fn v_min(&self) -> f64 {
        -self.discharge_limit + self.base_demand
    }

    /// Upper end of the domain: `ē + 1'd̄`.
    pub fn v_max(&self) -> f64 {
        self.charge_limit + self.base_demand + self.free_device_mass()
    }

    pub fn salvage(&self) -> f64 {
        self.salvage
    }

    fn free_device_mass(&self) -> f64 {
        self.devices.iter().map(|d| d.width).sum()
    }

    fn battery_width(&self) -> f64 {
        self.charge_limit + self.discharge_limit
    }

    fn check_domain(&self, v: f64) -> Result<f64> {
        if !(v >= self.v_min() - DOMAIN_TOL && v <= self.v_max() + DOMAIN_TOL) {
            return Err(Error::out_of_range(
                "allocation quantity",
                format!("v={v} not in [{}, {}]", self.v_min(), self.v_max()),
            ));
        }
        Ok(clamp(v, self.v_min(), self.v_max()))
    }

    /// Device mass with marginal value >= `p`.
    fn device_mass(&self, p: f64) -> f64 {
        self.devices
            .iter()
            .map(|d| clamp((d.top - p) / d.beta, 0.0, d.width))
            .sum()
    }

    /// Highest marginal value of any source.
    fn top_marginal(&self) -> f64 {
        self.bp_price
            .first()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
            .max(self.salvage)
    }

    /// Largest price `λ` with device mass exactly `m`, by breakpoint scan.
    /// `m` must lie in `[0, Σ widths]`.
    fn invert_device_mass(&self, m: f64) -> f64 {
        debug_assert!(!self.bp_price.is_empty());
        if m <= 0.0 {
            return self.bp_price[0];
        }
        let n = self.bp_price.len();
        // First breakpoint with mass >= m; masses are nondecreasing.
        let mut i = match self
            .bp_mass
            .binary_search_by(|mu| mu.partial_cmp(&m).unwrap())
        {
            Ok(idx) => idx,
            Err(idx) => idx,
        };
        // binary_search may land inside a run of equal masses; walk to the
        // first index with mass >= m.
        while i > 0 && self.bp_mass[i - 1] >= m {
            i -= 1;
        }
        if i >= n {
            return self.bp_price[n - 1];
        }
        if i == 0 {
            return self.bp_price[0];
        }
        let (p_hi, p_lo) = (self.bp_price[i - 1], self.bp_price[i]);
        let (m_hi, m_lo) = (self.bp_mass[i - 1], self.bp_mass[i]);
        if m_lo <= m_hi {
            // Flat stretch of the mass profile; the largest solving price is
            // the upper end.
            return p_hi;
        }
        p_hi - (m - m_hi) * (p_hi - p_lo) / (m_lo - m_hi)
    }

    /// Water level at total quantity `v` (left limit at breakpoints).
    pub fn h_prime(&self, v: f64) -> Result<f64> {
        let v = self.check_domain(v)?;
        let mass = (v - self.v_min()).max(0.0);
        if mass <= 0.0 {
            return Ok(self.top_marginal());
        }
        if self.bp_price.is_empty() {
            // Battery-only profile.
            return Ok(self.salvage);
        }
        if mass <= self.mass_at_salvage {
            Ok(self.invert_device_mass(mass))
        } else if mass <= self.mass_at_salvage + self.battery_width() {
            Ok(self.salvage)
        } else {
            Ok(self.invert_device_mass(mass - self.battery_width()))
        }
    }

    /// Largest `v` with `h'(v) >= price`, clipped to the domain. On flat
    /// stretches this is the right endpoint, which keeps the inverse
    /// single-valued and nonincreasing in `price`.
    pub fn h_prime_inv(&self, price: f64) -> f64 {
        let mut mass = self.device_mass(price);
        if price <= self.salvage {
            mass += self.battery_width();
        }
        clamp(self.v_min() + mass, self.v_min(), self.v_max())
    }

    /// Optimal split of `v` into `(e, d)`.
    pub fn split(&self, v: f64) -> Result<AllocationResult> {
        let v = self.check_domain(v)?;
        let level = self.h_prime(v)?;
        let mut demand = Vec::with_capacity(self.devices.len());
        let mut total_d = 0.0;
        let mut value = 0.0;
        for d in &self.devices {
            let fill = clamp((d.top - level) / d.beta, 0.0, d.width);
            let dk = d.d_min + fill;
            // U(d_min + x) - U(d_min) = top*x - beta*x^2/2
            value += d.top * fill - 0.5 * d.beta * fill * fill;
            total_d += dk;
            demand.push(dk);
        }
        // The battery absorbs the remainder: its whole box when the level is
        // away from γ, the residual of the flat segment when level == γ.
        // Clamping only ever moves floating-point dust.
        let battery = clamp(v - total_d, -self.discharge_limit, self.charge_limit);
        value += self.base_utility + self.salvage * battery;
        Ok(AllocationResult {
            battery,
            demand,
            value,
            marginal: level,
        })
    }

    /// Optimal objective `h(v)`.
    pub fn h_value(&self, v: f64) -> Result<f64> {
        Ok(self.split(v)?.value)
    }

    /// The marginal-value segments in water-filling order, for reporting.
    pub fn segments(&self) -> Vec<MarginalSegment> {
        let mut segs: Vec<MarginalSegment> = self
            .devices
            .iter()
            .enumerate()
            .filter(|(_, d)| d.width > 0.0)
            .map(|(k, d)| MarginalSegment {
                source: Some(k),
                price_high: d.top,
                price_low: d.top - d.beta * d.width,
                width: d.width,
            })
            .collect();
        if self.battery_width() > 0.0 {
            segs.push(MarginalSegment {
                source: None,
                price_high: self.salvage,
                price_low: self.salvage,
                width: self.battery_width(),
            });
        }
        segs.sort_by(|a, b| {
            b.price_high
                .partial_cmp(&a.price_high)
                .unwrap()
                .then(b.price_low.partial_cmp(&a.price_low).unwrap())
        });
        segs
    }
}
