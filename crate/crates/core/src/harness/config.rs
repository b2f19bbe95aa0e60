//! TOML configuration mapped one-to-one onto [`ScenarioSpec`].
//!
//! ```toml
//! initial_soc = 0.0
//! seed = 42
//! forecast_sigma = 0.0
//!
//! [tariff]
//! buy = 0.12            # scalar, or one value per step: [0.12, 0.10, ...]
//! sell = 0.06
//! demand_price = 10.0
//! salvage = 0.09
//! fixed_charge = 0.0
//!
//! [battery]
//! capacity = 5.0
//! charge_limit = 1.0
//! discharge_limit = 1.0
//! eff_charge = 0.95
//! eff_discharge = 0.95
//!
//! [fleet]
//! mode = "calibrated"   # closed-form elasticity calibration
//! elasticity = -0.1
//! baseline_price = 0.12
//! baseline_demand = 1.0 # scalar/array; omit to use the trace demand column
//!
//! # or explicit devices:
//! # [fleet]
//! # mode = "explicit"
//! # [[fleet.device]]
//! # alpha = 1.0
//! # beta = 1.0
//! # d_max = 1.0
//! # d_min = 0.0
//!
//! [trace]
//! # path = "building.csv"   # timestamp,generation_kwh[,demand_kwh]
//! [trace.synthetic]         # used when no path is given
//! peak_generation = 2.0
//! reference_demand = 1.0
//! jitter = 0.0
//!
//! [run]
//! policies = ["lsps", "ratp", "backup"]
//! demand_rule = "myopic_retail"      # or "reference_trace"
//! # sweep_axis = "battery_capacity"  # battery_capacity|salvage|export_rate|peak_price
//! # sweep_values = [5.0, 10.0, 30.0, 50.0]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::baselines::{BaselineConfig, DemandRule};
use crate::error::{Error, Result};
use crate::harness::scenario::{Policy, ScenarioSpec, SweepAxis, SweepPlan};
use crate::harness::synth::synthetic_trace;
use crate::harness::trace::{load_trace, TraceSchema};
use crate::harness::calibrate_fleet;
use crate::model::{BatterySpec, Device, DeviceFleet, ExogenousTrace, TariffSchedule};

/// A scalar broadcast over the horizon, or one value per step.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NumOrSeq {
    Scalar(f64),
    Seq(Vec<f64>),
}

impl NumOrSeq {
    fn to_vec(&self, horizon: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            NumOrSeq::Scalar(x) => Ok(vec![*x; horizon]),
            NumOrSeq::Seq(xs) => {
                if xs.len() != horizon {
                    return Err(Error::Config(format!(
                        "{what} has {} entries, horizon is {horizon}",
                        xs.len()
                    )));
                }
                Ok(xs.clone())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct TariffConfig {
    pub buy: NumOrSeq,
    pub sell: NumOrSeq,
    pub demand_price: f64,
    pub salvage: f64,
    #[serde(default)]
    pub fixed_charge: f64,
}

#[derive(Debug, Deserialize)]
pub struct BatteryConfig {
    pub capacity: f64,
    pub charge_limit: f64,
    pub discharge_limit: f64,
    #[serde(default = "default_eff")]
    pub eff_charge: f64,
    #[serde(default = "default_eff")]
    pub eff_discharge: f64,
}

fn default_eff() -> f64 {
    0.95
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FleetConfig {
    Calibrated {
        elasticity: f64,
        baseline_price: f64,
        #[serde(default)]
        baseline_demand: Option<NumOrSeq>,
    },
    Explicit {
        device: Vec<DeviceConfig>,
    },
}

#[derive(Debug, Deserialize)]
pub struct DeviceConfig {
    pub alpha: NumOrSeq,
    pub beta: NumOrSeq,
    pub d_max: NumOrSeq,
    #[serde(default)]
    pub d_min: Option<NumOrSeq>,
}

#[derive(Debug, Deserialize, Default)]
pub struct SyntheticConfig {
    pub peak_generation: f64,
    #[serde(default)]
    pub reference_demand: f64,
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Deserialize, Default)]
pub struct TraceConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub timestamp_column: Option<String>,
    #[serde(default)]
    pub generation_column: Option<String>,
    #[serde(default)]
    pub demand_column: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub policies: Option<Vec<String>>,
    #[serde(default)]
    pub demand_rule: Option<String>,
    #[serde(default)]
    pub backup_target_soc: Option<f64>,
    #[serde(default)]
    pub sweep_axis: Option<String>,
    #[serde(default)]
    pub sweep_values: Option<Vec<f64>>,
}

/// Top-level configuration document.
#[derive(Debug, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub initial_soc: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub forecast_sigma: f64,
    pub tariff: TariffConfig,
    pub battery: BatteryConfig,
    pub fleet: FleetConfig,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub run: Option<RunConfig>,
}

/// Parses a configuration file.
pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

fn parse_policy(name: &str) -> Result<Policy> {
    match name {
        "lsps" => Ok(Policy::Lsps),
        "ratp" => Ok(Policy::Ratp),
        "backup" => Ok(Policy::Backup),
        other => Err(Error::Config(format!("unknown policy {other:?}"))),
    }
}

fn parse_axis(name: &str) -> Result<SweepAxis> {
    match name {
        "battery_capacity" => Ok(SweepAxis::BatteryCapacity),
        "salvage" => Ok(SweepAxis::Salvage),
        "export_rate" => Ok(SweepAxis::ExportRate),
        "peak_price" => Ok(SweepAxis::PeakPrice),
        other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
    }
}

impl ConfigFile {
    /// Resolves the trace (a CLI override wins over the config), builds the
    /// scenario, and returns the optional sweep plan.
    pub fn build(
        &self,
        trace_override: Option<&Path>,
        seed_override: Option<u64>,
    ) -> Result<(ScenarioSpec, Option<SweepPlan>)> {
        let mut schema = TraceSchema::default();
        if let Some(c) = &self.trace.timestamp_column {
            schema.timestamp = c.clone();
        }
        if let Some(c) = &self.trace.generation_column {
            schema.generation = c.clone();
        }
        if let Some(c) = &self.trace.demand_column {
            schema.demand = c.clone();
        }
        let seed = seed_override.unwrap_or(self.seed);

        let (trace, trace_source): (ExogenousTrace, String) =
            match (trace_override, &self.trace.path, &self.trace.synthetic) {
                (Some(path), _, _) => (
                    load_trace(path, &schema)?,
                    format!("csv:{}", path.display()),
                ),
                (None, Some(path), _) => (
                    load_trace(path, &schema)?,
                    format!("csv:{}", path.display()),
                ),
                (None, None, Some(synth)) => (
                    synthetic_trace(
                        synth.peak_generation,
                        24,
                        synth.reference_demand,
                        synth.jitter,
                        seed,
                    )?,
                    format!(
                        "synthetic(peak={},T=24,jitter={})",
                        synth.peak_generation, synth.jitter
                    ),
                ),
                (None, None, None) => {
                    return Err(Error::Config(
                        "no trace: give [trace].path, [trace.synthetic], or --trace".into(),
                    ))
                }
            };
        let horizon = trace.horizon();

        let tariff = TariffSchedule::new(
            self.tariff.buy.to_vec(horizon, "tariff.buy")?,
            self.tariff.sell.to_vec(horizon, "tariff.sell")?,
            self.tariff.demand_price,
            self.tariff.salvage,
            self.tariff.fixed_charge,
        )?;
        let battery = BatterySpec::new(
            self.battery.capacity,
            self.battery.charge_limit,
            self.battery.discharge_limit,
            self.battery.eff_charge,
            self.battery.eff_discharge,
        )?;

        let fleet = match &self.fleet {
            FleetConfig::Calibrated {
                elasticity,
                baseline_price,
                baseline_demand,
            } => {
                let demand = match baseline_demand {
                    Some(seq) => seq.to_vec(horizon, "fleet.baseline_demand")?,
                    None => trace
                        .reference_demand()
                        .ok_or_else(|| {
                            Error::Config(
                                "calibrated fleet without baseline_demand needs a trace \
                                 demand column"
                                    .into(),
                            )
                        })?
                        .to_vec(),
                };
                calibrate_fleet(&demand, *baseline_price, *elasticity)?
            }
            FleetConfig::Explicit { device } => {
                let devices: Vec<Device> = device
                    .iter()
                    .map(|d| {
                        Device::new(
                            d.alpha.to_vec(horizon, "device.alpha")?,
                            d.beta.to_vec(horizon, "device.beta")?,
                            d.d_max.to_vec(horizon, "device.d_max")?,
                            match &d.d_min {
                                Some(seq) => seq.to_vec(horizon, "device.d_min")?,
                                None => vec![0.0; horizon],
                            },
                        )
                    })
                    .collect::<Result<_>>()?;
                DeviceFleet::new(devices, horizon)?
            }
        };

        let run = self.run.as_ref();
        let policies = match run.and_then(|r| r.policies.as_ref()) {
            Some(names) => names
                .iter()
                .map(|n| parse_policy(n))
                .collect::<Result<Vec<_>>>()?,
            None => Policy::all(),
        };
        let demand_rule = match run.and_then(|r| r.demand_rule.as_deref()) {
            None | Some("myopic_retail") => DemandRule::MyopicRetail,
            Some("reference_trace") => DemandRule::ReferenceTrace,
            Some(other) => {
                return Err(Error::Config(format!("unknown demand rule {other:?}")))
            }
        };
        let baseline = BaselineConfig {
            demand_rule,
            backup_target_soc: run.and_then(|r| r.backup_target_soc),
        };

        let sweep = match run.and_then(|r| r.sweep_axis.as_deref()) {
            Some(axis) => {
                let values = run
                    .and_then(|r| r.sweep_values.clone())
                    .ok_or_else(|| Error::Config("sweep_axis without sweep_values".into()))?;
                Some(SweepPlan {
                    axis: parse_axis(axis)?,
                    values,
                })
            }
            None => None,
        };

        let spec = ScenarioSpec {
            tariff,
            fleet,
            battery,
            trace,
            trace_source,
            initial_soc: self.initial_soc,
            baseline,
            policies,
            forecast_sigma: self.forecast_sigma,
            seed,
        };
        Ok((spec, sweep))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const BASE: &str = r#"
initial_soc = 1.0
seed = 7

[tariff]
buy = 0.12
sell = 0.06
demand_price = 10.0
salvage = 0.09

[battery]
capacity = 5.0
charge_limit = 1.0
discharge_limit = 1.0

[fleet]
mode = "calibrated"
elasticity = -0.1
baseline_price = 0.12
baseline_demand = 1.0

[trace.synthetic]
peak_generation = 2.0
reference_demand = 1.0

[run]
policies = ["lsps", "ratp"]
sweep_axis = "peak_price"
sweep_values = [0.0, 5.0, 10.0]
"#;

    #[test]
    fn round_trips_to_scenario_and_sweep() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(BASE.as_bytes()).unwrap();
        let config = load_config(f.path()).unwrap();
        let (spec, sweep) = config.build(None, None).unwrap();
        assert_eq!(spec.trace.horizon(), 24);
        assert_eq!(spec.policies, vec![Policy::Lsps, Policy::Ratp]);
        assert_eq!(spec.seed, 7);
        assert!((spec.initial_soc - 1.0).abs() < 1e-12);
        let sweep = sweep.unwrap();
        assert_eq!(sweep.axis, SweepAxis::PeakPrice);
        assert_eq!(sweep.values.len(), 3);
    }

    #[test]
    fn seed_override_wins() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(BASE.as_bytes()).unwrap();
        let config = load_config(f.path()).unwrap();
        let (spec, _) = config.build(None, Some(99)).unwrap();
        assert_eq!(spec.seed, 99);
    }

    #[test]
    fn unknown_policy_is_a_config_error() {
        let text = BASE.replace("\"ratp\"", "\"ppo\"");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let config = load_config(f.path()).unwrap();
        assert!(matches!(config.build(None, None), Err(Error::Config(_))));
    }

    #[test]
    fn explicit_fleet_parses() {
        let text = BASE.replace(
            "mode = \"calibrated\"\nelasticity = -0.1\nbaseline_price = 0.12\nbaseline_demand = 1.0",
            "mode = \"explicit\"\n[[fleet.device]]\nalpha = 1.0\nbeta = 1.0\nd_max = 1.0",
        );
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let config = load_config(f.path()).unwrap();
        let (spec, _) = config.build(None, None).unwrap();
        assert_eq!(spec.fleet.len(), 1);
        assert!((spec.fleet.device(0).alpha[0] - 1.0).abs() < 1e-12);
    }
}
