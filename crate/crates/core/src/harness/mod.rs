//! Everything around the math: trace ingestion, utility calibration,
//! scenario sweeps, forecast-noise studies, timing, and results emission.

mod calibrate;
mod config;
mod emit;
mod noise;
mod scenario;
mod synth;
mod timing;
mod trace;

pub use calibrate::calibrate_fleet;
pub use config::{load_config, ConfigFile};
pub use emit::{emit_results, render_table, write_records};
pub use noise::inject_noise;
pub use scenario::{
    run_scenario, sweep, GapReport, Policy, PolicyRow, ScenarioRecord, ScenarioSpec, SweepAxis,
    SweepPlan,
};
pub use synth::{daily_demand_profile, sine_day_generation, synthetic_trace};
pub use timing::{fit_line, timing_benchmark, TimingRow, TimingTable};
pub use trace::{load_trace, TraceSchema};
