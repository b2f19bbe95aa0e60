//! Co-optimization of behind-the-meter flexible demand and battery storage
//! under net-energy-metering tariffs with peak demand charges.
//!
//! The crate is organized around a one-day (or longer) scheduling horizon with
//! hourly steps. A prosumer owns renewable generation `g_t`, a fleet of
//! flexible devices with quadratic utilities, and a battery. The tariff bills
//! net consumption `z_t` at a buy rate when importing and a sell rate when
//! exporting, plus a demand charge on the billing-period peak of `z_t`.
//!
//! Modules:
//! - [`model`]: domain types, system dynamics, payments, and episode ledgers.
//! - [`allocation`]: the concave helper that splits a net quantity `v` between
//!   battery power and device consumption by water-filling over marginal
//!   values.
//! - [`lsps`]: the large-storage peak-searching planner — finds the optimal
//!   peak bound `c*` of a relaxed problem in linear time and derives per-step
//!   actions.
//! - [`baselines`]: backup and renewable-adjusted threshold policies.
//! - [`oracle`]: ground-truth solvers (one-shot convex upper bound, brute-force
//!   DP, relaxed objective grid scan) used as references and in tests.
//! - [`dp_validator`]: lattice dynamic programming that machine-checks the
//!   structural properties of the optimal value function (concavity,
//!   monotonicity, threshold policies, non-myopia).
//! - [`harness`]: CSV ingestion, utility calibration, scenario sweeps,
//!   forecast-noise studies, timing, and results emission.

pub mod allocation;
pub mod baselines;
pub mod dp_validator;
pub mod error;
pub mod harness;
pub mod lsps;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use model::{
    BatterySpec, ControlAction, DeviceFleet, EpisodeLedger, ExogenousTrace, SystemState,
    TariffSchedule,
};
