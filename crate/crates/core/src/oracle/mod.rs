//! Ground-truth solvers used as references and in tests.
//!
//! - [`deterministic_upper_bound`]: one-shot convex solve of the full-horizon
//!   problem with perfect foresight and the simultaneous charge/discharge
//!   complementarity relaxed. An upper bound on every causal policy's reward.
//! - [`brute_force_dp`]: exact backward induction on a state/action lattice
//!   for desk-scale instances.
//! - [`relaxed_grid_scan`]: samples the fixed-peak objective `J(c)` on a grid
//!   of peak bounds, solving each per-step problem by one-dimensional concave
//!   search rather than the planner's closed form.

mod dp;
mod grid;
mod qp;

pub use dp::{brute_force_dp, DpGrid, DpSolution};
pub use grid::{relaxed_grid_scan, uniform_grid, RelaxedScan};
pub use qp::{deterministic_upper_bound, DeterministicSolution, SolverDiagnostics};
