//! Solvers for deterministic single-unit pumped-storage hydropower (PSH)
//! commitment and dispatch.
//!
//! Four cross-validating methods are provided for the same problem:
//!
//! * a time-indexed mixed-integer model solved by generic branch-and-bound
//!   ([`time_indexed`], [`lp::mip`]),
//! * an exact event-based dynamic program on a finite-grid event network
//!   ([`network`]),
//! * a single network-flow LP with perspective-scaled operating blocks
//!   embedded on every arc ([`netflow`]),
//! * an exact continuous-state branch-and-bound over event skeletons with
//!   McCormick-relaxed bounding LPs ([`bnb`]).
//!
//! All methods share the instance data model ([`instance`]), the mode-specific
//! within-event operating LPs ([`blocks`]), the LP backend ([`lp`]) and the
//! schedule audit ([`schedule`]). The [`harness`] module adds a brute-force
//! oracle and the experiment runners used by the CLI.

pub mod blocks;
pub mod bnb;
pub mod harness;
pub mod instance;
pub mod lp;
pub mod netflow;
pub mod network;
pub mod schedule;
pub mod time_indexed;

/// Numerical tolerances shared across the crate.
pub mod tol {
    /// Absolute feasibility tolerance on LP constraints and bounds.
    pub const FEAS_TOL: f64 = 1e-7;
    /// Relative optimality tolerance of the LP backend.
    pub const OPT_TOL: f64 = 1e-7;
    /// A variable within this distance of an integer counts as integral.
    pub const INTEGRALITY_TOL: f64 = 1e-6;
    /// Relative tolerance for cross-method objective comparisons.
    pub const REL_EQ_TOL: f64 = 1e-6;
    /// Absolute pruning tolerance of the event-based branch-and-bound.
    pub const PRUNE_TOL: f64 = 1e-9;
    /// Offline-arc drift values snap to grid points within this distance.
    pub const SNAP_TOL: f64 = 1e-9;
}

/// Relative closeness used by the cross-method equality checks:
/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1.0_f64.max(a.abs()).max(b.abs())
}
