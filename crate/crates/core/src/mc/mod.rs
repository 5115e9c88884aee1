//! Volatility-controlled Monte Carlo: each control `h` induces the law
//! `P_h` of `∫h dW`, and `𝔼[ξ] = sup_h E_{P_h}[ξ]`.

mod bundle;
mod estimate;
mod perturb;

pub use bundle::{
    check_qv_bounds, derive_seed, for_each_chunk, path_rng, simulate, simulate_with, IncrementLaw,
    PathBundle, PathRef, QvBoundsReport, SimulationSpec,
};
pub use estimate::{
    cylinder_nodes, estimate_functional, estimate_paths, estimate_paths_multi, mc_expectation,
    mc_expectation_with, sup_over_controls, sup_over_controls_with, McEstimate, Snapping,
    SupReport, Welford,
};
pub use perturb::{
    marginal_match_test, perturb_control, weak_convergence_probe, BlockFunctional, MatchReport,
    MatchStatus, ProbeRow,
};
