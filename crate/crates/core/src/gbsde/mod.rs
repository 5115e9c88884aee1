//! G-BSDEs with Markovian data and the associated semilinear path-dependent
//! equation, together with the `D_t`, `D_x`, `D²_x` and `𝒜_G` operators on
//! cylinder path processes.

mod cylinder;
mod solve;
mod verify;

pub use cylinder::{
    a_g, cylinder_derivatives, CylinderDerivatives, CylinderPathProcess, PieceFn, FD_STEP,
};
pub use solve::{
    shift_identity, solve_ppde, solve_ppde_picard, surface_gap, DriverFn, GBSDEProblem,
    GBSDESolution, PicardRun, ShiftIdentity, TerminalFn,
};
pub use verify::{
    combined_budget, default_region, equivalence_check, gbsde_residual, write_k_csv,
    EquivalenceReport, GbsdeResidualReport, K_MONOTONE_SLACK,
};
