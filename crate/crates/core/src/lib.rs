//! Numerics for sublinear G-expectations: the G-heat equation, conditional
//! G-expectations of cylinder functionals, volatility-controlled Monte Carlo,
//! pathwise G-Itô calculus and G-BSDEs.

pub mod control;
pub mod error;
pub mod functional;
pub mod gbsde;
pub mod generator;
pub mod gexp;
pub mod gheat;
pub mod grid;
pub mod ito;
pub mod mc;
pub mod tolerance;

pub use control::{BoundedRule, ControlKind, ControlProcess, PathView, PerturbationSchedule};
pub use error::{GexpError, Result};
pub use functional::{CylinderFunctional, PayoffConvention};
pub use gbsde::{equivalence_check, gbsde_residual, solve_ppde, GBSDEProblem, GBSDESolution};
pub use generator::{delta_kalpha, DeltaOscillator, GParams};
pub use gexp::{
    conditional_g_expectation, g_expectation, lp_norm, ConditionalExpectation, PdeConfig,
};
pub use gheat::{feedback_field, solve_gheat, solve_gheat_fn, FeedbackField, ValueSurface};
pub use grid::{SpaceGrid, TimeGrid};
