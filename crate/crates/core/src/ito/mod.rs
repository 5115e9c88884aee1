//! Pathwise G-Itô calculus on simulated bundles.

mod calculus;
mod decompose;
mod drift;
mod martingale;
mod quadrature;
mod theorem35;

pub use calculus::{
    k_process, lambda_n, qn_identity_gap, qn_quadratic_variation, realized_bracket,
    stochastic_integral, PathFn, PathProcess, QnIdentityGap, StepProcess,
};
pub use decompose::{
    compare_decompositions, decompose_on, empirical_order, martingale_decomposition,
    reconstruction_study, DecompositionGap, ItoDecomposition, ReconstructionRow,
};
pub use drift::{bang_bang_for, identify_drift, DriftRow};
pub use martingale::{
    increment_estimates, martingale_test, stationarity_check, MartingaleReport, MartingaleRow,
    StationarityReport, StationarityRow, ROUNDING_FLOOR,
};
pub use quadrature::{block_identity_residual, step2_limit_check, Step2Row};
pub use theorem35::{
    verify_theorem35, EtaFn, Step3Row, Theorem35Config, Theorem35Report, Theorem35Row,
};
