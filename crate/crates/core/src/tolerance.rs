//! Tolerance conventions shared by tests, reports and the CLI.

/// Constant `C` of the grid budget `C·(dt + dx²)`, calibrated on the `x²` oracle.
pub const GRID_BUDGET_C: f64 = 10.0;

/// Number of standard errors accepted in Monte-Carlo equality checks.
pub const MC_SIGMAS: f64 = 3.0;

/// Value error budget of the explicit scheme on a grid.
pub fn grid_budget(dt: f64, dx: f64) -> f64 {
    GRID_BUDGET_C * (dt + dx * dx)
}

/// `|diff| ≤ 3·stderr + slack`.
pub fn within_mc(diff: f64, stderr: f64, slack: f64) -> bool {
    diff.abs() <= MC_SIGMAS * stderr + slack
}

pub fn relative_error(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value.abs()
    } else {
        ((value - reference) / reference).abs()
    }
}
