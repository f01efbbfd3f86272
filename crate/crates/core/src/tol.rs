//! Numerical tolerances shared across the analyses.
//!
//! Every threshold used for a verdict lives here so reports can echo the
//! values that produced them.

/// Default zero tolerance for the three-way sign classification of
/// constraint values, complementarity products and directional quantities.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Pivots below this multiple of the pivot row scale flag a singular system.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Principal minors must exceed this multiple of `‖A‖∞^k`.
pub const MINOR_REL_TOL: f64 = 1e-12;

/// Rank decisions on row-normalized matrices.
pub const RANK_TOL: f64 = 1e-10;

/// Sign slack when accepting a complementarity pattern solution.
pub const LCP_SIGN_TOL: f64 = 1e-9;

/// Residual bound every reported mixed LCP solution satisfies.
pub const LCP_RESIDUAL_TOL: f64 = 1e-8;

/// Two LCP solutions closer than this in the max-norm are the same solution.
pub const LCP_DEDUP_TOL: f64 = 1e-8;

/// Copositivity tolerance, relative to the largest entry of the matrix.
pub const COPOSITIVITY_REL_TOL: f64 = 1e-9;

/// Residual allowed in stationarity systems solved for multipliers.
pub const STATIONARITY_TOL: f64 = 1e-8;

/// Feasibility slack used when testing generator candidates against a cone.
pub const CONE_FEAS_TOL: f64 = 1e-9;

/// Residual bound for linear solves (relative to `1 + ‖b‖∞`).
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
