//! Named numerical thresholds shared by the pipeline and the test suites.

/// Relative residual accepted for identities that are exact in f64 arithmetic.
pub const EXACT: f64 = 1e-10;

/// Pull-through and commutation relations on the guarded sub-basis.
pub const PULL_THROUGH: f64 = 1e-12;

/// Columns of Ran chibar kept when building the restricted inverse.
pub const RANGE_RANK: f64 = 1e-10;

/// Singular values below this multiple of the operator norm count as kernel directions.
pub const KERNEL_DETECTION: f64 = 1e-8;

/// Partition of unity and commutation checks for Feshbach pairs.
pub const PAIR_STRUCTURE: f64 = 1e-10;

/// Linear (m+n=1) kernel components below this count as vanishing.
pub const ZERO_LINEAR: f64 = 1e-12;

/// Two field energies closer than this are treated as one level.
pub const LEVEL_MERGE: f64 = 1e-12;

/// Ground-state residual demanded from exact diagonalization.
pub const ED_RESIDUAL: f64 = 1e-10;

/// Stopping tolerance for the spectral parameter in the RG iteration.
pub const RG_ENERGY: f64 = 1e-10;

/// Stopping tolerance for the higher-order kernel norm in the RG iteration.
pub const RG_KERNEL: f64 = 1e-8;

/// Master energy check against exact diagonalization.
pub const ENERGY_MATCH: f64 = 1e-6;

/// Agreement of RG-Cauchy and Rayleigh-Schroedinger coefficients.
pub const COEFFICIENT_MATCH: f64 = 1e-6;

/// Odd coefficients must vanish below this.
pub const ODD_COEFFICIENT: f64 = 1e-10;

/// Relative agreement of normal-ordered kernels with the direct product.
pub const WICK_RELATIVE: f64 = 1e-9;

/// Reconstruction round trip.
pub const ROUND_TRIP: f64 = 1e-10;

/// Slack allowed on top of the factor 1/2 in the per-step gamma ratio.
pub const CONTRACTION_RATIO: f64 = 0.6;

/// Default number of trapezoid nodes on a contour.
pub const CONTOUR_NODES: usize = 64;

/// Bound on the unwound eigenvector, 4 e^4.
pub fn psi0_bound() -> f64 {
    4.0 * 4f64.exp()
}
