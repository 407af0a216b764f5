//! Exact finite-state counterpart of the cyclical sampler.
//!
//! Distances between laws are full L1 norms `sum_x |p(x) - q(x)|`, taking values in `[0, 2]`.

mod chain;
mod gap;
mod lyapunov;
mod propagate;
mod scaling;
mod theorem2;

pub use chain::{grid_kernel, ChainSummary, FiniteChain};
pub use gap::{
    alpha_j, alpha_lower_bound_search, capital_lambda, check_identities, lambda_j, q_matrix, spectral_profile,
    w_matrix, IdentityReport, SpectralGap, SpectralProfile,
};
pub use lyapunov::{check_lyapunov_lemma, lyapunov_kv, theta_grid, LyapunovCheck, LyapunovPoint};
pub use propagate::{
    chi_square, l1_distance, propagate_exact, verify_theorem1, StatedPoint, Theorem1Report, Trajectory, TrajectoryPoint,
    SLACK_TOL,
};
pub use scaling::{
    check_path_sampling, scaling_table, verify_prop1_scaling, PathSamplingCheck, ScalingRow, ScalingTable,
};
pub use theorem2::{
    drift_union_bound, exact_escape_probability, fit_drift, restricted_law, restricted_stationary, verify_theorem2,
    DriftFit, GridRegions, RegionReport, Theorem2Report,
};
