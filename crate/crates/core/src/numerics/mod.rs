//! Scalar and matrix routines shared by every other module.

pub mod linalg;
pub mod rng;
pub mod special;

pub use linalg::{
    condition_number, inverse, is_schur, mat_exp, one_norm, psd_factor, solve, solve_dare, solve_dlyap,
    spectral_radius, symmetrize, DareSolution, SCHUR_SLACK,
};
pub use rng::{sample_standard_normal, RngAlgorithm, RngStream};
pub use special::{chi2_cdf, chi2_quantile, erf, erf_inv, erfc, gamma_p, normal_cdf};
