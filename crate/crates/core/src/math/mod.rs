//! Numerical substrate shared by every other module.

pub mod gaussian;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod special;

pub use gaussian::{gaussian_log_pdf, GaussHermite};
pub use linalg::{eigen_extremes, spd_factor, SpdMatrix};
pub use rng::RandomStream;
pub use special::{
    ln_upper_incomplete_gamma, mahalanobis_norm, normal_cdf, sphere_surface_area,
    upper_incomplete_gamma,
};

/// log Σ exp(vᵢ), stable under large magnitudes.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
