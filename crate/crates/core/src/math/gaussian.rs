use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Result};
use crate::math::linalg::SpdMatrix;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// log 𝒩(y; mean, cov).
pub fn gaussian_log_pdf(y: &[f64], mean: &[f64], cov: &SpdMatrix) -> Result<f64> {
    check_dim("gaussian point", cov.dim(), y.len())?;
    check_dim("gaussian mean", cov.dim(), mean.len())?;
    Ok(gaussian_log_pdf_unchecked(y, mean, cov))
}

pub(crate) fn gaussian_log_pdf_unchecked(y: &[f64], mean: &[f64], cov: &SpdMatrix) -> f64 {
    let diff: smallvec::SmallVec<[f64; 16]> =
        y.iter().zip(mean).map(|(a, b)| a - b).collect();
    -0.5 * (y.len() as f64 * LN_2PI + cov.log_det() + cov.inv_quad_form(&diff))
}

/// Gauss–Hermite rule for ∫ e^{−t²} g(t) dt, nodes and weights from the
/// Golub–Welsch eigenproblem of the Hermite Jacobi matrix.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], PI.sqrt() * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// E[g(Z)] for Z ~ 𝒩(mean, sd²).
    pub fn expect_normal<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, g: F) -> f64 {
        let s = std::f64::consts::SQRT_2 * sd;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * g(mean + s * t))
            .sum::<f64>()
            / PI.sqrt()
    }
}
