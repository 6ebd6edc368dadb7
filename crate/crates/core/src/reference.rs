//! Ground truth for posterior functionals: exact conjugate posteriors for the
//! linear-Gaussian family and a large-N importance sampling oracle otherwise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::math::{normal_cdf, GaussHermite, RandomStream, SpdMatrix};
use crate::model::{LinearGaussianModel, Model};
use crate::sampler::{estimate, run_is, TestFunction};

const GAUSS_HERMITE_ORDER: usize = 64;
pub const MIN_ORACLE_SAMPLES: usize = 10_000;
pub const MIN_ORACLE_REPS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub cov: SpdMatrix,
}

impl GaussianPosterior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `P(X_i ≤ c) = Φ((c − m_i)/√C_ii)`.
    pub fn indicator_probability(&self, coord: usize, threshold: f64) -> f64 {
        let sd = self.cov.entries()[(coord, coord)].sqrt();
        normal_cdf((threshold - self.mean[coord]) / sd)
    }

    /// `E tanh(X_i)` by Gauss–Hermite quadrature on the marginal.
    pub fn tanh_expectation(&self, coord: usize) -> f64 {
        let sd = self.cov.entries()[(coord, coord)].sqrt();
        GaussHermite::new(GAUSS_HERMITE_ORDER).expect_normal(self.mean[coord], sd, f64::tanh)
    }

    /// `π_y(f)` where a closed form or 1-D quadrature applies.
    pub fn expectation(&self, f: &TestFunction) -> Result<f64> {
        f.validate(self.dim())?;
        match *f {
            TestFunction::Constant(c) => Ok(c),
            TestFunction::Indicator { coord, threshold } => Ok(self.indicator_probability(coord, threshold)),
            TestFunction::Tanh(coord) => Ok(self.tanh_expectation(coord)),
            TestFunction::ClippedNorm(_) => Err(Error::NoReference("clipped_norm under a Gaussian posterior")),
        }
    }
}

/// Conjugate update: `K = Σ_x Aᵀ Σ_y⁻¹`, mean `μ_x + K(y − μ_y)`,
/// covariance `Σ_x − K A Σ_x`.
pub fn lg_posterior(model: &LinearGaussianModel, y: &[f64]) -> Result<GaussianPosterior> {
    check_dim("observation", model.obs_dim(), y.len())?;
    let sx = model.sigma_x().entries();
    let a = model.a();
    let d_y = model.obs_dim();
    // Σ_y⁻¹ (A Σ_x), column by column
    let a_sx = a * sx;
    let mut gain_t = DMatrix::zeros(d_y, model.state_dim());
    for j in 0..a_sx.ncols() {
        gain_t.set_column(j, &model.sigma_y().solve(&a_sx.column(j).into_owned())?);
    }
    let gain = gain_t.transpose();
    let resid = DVector::from_iterator(d_y, y.iter().zip(model.mu_y()).map(|(yi, mi)| yi - mi));
    let mean: Vec<f64> = (DVector::from_column_slice(model.mu_x()) + &gain * resid).as_slice().to_vec();
    let cov = sx - &gain * a_sx;
    let cov = 0.5 * (&cov + cov.transpose());
    Ok(GaussianPosterior {
        mean,
        cov: SpdMatrix::new(cov)?,
    })
}

/// Exact `π_y(f)` for a linear-Gaussian model.
pub fn exact_expectation(model: &LinearGaussianModel, y: &[f64], f: &TestFunction) -> Result<f64> {
    lg_posterior(model, y)?.expectation(f)
}

/// Mean of `n_reps` independent importance sampling estimates with `n_ref`
/// samples each, and its standard error `s/√n_reps`. Replicate `k` uses
/// substream `k` of `stream`.
pub fn oracle_estimate<M: Model + ?Sized>(
    model: &M,
    y: &[f64],
    f: &TestFunction,
    n_ref: usize,
    n_reps: usize,
    stream: &RandomStream,
) -> Result<(f64, f64)> {
    check_dim("observation", model.obs_dim(), y.len())?;
    f.validate(model.state_dim())?;
    if n_ref < MIN_ORACLE_SAMPLES || n_reps < MIN_ORACLE_REPS {
        return Err(Error::InvalidConfig(format!(
            "oracle needs n_ref >= {MIN_ORACLE_SAMPLES} and n_reps >= {MIN_ORACLE_REPS}, got {n_ref} and {n_reps}"
        )));
    }
    if let TestFunction::Constant(c) = *f {
        return Ok((c, 0.0));
    }
    let values: Result<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|k| {
            let mut s = stream.substream(k as u64);
            let e = run_is(model, y, n_ref, &mut s).map_err(|e| e.with_context(format!("oracle replicate {k}")))?;
            Ok(estimate(&e, f))
        })
        .collect();
    let values = values?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn scalar(a: f64) -> LinearGaussianModel {
        LinearGaussianModel::new(vec![0.0], SpdMatrix::identity(1), dmatrix![a], SpdMatrix::identity(1)).unwrap()
    }

    #[test]
    fn equal_precision_average() {
        let post = lg_posterior(&scalar(1.0), &[2.0]).unwrap();
        assert_relative_eq!(post.mean[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(post.cov.entries()[(0, 0)], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn uninformative_observation() {
        let m = LinearGaussianModel::new(
            vec![1.0, -2.0],
            SpdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap(),
            DMatrix::zeros(1, 2),
            SpdMatrix::identity(1),
        )
        .unwrap();
        let post = lg_posterior(&m, &[7.0]).unwrap();
        assert_eq!(post.mean, vec![1.0, -2.0]);
        assert_eq!(post.cov.entries(), m.sigma_x().entries());
    }

    #[test]
    fn constant_oracle_is_exact() {
        let m = scalar(1.0);
        let (v, se) = oracle_estimate(&m, &[0.3], &TestFunction::Constant(2.5), 10_000, 8, &RandomStream::new(1)).unwrap();
        assert_eq!((v, se), (2.5, 0.0));
    }

    #[test]
    fn oracle_budget_enforced() {
        let m = scalar(1.0);
        let f = TestFunction::Tanh(0);
        assert!(oracle_estimate(&m, &[0.3], &f, 100, 8, &RandomStream::new(1)).is_err());
        assert!(oracle_estimate(&m, &[0.3], &f, 10_000, 2, &RandomStream::new(1)).is_err());
    }

    #[test]
    fn tanh_reference_is_odd() {
        let post = GaussianPosterior {
            mean: vec![0.0],
            cov: SpdMatrix::from_diagonal(&[3.0]).unwrap(),
        };
        assert!(post.tanh_expectation(0).abs() < 1e-14);
    }
}
