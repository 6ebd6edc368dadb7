use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Result};
use crate::math::gaussian::{gaussian_log_pdf_unchecked, LN_2PI};
use crate::math::{RandomStream, SpdMatrix};
use crate::model::prior::{Prior, StateSampler};
use crate::model::Model;

/// `X ~ 𝒩(μ_x, Σ_x)`, `Y = A X + V`, `V ~ 𝒩(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    prior: Prior,
    mu_x: Vec<f64>,
    sigma_x: SpdMatrix,
    a: DMatrix<f64>,
    r: SpdMatrix,
    mu_y: Vec<f64>,
    sigma_y: SpdMatrix,
    s2: SpdMatrix,
}

impl LinearGaussianModel {
    pub fn new(mu_x: Vec<f64>, sigma_x: SpdMatrix, a: DMatrix<f64>, r: SpdMatrix) -> Result<Self> {
        let d_x = sigma_x.dim();
        let d_y = r.dim();
        check_dim("prior mean", d_x, mu_x.len())?;
        check_dim("observation matrix rows", d_y, a.nrows())?;
        check_dim("observation matrix columns", d_x, a.ncols())?;
        let mu_y = (&a * nalgebra::DVector::from_column_slice(&mu_x)).as_slice().to_vec();
        let asa = &a * sigma_x.entries() * a.transpose();
        let sigma_y = SpdMatrix::new(&asa + r.entries())?;
        let s2 = SpdMatrix::new(&asa + 0.5 * r.entries())?;
        let prior = Prior::gaussian(mu_x.clone(), sigma_x.clone())?;
        Ok(Self {
            prior,
            mu_x,
            sigma_x,
            a,
            r,
            mu_y,
            sigma_y,
            s2,
        })
    }

    /// Entries i.i.d. uniform on `[−1, 1] · d_x^{−1/2}`, keyed by
    /// `(seed, d_y, d_x)` so each member of a dimension family is fixed.
    pub fn seeded_matrix(d_y: usize, d_x: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RandomStream::at(seed, vec![0xA11A, d_y as u64, d_x as u64]);
        let scale = 1.0 / (d_x as f64).sqrt();
        let mut a = DMatrix::zeros(d_y, d_x);
        for i in 0..d_y {
            for j in 0..d_x {
                a[(i, j)] = scale * rng.random_range(-1.0..=1.0);
            }
        }
        a
    }

    pub fn mu_x(&self) -> &[f64] {
        &self.mu_x
    }

    pub fn sigma_x(&self) -> &SpdMatrix {
        &self.sigma_x
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn r(&self) -> &SpdMatrix {
        &self.r
    }

    pub fn mu_y(&self) -> &[f64] {
        &self.mu_y
    }

    pub fn sigma_y(&self) -> &SpdMatrix {
        &self.sigma_y
    }

    /// `Σ_y − ½R`.
    pub fn s2(&self) -> &SpdMatrix {
        &self.s2
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// log 𝒩(y; μ_y, Σ_y), the log evidence of `y`.
    pub fn marginal_observation_logpdf(&self, y: &[f64]) -> Result<f64> {
        check_dim("observation", self.obs_dim(), y.len())?;
        Ok(gaussian_log_pdf_unchecked(y, &self.mu_y, &self.sigma_y))
    }

    fn residual(&self, y: &[f64], x: &[f64]) -> smallvec::SmallVec<[f64; 16]> {
        let a = &self.a;
        (0..a.nrows())
            .map(|i| {
                let mut s = y[i];
                for (j, xj) in x.iter().enumerate() {
                    s -= a[(i, j)] * xj;
                }
                s
            })
            .collect()
    }
}

impl Model for LinearGaussianModel {
    fn state_dim(&self) -> usize {
        self.sigma_x.dim()
    }

    fn obs_dim(&self) -> usize {
        self.r.dim()
    }

    fn sample_prior_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        self.prior.sample_into(rng, out)
    }

    fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64 {
        let resid = self.residual(y, x);
        -0.5 * (resid.len() as f64 * LN_2PI + self.r.log_det() + self.r.inv_quad_form(&resid))
    }

    fn sample_observation_into(&self, x: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        self.r.mul_lower_in_place(out);
        for (i, v) in out.iter_mut().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                *v += self.a[(i, j)] * xj;
            }
        }
    }
}
