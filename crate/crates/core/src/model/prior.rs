use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::math::gaussian::gaussian_log_pdf_unchecked;
use crate::math::{RandomStream, SpdMatrix};

/// Anything that can draw a state vector: a prior, or a proposal standing in
/// for one.
pub trait StateSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Gaussian { mean: Vec<f64>, cov: SpdMatrix },
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl Prior {
    pub fn gaussian(mean: Vec<f64>, cov: SpdMatrix) -> Result<Self> {
        check_dim("prior mean", cov.dim(), mean.len())?;
        Ok(Self::Gaussian { mean, cov })
    }

    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("uniform box bounds", lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::InvalidConfig("uniform box must have positive dimension".into()));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "uniform box needs finite lo < hi in every coordinate; coordinate {i} has [{}, {}]",
                lo[i], hi[i]
            )));
        }
        Ok(Self::UniformBox { lo, hi })
    }

    /// Log density with respect to Lebesgue measure.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim("prior point", self.dim(), x.len())?;
        Ok(match self {
            Self::Gaussian { mean, cov } => gaussian_log_pdf_unchecked(x, mean, cov),
            Self::UniformBox { lo, hi } => {
                if x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h) {
                    -lo.iter().zip(hi).map(|(l, h)| (h - l).ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
        })
    }
}

impl StateSampler for Prior {
    fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::UniformBox { lo, .. } => lo.len(),
        }
    }

    fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        match self {
            Self::Gaussian { mean, cov } => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                cov.mul_lower_in_place(out);
                out.iter_mut().zip(mean).for_each(|(v, m)| *v += m);
            }
            Self::UniformBox { lo, hi } => {
                for (v, (l, h)) in out.iter_mut().zip(lo.iter().zip(hi)) {
                    *v = l + (h - l) * rng.random::<f64>();
                }
            }
        }
    }
}
