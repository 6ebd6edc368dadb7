//! Bayesian models `(π₀, g)`: a samplable prior and an evaluable likelihood.

pub mod elliptical;
pub mod linear_gaussian;
pub mod prior;
pub mod profile;
pub mod reparam;

pub use elliptical::{observation_bound, EllipticalModel, Nonlinearity, SaturatingObservationMap};
pub use linear_gaussian::LinearGaussianModel;
pub use prior::{Prior, StateSampler};
pub use profile::{profile_normalization, RadialProfile};
pub use reparam::{reparametrize, LogDensityRatio, ReparametrizedModel};

use crate::error::{check_dim, Result};
use crate::math::RandomStream;

/// A prior that can be sampled and a likelihood that can be evaluated in
/// log-space.
///
/// `log_likelihood` is the normalized log-density `log g(y | x)`. A model may
/// additionally declare an arbitrary constant [`Model::log_offset`]: it is
/// carried alongside the density wherever raw log-weights are reported, and
/// it never enters the weight arithmetic.
pub trait Model: Send + Sync {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    fn sample_prior_into(&self, rng: &mut RandomStream, out: &mut [f64]);

    /// `log g(y | x)`; dimensions are the caller's responsibility.
    fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64;

    fn sample_observation_into(&self, x: &[f64], rng: &mut RandomStream, out: &mut [f64]);

    fn log_offset(&self) -> f64 {
        0.0
    }

    fn log_likelihood(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        check_dim("observation", self.obs_dim(), y.len())?;
        check_dim("state", self.state_dim(), x.len())?;
        Ok(self.log_likelihood_unchecked(y, x))
    }

    /// `x ~ π₀`, then `y ~ g(· | x)`.
    fn sample_joint(&self, rng: &mut RandomStream) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; self.state_dim()];
        let mut y = vec![0.0; self.obs_dim()];
        self.sample_prior_into(rng, &mut x);
        self.sample_observation_into(&x, rng, &mut y);
        (x, y)
    }
}

/// The two concrete model families.
#[derive(Debug, Clone, PartialEq)]
pub enum BayesModel {
    LinearGaussian(LinearGaussianModel),
    Elliptical(EllipticalModel),
}

impl BayesModel {
    pub fn as_linear_gaussian(&self) -> Option<&LinearGaussianModel> {
        match self {
            Self::LinearGaussian(m) => Some(m),
            Self::Elliptical(_) => None,
        }
    }

    pub fn as_elliptical(&self) -> Option<&EllipticalModel> {
        match self {
            Self::Elliptical(m) => Some(m),
            Self::LinearGaussian(_) => None,
        }
    }

    pub fn prior(&self) -> &Prior {
        match self {
            Self::LinearGaussian(m) => m.prior(),
            Self::Elliptical(m) => m.prior(),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            BayesModel::LinearGaussian($m) => $e,
            BayesModel::Elliptical($m) => $e,
        }
    };
}

impl Model for BayesModel {
    fn state_dim(&self) -> usize {
        delegate!(self, m => m.state_dim())
    }

    fn obs_dim(&self) -> usize {
        delegate!(self, m => m.obs_dim())
    }

    fn sample_prior_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        delegate!(self, m => m.sample_prior_into(rng, out))
    }

    fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64 {
        delegate!(self, m => m.log_likelihood_unchecked(y, x))
    }

    fn sample_observation_into(&self, x: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        delegate!(self, m => m.sample_observation_into(x, rng, out))
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn sample_prior_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        (**self).sample_prior_into(rng, out)
    }
    fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64 {
        (**self).log_likelihood_unchecked(y, x)
    }
    fn sample_observation_into(&self, x: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        (**self).sample_observation_into(x, rng, out)
    }
    fn log_offset(&self) -> f64 {
        (**self).log_offset()
    }
}

/// Attaches the arbitrary likelihood constant `log 𝚌` to a model.
#[derive(Debug, Clone)]
pub struct WithLogOffset<M> {
    pub inner: M,
    pub offset: f64,
}

impl<M: Model> Model for WithLogOffset<M> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }
    fn sample_prior_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        self.inner.sample_prior_into(rng, out)
    }
    fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64 {
        self.inner.log_likelihood_unchecked(y, x)
    }
    fn sample_observation_into(&self, x: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        self.inner.sample_observation_into(x, rng, out)
    }
    fn log_offset(&self) -> f64 {
        self.inner.log_offset() + self.offset
    }
}
