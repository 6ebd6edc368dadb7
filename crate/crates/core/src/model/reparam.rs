use std::sync::Arc;

use crate::math::RandomStream;
use crate::model::prior::StateSampler;
use crate::model::Model;

pub type LogDensityRatio = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A base model seen through a proposal `ν`: the prior sampler is replaced
/// by `ν` and the log-likelihood gains `log ρ(x) = log (dπ₀/dν)(x)`.
///
/// Standard importance sampling on this model is importance sampling on the
/// base model with proposal `ν`; both target the same posterior.
/// Absolute continuity `π₀ ≪ ν` and the correctness of `log_rho` are the
/// caller's responsibility.
pub struct ReparametrizedModel<M> {
    base: M,
    proposal: Arc<dyn StateSampler>,
    log_rho: LogDensityRatio,
}

impl<M: Model> ReparametrizedModel<M> {
    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn log_relative_density(&self, x: &[f64]) -> f64 {
        (self.log_rho)(x)
    }
}

pub fn reparametrize<M: Model>(
    base: M,
    proposal: Arc<dyn StateSampler>,
    log_rho: LogDensityRatio,
) -> ReparametrizedModel<M> {
    debug_assert_eq!(proposal.dim(), base.state_dim());
    ReparametrizedModel {
        base,
        proposal,
        log_rho,
    }
}

impl<M: Model> Model for ReparametrizedModel<M> {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn obs_dim(&self) -> usize {
        self.base.obs_dim()
    }

    fn sample_prior_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        self.proposal.sample_into(rng, out)
    }

    fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64 {
        self.base.log_likelihood_unchecked(y, x) + (self.log_rho)(x)
    }

    /// Observations still come from the base likelihood `g(· | x)`.
    fn sample_observation_into(&self, x: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        self.base.sample_observation_into(x, rng, out)
    }

    fn log_offset(&self) -> f64 {
        self.base.log_offset()
    }
}
