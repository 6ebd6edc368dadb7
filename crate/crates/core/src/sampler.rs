//! Standard importance sampling from the prior, with self-normalized weights.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::math::RandomStream;
use crate::model::{Model, StateSampler};

/// A bounded test function `f ∈ B(𝒳)` with known `‖f‖_∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant(f64),
    /// `1{x[coord] ≤ threshold}`.
    Indicator { coord: usize, threshold: f64 },
    /// `tanh(x[coord])`.
    Tanh(usize),
    /// `min(‖x‖, cap)`.
    ClippedNorm(f64),
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::Indicator { coord, threshold } => {
                if x[coord] <= threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh(coord) => x[coord].tanh(),
            Self::ClippedNorm(cap) => x.iter().map(|v| v * v).sum::<f64>().sqrt().min(cap),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            Self::Constant(c) => c.abs(),
            Self::Indicator { .. } | Self::Tanh(_) => 1.0,
            Self::ClippedNorm(cap) => cap.abs(),
        }
    }

    pub fn validate(&self, d_x: usize) -> Result<()> {
        match *self {
            Self::Indicator { coord, .. } | Self::Tanh(coord) if coord >= d_x => Err(Error::InvalidConfig(
                format!("test function coordinate {coord} out of range for d_x = {d_x}"),
            )),
            Self::ClippedNorm(cap) if !(cap > 0.0) => {
                Err(Error::InvalidConfig(format!("clipped_norm cap must be positive, got {cap}")))
            }
            _ => Ok(()),
        }
    }
}

/// The weighted particle approximation `π_y^N = Σ wⁱ δ_{xⁱ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEnsemble {
    dim: usize,
    samples: Vec<f64>,
    log_likelihoods: Vec<f64>,
    log_offset: f64,
    weights: Vec<f64>,
    log_z_hat: f64,
    ess: f64,
    rho_hat: f64,
}

/// Normalized weights from log-weights by max-subtraction, with the log of
/// the unnormalized mean `log (1/N) Σ exp(ℓᵢ)`.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights {
            max_log_weight: max,
            context: None,
        });
    }
    let mut w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let sum = neumaier_sum(w.iter().copied());
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::DegenerateWeights {
            max_log_weight: max,
            context: None,
        });
    }
    w.iter_mut().for_each(|v| *v /= sum);
    let log_mean = max + sum.ln() - (log_w.len() as f64).ln();
    Ok((w, log_mean))
}

fn neumaier_sum(it: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl WeightedEnsemble {
    /// Builds an ensemble from states (row-major, `dim` per sample) and their
    /// normalized log-likelihoods.
    pub fn from_log_likelihoods(dim: usize, samples: Vec<f64>, log_likelihoods: Vec<f64>, log_offset: f64) -> Result<Self> {
        let n = log_likelihoods.len();
        if n == 0 {
            return Err(Error::InvalidConfig("ensemble needs N >= 1".into()));
        }
        check_dim("ensemble sample storage", n * dim, samples.len())?;
        let (weights, log_z_hat) = normalize_log_weights(&log_likelihoods)?;
        let sum_sq = neumaier_sum(weights.iter().map(|w| w * w));
        Ok(Self {
            dim,
            samples,
            log_likelihoods,
            log_offset,
            weights,
            log_z_hat,
            ess: 1.0 / sum_sq,
            rho_hat: n as f64 * sum_sq,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim.max(1))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Raw log-weights as reported: log-likelihood plus the model's offset.
    pub fn log_weights_raw(&self) -> Vec<f64> {
        self.log_likelihoods.iter().map(|l| l + self.log_offset).collect()
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    /// `log Ẑ_N` of the normalized likelihood (offset excluded).
    pub fn log_z_hat(&self) -> f64 {
        self.log_z_hat
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn rho_hat(&self) -> f64 {
        self.rho_hat
    }
}

/// Algorithm: draw `xⁱ ~ π₀`, weight by `g(y | xⁱ)`, normalize.
pub fn run_is<M: Model + ?Sized>(model: &M, y: &[f64], n: usize, stream: &mut RandomStream) -> Result<WeightedEnsemble> {
    check_dim("observation", model.obs_dim(), y.len())?;
    if n == 0 {
        return Err(Error::InvalidConfig("importance sampler needs N >= 1".into()));
    }
    let d = model.state_dim();
    let mut samples = vec![0.0; n * d];
    let mut ll = Vec::with_capacity(n);
    for x in samples.chunks_exact_mut(d) {
        model.sample_prior_into(stream, x);
        ll.push(model.log_likelihood_unchecked(y, x));
    }
    WeightedEnsemble::from_log_likelihoods(d, samples, ll, model.log_offset())
}

/// Importance sampling with an explicit proposal `ν`: draw `xⁱ ~ ν`, weight
/// by `g(y | xⁱ) ρ(xⁱ)` with `log ρ = log dπ₀/dν`.
pub fn run_is_with_proposal<M, P, F>(
    model: &M,
    proposal: &P,
    log_rho: F,
    y: &[f64],
    n: usize,
    stream: &mut RandomStream,
) -> Result<WeightedEnsemble>
where
    M: Model + ?Sized,
    P: StateSampler + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    check_dim("observation", model.obs_dim(), y.len())?;
    check_dim("proposal", model.state_dim(), proposal.dim())?;
    if n == 0 {
        return Err(Error::InvalidConfig("importance sampler needs N >= 1".into()));
    }
    let d = model.state_dim();
    let mut samples = vec![0.0; n * d];
    let mut lw = Vec::with_capacity(n);
    for x in samples.chunks_exact_mut(d) {
        proposal.sample_into(stream, x);
        lw.push(model.log_likelihood_unchecked(y, x) + log_rho(x));
    }
    WeightedEnsemble::from_log_likelihoods(d, samples, lw, model.log_offset())
}

/// `π_y^N(f) = Σ wⁱ f(xⁱ)`, clamped to `[−‖f‖_∞, ‖f‖_∞]` against rounding.
pub fn estimate(ensemble: &WeightedEnsemble, f: &TestFunction) -> f64 {
    if let TestFunction::Constant(c) = *f {
        return c;
    }
    let sup = f.sup_norm();
    let v = neumaier_sum(ensemble.samples().zip(ensemble.weights()).map(|(x, w)| w * f.eval(x)));
    v.clamp(-sup, sup)
}

/// `Ẑ_N = (1/N) Σ g(y | xⁱ)`.
pub fn evidence_estimate(ensemble: &WeightedEnsemble) -> Result<f64> {
    if ensemble.log_offset() != 0.0 {
        return Err(Error::OffsetEvidence {
            offset: ensemble.log_offset(),
        });
    }
    Ok(ensemble.log_z_hat().exp())
}

/// `(ESS, ρ̂) = (1/Σw², N Σw²)`.
pub fn weight_diagnostics(ensemble: &WeightedEnsemble) -> (f64, f64) {
    (ensemble.ess(), ensemble.rho_hat())
}
