//! Second moments of the link function `ℓ_y = g_y / π₀(g_y)` and the error
//! constants built from them.
//!
//! `K₂ = E_Y ‖ℓ_Y‖²_{L²(π₀)}` governs the L² error of the self-normalized
//! estimator. For a fixed `y`, `‖ℓ_y‖² = π₀(g_y²)/π₀(g_y)²` is the second
//! moment of the normalized importance weights, i.e. `1 + χ²(π_y ‖ π₀)`.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::math::gaussian::gaussian_log_pdf_unchecked;
use crate::math::special::ln_upper_incomplete_gamma;
use crate::math::{log_sum_exp, RandomStream, SpdMatrix};
use crate::model::profile::{ln_profile_radial_mass, ln_radial_integral, tail_for, Tail};
use crate::model::{BayesModel, EllipticalModel, LinearGaussianModel, Model, RadialProfile};
use crate::sampler::run_is;
use crate::stats::mean_with_jackknife_se;

const RADIAL_BOUND_RTOL: f64 = 1e-8;
const MAX_LN_F64: f64 = 709.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    LgClosedForm,
    LgUniform,
    RadialQuadrature,
    RadialExponentialAnalytic,
    RadialPolynomialAnalytic,
    ProductForm,
    MonteCarlo,
}

/// A K₂ value and/or envelope, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundReport {
    pub k2_estimate_or_closed_form: Option<f64>,
    pub k2_upper_bound: Option<f64>,
    pub method: BoundMethod,
    pub standard_error: f64,
    /// `(d_x, d_y)`; `d_x` is absent for bounds that do not depend on it.
    pub dims: (Option<usize>, usize),
}

impl BoundReport {
    /// Envelope respected up to three standard errors, when both are present.
    pub fn is_consistent(&self) -> bool {
        match (self.k2_estimate_or_closed_form, self.k2_upper_bound) {
            (Some(v), Some(b)) => b >= v - 3.0 * self.standard_error,
            _ => true,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// `‖ℓ_y‖²` for the linear-Gaussian model, in closed form:
///
/// `π₀(g_y²) = (4π)^{−d_y/2} |R|^{−1/2} 𝒩(y; μ_y, Σ_y − ½R)` and
/// `π₀(g_y) = 𝒩(y; μ_y, Σ_y)`, so
/// `‖ℓ_y‖² = (4π)^{−d_y/2} |R|^{−1/2} 𝒩(y; μ_y, S₂) / 𝒩(y; μ_y, Σ_y)²`.
pub fn link_norm_sq_lg(model: &LinearGaussianModel, y: &[f64]) -> Result<f64> {
    check_dim("observation", model.obs_dim(), y.len())?;
    Ok(ln_link_norm_sq_lg(model, y).exp())
}

fn ln_link_norm_sq_lg(model: &LinearGaussianModel, y: &[f64]) -> f64 {
    let d = y.len() as f64;
    let ln_c = -0.5 * d * (4.0 * PI).ln() - 0.5 * model.r().log_det();
    ln_c + gaussian_log_pdf_unchecked(y, model.mu_y(), model.s2())
        - 2.0 * gaussian_log_pdf_unchecked(y, model.mu_y(), model.sigma_y())
}

/// Published closed form `K₂ = [2^{d_y}(2π)^{3d_y}|R|]^{−1/2} |S₂|^{−1}` with
/// its dimension-free envelope `𝒦₂ = [(2^{2/3}π)^{d_y}|R|]^{−3/2}`.
///
/// `K₂ ≤ 𝒦₂` holds for every model because `|S₂| ≥ 2^{−d_y}|R|`, with
/// equality when `A = 0`. Note that these expressions do not equal
/// `E‖ℓ_Y‖²`; the exact second moment is [`k2_linear_gaussian_exact`].
pub fn k2_linear_gaussian(model: &LinearGaussianModel) -> BoundReport {
    let d = model.obs_dim() as f64;
    let ln_r = model.r().log_det();
    let ln_k2 = -0.5 * (d * LN_2 + 3.0 * d * (2.0 * PI).ln() + ln_r) - model.s2().log_det();
    BoundReport {
        k2_estimate_or_closed_form: Some(ln_k2.exp()),
        k2_upper_bound: Some(lg_uniform_bound(d as usize, model.r())),
        method: BoundMethod::LgClosedForm,
        standard_error: 0.0,
        dims: (Some(model.state_dim()), model.obs_dim()),
    }
}

/// `𝒦₂ = [(2^{2/3}π)^{d_y}|R|]^{−3/2}`.
pub fn lg_uniform_bound(d_y: usize, r: &SpdMatrix) -> f64 {
    let d = d_y as f64;
    (-1.5 * (d * (2.0 / 3.0 * LN_2 + PI.ln()) + r.log_det())).exp()
}

/// Exact `E_Y ‖ℓ_Y‖² = |Σ_y| / |R| = |I + R⁻¹ A Σ_x Aᵀ|`.
///
/// Integrating `‖ℓ_y‖²` against `𝒩(y; μ_y, Σ_y)` gives
/// `(4π)^{−d/2}|R|^{−1/2} ∫ 𝒩(y; μ_y, S₂)/𝒩(y; μ_y, Σ_y) dy` and the Gaussian
/// ratio integrates to `(4π)^{d/2} |Σ_y| |R|^{−1/2}`.
pub fn k2_linear_gaussian_exact(model: &LinearGaussianModel) -> f64 {
    (model.sigma_y().log_det() - model.r().log_det()).exp()
}

/// Monte Carlo estimate of `K₂` over `n_obs` draws `Y ~ η`.
///
/// Per draw, `‖ℓ_y‖²` comes from the closed form for linear-Gaussian models
/// and from `n_inner` fresh prior samples otherwise (as `N Σ wᵢ²`). The
/// standard error is the jackknife over the outer draws. Each draw uses
/// substream `j` of `stream`, so the result does not depend on the thread
/// pool.
pub fn k2_mc_estimate(model: &BayesModel, stream: &RandomStream, n_obs: usize, n_inner: usize) -> Result<BoundReport> {
    match model {
        BayesModel::LinearGaussian(lg) => {
            check_counts(n_obs, n_inner)?;
            let values: Vec<f64> = (0..n_obs)
                .into_par_iter()
                .map(|j| {
                    let mut s = stream.substream(j as u64);
                    let (_, y) = lg.sample_joint(&mut s);
                    ln_link_norm_sq_lg(lg, &y).exp()
                })
                .collect();
            Ok(mc_report(&values, lg.state_dim(), lg.obs_dim()))
        }
        BayesModel::Elliptical(m) => k2_mc_estimate_inner(m, stream, n_obs, n_inner),
    }
}

/// [`k2_mc_estimate`] with the inner Monte Carlo ratio forced for every
/// model type.
pub fn k2_mc_estimate_inner<M: Model>(model: &M, stream: &RandomStream, n_obs: usize, n_inner: usize) -> Result<BoundReport> {
    check_counts(n_obs, n_inner)?;
    let values: Result<Vec<f64>> = (0..n_obs)
        .into_par_iter()
        .map(|j| {
            let mut s = stream.substream(j as u64);
            let (_, y) = model.sample_joint(&mut s);
            let e = run_is(model, &y, n_inner, &mut s)
                .map_err(|e| e.with_context(format!("outer draw {j}, y = {y:?}")))?;
            Ok(e.rho_hat())
        })
        .collect();
    Ok(mc_report(&values?, model.state_dim(), model.obs_dim()))
}

fn check_counts(n_obs: usize, n_inner: usize) -> Result<()> {
    if n_obs < 2 || n_inner < 2 {
        return Err(Error::InvalidConfig(format!(
            "k2 Monte Carlo needs n_obs >= 2 and n_inner >= 2, got {n_obs} and {n_inner}"
        )));
    }
    Ok(())
}

fn mc_report(values: &[f64], d_x: usize, d_y: usize) -> BoundReport {
    let (mean, se) = mean_with_jackknife_se(values);
    BoundReport {
        k2_estimate_or_closed_form: Some(mean),
        k2_upper_bound: None,
        method: BoundMethod::MonteCarlo,
        standard_error: se,
        dims: (Some(d_x), d_y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialMode {
    Quadrature,
    Analytic,
}

/// Upper bound on `K₂` for an elliptical likelihood whose observation map
/// satisfies `sup ‖h(x)‖_R ≤ m_r`.
///
/// Quadrature mode evaluates
/// `C · vol_R · ∫₀^∞ φ²(ψ(r)) / φ(ψ(r + 2m_r)) r^{d−1} dr`, split at `4m_r`.
/// Analytic mode returns the closed-form majorant of that integral:
/// `J₁ + J₂` for exponential profiles and `2^{(p−1)α}(1 + a(2m_r)^p)^α` for
/// polynomial ones.
pub fn radial_bound(profile: &RadialProfile, d_y: usize, r: &SpdMatrix, m_r: f64, mode: RadialMode) -> Result<BoundReport> {
    check_dim("metric", d_y, r.dim())?;
    if !(m_r >= 0.0) || !m_r.is_finite() {
        return Err(Error::InvalidConfig(format!("M_R must be finite and >= 0, got {m_r}")));
    }
    profile.validate(d_y)?;
    let (ln_value, method) = match mode {
        RadialMode::Quadrature => (ln_radial_quadrature(profile, d_y, m_r)?, BoundMethod::RadialQuadrature),
        RadialMode::Analytic => match *profile {
            RadialProfile::Exponential { a, beta } => (
                ln_exponential_analytic(profile, a, beta, d_y, m_r)?,
                BoundMethod::RadialExponentialAnalytic,
            ),
            RadialProfile::Polynomial { a, p, alpha } => {
                let pf = p as f64;
                let ln_v = alpha * ((pf - 1.0) * LN_2 + (a * (2.0 * m_r).powi(p as i32)).ln_1p());
                (ln_v, BoundMethod::RadialPolynomialAnalytic)
            }
        },
    };
    if ln_value > MAX_LN_F64 {
        return Err(Error::BoundOverflow {
            what: "radial bound",
            log_value: ln_value,
        });
    }
    Ok(BoundReport {
        k2_estimate_or_closed_form: None,
        k2_upper_bound: Some(ln_value.exp()),
        method,
        standard_error: 0.0,
        dims: (None, d_y),
    })
}

/// [`radial_bound`] for a concrete model, using its `M_R`.
pub fn radial_bound_for(model: &EllipticalModel, mode: RadialMode) -> Result<BoundReport> {
    let mut rep = radial_bound(model.profile(), model.obs_dim(), model.r(), model.m_r(), mode)?;
    rep.dims.0 = Some(model.state_dim());
    Ok(rep)
}

/// log of the radial bound integral, normalized by the profile's mass so
/// that `C · vol_R` never has to be formed.
pub fn ln_radial_quadrature(profile: &RadialProfile, d_y: usize, m_r: f64) -> Result<f64> {
    let shift = 2.0 * m_r;
    let tail = match tail_for(profile) {
        Tail::Rational { scale } => Tail::Rational {
            scale: scale.max(m_r),
        },
        t => t,
    };
    let ln_j = ln_radial_integral(
        |r| 2.0 * profile.log_kernel(r) - profile.log_kernel(r + shift),
        d_y,
        4.0 * m_r,
        tail,
        RADIAL_BOUND_RTOL,
        "radial bound integral",
    )?;
    Ok(ln_j - ln_profile_radial_mass(profile, d_y)?)
}

fn ln_exponential_analytic(profile: &RadialProfile, a: f64, beta: f64, d_y: usize, m_r: f64) -> Result<f64> {
    let d = d_y as f64;
    let b = 0.5 * a;
    let ln_cs = -ln_profile_radial_mass(profile, d_y)?;
    let ln_j1 = if m_r > 0.0 {
        a * (6.0 * m_r).powf(beta) + d * (4.0 * m_r).ln() - d.ln()
    } else {
        f64::NEG_INFINITY
    };
    let ln_j2 = ln_upper_incomplete_gamma(d / beta, b * (4.0 * m_r).powf(beta))? - beta.ln() - d / beta * b.ln();
    Ok(ln_cs + log_sum_exp(&[ln_j1, ln_j2]))
}

/// `K₂ ≤ M · Q` for likelihoods with a product-form pointwise envelope; `M`
/// and `Q` are supplied by the caller.
pub fn product_bound(m: f64, q: f64) -> Result<BoundReport> {
    if !(m >= 0.0 && q >= 0.0) || !m.is_finite() || !q.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "product bound factors must be finite and >= 0, got M = {m}, Q = {q}"
        )));
    }
    Ok(BoundReport {
        k2_estimate_or_closed_form: None,
        k2_upper_bound: Some(m * q),
        method: BoundMethod::ProductForm,
        standard_error: 0.0,
        dims: (None, 0),
    })
}

/// Smallest `N` with `P(d_x) ‖f‖_∞ / √N ≤ ε`, i.e. `⌈(P ‖f‖_∞ / ε)²⌉`.
pub fn sample_size_for_tolerance(poly_value: f64, f_sup: f64, epsilon: f64) -> Result<u64> {
    for (name, v) in [("poly_value", poly_value), ("f_sup", f_sup), ("epsilon", epsilon)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonpositiveTolerance(name));
        }
    }
    let q = (poly_value * f_sup / epsilon).powi(2);
    // absorb rounding in q before taking the ceiling
    let n = (q * (1.0 - 4.0 * f64::EPSILON)).ceil();
    if n >= u64::MAX as f64 {
        return Err(Error::InvalidConfig(format!("required sample size {q:e} exceeds u64")));
    }
    Ok((n as u64).max(1))
}
