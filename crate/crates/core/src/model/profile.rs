//! Radial profiles `φ∘ψ` for elliptically symmetric likelihoods.
//!
//! Exponential type: `φ(s) = C e^{−s}`, `ψ(r) = a r^β`.
//! Polynomial type: `φ(s) = C s^{−α}`, `ψ(r) = 1 + a r^p`.
//!
//! The constant `C` is never stored; it depends on the observation dimension
//! and the metric and comes from [`profile_normalization`].

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::math::special::ln_radial_measure;
use crate::math::{RandomStream, SpdMatrix};

const NORMALIZATION_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RadialProfile {
    Exponential { a: f64, beta: f64 },
    Polynomial { a: f64, p: u32, alpha: f64 },
}

impl RadialProfile {
    pub fn gaussian() -> Self {
        Self::Exponential { a: 0.5, beta: 2.0 }
    }

    pub fn generalized_gaussian(beta: f64) -> Self {
        Self::Exponential { a: 1.0, beta }
    }

    pub fn laplace() -> Self {
        Self::Exponential { a: 1.0, beta: 1.0 }
    }

    pub fn sub_gaussian(a: f64) -> Self {
        Self::Exponential { a, beta: 2.0 }
    }

    /// Multivariate Student-t with `nu` degrees of freedom in `d_y` dimensions.
    pub fn student_t(nu: f64, d_y: usize) -> Self {
        Self::Polynomial {
            a: 1.0 / nu,
            p: 2,
            alpha: 0.5 * (nu + d_y as f64),
        }
    }

    pub fn cauchy(d_y: usize) -> Self {
        Self::Polynomial {
            a: 1.0,
            p: 2,
            alpha: 0.5 * (d_y as f64 + 1.0),
        }
    }

    pub fn pearson_vii(lambda: f64, alpha: f64) -> Self {
        Self::Polynomial {
            a: 1.0 / lambda,
            p: 2,
            alpha,
        }
    }

    pub fn generalized_cauchy(p: u32, alpha: f64) -> Self {
        Self::Polynomial { a: 1.0, p, alpha }
    }

    /// Parameter sanity plus integrability in `d_y` dimensions.
    pub fn validate(&self, d_y: usize) -> Result<()> {
        match *self {
            Self::Exponential { a, beta } => {
                if !(a > 0.0 && a.is_finite() && beta > 0.0 && beta.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "exponential profile needs a > 0 and beta > 0, got a = {a}, beta = {beta}"
                    )));
                }
            }
            Self::Polynomial { a, p, alpha } => {
                if !(a > 0.0 && a.is_finite() && p >= 1 && alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "polynomial profile needs a > 0, p >= 1, alpha > 0, got a = {a}, p = {p}, alpha = {alpha}"
                    )));
                }
                if !(alpha > d_y as f64 / p as f64) {
                    return Err(Error::NonIntegrableProfile { alpha, d_y, p });
                }
            }
        }
        Ok(())
    }

    /// `ψ(r)`.
    pub fn psi(&self, r: f64) -> f64 {
        match *self {
            Self::Exponential { a, beta } => a * r.powf(beta),
            Self::Polynomial { a, p, .. } => 1.0 + a * r.powi(p as i32),
        }
    }

    /// `log φ(ψ(r)) − log C`.
    pub fn log_kernel(&self, r: f64) -> f64 {
        match *self {
            Self::Exponential { a, beta } => -a * r.powf(beta),
            Self::Polynomial { a, p, alpha } => -alpha * (a * r.powi(p as i32)).ln_1p(),
        }
    }

    /// Radius at which the profile has fallen off by O(1).
    pub(crate) fn scale(&self) -> f64 {
        match *self {
            Self::Exponential { a, beta } => a.powf(-1.0 / beta),
            Self::Polynomial { a, p, .. } => a.powf(-1.0 / p as f64),
        }
    }

    /// Draws `r` with density ∝ `r^{d−1} φ(ψ(r))`.
    ///
    /// Exponential type: `a r^β ~ Gamma(d/β)`. Polynomial type:
    /// `a r^p ~ BetaPrime(d/p, α − d/p)`, realized as a ratio of gammas.
    pub fn sample_radius<R: Rng + ?Sized>(&self, d_y: usize, rng: &mut R) -> f64 {
        let d = d_y as f64;
        match *self {
            Self::Exponential { a, beta } => {
                let t = Gamma::new(d / beta, 1.0).expect("valid gamma").sample(rng);
                (t / a).powf(1.0 / beta)
            }
            Self::Polynomial { a, p, alpha } => {
                let pf = p as f64;
                let g1 = Gamma::new(d / pf, 1.0).expect("valid gamma").sample(rng);
                let g2 = Gamma::new(alpha - d / pf, 1.0)
                    .expect("integrable profile")
                    .sample(rng);
                (g1 / g2 / a).powf(1.0 / pf)
            }
        }
    }

    /// Writes `r · L⁻ᵀ u` into `out`, with `u` uniform on the unit sphere
    /// and `R = L Lᵀ`, so that `‖out‖_R = r`.
    pub(crate) fn sample_noise_into(&self, metric: &SpdMatrix, rng: &mut RandomStream, out: &mut [f64]) {
        let d = out.len();
        let mut norm2 = 0.0;
        loop {
            for v in out.iter_mut() {
                *v = rng.sample(StandardNormal);
                norm2 += *v * *v;
            }
            if norm2 > 0.0 {
                break;
            }
        }
        let r = self.sample_radius(d, rng);
        let k = r / norm2.sqrt();
        out.iter_mut().for_each(|v| *v *= k);
        metric.solve_upper_in_place(out);
    }
}

/// Tail handling for [`ln_radial_integral`].
#[derive(Debug, Clone, Copy)]
pub(crate) enum Tail {
    /// `r = split + scale · t/(1−t)`.
    Rational { scale: f64 },
    /// `t = a r^β`, for integrands decaying like `e^{−c a r^β}`.
    PowerExponential { a: f64, beta: f64 },
}

/// log ∫₀^∞ exp(g(r)) r^{d−1} dr for a log-integrand `g`, split at `split`.
///
/// The integrand is rescaled by its approximate maximum before quadrature so
/// that values far outside the f64 range stay representable in log form.
pub(crate) fn ln_radial_integral<G: Fn(f64) -> f64>(
    g: G,
    d: usize,
    split: f64,
    tail: Tail,
    rel_tol: f64,
    what: &'static str,
) -> Result<f64> {
    let dm1 = d as f64 - 1.0;
    let log_f = |r: f64| {
        if r <= 0.0 {
            if d == 1 {
                g(0.0)
            } else {
                f64::NEG_INFINITY
            }
        } else if d == 1 {
            g(r)
        } else {
            g(r) + dm1 * r.ln()
        }
    };

    // coarse scan for the peak of the log-integrand
    let probe_scale = match tail {
        Tail::Rational { scale } => scale,
        Tail::PowerExponential { a, beta } => a.powf(-1.0 / beta),
    };
    let mut peak = f64::NEG_INFINITY;
    let n_scan = 600;
    for k in 1..n_scan {
        let t = k as f64 / n_scan as f64;
        let r_in = split * t;
        let r_out = split + probe_scale * 4.0 * t / (1.0 - t);
        for r in [r_in, r_out] {
            let v = log_f(r);
            if v.is_finite() {
                peak = peak.max(v);
            }
        }
    }
    if !peak.is_finite() {
        return Err(Error::QuadratureNonConvergent {
            what,
            value: f64::NAN,
            abs_err: f64::NAN,
        });
    }

    let tol = Tolerance::relative(rel_tol * 0.25);
    let head = if split > 0.0 {
        integrate(|r| (log_f(r) - peak).exp(), 0.0, split, tol)?.value
    } else {
        0.0
    };
    let tail_value = match tail {
        Tail::Rational { scale } => {
            integrate_to_infinity(|r| (log_f(r) - peak).exp(), split, scale, tol)?.value
        }
        Tail::PowerExponential { a, beta } => {
            // dr = r / (β t) dt
            let t0 = a * split.powf(beta);
            let ln_beta = beta.ln();
            let h = |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let r = (t / a).powf(1.0 / beta);
                (log_f(r) + r.ln() - ln_beta - t.ln() - peak).exp()
            };
            integrate_to_infinity(h, t0, 1.0, tol)?.value
        }
    };
    let total = head + tail_value;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::QuadratureNonConvergent {
            what,
            value: total,
            abs_err: f64::NAN,
        });
    }
    Ok(peak + total.ln())
}

fn default_tail(profile: &RadialProfile) -> Tail {
    match *profile {
        RadialProfile::Exponential { a, beta } => Tail::PowerExponential { a, beta },
        RadialProfile::Polynomial { .. } => Tail::Rational {
            scale: profile.scale(),
        },
    }
}

/// log ∫₀^∞ φ(ψ(r))/C · r^{d−1} dr.
pub fn ln_profile_radial_mass(profile: &RadialProfile, d_y: usize) -> Result<f64> {
    profile.validate(d_y)?;
    ln_radial_integral(
        |r| profile.log_kernel(r),
        d_y,
        profile.scale(),
        default_tail(profile),
        NORMALIZATION_RTOL,
        "profile normalization",
    )
}

/// log C, where `C · vol_R · ∫₀^∞ φ(ψ(r))/C · r^{d−1} dr = 1` and `vol_R`
/// is the radial volume factor of the metric `R`.
pub fn ln_profile_normalization(profile: &RadialProfile, d_y: usize, r: &SpdMatrix) -> Result<f64> {
    let mass = ln_profile_radial_mass(profile, d_y)?;
    Ok(-(ln_radial_measure(d_y, r)? + mass))
}

/// The normalization constant `C` of the likelihood `C φ(ψ(‖y − h‖_R))`.
pub fn profile_normalization(profile: &RadialProfile, d_y: usize, r: &SpdMatrix) -> Result<f64> {
    Ok(ln_profile_normalization(profile, d_y, r)?.exp())
}

pub(crate) fn tail_for(profile: &RadialProfile) -> Tail {
    default_tail(profile)
}
