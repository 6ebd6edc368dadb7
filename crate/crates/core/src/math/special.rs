//! Special functions: upper incomplete gamma, Gaussian CDF, sphere areas.

use std::f64::consts::PI;

use libm::erfc;
pub use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{check_dim, Error, Result};
use crate::math::linalg::SpdMatrix;

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Γ(s, x) = ∫ₓ^∞ t^{s−1} e^{−t} dt.
///
/// Power series for the lower function when `x < s + 1` (then Γ(s) − γ),
/// modified Lentz continued fraction otherwise.
pub fn upper_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(ln_upper_incomplete_gamma(s, x)?.exp())
}

/// Natural log of Γ(s, x); stays finite where Γ(s, x) itself would under-
/// or overflow.
pub fn ln_upper_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NonpositiveShape(s));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "incomplete gamma argument must be nonnegative, got {x}"
        )));
    }
    let ln_gs = ln_gamma(s);
    if x == 0.0 {
        return Ok(ln_gs);
    }
    if x.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let ln_prefactor = -x + s * x.ln();
    if x < s + 1.0 {
        // γ(s,x) = e^{-x} x^s Σ xⁿ / (s (s+1) … (s+n))
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut a = s;
        for _ in 0..MAX_ITER {
            a += 1.0;
            term *= x / a;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        let ln_lower = ln_prefactor + sum.ln();
        // Γ(s,x) = Γ(s) (1 − γ/Γ(s)); γ/Γ(s) < 1 strictly in this regime
        let p = (ln_lower - ln_gs).exp();
        Ok(ln_gs + (-p).ln_1p())
    } else {
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        Ok(ln_prefactor + h.ln())
    }
}

/// Standard normal CDF Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Surface area of the unit sphere in ℝ^d, `2 π^{d/2} / Γ(d/2)`.
pub fn unit_sphere_area(d: usize) -> f64 {
    ln_unit_sphere_area(d).exp()
}

pub fn ln_unit_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::LN_2 + h * PI.ln() - ln_gamma(h)
}

/// R-weighted sphere area `|R|^{1/2} · 2π^{d/2}/Γ(d/2)`.
///
/// This is the weighted area as conventionally quoted alongside the
/// Mahalanobis geometry. It is *not* the Jacobian of `y ↦ ‖y‖_R`: the
/// volume element of that map is `|R|^{-1/2} · 2π^{d/2}/Γ(d/2) · r^{d−1} dr`,
/// see [`ln_radial_measure`].
pub fn sphere_surface_area(d_y: usize, r: &SpdMatrix) -> Result<f64> {
    check_dim("sphere dimension vs. metric", d_y, r.dim())?;
    Ok((0.5 * r.log_det() + ln_unit_sphere_area(d_y)).exp())
}

/// Log of the radial volume factor for `‖y‖_R = √(yᵀ R y)`:
/// `dy = |R|^{-1/2} · S^{d−1} · r^{d−1} dr`.
pub fn ln_radial_measure(d_y: usize, r: &SpdMatrix) -> Result<f64> {
    check_dim("radial measure dimension vs. metric", d_y, r.dim())?;
    Ok(ln_unit_sphere_area(d_y) - 0.5 * r.log_det())
}

/// `√(yᵀ R y)`.
pub fn mahalanobis_norm(y: &[f64], r: &SpdMatrix) -> Result<f64> {
    check_dim("Mahalanobis vector", r.dim(), y.len())?;
    Ok(r.quad_form(y).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn s_one_is_exponential() {
        for x in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 30.0] {
            assert_relative_eq!(
                upper_incomplete_gamma(1.0, x).unwrap(),
                (-x).exp(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn x_zero_is_complete_gamma() {
        for s in [0.3, 0.5, 1.0, 2.5, 7.0] {
            assert_relative_eq!(
                upper_incomplete_gamma(s, 0.0).unwrap(),
                gamma(s),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn half_shape_matches_erfc() {
        // Γ(½, x) = √π erfc(√x)
        for x in [0.01_f64, 0.3, 1.0, 1.4, 3.0, 12.0] {
            let exact = PI.sqrt() * erfc(x.sqrt());
            assert_relative_eq!(
                upper_incomplete_gamma(0.5, x).unwrap(),
                exact,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rejects_bad_shape() {
        assert!(matches!(
            upper_incomplete_gamma(0.0, 1.0),
            Err(Error::NonpositiveShape(_))
        ));
        assert!(matches!(
            upper_incomplete_gamma(-1.0, 1.0),
            Err(Error::NonpositiveShape(_))
        ));
    }

    #[test]
    fn log_form_survives_underflow() {
        // Γ(2, x) = (x+1) e^{-x}
        let x: f64 = 900.0;
        let ln = ln_upper_incomplete_gamma(2.0, x).unwrap();
        assert_relative_eq!(ln, (x + 1.0).ln() - x, max_relative = 1e-13);
    }

    #[test]
    fn sphere_areas() {
        let i2 = SpdMatrix::identity(2);
        let i3 = SpdMatrix::identity(3);
        assert_relative_eq!(sphere_surface_area(2, &i2).unwrap(), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_surface_area(3, &i3).unwrap(), 4.0 * PI, max_relative = 1e-14);
        let r = SpdMatrix::from_diagonal(&[4.0]).unwrap();
        assert_relative_eq!(sphere_surface_area(1, &r).unwrap(), 4.0, max_relative = 1e-14);
        assert!(sphere_surface_area(2, &r).is_err());
    }

    #[test]
    fn mahalanobis_examples() {
        let i2 = SpdMatrix::identity(2);
        assert_eq!(mahalanobis_norm(&[0.0, 0.0], &i2).unwrap(), 0.0);
        assert_relative_eq!(mahalanobis_norm(&[3.0, 4.0], &i2).unwrap(), 5.0, max_relative = 1e-15);
        let r = SpdMatrix::from_diagonal(&[4.0]).unwrap();
        assert_relative_eq!(mahalanobis_norm(&[3.0], &r).unwrap(), 6.0, max_relative = 1e-15);
        assert!(mahalanobis_norm(&[1.0], &i2).is_err());
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, max_relative = 1e-14);
        assert_relative_eq!(normal_cdf(-3.0), 0.001_349_898_031_630_094_6, max_relative = 1e-12);
    }
}
