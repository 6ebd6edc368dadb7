use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use rand::Rng;

use snis_core::diagnostics::{
    k2_linear_gaussian, k2_linear_gaussian_exact, k2_mc_estimate, k2_mc_estimate_inner, link_norm_sq_lg, lg_uniform_bound,
    product_bound, radial_bound, radial_bound_for, sample_size_for_tolerance, BoundMethod, BoundReport, RadialMode,
};
use snis_core::harness::fit_loglog_slope;
use snis_core::math::quadrature::{integrate_to_infinity, Tolerance};
use snis_core::math::{RandomStream, SpdMatrix};
use snis_core::model::{
    BayesModel, EllipticalModel, LinearGaussianModel, Model, Nonlinearity, Prior, RadialProfile, SaturatingObservationMap,
    WithLogOffset,
};
use snis_core::Error;

fn scalar_lg(a: f64) -> LinearGaussianModel {
    LinearGaussianModel::new(vec![0.0], SpdMatrix::identity(1), dmatrix![a], SpdMatrix::identity(1)).unwrap()
}

fn random_lg(d_x: usize, d_y: usize, seed: u64) -> LinearGaussianModel {
    let mut rng = RandomStream::new(seed);
    let a = DMatrix::from_fn(d_y, d_x, |_, _| rng.random_range(-1.0..1.0) / (d_x as f64).sqrt());
    let r = SpdMatrix::from_diagonal(&(0..d_y).map(|_| rng.random_range(0.5..2.0)).collect::<Vec<_>>()).unwrap();
    let mu: Vec<f64> = (0..d_x).map(|_| rng.random_range(-1.0..1.0)).collect();
    LinearGaussianModel::new(mu, SpdMatrix::identity(d_x), a, r).unwrap()
}

fn tanh_elliptical(profile: RadialProfile, d_x: usize, d_y: usize, a_max: f64) -> EllipticalModel {
    EllipticalModel::new(
        Prior::gaussian(vec![0.0; d_x], SpdMatrix::identity(d_x)).unwrap(),
        SaturatingObservationMap::seeded(d_y, d_x, a_max, 5, Nonlinearity::Tanh).unwrap(),
        profile,
        SpdMatrix::identity(d_y),
    )
    .unwrap()
}

#[test]
fn link_norm_is_one_without_signal() {
    let m = scalar_lg(0.0);
    for y in [0.0, 5.0, -13.0] {
        assert_relative_eq!(link_norm_sq_lg(&m, &[y]).unwrap(), 1.0, max_relative = 1e-13);
    }
    assert!(matches!(link_norm_sq_lg(&m, &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn link_norm_matches_prior_monte_carlo() {
    let m = scalar_lg(1.0);
    let y = [0.0];
    let n = 10_000_000;
    let mut rng = RandomStream::new(21);
    let mut x = [0.0];
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        m.sample_prior_into(&mut rng, &mut x);
        let g = m.log_likelihood(&y, &x).unwrap().exp();
        s1 += g;
        s2 += g * g;
        s3 += g * g * g;
        s4 += g * g * g * g;
    }
    let nf = n as f64;
    let (m1, m2, m3, m4) = (s1 / nf, s2 / nf, s3 / nf, s4 / nf);
    let ratio = m2 / (m1 * m1);
    // delta method for m2 / m1²: gradient (1/m1², −2 m2/m1³)
    let (g1, g2) = (-2.0 * m2 / m1.powi(3), 1.0 / (m1 * m1));
    let var = g1 * g1 * (m2 - m1 * m1) + g2 * g2 * (m4 - m2 * m2) + 2.0 * g1 * g2 * (m3 - m1 * m2);
    let se = (var / nf).sqrt();
    let want = link_norm_sq_lg(&m, &y).unwrap();
    assert!((ratio - want).abs() < 3.0 * se, "{ratio} vs {want} (se {se})");
}

#[test]
fn published_constant_at_zero_signal() {
    let rep = k2_linear_gaussian(&scalar_lg(0.0));
    let k2 = rep.k2_estimate_or_closed_form.unwrap();
    // hand evaluation: |S₂| = ½, so K₂ = 2 / √(2 (2π)³)
    let hand = 2.0 / (2.0 * (2.0 * PI).powi(3)).sqrt();
    assert_relative_eq!(k2, hand, max_relative = 1e-14);
    assert_relative_eq!(k2, 0.089_793_561_062_583_3, max_relative = 1e-14);
    assert_relative_eq!(rep.k2_upper_bound.unwrap(), k2, max_relative = 1e-12);
    assert_eq!(rep.method, BoundMethod::LgClosedForm);
    assert_eq!(rep.standard_error, 0.0);
    assert!(rep.is_consistent());
}

#[test]
fn published_constant_shrinks_by_three_with_unit_signal() {
    let k0 = k2_linear_gaussian(&scalar_lg(0.0)).k2_estimate_or_closed_form.unwrap();
    let k1 = k2_linear_gaussian(&scalar_lg(1.0)).k2_estimate_or_closed_form.unwrap();
    assert_relative_eq!(k1, k0 / 3.0, max_relative = 1e-13);
    assert_relative_eq!(k1, 0.029_931_187_020_861_1, max_relative = 1e-12);
}

#[test]
fn exact_second_moment_matches_y_quadrature() {
    // ∫ ‖ℓ_y‖² 𝒩(y; 0, 2) dy for A = 1
    let m = scalar_lg(1.0);
    let f = |y: f64| link_norm_sq_lg(&m, &[y]).unwrap() * m.marginal_observation_logpdf(&[y]).unwrap().exp();
    let t = Tolerance::relative(1e-12);
    let q = integrate_to_infinity(f, 0.0, 1.0, t).unwrap().value * 2.0;
    assert_relative_eq!(q, k2_linear_gaussian_exact(&m), max_relative = 1e-8);
    assert_relative_eq!(q, 2.0, max_relative = 1e-8);
}

#[test]
fn monte_carlo_agrees_with_exact_second_moment() {
    for (i, (d_x, d_y)) in [(1, 1), (4, 2), (16, 1), (16, 2)].into_iter().enumerate() {
        let m = random_lg(d_x, d_y, 100 + i as u64);
        let rep = k2_mc_estimate(&BayesModel::LinearGaussian(m.clone()), &RandomStream::new(22), 100_000, 2).unwrap();
        let exact = k2_linear_gaussian_exact(&m);
        let est = rep.k2_estimate_or_closed_form.unwrap();
        assert!((est - exact).abs() < 3.0 * rep.standard_error, "d=({d_x},{d_y}): {est} vs {exact}");
        assert_eq!(rep.method, BoundMethod::MonteCarlo);
    }
}

#[test]
fn inner_ratio_agrees_with_closed_form_link_norm() {
    let m = LinearGaussianModel::new(
        vec![0.0; 3],
        SpdMatrix::identity(3),
        LinearGaussianModel::seeded_matrix(1, 3, 8),
        SpdMatrix::identity(1),
    )
    .unwrap();
    let inner = k2_mc_estimate_inner(&m, &RandomStream::new(23), 2000, 20_000).unwrap();
    let closed = k2_mc_estimate(&BayesModel::LinearGaussian(m.clone()), &RandomStream::new(23), 2000, 2).unwrap();
    let (a, b) = (inner.k2_estimate_or_closed_form.unwrap(), closed.k2_estimate_or_closed_form.unwrap());
    // identical y-draws, so the remaining gap is inner Monte Carlo noise
    assert!((a - b).abs() < 0.02 * b, "{a} vs {b}");
}

#[test]
fn zero_signal_monte_carlo_is_exactly_one() {
    let rep = k2_mc_estimate(&BayesModel::LinearGaussian(scalar_lg(0.0)), &RandomStream::new(24), 500, 2).unwrap();
    assert_relative_eq!(rep.k2_estimate_or_closed_form.unwrap(), 1.0, max_relative = 1e-12);
    let e = tanh_elliptical(RadialProfile::gaussian(), 3, 2, 0.0);
    let rep = k2_mc_estimate(&BayesModel::Elliptical(e), &RandomStream::new(24), 200, 500).unwrap();
    let v = rep.k2_estimate_or_closed_form.unwrap();
    assert!((v - 1.0).abs() <= 3.0 * rep.standard_error + 1e-12, "{v} ± {}", rep.standard_error);
}

#[test]
fn monte_carlo_count_checks() {
    let m = BayesModel::LinearGaussian(scalar_lg(1.0));
    assert!(matches!(k2_mc_estimate(&m, &RandomStream::new(1), 1, 10), Err(Error::InvalidConfig(_))));
    assert!(matches!(k2_mc_estimate(&m, &RandomStream::new(1), 10, 1), Err(Error::InvalidConfig(_))));
}

#[test]
fn bound_reports_ignore_the_log_offset() {
    let e = tanh_elliptical(RadialProfile::student_t(4.0, 1), 2, 1, 0.7);
    let shifted = WithLogOffset { inner: e.clone(), offset: 250.0 };
    let a = k2_mc_estimate_inner(&e, &RandomStream::new(25), 50, 200).unwrap();
    let b = k2_mc_estimate_inner(&shifted, &RandomStream::new(25), 50, 200).unwrap();
    assert_eq!(a, b);
}

#[test]
fn radial_examples() {
    let one = SpdMatrix::identity(1);
    let poly = radial_bound(&RadialProfile::pearson_vii(1.0, 1.0), 1, &one, 0.5, RadialMode::Analytic).unwrap();
    assert_relative_eq!(poly.k2_upper_bound.unwrap(), 4.0, max_relative = 1e-14);
    assert_eq!(poly.method, BoundMethod::RadialPolynomialAnalytic);

    let g = RadialProfile::gaussian();
    let an = radial_bound(&g, 1, &one, 0.0, RadialMode::Analytic).unwrap();
    assert_relative_eq!(an.k2_upper_bound.unwrap(), 2f64.sqrt(), max_relative = 1e-12);
    assert_eq!(an.method, BoundMethod::RadialExponentialAnalytic);

    for (profile, d) in [
        (g, 1),
        (RadialProfile::laplace(), 3),
        (RadialProfile::generalized_gaussian(0.6), 2),
        (RadialProfile::student_t(3.0, 2), 2),
        (RadialProfile::cauchy(1), 1),
        (RadialProfile::generalized_cauchy(4, 1.5), 5),
    ] {
        let q = radial_bound(&profile, d, &SpdMatrix::identity(d), 0.0, RadialMode::Quadrature).unwrap();
        assert_relative_eq!(q.k2_upper_bound.unwrap(), 1.0, max_relative = 1e-8);
        assert_eq!(q.method, BoundMethod::RadialQuadrature);
    }

    let err = radial_bound(&RadialProfile::pearson_vii(1.0, 1.0), 2, &SpdMatrix::identity(2), 0.5, RadialMode::Analytic)
        .unwrap_err();
    assert!(matches!(err, Error::NonIntegrableProfile { .. }));
}

#[test]
fn gaussian_radial_quadrature_has_a_closed_form() {
    // Gaussian profile, d = 1: ∫₀^∞ φ(r)²/φ(r + 2M) dr / ∫₀^∞ φ(r) dr, integrated directly
    let m_r = 0.8_f64;
    let f = |r: f64| (-r * r + 0.5 * (r + 2.0 * m_r).powi(2)).exp();
    let t = Tolerance::relative(1e-12);
    let num = integrate_to_infinity(f, 0.0, 1.0, t).unwrap().value;
    let den = (PI / 2.0).sqrt();
    let q = radial_bound(&RadialProfile::gaussian(), 1, &SpdMatrix::identity(1), m_r, RadialMode::Quadrature).unwrap();
    assert_relative_eq!(q.k2_upper_bound.unwrap(), num / den, max_relative = 1e-7);
}

#[test]
fn quadrature_is_monotone_in_the_map_bound() {
    for (profile, d) in [
        (RadialProfile::gaussian(), 2),
        (RadialProfile::laplace(), 1),
        (RadialProfile::student_t(3.0, 3), 3),
        (RadialProfile::generalized_cauchy(2, 2.0), 2),
    ] {
        let r = SpdMatrix::identity(d);
        let vals: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&m| radial_bound(&profile, d, &r, m, RadialMode::Quadrature).unwrap().k2_upper_bound.unwrap())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-8), "{profile:?}: {vals:?}");
        }
    }
}

#[test]
fn analytic_majorizes_quadrature() {
    for (profile, d) in [
        (RadialProfile::gaussian(), 1),
        (RadialProfile::gaussian(), 4),
        (RadialProfile::laplace(), 2),
        (RadialProfile::generalized_gaussian(0.5), 3),
        (RadialProfile::generalized_gaussian(1.5), 2),
        (RadialProfile::sub_gaussian(2.0), 1),
        (RadialProfile::student_t(3.0, 2), 2),
        (RadialProfile::student_t(10.0, 5), 5),
        (RadialProfile::cauchy(1), 1),
        (RadialProfile::generalized_cauchy(3, 2.0), 3),
    ] {
        let r = SpdMatrix::identity(d);
        for m in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let q = radial_bound(&profile, d, &r, m, RadialMode::Quadrature);
            let a = radial_bound(&profile, d, &r, m, RadialMode::Analytic);
            match (q, a) {
                (Ok(q), Ok(a)) => {
                    let (q, a) = (q.k2_upper_bound.unwrap(), a.k2_upper_bound.unwrap());
                    assert!(a >= q * (1.0 - 1e-8), "{profile:?} d={d} M={m}: analytic {a} < quadrature {q}");
                }
                (_, Err(Error::BoundOverflow { .. })) => {}
                (q, a) => panic!("{profile:?} d={d} M={m}: {q:?} / {a:?}"),
            }
        }
    }
}

#[test]
fn elliptical_monte_carlo_respects_radial_bounds() {
    for profile in [RadialProfile::gaussian(), RadialProfile::student_t(3.0, 2)] {
        let m = tanh_elliptical(profile, 10, 2, 0.3);
        let q = radial_bound_for(&m, RadialMode::Quadrature).unwrap().k2_upper_bound.unwrap();
        let a = radial_bound_for(&m, RadialMode::Analytic).unwrap().k2_upper_bound.unwrap();
        let mc = k2_mc_estimate(&BayesModel::Elliptical(m), &RandomStream::new(26), 200, 2000).unwrap();
        let v = mc.k2_estimate_or_closed_form.unwrap();
        assert!(v <= q + 3.0 * mc.standard_error, "{profile:?}: mc {v} > quadrature {q}");
        assert!(q <= a * (1.0 + 1e-8));
    }
}

#[test]
fn polynomial_bound_grows_like_two_alpha() {
    let alpha = 1.5;
    let profile = RadialProfile::generalized_cauchy(2, alpha);
    let pts: Vec<(f64, f64)> = (4..=10)
        .map(|k| {
            let d_x = (1u64 << k) as f64;
            let v = radial_bound(&profile, 1, &SpdMatrix::identity(1), 0.1 * d_x, RadialMode::Analytic).unwrap();
            (d_x, v.k2_upper_bound.unwrap())
        })
        .collect();
    let fit = fit_loglog_slope(&pts).unwrap();
    assert!((fit.slope - 2.0 * alpha).abs() < 0.1, "{}", fit.slope);
}

#[test]
fn overflowing_bound_is_reported() {
    let err = radial_bound(&RadialProfile::gaussian(), 1, &SpdMatrix::identity(1), 50.0, RadialMode::Analytic).unwrap_err();
    assert!(matches!(err, Error::BoundOverflow { .. }));
}

#[test]
fn product_and_sample_size_examples() {
    assert_eq!(product_bound(0.0, 7.0).unwrap().k2_upper_bound, Some(0.0));
    assert_eq!(product_bound(7.0, 0.0).unwrap().k2_upper_bound, Some(0.0));
    let p = product_bound(2.0, 3.0).unwrap();
    assert_eq!(p.k2_upper_bound, Some(6.0));
    assert_eq!(p.method, BoundMethod::ProductForm);
    assert!(product_bound(-1.0, 1.0).is_err());
    assert!(product_bound(f64::INFINITY, 1.0).is_err());

    assert_eq!(sample_size_for_tolerance(1.0, 1.0, 1.0).unwrap(), 1);
    assert_eq!(sample_size_for_tolerance(1.0, 1.0, 0.1).unwrap(), 100);
    assert_eq!(sample_size_for_tolerance(2.0, 1.0, 0.1).unwrap(), 400);
    assert_eq!(sample_size_for_tolerance(3.0, 0.5, 0.7).unwrap(), 5);
    for bad in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)] {
        assert!(matches!(sample_size_for_tolerance(bad.0, bad.1, bad.2), Err(Error::NonpositiveTolerance(_))));
    }
}

#[test]
fn report_json_has_exactly_the_listed_fields() {
    let v: serde_json::Value = serde_json::from_str(&k2_linear_gaussian(&scalar_lg(1.0)).to_json()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["dims", "k2_estimate_or_closed_form", "k2_upper_bound", "method", "standard_error"]);
    assert_eq!(v["method"], "lg_closed_form");
    let back: BoundReport = serde_json::from_value(v).unwrap();
    assert_eq!(back.method, BoundMethod::LgClosedForm);
}

#[test]
fn zero_signal_bound_is_tight_in_every_dimension() {
    for d_y in 1..=3 {
        for d_x in [1, 5, 40] {
            let r = SpdMatrix::from_diagonal(&(0..d_y).map(|i| 0.5 + i as f64).collect::<Vec<_>>()).unwrap();
            let m = LinearGaussianModel::new(vec![0.0; d_x], SpdMatrix::identity(d_x), DMatrix::zeros(d_y, d_x), r).unwrap();
            let rep = k2_linear_gaussian(&m);
            assert_relative_eq!(rep.k2_estimate_or_closed_form.unwrap(), rep.k2_upper_bound.unwrap(), max_relative = 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn published_constant_below_uniform_envelope(d_x in 1usize..20, d_y in 1usize..4, seed in any::<u64>()) {
        let m = random_lg(d_x, d_y, seed);
        let rep = k2_linear_gaussian(&m);
        let (k2, env) = (rep.k2_estimate_or_closed_form.unwrap(), rep.k2_upper_bound.unwrap());
        prop_assert!(k2 > 0.0 && k2.is_finite());
        prop_assert!(k2 <= env * (1.0 + 1e-12));
        prop_assert_eq!(env, lg_uniform_bound(d_y, m.r()));
        prop_assert!(k2_linear_gaussian_exact(&m) >= 1.0 - 1e-12);
    }
}
