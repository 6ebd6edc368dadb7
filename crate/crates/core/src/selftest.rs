//! Forced-outcome checks and structural invariants, runnable from a release
//! binary without the test harness.

use std::f64::consts::PI;

use nalgebra::{dmatrix, DMatrix};

use crate::config::{Axis, ExperimentSpec, MatrixSpec, ModelSpec, SpdSpec, VectorSpec};
use crate::diagnostics::{
    k2_linear_gaussian, k2_mc_estimate, link_norm_sq_lg, product_bound, radial_bound, sample_size_for_tolerance,
    RadialMode,
};
use crate::error::Result;
use crate::harness::{convergence_experiment, fit_loglog_slope, with_workers, ExperimentConfig};
use crate::math::{upper_incomplete_gamma, RandomStream, SpdMatrix};
use crate::model::{
    BayesModel, EllipticalModel, LinearGaussianModel, Model, Nonlinearity, Prior, RadialProfile, SaturatingObservationMap,
    WithLogOffset,
};
use crate::reference::{lg_posterior, oracle_estimate};
use crate::sampler::{estimate, evidence_estimate, run_is, TestFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("identity_cholesky", identity_cholesky),
    ("incomplete_gamma_at_zero", incomplete_gamma_at_zero),
    ("weights_normalized", weights_normalized),
    ("log_offset_invariance", log_offset_invariance),
    ("ess_times_rho_is_n", ess_times_rho_is_n),
    ("rho_hat_at_least_one", rho_hat_at_least_one),
    ("constant_estimate_exact", constant_estimate_exact),
    ("uninformative_evidence", uninformative_evidence),
    ("elliptical_rotational_symmetry", elliptical_rotational_symmetry),
    ("link_norm_without_signal", link_norm_without_signal),
    ("lg_bound_tight_without_signal", lg_bound_tight_without_signal),
    ("k2_mc_without_signal", k2_mc_without_signal),
    ("radial_quadrature_at_zero_shift", radial_quadrature_at_zero_shift),
    ("polynomial_analytic_value", polynomial_analytic_value),
    ("product_bound_values", product_bound_values),
    ("sample_size_values", sample_size_values),
    ("conjugate_posterior", conjugate_posterior),
    ("oracle_constant", oracle_constant),
    ("loglog_fit_exact", loglog_fit_exact),
    ("constant_function_zero_error", constant_function_zero_error),
    ("determinism_across_workers", determinism_across_workers),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

/// Runs every check; a check that errors counts as failed.
pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, check)| match check() {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

fn verdict(passed: bool, detail: impl Into<String>) -> Result<(bool, String)> {
    Ok((passed, detail.into()))
}

fn lg(d_x: usize, d_y: usize, seed: u64) -> Result<LinearGaussianModel> {
    LinearGaussianModel::new(
        vec![0.0; d_x],
        SpdMatrix::identity(d_x),
        LinearGaussianModel::seeded_matrix(d_y, d_x, seed),
        SpdMatrix::scaled_identity(d_y, 0.5)?,
    )
}

fn scalar_lg(a: f64) -> Result<LinearGaussianModel> {
    LinearGaussianModel::new(vec![0.0], SpdMatrix::identity(1), dmatrix![a], SpdMatrix::identity(1))
}

fn identity_cholesky() -> Result<(bool, String)> {
    let m = SpdMatrix::identity(4);
    verdict(m.lower() == &DMatrix::identity(4, 4) && m.log_det() == 0.0, "L = I, log det = 0")
}

fn incomplete_gamma_at_zero() -> Result<(bool, String)> {
    let v = upper_incomplete_gamma(0.5, 0.0)?;
    verdict((v - PI.sqrt()).abs() <= 1e-14 * PI.sqrt(), format!("Γ(½, 0) = {v}"))
}

fn weights_normalized() -> Result<(bool, String)> {
    let m = lg(5, 2, 1)?;
    let mut s = RandomStream::new(2);
    let (_, y) = m.sample_joint(&mut s);
    let e = run_is(&m, &y, 2000, &mut s)?;
    let sum: f64 = e.weights().iter().sum();
    verdict((sum - 1.0).abs() <= 1e-12, format!("Σw − 1 = {:e}", sum - 1.0))
}

fn log_offset_invariance() -> Result<(bool, String)> {
    let m = lg(3, 2, 4)?;
    let mut s = RandomStream::new(5);
    let (_, y) = m.sample_joint(&mut s);
    let base = run_is(&m, &y, 500, &mut RandomStream::new(6))?;
    for offset in [-700.0, 1.0, 1e6] {
        let shifted = WithLogOffset { inner: &m, offset };
        let e = run_is(&shifted, &y, 500, &mut RandomStream::new(6))?;
        if e.weights() != base.weights() {
            return verdict(false, format!("weights changed under offset {offset}"));
        }
    }
    verdict(true, "weights bitwise equal under offsets −700, 1, 1e6")
}

fn ess_times_rho_is_n() -> Result<(bool, String)> {
    let m = lg(4, 1, 7)?;
    let mut s = RandomStream::new(8);
    let (_, y) = m.sample_joint(&mut s);
    let n = 1000;
    let e = run_is(&m, &y, n, &mut s)?;
    let prod = e.ess() * e.rho_hat();
    verdict((prod / n as f64 - 1.0).abs() <= 1e-12, format!("ess · ρ̂ = {prod}"))
}

fn rho_hat_at_least_one() -> Result<(bool, String)> {
    let m = lg(2, 2, 9)?;
    let mut s = RandomStream::new(10);
    let mut min = f64::INFINITY;
    for _ in 0..20 {
        let (_, y) = m.sample_joint(&mut s);
        min = min.min(run_is(&m, &y, 200, &mut s)?.rho_hat());
    }
    verdict(min >= 1.0 - 1e-12, format!("min ρ̂ = {min}"))
}

fn constant_estimate_exact() -> Result<(bool, String)> {
    let m = lg(3, 1, 11)?;
    let mut s = RandomStream::new(12);
    let (_, y) = m.sample_joint(&mut s);
    let e = run_is(&m, &y, 300, &mut s)?;
    let v = estimate(&e, &TestFunction::Constant(-2.75));
    verdict(v == -2.75, format!("π^N(c) = {v}"))
}

fn uninformative_evidence() -> Result<(bool, String)> {
    // g independent of x: Ẑ_N = 𝒩(y; 0, 1) exactly
    let m = scalar_lg(0.0)?;
    let e = run_is(&m, &[0.3], 100, &mut RandomStream::new(13))?;
    let z = evidence_estimate(&e)?;
    let want = (-0.5 * 0.09_f64).exp() / (2.0 * PI).sqrt();
    verdict((z / want - 1.0).abs() <= 1e-13, format!("Ẑ = {z}, 𝒩(0.3; 0, 1) = {want}"))
}

fn elliptical_rotational_symmetry() -> Result<(bool, String)> {
    let map = SaturatingObservationMap::new(dmatrix![0.4, -0.3; 0.2, 0.5], Nonlinearity::Erf)?;
    let r = SpdMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]])?;
    let m = EllipticalModel::new(
        Prior::gaussian(vec![0.0; 2], SpdMatrix::identity(2))?,
        map.clone(),
        RadialProfile::student_t(4.0, 2),
        r.clone(),
    )?;
    let x = [0.7, -0.2];
    let mut h = [0.0; 2];
    map.apply_into(&x, &mut h);
    // two residuals with equal R-norm: v and its image under an R-isometry
    let v = [0.8, -1.1];
    let norm = r.quad_form(&v).sqrt();
    let w = [0.3, 0.9];
    let w_scaled: Vec<f64> = w.iter().map(|c| c * norm / r.quad_form(&w).sqrt()).collect();
    let y1 = [h[0] + v[0], h[1] + v[1]];
    let y2 = [h[0] + w_scaled[0], h[1] + w_scaled[1]];
    let (a, b) = (m.log_likelihood(&y1, &x)?, m.log_likelihood(&y2, &x)?);
    verdict((a - b).abs() <= 1e-12 * a.abs().max(1.0), format!("log g = {a} vs {b}"))
}

fn link_norm_without_signal() -> Result<(bool, String)> {
    let m = scalar_lg(0.0)?;
    let (a, b) = (link_norm_sq_lg(&m, &[0.0])?, link_norm_sq_lg(&m, &[5.0])?);
    verdict((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12, format!("‖ℓ‖² = {a}, {b}"))
}

fn lg_bound_tight_without_signal() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for d_y in 1..=3 {
        let m = LinearGaussianModel::new(vec![0.0; 3], SpdMatrix::identity(3), DMatrix::zeros(d_y, 3), SpdMatrix::identity(d_y))?;
        let rep = k2_linear_gaussian(&m);
        let (k, b) = (rep.k2_estimate_or_closed_form.unwrap_or(f64::NAN), rep.k2_upper_bound.unwrap_or(f64::NAN));
        worst = worst.max((k / b - 1.0).abs());
    }
    verdict(worst <= 1e-12, format!("max |K₂/𝒦₂ − 1| = {worst:e}"))
}

fn k2_mc_without_signal() -> Result<(bool, String)> {
    let m = BayesModel::LinearGaussian(scalar_lg(0.0)?);
    let rep = k2_mc_estimate(&m, &RandomStream::new(14), 100, 2)?;
    let v = rep.k2_estimate_or_closed_form.unwrap_or(f64::NAN);
    verdict((v - 1.0).abs() <= 1e-12, format!("K₂ estimate = {v}"))
}

fn radial_quadrature_at_zero_shift() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for p in [RadialProfile::gaussian(), RadialProfile::laplace(), RadialProfile::student_t(3.0, 2)] {
        let v = radial_bound(&p, 2, &SpdMatrix::identity(2), 0.0, RadialMode::Quadrature)?
            .k2_upper_bound
            .unwrap_or(f64::NAN);
        worst = worst.max((v - 1.0).abs());
    }
    verdict(worst <= 1e-8, format!("max |bound − 1| = {worst:e}"))
}

fn polynomial_analytic_value() -> Result<(bool, String)> {
    let p = RadialProfile::Polynomial { a: 1.0, p: 2, alpha: 1.0 };
    let v = radial_bound(&p, 1, &SpdMatrix::identity(1), 0.5, RadialMode::Analytic)?
        .k2_upper_bound
        .unwrap_or(f64::NAN);
    verdict((v - 4.0).abs() <= 1e-12, format!("bound = {v}"))
}

fn product_bound_values() -> Result<(bool, String)> {
    let got: Vec<Option<f64>> = [(0.0, 3.0), (2.0, 0.0), (2.0, 3.0)]
        .iter()
        .map(|&(m, q)| product_bound(m, q).map(|r| r.k2_upper_bound))
        .collect::<Result<_>>()?;
    verdict(got == vec![Some(0.0), Some(0.0), Some(6.0)], format!("{got:?}"))
}

fn sample_size_values() -> Result<(bool, String)> {
    let got = [
        sample_size_for_tolerance(1.0, 1.0, 1.0)?,
        sample_size_for_tolerance(1.0, 1.0, 0.1)?,
        sample_size_for_tolerance(2.0, 1.0, 0.1)?,
    ];
    verdict(got == [1, 100, 400], format!("{got:?}"))
}

fn conjugate_posterior() -> Result<(bool, String)> {
    let post = lg_posterior(&scalar_lg(1.0)?, &[2.0])?;
    let (m, v) = (post.mean[0], post.cov.entries()[(0, 0)]);
    verdict((m - 1.0).abs() < 1e-14 && (v - 0.5).abs() < 1e-14, format!("mean {m}, variance {v}"))
}

fn oracle_constant() -> Result<(bool, String)> {
    let got = oracle_estimate(&scalar_lg(1.0)?, &[0.0], &TestFunction::Constant(3.0), 10_000, 8, &RandomStream::new(15))?;
    verdict(got == (3.0, 0.0), format!("{got:?}"))
}

fn loglog_fit_exact() -> Result<(bool, String)> {
    let f = fit_loglog_slope(&[(1.0, 1.0), (4.0, 0.5), (16.0, 0.25)])?;
    verdict((f.slope + 0.5).abs() < 1e-14 && (f.r2 - 1.0).abs() < 1e-14, format!("slope {}, r² {}", f.slope, f.r2))
}

fn small_config(f: TestFunction) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::LinearGaussian {
            dx: 3,
            dy: 2,
            mu_x: VectorSpec::Scalar(0.0),
            sigma_x: SpdSpec::Scalar(1.0),
            a_matrix: MatrixSpec::SeededScaled(3),
            r_matrix: SpdSpec::Scalar(0.5),
        },
        experiment: ExperimentSpec {
            axis: Axis::N,
            grid: vec![32, 64, 128],
            n: 64,
            n_obs: 6,
            n_reps: 4,
            p: 2,
            f,
            seed: 99,
            oracle: None,
        },
    }
}

fn constant_function_zero_error() -> Result<(bool, String)> {
    let res = convergence_experiment(&small_config(TestFunction::Constant(1.5)))?;
    let max = res.rows.iter().map(|r| r.error_p).fold(0.0, f64::max);
    verdict(max == 0.0, format!("max error_p = {max}"))
}

fn determinism_across_workers() -> Result<(bool, String)> {
    let cfg = small_config(TestFunction::Indicator { coord: 0, threshold: 0.2 });
    let one = with_workers(Some(1), || convergence_experiment(&cfg))??;
    let three = with_workers(Some(3), || convergence_experiment(&cfg))??;
    verdict(one.same_values(&three), "1 vs 3 workers")
}
