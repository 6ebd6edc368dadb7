use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::dmatrix;
use proptest::prelude::*;

use snis_core::diagnostics::link_norm_sq_lg;
use snis_core::math::{RandomStream, SpdMatrix};
use snis_core::model::{LinearGaussianModel, WithLogOffset};
use snis_core::reference::lg_posterior;
use snis_core::sampler::{estimate, evidence_estimate, run_is, weight_diagnostics, TestFunction, WeightedEnsemble};

fn scalar_lg() -> LinearGaussianModel {
    LinearGaussianModel::new(vec![0.0], SpdMatrix::identity(1), dmatrix![1.0], SpdMatrix::identity(1)).unwrap()
}

fn ensemble(log_w: &[f64], offset: f64) -> WeightedEnsemble {
    let samples: Vec<f64> = (0..log_w.len()).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
    WeightedEnsemble::from_log_likelihoods(1, samples, log_w.to_vec(), offset).unwrap()
}

#[test]
fn posterior_probability_at_a_million_samples() {
    // posterior N(1, ½), so P(x ≤ 1 | y = 2) = Φ(0)
    let e = run_is(&scalar_lg(), &[2.0], 1_000_000, &mut RandomStream::new(11)).unwrap();
    let p = estimate(&e, &TestFunction::Indicator { coord: 0, threshold: 1.0 });
    assert!((p - 0.5).abs() < 0.005, "{p}");
}

#[test]
fn evidence_at_a_million_samples() {
    let m = scalar_lg();
    let n = 1_000_000;
    let e = run_is(&m, &[0.0], n, &mut RandomStream::new(12)).unwrap();
    let z = evidence_estimate(&e).unwrap();
    let want = (-0.5 * (4.0 * PI).ln()).exp();
    // sample variance of g from the stored raw log-likelihoods
    let g: Vec<f64> = e.log_weights_raw().iter().map(|v| v.exp()).collect();
    let mean = g.iter().sum::<f64>() / n as f64;
    let se = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
    assert!((z - want).abs() < 3.0 * se, "{z} vs {want} (se {se})");
    assert_relative_eq!(want, 0.282_094_791_773_878_1, max_relative = 1e-15);
}

#[test]
fn evidence_relative_variance_tracks_link_norm() {
    let m = LinearGaussianModel::new(
        vec![0.0; 4],
        SpdMatrix::identity(4),
        LinearGaussianModel::seeded_matrix(1, 4, 3),
        SpdMatrix::identity(1),
    )
    .unwrap();
    let y = [0.4];
    let n = 1000;
    let reps = 1000;
    let z = m.marginal_observation_logpdf(&y).unwrap().exp();
    let root = RandomStream::new(13);
    let zs: Vec<f64> = (0..reps)
        .map(|k| evidence_estimate(&run_is(&m, &y, n, &mut root.substream(k)).unwrap()).unwrap())
        .collect();
    let rel_var = zs.iter().map(|v| (v / z - 1.0).powi(2)).sum::<f64>() / reps as f64;
    let rho = link_norm_sq_lg(&m, &y).unwrap();
    let want = (rho - 1.0) / n as f64;
    assert!((rel_var / want - 1.0).abs() < 0.2, "{rel_var} vs {want}");
}

#[test]
fn unnormalized_estimator_is_unbiased() {
    let m = LinearGaussianModel::new(
        vec![0.3, -0.1],
        SpdMatrix::identity(2),
        dmatrix![1.0, 0.5],
        SpdMatrix::from_diagonal(&[0.8]).unwrap(),
    )
    .unwrap();
    let y = [0.9];
    let f = TestFunction::Indicator { coord: 1, threshold: 0.2 };
    // π₀(f g_y) = Z · π_y(f)
    let want = m.marginal_observation_logpdf(&y).unwrap().exp() * lg_posterior(&m, &y).unwrap().expectation(&f).unwrap();
    let root = RandomStream::new(14);
    let reps = 1000;
    let n = 100;
    let vals: Vec<f64> = (0..reps)
        .map(|k| {
            let e = run_is(&m, &y, n, &mut root.substream(k)).unwrap();
            let raw = e.log_weights_raw();
            e.samples().zip(raw).map(|(x, lw)| f.eval(x) * lw.exp()).sum::<f64>() / n as f64
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0) / reps as f64).sqrt();
    assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want} (se {se})");
}

#[test]
fn offset_model_gives_bitwise_equal_weights() {
    let m = scalar_lg();
    for c in [-700.0, -3.0, 0.5, 1e4] {
        let off = WithLogOffset { inner: m.clone(), offset: c };
        let a = run_is(&m, &[1.2], 2000, &mut RandomStream::new(15)).unwrap();
        let b = run_is(&off, &[1.2], 2000, &mut RandomStream::new(15)).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.ess().to_bits(), b.ess().to_bits());
        assert_eq!(a.rho_hat().to_bits(), b.rho_hat().to_bits());
        let f = TestFunction::Tanh(0);
        assert_eq!(estimate(&a, &f).to_bits(), estimate(&b, &f).to_bits());
    }
}

#[test]
fn rho_hat_at_least_one_on_random_ensembles() {
    let mut rng = RandomStream::new(16);
    for _ in 0..1000 {
        use rand::Rng;
        let n = rng.random_range(1..200);
        let lw: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..5.0)).collect();
        let (ess, rho) = weight_diagnostics(&ensemble(&lw, 0.0));
        assert!(rho >= 1.0 - 1e-12 && ess <= n as f64 * (1.0 + 1e-12));
    }
}

fn log_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-800.0f64..50.0, 1..300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_are_a_probability_vector(lw in log_weights()) {
        let e = ensemble(&lw, 0.0);
        prop_assert!(e.weights().iter().all(|w| *w >= 0.0));
        prop_assert!((e.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn offsets_leave_everything_bitwise_unchanged(lw in log_weights(), c in -1e5f64..1e5) {
        let a = ensemble(&lw, 0.0);
        let b = ensemble(&lw, c);
        prop_assert_eq!(a.weights(), b.weights());
        prop_assert_eq!(a.ess().to_bits(), b.ess().to_bits());
        prop_assert_eq!(a.rho_hat().to_bits(), b.rho_hat().to_bits());
        let f = TestFunction::ClippedNorm(1.5);
        prop_assert_eq!(estimate(&a, &f).to_bits(), estimate(&b, &f).to_bits());
        for (ra, rb) in a.log_weights_raw().iter().zip(b.log_weights_raw()) {
            prop_assert!((rb - ra - c).abs() <= 1e-12 * (ra.abs() + c.abs()).max(1.0));
        }
    }

    #[test]
    fn ess_times_rho_is_n(lw in log_weights()) {
        let e = ensemble(&lw, 0.0);
        let n = lw.len() as f64;
        prop_assert!((e.ess() * e.rho_hat() / n - 1.0).abs() <= 1e-9);
        prop_assert!(e.rho_hat() >= 1.0 - 1e-12);
        prop_assert!(e.ess() >= 1.0 - 1e-12 && e.ess() <= n * (1.0 + 1e-12));
    }

    #[test]
    fn estimates_are_bounded(lw in log_weights(), t in -4.0f64..4.0, cap in 0.1f64..5.0, c in -10.0f64..10.0) {
        let e = ensemble(&lw, 0.0);
        for f in [
            TestFunction::Constant(c),
            TestFunction::Indicator { coord: 0, threshold: t },
            TestFunction::Tanh(0),
            TestFunction::ClippedNorm(cap),
        ] {
            prop_assert!(estimate(&e, &f).abs() <= f.sup_norm());
        }
        prop_assert_eq!(estimate(&e, &TestFunction::Constant(c)), c);
    }
}
