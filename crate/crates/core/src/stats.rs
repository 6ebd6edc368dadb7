//! Small descriptive statistics shared by the diagnostics and the harness.

/// Sample mean and its delete-one jackknife standard error.
///
/// For the mean the jackknife reduces to `s / √n`; it is computed from the
/// leave-one-out means so the same code path serves nonlinear statistics.
pub fn mean_with_jackknife_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let sum: f64 = values.iter().sum();
    let mean = sum / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let loo = values.iter().map(|v| (sum - v) / (n - 1) as f64);
    (mean, jackknife_se_from_replicates(loo, n))
}

/// Jackknife standard error of `stat` evaluated on leave-one-out subsets.
pub fn jackknife_se<F: Fn(&[f64]) -> f64>(values: &[f64], stat: F) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut buf = Vec::with_capacity(n - 1);
    let reps = (0..n).map(|i| {
        buf.clear();
        buf.extend(values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v));
        stat(&buf)
    });
    let reps: Vec<f64> = reps.collect();
    jackknife_se_from_replicates(reps.into_iter(), n)
}

fn jackknife_se_from_replicates(reps: impl Iterator<Item = f64>, n: usize) -> f64 {
    let reps: Vec<f64> = reps.collect();
    let bar = reps.iter().sum::<f64>() / n as f64;
    let ss: f64 = reps.iter().map(|r| (r - bar).powi(2)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}
