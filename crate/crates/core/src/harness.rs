//! Experiment runner: L^p error against `N`, `d_x` or `d_y`, and K₂ Monte
//! Carlo estimates against their analytic envelopes.
//!
//! Every task draws from a stream addressed by `(seed, tag, axis value,
//! y-index, replicate)`, and reductions run in a fixed order, so results do
//! not depend on the number of worker threads.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Axis, ConfigFile, ExperimentSpec, ModelSpec};
use crate::diagnostics::{k2_linear_gaussian, k2_mc_estimate, radial_bound_for, BoundMethod, RadialMode};
use crate::error::{Error, Result};
use crate::math::RandomStream;
use crate::model::{BayesModel, Model};
use crate::reference::{exact_expectation, oracle_estimate};
use crate::sampler::{estimate, run_is, TestFunction};
use crate::stats::jackknife_se;

const TAG_Y: u64 = 0x59;
const TAG_ORACLE: u64 = 0x0A;
const TAG_IS: u64 = 0x15;
const TAG_K2: u64 = 0x4B;

/// Error must exceed the oracle's standard error by this factor at the
/// largest grid point for a run to enter slope fits.
pub const ORACLE_MARGIN: f64 = 5.0;

pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

/// A model (or model family) plus the experiment to run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub experiment: ExperimentSpec,
}

impl ExperimentConfig {
    pub fn from_file(cfg: &ConfigFile) -> Self {
        Self {
            model: cfg.model.clone(),
            experiment: cfg.experiment.clone(),
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Metadata {
    fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.experiment.seed,
            version: ARTIFACT_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub axis_value: usize,
    pub error_p: f64,
    pub error_se: f64,
    pub mean_ess: f64,
    pub mean_rho_hat: f64,
    pub bound_k2: Option<f64>,
    pub oracle_se: f64,
    pub wall_ms: u64,
}

impl ExperimentRow {
    /// Equality of everything but timing.
    pub fn same_values(&self, other: &Self) -> bool {
        let bits = |v: f64| v.to_bits();
        self.axis_value == other.axis_value
            && bits(self.error_p) == bits(other.error_p)
            && bits(self.error_se) == bits(other.error_se)
            && bits(self.mean_ess) == bits(other.mean_ess)
            && bits(self.mean_rho_hat) == bits(other.mean_rho_hat)
            && self.bound_k2.map(bits) == other.bound_k2.map(bits)
            && bits(self.oracle_se) == bits(other.oracle_se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub axis: Axis,
    pub p: u32,
    pub rows: Vec<ExperimentRow>,
    pub oracle_dominated: bool,
    pub metadata: Metadata,
}

impl ExperimentResult {
    pub fn same_values(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_values(b))
    }

    /// Log-log fit of error against the axis value, after removing the
    /// oracle's variance in quadrature.
    pub fn fit_slope(&self) -> Result<LogLogFit> {
        if self.oracle_dominated {
            let last = self.rows.last().expect("rows cover the grid");
            return Err(Error::OracleDominated {
                error: last.error_p,
                oracle_se: last.oracle_se,
            });
        }
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| (r.axis_value as f64, (r.error_p.powi(2) - r.oracle_se.powi(2)).max(0.0).sqrt()))
            .collect();
        fit_loglog_slope(&pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares on `(log₂ x, log₂ y)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit("need at least 3 points"));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::DegenerateFit("coordinates must be positive and finite"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * (mx * mx).max(1.0) * n {
        return Err(Error::DegenerateFit("all x equal"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy <= f64::EPSILON * (my * my).max(1.0) * n {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(LogLogFit { slope, intercept, r2 })
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores if `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidConfig("worker count must be positive".into()));
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

struct Reference {
    y: Vec<f64>,
    value: f64,
    oracle_se: f64,
}

/// Draws `n_obs` observations from the model and pins `π_y(f)` for each.
fn references(model: &BayesModel, spec: &ExperimentSpec, key: u64) -> Result<Vec<Reference>> {
    (0..spec.n_obs)
        .map(|j| {
            let mut s = RandomStream::at(spec.seed, vec![TAG_Y, key, j as u64]);
            let (_, y) = model.sample_joint(&mut s);
            let exact = match model {
                BayesModel::LinearGaussian(lg) => match exact_expectation(lg, &y, &spec.f) {
                    Ok(v) => Some(v),
                    Err(Error::NoReference(_)) => None,
                    Err(e) => return Err(e),
                },
                BayesModel::Elliptical(_) => match spec.f {
                    TestFunction::Constant(c) => Some(c),
                    _ => None,
                },
            };
            if let Some(value) = exact {
                return Ok(Reference { y, value, oracle_se: 0.0 });
            }
            let budget = spec.oracle.ok_or(Error::NoReference(
                "this model and test function without an oracle budget ([experiment.oracle])",
            ))?;
            let stream = RandomStream::at(spec.seed, vec![TAG_ORACLE, key, j as u64]);
            let (value, oracle_se) = oracle_estimate(model, &y, &spec.f, budget.n_ref, budget.n_reps, &stream)
                .map_err(|e| e.with_context(format!("oracle for y-index {j}")))?;
            Ok(Reference { y, value, oracle_se })
        })
        .collect()
}

/// Error statistics at one grid point.
fn measure(
    model: &BayesModel,
    spec: &ExperimentSpec,
    refs: &[Reference],
    n: usize,
    axis_value: usize,
    bound_k2: Option<f64>,
) -> Result<ExperimentRow> {
    let start = Instant::now();
    let n_reps = spec.n_reps;
    let tasks: Result<Vec<(f64, f64, f64)>> = (0..refs.len() * n_reps)
        .into_par_iter()
        .map(|t| {
            let (j, k) = (t / n_reps, t % n_reps);
            let mut s = RandomStream::at(spec.seed, vec![TAG_IS, axis_value as u64, j as u64, k as u64]);
            let e = run_is(model, &refs[j].y, n, &mut s)
                .map_err(|e| e.with_context(format!("N = {n}, y-index {j}, replicate {k}")))?;
            let err = (refs[j].value - estimate(&e, &spec.f)).abs();
            Ok((err, e.ess(), e.rho_hat()))
        })
        .collect();
    let tasks = tasks?;
    let p = spec.p as i32;
    let per_y: Vec<f64> = tasks
        .chunks_exact(n_reps)
        .map(|c| c.iter().map(|t| t.0.powi(p)).sum::<f64>() / n_reps as f64)
        .collect();
    let inv_p = 1.0 / spec.p as f64;
    let norm = |m: &[f64]| (m.iter().sum::<f64>() / m.len() as f64).powf(inv_p);
    let total = tasks.len() as f64;
    let oracle_ms = refs.iter().map(|r| r.oracle_se.powi(2)).sum::<f64>() / refs.len() as f64;
    Ok(ExperimentRow {
        axis_value,
        error_p: norm(&per_y),
        error_se: jackknife_se(&per_y, norm),
        mean_ess: tasks.iter().map(|t| t.1).sum::<f64>() / total,
        mean_rho_hat: tasks.iter().map(|t| t.2).sum::<f64>() / total,
        bound_k2,
        oracle_se: oracle_ms.sqrt(),
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// The analytic K₂ envelope for a model: `𝒦₂` for linear-Gaussian models,
/// the analytic radial bound for elliptical ones. Absent when it overflows.
pub fn bound_column(model: &BayesModel) -> Result<Option<f64>> {
    let rep = match model {
        BayesModel::LinearGaussian(lg) => Ok(k2_linear_gaussian(lg)),
        BayesModel::Elliptical(m) => radial_bound_for(m, RadialMode::Analytic),
    };
    match rep {
        Ok(r) => Ok(r.k2_upper_bound),
        Err(Error::BoundOverflow { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn finish(cfg: &ExperimentConfig, rows: Vec<ExperimentRow>) -> ExperimentResult {
    let last = rows.last().expect("grid is non-empty");
    let oracle_dominated = last.oracle_se > 0.0 && last.error_p < ORACLE_MARGIN * last.oracle_se;
    ExperimentResult {
        axis: cfg.experiment.axis,
        p: cfg.experiment.p,
        rows,
        oracle_dominated,
        metadata: Metadata::of(cfg),
    }
}

/// L^p error of the self-normalized estimator across the `N` grid. The
/// observations and their references are shared by every grid point.
pub fn convergence_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let spec = &cfg.experiment;
    spec.validate()?;
    if spec.axis != Axis::N {
        return Err(Error::InvalidConfig(format!(
            "convergence runs need axis = \"n\", got \"{}\"",
            spec.axis.name()
        )));
    }
    let model = cfg.model.build(None, None)?;
    spec.f.validate(model.state_dim())?;
    let refs = references(&model, spec, 0)?;
    let bound = bound_column(&model)?;
    let rows = spec
        .grid
        .iter()
        .map(|&n| measure(&model, spec, &refs, n, n, bound))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(cfg, rows))
}

/// L^p error at fixed `N = experiment.n` across a `d_x` or `d_y` family, with
/// the analytic K₂ envelope of each member.
pub fn dimension_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let spec = &cfg.experiment;
    spec.validate()?;
    let rows = spec
        .grid
        .iter()
        .map(|&v| {
            let model = build_member(&cfg.model, spec.axis, v)?;
            spec.f.validate(model.state_dim())?;
            let refs = references(&model, spec, v as u64)?;
            let bound = bound_column(&model)?;
            measure(&model, spec, &refs, spec.n, v, bound)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(cfg, rows))
}

fn build_member(model: &ModelSpec, axis: Axis, v: usize) -> Result<BayesModel> {
    match axis {
        Axis::Dx => model.build(Some(v), None),
        Axis::Dy => model.build(None, Some(v)),
        Axis::N => Err(Error::InvalidConfig(
            "dimension sweeps need axis = \"d_x\" or \"d_y\"".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub axis_value: usize,
    pub k2_mc: f64,
    pub k2_mc_se: f64,
    /// Published closed form, where one exists.
    pub k2_closed_form: Option<f64>,
    pub bound: f64,
    pub bound_method: BoundMethod,
    /// Analytic radial envelope for elliptical models; absent on overflow.
    pub bound_analytic: Option<f64>,
    pub violation: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub axis: Axis,
    pub rows: Vec<BoundRow>,
    pub violations: usize,
    pub metadata: Metadata,
}

/// Monte Carlo `K₂` against the analytic envelope at each grid point. A row
/// is a violation when `mc − 3·se` exceeds an envelope.
///
/// On the `N` axis the grid gives the inner sample size; on dimension axes it
/// selects the family member and `experiment.n` is the inner sample size.
pub fn bound_vs_mc(cfg: &ExperimentConfig) -> Result<BoundComparison> {
    let spec = &cfg.experiment;
    spec.validate()?;
    let base = cfg.model.build(None, None)?;
    let rows = spec
        .grid
        .iter()
        .map(|&v| {
            let start = Instant::now();
            let (model, n_inner) = match spec.axis {
                Axis::N => (base.clone(), v),
                axis => (build_member(&cfg.model, axis, v)?, spec.n),
            };
            let (k2_closed_form, bound, bound_method, bound_analytic) = match &model {
                BayesModel::LinearGaussian(lg) => {
                    let rep = k2_linear_gaussian(lg);
                    (
                        rep.k2_estimate_or_closed_form,
                        rep.k2_upper_bound.expect("uniform bound present"),
                        BoundMethod::LgUniform,
                        None,
                    )
                }
                BayesModel::Elliptical(m) => {
                    let q = radial_bound_for(m, RadialMode::Quadrature)?;
                    let a = match radial_bound_for(m, RadialMode::Analytic) {
                        Ok(r) => r.k2_upper_bound,
                        Err(Error::BoundOverflow { .. }) => None,
                        Err(e) => return Err(e),
                    };
                    (None, q.k2_upper_bound.expect("quadrature bound present"), q.method, a)
                }
            };
            let stream = RandomStream::at(spec.seed, vec![TAG_K2, v as u64]);
            let mc = k2_mc_estimate(&model, &stream, spec.n_obs, n_inner)?;
            let k2_mc = mc.k2_estimate_or_closed_form.expect("estimate present");
            let lower = k2_mc - 3.0 * mc.standard_error;
            let violation = lower > bound || bound_analytic.is_some_and(|b| lower > b);
            Ok(BoundRow {
                axis_value: v,
                k2_mc,
                k2_mc_se: mc.standard_error,
                k2_closed_form,
                bound,
                bound_method,
                bound_analytic,
                violation,
                wall_ms: start.elapsed().as_millis() as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundComparison {
        axis: spec.axis,
        violations: rows.iter().filter(|r| r.violation).count(),
        rows,
        metadata: Metadata::of(cfg),
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_manifest(path: &Path, cfg: &ExperimentConfig, meta: &Metadata, row_count: usize, extra: serde_json::Value) -> Result<()> {
    let mut manifest = serde_json::json!({
        "config": cfg,
        "config_hash": meta.config_hash,
        "seed": meta.seed,
        "version": meta.version,
        "row_count": row_count,
    });
    if let (Some(m), serde_json::Value::Object(e)) = (manifest.as_object_mut(), extra) {
        m.extend(e);
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(io)?;
    fs::write(path, text + "\n").map_err(io)
}

fn prepare(dir: &Path, name: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok((dir.join(format!("{name}.csv")), dir.join(format!("{name}.manifest.json"))))
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.manifest.json`.
pub fn write_experiment(dir: &Path, name: &str, cfg: &ExperimentConfig, res: &ExperimentResult) -> Result<(PathBuf, PathBuf)> {
    let (csv_path, json_path) = prepare(dir, name)?;
    let header = [
        "axis", "axis_value", "p", "error_p", "error_se", "mean_ess", "mean_rho_hat", "bound_k2", "oracle_se", "wall_ms",
    ];
    write_rows(
        &csv_path,
        &header,
        res.rows.iter().map(|r| {
            vec![
                res.axis.name().to_string(),
                r.axis_value.to_string(),
                res.p.to_string(),
                num(r.error_p),
                num(r.error_se),
                num(r.mean_ess),
                num(r.mean_rho_hat),
                opt(r.bound_k2),
                num(r.oracle_se),
                r.wall_ms.to_string(),
            ]
        }),
    )?;
    write_manifest(
        &json_path,
        cfg,
        &res.metadata,
        res.rows.len(),
        serde_json::json!({ "oracle_dominated": res.oracle_dominated }),
    )?;
    Ok((csv_path, json_path))
}

/// Writes a bound comparison in the same two-file layout.
pub fn write_bound_comparison(dir: &Path, name: &str, cfg: &ExperimentConfig, res: &BoundComparison) -> Result<(PathBuf, PathBuf)> {
    let (csv_path, json_path) = prepare(dir, name)?;
    let header = [
        "axis", "axis_value", "k2_mc", "k2_mc_se", "k2_closed_form", "bound", "bound_method", "bound_analytic", "violation",
        "wall_ms",
    ];
    write_rows(
        &csv_path,
        &header,
        res.rows.iter().map(|r| {
            vec![
                res.axis.name().to_string(),
                r.axis_value.to_string(),
                num(r.k2_mc),
                num(r.k2_mc_se),
                opt(r.k2_closed_form),
                num(r.bound),
                serde_json::to_value(r.bound_method).expect("method serializes").as_str().unwrap_or_default().to_string(),
                opt(r.bound_analytic),
                r.violation.to_string(),
                r.wall_ms.to_string(),
            ]
        }),
    )?;
    write_manifest(
        &json_path,
        cfg,
        &res.metadata,
        res.rows.len(),
        serde_json::json!({ "violations": res.violations }),
    )?;
    Ok((csv_path, json_path))
}
