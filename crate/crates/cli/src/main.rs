use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use snis_core::config::{Axis, ConfigFile};
use snis_core::diagnostics::{k2_linear_gaussian, k2_mc_estimate, radial_bound_for, BoundReport, RadialMode};
use snis_core::harness::{
    bound_vs_mc, convergence_experiment, dimension_sweep, with_workers, write_bound_comparison, write_experiment,
    ExperimentConfig, ExperimentResult,
};
use snis_core::math::RandomStream;
use snis_core::model::{BayesModel, Model};
use snis_core::reference::exact_expectation;
use snis_core::sampler::{estimate, run_is};
use snis_core::{selftest, Error, ErrorClass};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "snis", version, about = "Importance sampling error experiments and K2 diagnostics")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed (overrides [experiment].seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single importance sampling run on one observation
    Run {
        /// Sample size (default: [experiment].n)
        #[arg(long)]
        n: Option<usize>,
        /// Observation, comma separated (default: drawn from the model)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
    },
    /// L^p error against N
    Convergence,
    /// L^p error and K2 envelope against d_x
    Dimsweep,
    /// L^p error and K2 envelope against d_y
    Dysweep,
    /// K2 closed forms and envelopes for the configured model
    Diagnose {
        /// Also estimate K2 by Monte Carlo over this many observations
        #[arg(long)]
        mc_obs: Option<usize>,
    },
    /// Monte Carlo K2 against the analytic envelope over the grid
    Verify,
    /// Forced-outcome checks and invariants
    Selftest,
}

enum Failure {
    Error(Error),
    Violation(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers;
    let outcome = with_workers(workers, || dispatch(&cli)).unwrap_or_else(|e| Err(e.into()));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Error(e)) => {
            let (class, code) = match e.class() {
                ErrorClass::Validation => ("validation", EXIT_VALIDATION),
                ErrorClass::Numerical => ("numerical", EXIT_NUMERICAL),
            };
            eprintln!("snis: error kind={} class={class} message={:?}", e.kind(), e.to_string());
            ExitCode::from(code)
        }
        Err(Failure::Violation(n)) => {
            eprintln!("snis: error kind=BoundViolation class=violation message={:?}", format!("{n} grid point(s) exceed the bound"));
            ExitCode::from(EXIT_VIOLATION)
        }
    }
}

fn load(cli: &Cli) -> Result<ConfigFile, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--config <path> is required for this subcommand".into()))?;
    let mut cfg = ConfigFile::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Selftest => Ok(run_selftest(cli.json)),
        Command::Run { n, y } => {
            let cfg = load(cli)?;
            run_single(cli, &cfg, *n, y.clone())?;
            Ok(0)
        }
        Command::Diagnose { mc_obs } => {
            let cfg = load(cli)?;
            diagnose(&cfg, *mc_obs)?;
            Ok(0)
        }
        Command::Convergence => experiment(cli, "convergence", None),
        Command::Dimsweep => experiment(cli, "dimsweep", Some(Axis::Dx)),
        Command::Dysweep => experiment(cli, "dysweep", Some(Axis::Dy)),
        Command::Verify => {
            let cfg = load(cli)?;
            let exp = ExperimentConfig::from_file(&cfg);
            let res = bound_vs_mc(&exp)?;
            let (csv, manifest) = write_bound_comparison(&cfg.output.dir, "verify", &exp, &res)?;
            if cli.json {
                println!("{}", serde_json::to_string(&res).expect("serializes"));
            } else {
                for r in &res.rows {
                    println!(
                        "{}={} k2_mc={:.6e}±{:.2e} bound={:.6e} ({}){}",
                        res.axis.name(),
                        r.axis_value,
                        r.k2_mc,
                        r.k2_mc_se,
                        r.bound,
                        serde_json::to_value(r.bound_method).expect("serializes").as_str().unwrap_or(""),
                        if r.violation { " VIOLATION" } else { "" }
                    );
                }
                println!("wrote {} and {}", csv.display(), manifest.display());
            }
            if res.violations > 0 {
                Err(Failure::Violation(res.violations))
            } else {
                Ok(0)
            }
        }
    }
}

fn run_selftest(as_json: bool) -> u8 {
    let outcomes = selftest::run_all();
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if as_json {
        let items: Vec<_> = outcomes
            .iter()
            .map(|o| json!({"name": o.name, "passed": o.passed, "detail": o.detail}))
            .collect();
        println!("{}", json!({"checks": items, "failed": failed}));
    } else {
        for o in &outcomes {
            println!("{} {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        }
        println!("{} checks, {} failed", outcomes.len(), failed);
    }
    if failed == 0 {
        0
    } else {
        EXIT_NUMERICAL
    }
}

fn run_single(cli: &Cli, cfg: &ConfigFile, n: Option<usize>, y: Option<Vec<f64>>) -> Result<(), Error> {
    let model = cfg.model.build(None, None)?;
    let n = n.unwrap_or(cfg.experiment.n);
    let mut stream = RandomStream::at(cfg.experiment.seed, vec![0x52]);
    let y = match y {
        Some(y) => y,
        None => model.sample_joint(&mut stream).1,
    };
    let f = &cfg.experiment.f;
    f.validate(model.state_dim())?;
    let e = run_is(&model, &y, n, &mut stream)?;
    let est = estimate(&e, f);
    let exact = match &model {
        BayesModel::LinearGaussian(lg) => exact_expectation(lg, &y, f).ok(),
        BayesModel::Elliptical(_) => None,
    };
    let summary = json!({
        "n": n,
        "y": y,
        "ess": e.ess(),
        "rho_hat": e.rho_hat(),
        "log_z_hat": e.log_z_hat(),
        "max_weight": e.weights().iter().copied().fold(0.0, f64::max),
        "estimate": est,
        "exact": exact,
    });
    if cli.json {
        println!("{summary}");
    } else {
        println!("N = {n}, y = {y:?}");
        println!("ESS = {:.3}, rho_hat = {:.6}, log Z_hat = {:.6}", e.ess(), e.rho_hat(), e.log_z_hat());
        match exact {
            Some(v) => println!("estimate = {est:.8} (exact {v:.8}, error {:.3e})", (est - v).abs()),
            None => println!("estimate = {est:.8}"),
        }
    }
    Ok(())
}

fn diagnose(cfg: &ConfigFile, mc_obs: Option<usize>) -> Result<(), Error> {
    let model = cfg.model.build(None, None)?;
    let mut reports: Vec<BoundReport> = match &model {
        BayesModel::LinearGaussian(lg) => vec![k2_linear_gaussian(lg)],
        BayesModel::Elliptical(m) => vec![
            radial_bound_for(m, RadialMode::Quadrature)?,
            radial_bound_for(m, RadialMode::Analytic)?,
        ],
    };
    if let Some(n_obs) = mc_obs {
        let stream = RandomStream::at(cfg.experiment.seed, vec![0x44]);
        reports.push(k2_mc_estimate(&model, &stream, n_obs, cfg.experiment.n)?);
    }
    for r in &reports {
        println!("{}", r.to_json());
    }
    Ok(())
}

fn experiment(cli: &Cli, name: &str, axis: Option<Axis>) -> Result<u8, Failure> {
    let cfg = load(cli)?;
    let exp = ExperimentConfig::from_file(&cfg);
    let res: ExperimentResult = match axis {
        None => convergence_experiment(&exp)?,
        Some(want) => {
            if exp.experiment.axis != want {
                return Err(Error::InvalidConfig(format!(
                    "{name} needs [experiment].axis = \"{}\", got \"{}\"",
                    want.name(),
                    exp.experiment.axis.name()
                ))
                .into());
            }
            dimension_sweep(&exp)?
        }
    };
    let (csv, manifest) = write_experiment(&cfg.output.dir, name, &exp, &res)?;
    let fit = res.fit_slope().ok();
    if cli.json {
        println!("{}", json!({"result": res, "fit": fit, "csv": csv, "manifest": manifest}));
    } else {
        for r in &res.rows {
            let bound = r.bound_k2.map(|b| format!("{b:.6e}")).unwrap_or_else(|| "-".into());
            println!(
                "{}={} error_p={:.6e}±{:.2e} ess={:.1} rho_hat={:.4} bound_k2={bound}",
                res.axis.name(),
                r.axis_value,
                r.error_p,
                r.error_se,
                r.mean_ess,
                r.mean_rho_hat
            );
        }
        match (fit, res.oracle_dominated) {
            (_, true) => println!("oracle dominated: excluded from slope fit"),
            (Some(f), false) => println!("log-log slope {:.4} (r2 {:.4})", f.slope, f.r2),
            (None, false) => println!("log-log slope unavailable"),
        }
        println!("wrote {} and {}", csv.display(), manifest.display());
    }
    Ok(0)
}
