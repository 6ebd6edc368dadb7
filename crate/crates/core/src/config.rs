//! Declarative run configuration: `[model]`, `[experiment]` and `[output]`
//! sections of a TOML file. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::SpdMatrix;
use crate::model::{
    BayesModel, EllipticalModel, LinearGaussianModel, Nonlinearity, Prior, RadialProfile, SaturatingObservationMap,
};
use crate::sampler::TestFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.model.build(None, None)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Scalar broadcast or explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Values(Vec<f64>),
}

impl VectorSpec {
    fn resolve(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Self::Scalar(c) => Ok(vec![*c; n]),
            Self::Values(v) if v.len() == n => Ok(v.clone()),
            Self::Values(v) => Err(Error::InvalidConfig(format!("{what} has length {}, expected {n}", v.len()))),
        }
    }

    fn dimension_free(&self) -> bool {
        matches!(self, Self::Scalar(_))
    }
}

impl Default for VectorSpec {
    fn default() -> Self {
        Self::Scalar(0.0)
    }
}

/// Covariance-type matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpdSpec {
    /// `c · I`.
    Scalar(f64),
    Diagonal(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

impl SpdSpec {
    fn resolve(&self, n: usize, what: &str) -> Result<SpdMatrix> {
        let m = match self {
            Self::Scalar(c) => SpdMatrix::scaled_identity(n, *c)?,
            Self::Diagonal(d) => {
                if d.len() != n {
                    return Err(Error::InvalidConfig(format!("{what} diagonal has length {}, expected {n}", d.len())));
                }
                SpdMatrix::from_diagonal(d)?
            }
            Self::Dense(rows) => {
                if rows.len() != n {
                    return Err(Error::InvalidConfig(format!("{what} has {} rows, expected {n}", rows.len())));
                }
                SpdMatrix::from_rows(rows)?
            }
        };
        Ok(m)
    }

    fn dimension_free(&self) -> bool {
        matches!(self, Self::Scalar(_))
    }
}

/// The linear observation operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Dense(Vec<Vec<f64>>),
    /// Entries uniform on `[−1, 1]/√d_x`, keyed by `(seed, d_y, d_x)`.
    SeededScaled(u64),
}

impl MatrixSpec {
    fn resolve(&self, d_y: usize, d_x: usize) -> Result<DMatrix<f64>> {
        match self {
            Self::SeededScaled(seed) => Ok(LinearGaussianModel::seeded_matrix(d_y, d_x, *seed)),
            Self::Dense(rows) => dense(rows, d_y, d_x, "a_matrix"),
        }
    }
}

fn dense(rows: &[Vec<f64>], n_rows: usize, n_cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::InvalidConfig(format!("{what} must be {n_rows}x{n_cols}")));
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian {
        #[serde(default)]
        mean: VectorSpec,
        cov: SpdSpec,
    },
    UniformBox { lo: VectorSpec, hi: VectorSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Gaussian,
    GenGaussian { beta: f64 },
    Laplace,
    SubGaussian { a: f64 },
    StudentT { nu: f64 },
    Cauchy,
    Pearson7 { lambda: f64, alpha: f64 },
    GenCauchy { p: u32, alpha: f64 },
}

impl ProfileSpec {
    pub fn resolve(&self, d_y: usize) -> RadialProfile {
        match *self {
            Self::Gaussian => RadialProfile::gaussian(),
            Self::GenGaussian { beta } => RadialProfile::generalized_gaussian(beta),
            Self::Laplace => RadialProfile::laplace(),
            Self::SubGaussian { a } => RadialProfile::sub_gaussian(a),
            Self::StudentT { nu } => RadialProfile::student_t(nu, d_y),
            Self::Cauchy => RadialProfile::cauchy(d_y),
            Self::Pearson7 { lambda, alpha } => RadialProfile::pearson_vii(lambda, alpha),
            Self::GenCauchy { p, alpha } => RadialProfile::generalized_cauchy(p, alpha),
        }
    }
}

/// Seeded coefficient rule; `per_dx` divides `a_max` by `d_x`, which keeps
/// `M_R` fixed across a state-dimension family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeededMapSpec {
    pub a_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub per_dx: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeded: Option<SeededMapSpec>,
    pub nonlinearity: Nonlinearity,
}

impl MapSpec {
    fn resolve(&self, d_y: usize, d_x: usize) -> Result<SaturatingObservationMap> {
        match (&self.coeffs, &self.seeded) {
            (Some(rows), None) => SaturatingObservationMap::new(dense(rows, d_y, d_x, "map.coeffs")?, self.nonlinearity),
            (None, Some(s)) => {
                let a_max = if s.per_dx { s.a_max / d_x as f64 } else { s.a_max };
                SaturatingObservationMap::seeded(d_y, d_x, a_max, s.seed, self.nonlinearity)
            }
            _ => Err(Error::InvalidConfig("map needs exactly one of `coeffs` or `seeded`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearGaussian {
        dx: usize,
        dy: usize,
        #[serde(default)]
        mu_x: VectorSpec,
        sigma_x: SpdSpec,
        a_matrix: MatrixSpec,
        r_matrix: SpdSpec,
    },
    Elliptical {
        dx: usize,
        dy: usize,
        prior: PriorSpec,
        profile: ProfileSpec,
        map: MapSpec,
        r_matrix: SpdSpec,
    },
}

impl ModelSpec {
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Self::LinearGaussian { dx, dy, .. } | Self::Elliptical { dx, dy, .. } => (dx, dy),
        }
    }

    /// Whether every matrix and vector is given by a rule that extends to
    /// other `(d_x, d_y)`.
    pub fn is_family(&self) -> bool {
        match self {
            Self::LinearGaussian {
                mu_x,
                sigma_x,
                a_matrix,
                r_matrix,
                ..
            } => {
                mu_x.dimension_free()
                    && sigma_x.dimension_free()
                    && matches!(a_matrix, MatrixSpec::SeededScaled(_))
                    && r_matrix.dimension_free()
            }
            Self::Elliptical { prior, map, r_matrix, .. } => {
                let prior_ok = match prior {
                    PriorSpec::Gaussian { mean, cov } => mean.dimension_free() && cov.dimension_free(),
                    PriorSpec::UniformBox { lo, hi } => lo.dimension_free() && hi.dimension_free(),
                };
                prior_ok && map.seeded.is_some() && r_matrix.dimension_free()
            }
        }
    }

    /// Builds the concrete model, optionally at other dimensions.
    pub fn build(&self, dx_override: Option<usize>, dy_override: Option<usize>) -> Result<BayesModel> {
        let (dx0, dy0) = self.dims();
        let dx = dx_override.unwrap_or(dx0);
        let dy = dy_override.unwrap_or(dy0);
        if dx == 0 || dy == 0 {
            return Err(Error::InvalidConfig("dx and dy must be positive".into()));
        }
        if (dx, dy) != (dx0, dy0) && !self.is_family() {
            return Err(Error::InvalidConfig(
                "dimension sweeps need dimension-free specs: scalar vectors and matrices, seeded maps".into(),
            ));
        }
        match self {
            Self::LinearGaussian {
                mu_x,
                sigma_x,
                a_matrix,
                r_matrix,
                ..
            } => Ok(BayesModel::LinearGaussian(LinearGaussianModel::new(
                mu_x.resolve(dx, "mu_x")?,
                sigma_x.resolve(dx, "sigma_x")?,
                a_matrix.resolve(dy, dx)?,
                r_matrix.resolve(dy, "r_matrix")?,
            )?)),
            Self::Elliptical {
                prior,
                profile,
                map,
                r_matrix,
                ..
            } => {
                let prior = match prior {
                    PriorSpec::Gaussian { mean, cov } => {
                        Prior::gaussian(mean.resolve(dx, "prior.mean")?, cov.resolve(dx, "prior.cov")?)?
                    }
                    PriorSpec::UniformBox { lo, hi } => Prior::uniform_box(lo.resolve(dx, "prior.lo")?, hi.resolve(dx, "prior.hi")?)?,
                };
                Ok(BayesModel::Elliptical(EllipticalModel::new(
                    prior,
                    map.resolve(dy, dx)?,
                    profile.resolve(dy),
                    r_matrix.resolve(dy, "r_matrix")?,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "n")]
    N,
    #[serde(rename = "d_x")]
    Dx,
    #[serde(rename = "d_y")]
    Dy,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::Dx => "d_x",
            Self::Dy => "d_y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBudget {
    pub n_ref: usize,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub axis: Axis,
    pub grid: Vec<usize>,
    /// Sample size for runs whose grid is not over `N`.
    #[serde(default = "default_n")]
    pub n: usize,
    pub n_obs: usize,
    pub n_reps: usize,
    pub p: u32,
    pub f: TestFunction,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBudget>,
}

fn default_n() -> usize {
    4096
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            axis: Axis::N,
            grid: vec![128, 256, 512, 1024, 2048, 4096, 8192, 16384],
            n: default_n(),
            n_obs: 100,
            n_reps: 50,
            p: 2,
            f: TestFunction::Indicator { coord: 0, threshold: 0.0 },
            seed: 0,
            oracle: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.grid.is_empty() || self.grid.iter().any(|&g| g == 0) {
            return bad("grid must be a non-empty list of positive integers".into());
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("grid must be strictly increasing, got {:?}", self.grid));
        }
        if self.n_obs < 2 || self.n_reps < 2 {
            return bad(format!("n_obs and n_reps must be >= 2, got {} and {}", self.n_obs, self.n_reps));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.p == 1 || self.p == 2) {
            return bad(format!("p must be 1 or 2, got {}", self.p));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("results") }
    }
}
