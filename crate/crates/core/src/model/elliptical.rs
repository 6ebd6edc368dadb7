use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erf;

use crate::error::{check_dim, Error, Result};
use crate::math::{eigen_extremes, RandomStream, SpdMatrix};
use crate::model::prior::{Prior, StateSampler};
use crate::model::profile::{ln_profile_normalization, RadialProfile};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Tanh,
    Erf,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Self::Tanh => v.tanh(),
            Self::Erf => erf(v),
        }
    }

    /// `‖σ‖_∞`; both supported maps saturate at ±1.
    pub fn sup_norm(self) -> f64 {
        1.0
    }
}

/// `h_i(x) = Σ_j a_ij σ(x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatingObservationMap {
    coeffs: DMatrix<f64>,
    nonlinearity: Nonlinearity,
    a_max: f64,
}

impl SaturatingObservationMap {
    pub fn new(coeffs: DMatrix<f64>, nonlinearity: Nonlinearity) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(Error::InvalidConfig("observation map needs d_y, d_x >= 1".into()));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("observation map coefficients must be finite".into()));
        }
        let a_max = coeffs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self {
            coeffs,
            nonlinearity,
            a_max,
        })
    }

    /// Coefficients i.i.d. uniform on `[−a_max, a_max]`.
    pub fn seeded(d_y: usize, d_x: usize, a_max: f64, seed: u64, nonlinearity: Nonlinearity) -> Result<Self> {
        if !(a_max >= 0.0) || !a_max.is_finite() {
            return Err(Error::InvalidConfig(format!("a_max must be finite and >= 0, got {a_max}")));
        }
        let mut rng = RandomStream::at(seed, vec![0x4A4A, d_y as u64, d_x as u64]);
        let coeffs = DMatrix::from_fn(d_y, d_x, |_, _| {
            if a_max == 0.0 {
                0.0
            } else {
                rng.random_range(-a_max..=a_max)
            }
        });
        Self::new(coeffs, nonlinearity)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn state_dim(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn obs_dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// `M = √d_y · A_max · M_σ · d_x`.
    pub fn euclidean_bound(&self) -> f64 {
        (self.obs_dim() as f64).sqrt() * self.a_max * self.nonlinearity.sup_norm() * self.state_dim() as f64
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let s: smallvec::SmallVec<[f64; 16]> = x.iter().map(|&v| self.nonlinearity.apply(v)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..s.len()).map(|j| self.coeffs[(i, j)] * s[j]).sum();
        }
    }
}

/// `(M, M_R)` with `M_R = √λ_max(R) · M`.
pub fn observation_bound(map: &SaturatingObservationMap, r: &SpdMatrix) -> Result<(f64, f64)> {
    check_dim("metric vs. observation map", map.obs_dim(), r.dim())?;
    let m = map.euclidean_bound();
    let (lambda_max, _) = eigen_extremes(r);
    Ok((m, lambda_max.sqrt() * m))
}

/// `g(y | x) = C φ(ψ(‖y − h(x)‖_R))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalModel {
    prior: Prior,
    map: SaturatingObservationMap,
    profile: RadialProfile,
    r: SpdMatrix,
    ln_c: f64,
}

impl EllipticalModel {
    pub fn new(prior: Prior, map: SaturatingObservationMap, profile: RadialProfile, r: SpdMatrix) -> Result<Self> {
        check_dim("prior vs. observation map", map.state_dim(), prior.dim())?;
        check_dim("metric vs. observation map", map.obs_dim(), r.dim())?;
        let ln_c = ln_profile_normalization(&profile, r.dim(), &r)?;
        Ok(Self {
            prior,
            map,
            profile,
            r,
            ln_c,
        })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn map(&self) -> &SaturatingObservationMap {
        &self.map
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn r(&self) -> &SpdMatrix {
        &self.r
    }

    pub fn ln_normalization(&self) -> f64 {
        self.ln_c
    }

    /// `M_R` of the observation map under this metric.
    pub fn m_r(&self) -> f64 {
        observation_bound(&self.map, &self.r).expect("dimensions checked at assembly").1
    }
}

impl Model for EllipticalModel {
    fn state_dim(&self) -> usize {
        self.map.state_dim()
    }

    fn obs_dim(&self) -> usize {
        self.map.obs_dim()
    }

    fn sample_prior_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        self.prior.sample_into(rng, out)
    }

    fn log_likelihood_unchecked(&self, y: &[f64], x: &[f64]) -> f64 {
        let mut h: smallvec::SmallVec<[f64; 16]> = smallvec::smallvec![0.0; y.len()];
        self.map.apply_into(x, &mut h);
        h.iter_mut().zip(y).for_each(|(hi, yi)| *hi = yi - *hi);
        let dist = self.r.quad_form(&h).max(0.0).sqrt();
        self.ln_c + self.profile.log_kernel(dist)
    }

    fn sample_observation_into(&self, x: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        self.profile.sample_noise_into(&self.r, rng, out);
        let mut h: smallvec::SmallVec<[f64; 16]> = smallvec::smallvec![0.0; out.len()];
        self.map.apply_into(x, &mut h);
        out.iter_mut().zip(&h).for_each(|(o, hi)| *o += hi);
    }
}
