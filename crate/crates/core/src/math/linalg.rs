//! Dense symmetric positive definite matrices with a cached Cholesky factor.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

const SYMMETRY_RTOL: f64 = 1e-12;
const PIVOT_RTOL: f64 = 1e-12;

/// Symmetric positive definite matrix, immutable after construction.
///
/// Construction factors `m = L Lᵀ` once; every solve, determinant and
/// quadratic form goes through the cached lower factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    lower: DMatrix<f64>,
    log_det: f64,
    /// Diagonal of `L` when the matrix is diagonal; enables O(n) kernels.
    diag_factor: Option<Vec<f64>>,
}

impl SpdMatrix {
    /// Validates symmetry and factors `m`.
    ///
    /// Entries that differ from their transpose by more than `1e-12` times the
    /// largest absolute entry are rejected; smaller discrepancies are averaged
    /// away. A pivot below `1e-12 · max(diag)` counts as non-positive.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        check_dim("square matrix columns", n, m.ncols())?;
        if n == 0 {
            return Err(Error::DimensionMismatch {
                what: "matrix dimension (must be positive)",
                expected: 1,
                found: 0,
            });
        }
        let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut sym = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (sym[(i, j)], sym[(j, i)]);
                if !a.is_finite() || !b.is_finite() || (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
                let avg = 0.5 * (a + b);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }
        let lower = cholesky(&sym)?;
        let log_det = 2.0 * (0..n).map(|i| lower[(i, i)].ln()).sum::<f64>();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || sym[(i, j)] == 0.0));
        let diag_factor = is_diag.then(|| (0..n).map(|i| lower[(i, i)]).collect());
        Ok(Self {
            entries: sym,
            lower,
            log_det,
            diag_factor,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0).expect("identity is SPD")
    }

    pub fn scaled_identity(n: usize, c: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(n, n, c))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_dim("dense matrix row length", n, r.len())?;
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular `L` with `L Lᵀ` equal to the matrix.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("right-hand side", self.dim(), b.len())?;
        let mut x = b.as_slice().to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        Ok(DVector::from_vec(x))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.forward_in_place(&mut col);
            self.backward_in_place(&mut col);
            inv.set_column(j, &DVector::from_column_slice(&col));
        }
        0.5 * (&inv + inv.transpose())
    }

    /// `vᵀ M⁻¹ v`, without forming the inverse.
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim());
        if let Some(d) = &self.diag_factor {
            return v.iter().zip(d).map(|(vi, di)| (vi / di) * (vi / di)).sum();
        }
        let l = &self.lower;
        let n = self.dim();
        let mut z: smallvec::SmallVec<[f64; 16]> = smallvec::SmallVec::from_slice(v);
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= l[(i, k)] * z[k];
            }
            let zi = s / l[(i, i)];
            z[i] = zi;
            acc += zi * zi;
        }
        acc
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim());
        if let Some(d) = &self.diag_factor {
            return v.iter().zip(d).map(|(vi, di)| (vi * di) * (vi * di)).sum();
        }
        let l = &self.lower;
        let n = self.dim();
        // ‖Lᵀ v‖²
        (0..n)
            .map(|j| {
                let s: f64 = (j..n).map(|i| l[(i, j)] * v[i]).sum();
                s * s
            })
            .sum()
    }

    /// Overwrites `z` with `L z`.
    pub fn mul_lower_in_place(&self, z: &mut [f64]) {
        if let Some(d) = &self.diag_factor {
            z.iter_mut().zip(d).for_each(|(zi, di)| *zi *= di);
            return;
        }
        let l = &self.lower;
        for i in (0..self.dim()).rev() {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += l[(i, k)] * zk;
            }
            z[i] = s;
        }
    }

    /// Overwrites `z` with `L⁻ᵀ z`. For `u` on the unit sphere, `L⁻ᵀ u` has
    /// unit norm in the metric `‖v‖² = vᵀ M v`.
    pub fn solve_upper_in_place(&self, z: &mut [f64]) {
        self.backward_in_place(z);
    }

    fn forward_in_place(&self, x: &mut [f64]) {
        if let Some(d) = &self.diag_factor {
            x.iter_mut().zip(d).for_each(|(xi, di)| *xi /= di);
            return;
        }
        let l = &self.lower;
        for i in 0..self.dim() {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
    }

    fn backward_in_place(&self, x: &mut [f64]) {
        if let Some(d) = &self.diag_factor {
            x.iter_mut().zip(d).for_each(|(xi, di)| *xi /= di);
            return;
        }
        let l = &self.lower;
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
    }
}

fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(m[(i, i)]));
    let tol = PIVOT_RTOL * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Shorthand for the factorization entry point.
pub fn spd_factor(m: DMatrix<f64>) -> Result<SpdMatrix> {
    SpdMatrix::new(m)
}

/// Largest and smallest eigenvalue, via a full symmetric eigendecomposition.
pub fn eigen_extremes(m: &SpdMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.entries().clone());
    let max = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
    (max, min)
}
