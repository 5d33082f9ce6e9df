//! Small dense symmetric kernel for per-arm ridge statistics.
//!
//! Every bandit arm keeps a d×d design accumulator (d is 9 or 11 for the
//! dosing feature sets) and solves against it once per step. Matrices are
//! factored with Cholesky on demand; no explicit inverse is ever stored.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("invalid dimension: must be at least 1")]
    InvalidDimension,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid accumulator weight {0}")]
    InvalidWeight(f64),
}

/// Dense vector of feature-space values.
pub type Vector = Vec<f64>;

/// Symmetric d×d matrix stored row-major.
///
/// Updates write the upper triangle and mirror it, so `get(i, j) == get(j, i)`
/// holds bit-for-bit after any sequence of operations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SpdMatrix {
    pub fn identity(dim: usize) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        Ok(m)
    }

    /// All-zero accumulator. Not positive definite on its own; used as the
    /// starting point for outer-product sums.
    pub fn zeros(dim: usize) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::InvalidDimension);
        }
        Ok(Self {
            dim,
            data: vec![0.0; dim * dim],
        })
    }

    /// Builds a matrix from row-major values, symmetrizing from the upper
    /// triangle.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut m = Self::zeros(dim)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for j in i..dim {
                m.data[i * dim + j] = row[j];
                m.data[j * dim + i] = row[j];
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    fn check_dim(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                actual: len,
            });
        }
        Ok(())
    }

    /// Returns `weight * self + x xᵀ`.
    ///
    /// `weight = 1` is plain accumulation; `weight < 1` is the forgetting
    /// path used by pseudo-reward accumulators.
    pub fn rank_one_update(&self, x: &[f64], weight: f64) -> Result<Self, LinalgError> {
        let mut out = self.clone();
        out.rank_one_update_in_place(x, weight)?;
        Ok(out)
    }

    pub fn rank_one_update_in_place(&mut self, x: &[f64], weight: f64) -> Result<(), LinalgError> {
        self.check_dim(x.len())?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(LinalgError::InvalidWeight(weight));
        }
        let d = self.dim;
        for i in 0..d {
            for j in i..d {
                let v = if weight == 1.0 {
                    self.data[i * d + j] + x[i] * x[j]
                } else {
                    weight * self.data[i * d + j] + x[i] * x[j]
                };
                self.data[i * d + j] = v;
                self.data[j * d + i] = v;
            }
        }
        Ok(())
    }

    /// Returns `I + Σ parts`, summed left to right.
    pub fn identity_plus(parts: &[&SpdMatrix]) -> Result<Self, LinalgError> {
        let dim = parts.first().map(|p| p.dim).ok_or(LinalgError::InvalidDimension)?;
        let mut out = Self::identity(dim)?;
        for p in parts {
            out.check_dim(p.dim)?;
            for (o, v) in out.data.iter_mut().zip(&p.data) {
                *o += *v;
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vector, LinalgError> {
        self.check_dim(x.len())?;
        Ok(self
            .data
            .chunks(self.dim)
            .map(|row| dot(row, x))
            .collect())
    }

    pub fn cholesky(&self) -> Result<Cholesky, LinalgError> {
        Cholesky::factor(self)
    }

    /// Solves `A θ = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vector, LinalgError> {
        self.cholesky()?.solve(b)
    }

    /// Returns `xᵀ A⁻¹ x`, the squared confidence radius.
    pub fn quad_form_inv(&self, x: &[f64]) -> Result<f64, LinalgError> {
        self.cholesky()?.quad_form_inv(x)
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SpdMatrix) -> Result<Self, LinalgError> {
        let d = a.dim;
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: diag });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Self { dim: d, lower: l })
    }

    fn check_dim(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                actual: len,
            });
        }
        Ok(())
    }

    /// Forward substitution: solves `L y = b`.
    fn forward(&self, b: &[f64]) -> Vector {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * d + k] * y[k];
            }
            y[i] = s / self.lower[i * d + i];
        }
        y
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vector, LinalgError> {
        self.check_dim(b.len())?;
        let d = self.dim;
        let mut x = self.forward(b);
        // back substitution with Lᵀ
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= self.lower[k * d + i] * x[k];
            }
            x[i] = s / self.lower[i * d + i];
        }
        Ok(x)
    }

    /// `xᵀ A⁻¹ x = ‖L⁻¹ x‖²`, nonnegative by construction.
    pub fn quad_form_inv(&self, x: &[f64]) -> Result<f64, LinalgError> {
        self.check_dim(x.len())?;
        Ok(self.forward(x).iter().map(|v| v * v).sum())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
