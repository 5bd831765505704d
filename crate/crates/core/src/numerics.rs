//! Dense symmetric positive-definite linear algebra.
//!
//! Every Gram-matrix factorization in the crate goes through [`factor_psd`],
//! which applies a geometric diagonal-jitter schedule when the plain
//! Cholesky factorization breaks down.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative jitter for the first non-zero attempt, scaled by `max(diag(A))`.
pub const INITIAL_RELATIVE_JITTER: f64 = 1e-12;
/// Multiplier between consecutive jitter attempts.
pub const JITTER_GROWTH: f64 = 10.0;
/// Number of non-zero jitter attempts after the unjittered one.
pub const MAX_JITTER_RETRIES: usize = 8;

/// Cholesky factor `L` of `A + jitter_used * I`.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    lower: DMatrix<f64>,
    jitter_used: f64,
}

impl PsdFactor {
    pub fn lower_triangular(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Factor of the empty matrix.
    pub fn empty() -> Self {
        PsdFactor {
            lower: DMatrix::zeros(0, 0),
            jitter_used: 0.0,
        }
    }

    /// Solves `(A + jitter I) X = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        solve_psd(self, b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_rows(self.dim(), b.nrows())?;
        let mut x = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut x);
        self.lower.tr_solve_lower_triangular_unchecked_mut(&mut x);
        Ok(x)
    }

    /// Returns `L⁻¹ B`, the half-solve used for quadratic forms.
    pub fn half_solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_rows(self.dim(), b.nrows())?;
        let mut x = b.clone();
        self.lower.solve_lower_triangular_unchecked_mut(&mut x);
        Ok(x)
    }

    pub fn log_det(&self) -> f64 {
        log_det(self)
    }
}

fn check_rows(n: usize, rows: usize) -> Result<()> {
    if n != rows {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} rows"),
            got: format!("{rows} rows"),
        });
    }
    Ok(())
}

/// In-place Cholesky of a symmetric matrix (lower triangle is read).
/// Returns `None` if a pivot is not strictly positive and finite.
fn cholesky(a: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        // column j below the diagonal: L[i,j] = (A[i,j] - sum_k L[i,k] L[j,k]) / L[j,j]
        for i in (j + 1)..n {
            l[(i, j)] = a[(i, j)];
        }
        for k in 0..j {
            let ljk = l[(j, k)];
            if ljk != 0.0 {
                for i in (j + 1)..n {
                    l[(i, j)] -= l[(i, k)] * ljk;
                }
            }
        }
        for i in (j + 1)..n {
            l[(i, j)] /= djj;
        }
    }
    Some(l)
}

/// Factors `A + jitter I`, escalating `jitter` from 0 through
/// `1e-12 * max(diag(A))` by factors of 10 until the factorization succeeds
/// or `max_jitter` is exhausted.
///
/// `A` is symmetrized as `(A + Aᵀ)/2` before factoring.
pub fn factor_psd(a: &DMatrix<f64>, max_jitter: f64) -> Result<PsdFactor> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(PsdFactor::empty());
    }
    let sym = (a + a.transpose()) * 0.5;
    if let Some(lower) = cholesky(&sym, 0.0) {
        return Ok(PsdFactor {
            lower,
            jitter_used: 0.0,
        });
    }

    let max_diag = sym.diagonal().iter().fold(0.0f64, |m, &d| m.max(d.abs()));
    let mut jitter = INITIAL_RELATIVE_JITTER * if max_diag > 0.0 { max_diag } else { 1.0 };
    for _ in 0..MAX_JITTER_RETRIES {
        let capped = jitter.min(max_jitter);
        if capped > 0.0 {
            if let Some(lower) = cholesky(&sym, capped) {
                return Ok(PsdFactor {
                    lower,
                    jitter_used: capped,
                });
            }
        }
        if capped >= max_jitter {
            break;
        }
        jitter *= JITTER_GROWTH;
    }
    Err(Error::NotPositiveDefinite { max_jitter })
}

/// Solves `(A + jitter I) X = B` by forward and back substitution.
pub fn solve_psd(f: &PsdFactor, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(f.dim(), b.nrows())?;
    let mut x = b.clone();
    f.lower.solve_lower_triangular_unchecked_mut(&mut x);
    f.lower.tr_solve_lower_triangular_unchecked_mut(&mut x);
    Ok(x)
}

/// `log |A + jitter I| = 2 Σ log L_ii`.
pub fn log_det(f: &PsdFactor) -> f64 {
    2.0 * f.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Symmetrizes in place as `(C + Cᵀ)/2`.
pub fn symmetrize(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = m;
            c[(j, i)] = m;
        }
    }
}
