//! Small dense linear-algebra helpers shared by the mixing analysis and the
//! engine's consensus metrics.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a general (not necessarily symmetric) square matrix,
/// computed through the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    ensure_finite(m)?;
    let schur = nalgebra::Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::Numerical(format!("Schur decomposition did not converge for {m}"))
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    ensure_finite(m)?;
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical(format!("symmetric eigensolver did not converge for {m}")))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Largest singular value, taken as the square root of the top eigenvalue
/// of the smaller Gram matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    ensure_finite(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let top = symmetric_eigenvalues(&gram)?
        .last()
        .copied()
        .unwrap_or(0.0);
    Ok(top.max(0.0).sqrt())
}

/// `W (I - 11^T / L)`: every column minus the mean column.
pub fn center_columns(w: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = w.ncols();
    if cols == 0 {
        return w.clone();
    }
    let mean: DVector<f64> = w.column_mean();
    let mut out = w.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

/// The rank-one averaging matrix `11^T / L`.
pub fn averaging_matrix(order: usize) -> DMatrix<f64> {
    DMatrix::from_element(order, order, 1.0 / order as f64)
}

pub fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("matrix has non-finite entries: {m}")))
    }
}
