//! Small dense linear-algebra helpers on top of nalgebra.

use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Minimum-norm least squares x = A⁺·b via a truncated SVD.
pub fn lstsq(a: &CMatrix, b: &CVector) -> Result<CVector> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!("lstsq: A {:?} vs b {}", a.shape(), b.len())));
    }
    if a.ncols() == 0 {
        return Ok(CVector::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.max();
    if largest == 0.0 {
        return Ok(CVector::zeros(a.ncols()));
    }
    svd.solve(b, largest * PINV_RELATIVE_TOLERANCE)
        .map_err(|e| Error::InvalidArgument(format!("lstsq: {e}")))
}

/// Scales each column to unit Euclidean norm and returns the original norms.
pub fn normalize_columns(matrix: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
    let mut out = matrix.clone();
    let mut norms = Vec::with_capacity(matrix.ncols());
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::ZeroColumn { index: j });
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite("matrix column"));
        }
        col.unscale_mut(norm);
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}
