//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && max_asymmetry(m) <= tol
}

/// Largest `|m[r][c] - m[c][r]|`. Square input only.
pub fn max_asymmetry(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for r in 0..n {
        for c in (r + 1)..n {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part, ascending. Empty input gives an empty list.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Smallest eigenvalue of the symmetric part; `+inf` for a 0×0 matrix.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Largest eigenvalue of the symmetric part; `-inf` for a 0×0 matrix.
pub fn max_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_norm(m: &Mat) -> f64 {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(lo), Some(hi)) => lo.abs().max(hi.abs()),
        _ => 0.0,
    }
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// `[left | right]`.
pub fn hcat(left: &Mat, right: &Mat) -> Mat {
    assert_eq!(left.nrows(), right.nrows(), "hcat row mismatch");
    let mut out = Mat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

/// `[top; bottom]`.
pub fn vcat(top: &Mat, bottom: &Mat) -> Mat {
    assert_eq!(top.ncols(), bottom.ncols(), "vcat column mismatch");
    let mut out = Mat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub fn vcat_vec(top: &Vector, bottom: &Vector) -> Vector {
    let mut out = Vector::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}
