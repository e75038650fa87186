//! Pseudo-inverse, range test, and the sign-structured block inverse of
//! `N = [[N11, N12], [N12ᵀ, N22]]`.

use serde::Serialize;

use crate::error::{Block, IndefinitenessError};
use crate::linalg::{self, Mat};

/// Singular values below `PINV_RCOND · σ_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-12;

/// Moore-Penrose pseudo-inverse via SVD. Symmetric input gives symmetric output.
///
/// The decomposition comes from `faer`: nalgebra's SVD can return factors
/// that do not recompose the input when it is exactly rank deficient.
pub fn pinv(m: &Mat) -> Mat {
    let (p, q) = m.shape();
    if p == 0 || q == 0 || m.iter().all(|x| *x == 0.0) {
        return Mat::zeros(q, p);
    }
    let svd = faer::Mat::<f64>::from_fn(p, q, |i, j| m[(i, j)])
        .thin_svd()
        .expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let smax = (0..s.nrows()).map(|k| s[k]).fold(0.0, f64::max);
    let cutoff = PINV_RCOND * smax;
    let mut out = Mat::zeros(q, p);
    for k in (0..s.nrows()).filter(|&k| s[k] > cutoff) {
        for i in 0..q {
            let vi = v[(i, k)] / s[k];
            for j in 0..p {
                out[(i, j)] += vi * u[(j, k)];
            }
        }
    }
    if m.is_square() && linalg::max_asymmetry(m) == 0.0 {
        out = linalg::symmetrize(&out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeCheck {
    pub in_range: bool,
    /// `‖N N⁺ Lᵀ - Lᵀ‖_F`.
    pub residual: f64,
}

/// Whether every column of `Lᵀ` lies in the range of `N`.
pub fn range_check(l: &Mat, n: &Mat) -> RangeCheck {
    let lt = l.transpose();
    let residual = (n * pinv(n) * &lt - &lt).norm();
    RangeCheck { in_range: residual <= 1e-8 * (1.0 + l.norm()), residual }
}

/// `N⁻¹` for symmetric `N` whose leading `m1 × m1` block is positive
/// definite and whose Schur complement `N22 - N12ᵀ N11⁻¹ N12` is negative
/// definite.
///
/// Fails with [`IndefinitenessError`] as soon as either sign requirement
/// does; there is no fallback to a general solver.
pub fn block_inverse(n: &Mat, m1: usize) -> Result<Mat, IndefinitenessError> {
    let m = n.nrows();
    assert!(n.is_square() && m1 <= m, "block_inverse: bad shape");
    let m2 = m - m1;
    let n = linalg::symmetrize(n);
    let n11 = n.view((0, 0), (m1, m1)).into_owned();
    let n12 = n.view((0, m1), (m1, m2)).into_owned();
    let n22 = n.view((m1, m1), (m2, m2)).into_owned();

    let n11_inv = if m1 == 0 {
        Mat::zeros(0, 0)
    } else {
        let lo = linalg::min_eigenvalue(&n11);
        let fail = || IndefinitenessError { block: Block::Leading, eigenvalue: lo, t: None, regime: None };
        if !(lo > 0.0) {
            return Err(fail());
        }
        n11.clone().cholesky().ok_or_else(fail)?.inverse()
    };
    let w = &n11_inv * &n12;
    let schur = linalg::symmetrize(&(&n22 - n12.transpose() * &w));
    let schur_inv = if m2 == 0 {
        Mat::zeros(0, 0)
    } else {
        let hi = linalg::max_eigenvalue(&schur);
        let fail = || IndefinitenessError { block: Block::Schur, eigenvalue: hi, t: None, regime: None };
        if !(hi < 0.0) {
            return Err(fail());
        }
        -(-&schur).cholesky().ok_or_else(fail)?.inverse()
    };

    let mut out = Mat::zeros(m, m);
    let ws = &w * &schur_inv;
    out.view_mut((0, 0), (m1, m1)).copy_from(&(&n11_inv + &ws * w.transpose()));
    out.view_mut((0, m1), (m1, m2)).copy_from(&(-&ws));
    out.view_mut((m1, 0), (m2, m1)).copy_from(&(-ws.transpose()));
    out.view_mut((m1, m1), (m2, m2)).copy_from(&schur_inv);
    Ok(linalg::symmetrize(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &Mat) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn pinv_of_identity_and_diagonal() {
        assert_eq!(pinv(&Mat::identity(2, 2)), Mat::identity(2, 2));
        let d = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert!(max_abs(&(pinv(&d) - Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]))) < 1e-15);
        assert_eq!(pinv(&Mat::zeros(3, 2)), Mat::zeros(2, 3));
        assert_eq!(pinv(&Mat::zeros(0, 2)).shape(), (2, 0));
    }

    #[test]
    fn pinv_of_ones_satisfies_penrose() {
        let m = Mat::from_element(2, 2, 1.0);
        let x = pinv(&m);
        assert!(max_abs(&(&x - Mat::from_element(2, 2, 0.25))) < 1e-15);
        assert!(max_abs(&(&m * &x * &m - &m)) < 1e-12);
        assert!(max_abs(&(&x * &m * &x - &x)) < 1e-12);
        assert!(max_abs(&((&m * &x).transpose() - &m * &x)) < 1e-12);
        assert!(max_abs(&((&x * &m).transpose() - &x * &m)) < 1e-12);
        assert_eq!(x, x.transpose());
        assert!(max_abs(&(&x * &m - &m * &x)) < 1e-12);
    }

    #[test]
    fn range_checks() {
        let n = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(!range_check(&Mat::from_row_slice(1, 2, &[0.0, 1.0]), &n).in_range);
        assert!(range_check(&Mat::from_row_slice(1, 2, &[3.0, 0.0]), &n).in_range);
        let full = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, -3.0]);
        let rc = range_check(&Mat::from_row_slice(3, 2, &[1.0, 2.0, -7.0, 0.5, 3.0, 3.0]), &full);
        assert!(rc.in_range);
        assert!(rc.residual < 1e-12);
    }

    #[test]
    fn block_inverse_of_diagonal() {
        let n = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -3.0]);
        let inv = block_inverse(&n, 1).unwrap();
        assert!(max_abs(&(inv - Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -1.0 / 3.0]))) < 1e-16);
    }

    #[test]
    fn block_inverse_matches_adjugate() {
        // Regime 3 of the built-in game at P = G.
        let n = Mat::from_row_slice(2, 2, &[14.0, 6.0, 6.0, -13.0]);
        let det = 14.0 * -13.0 - 36.0;
        assert_eq!(det, -218.0);
        let adj = Mat::from_row_slice(2, 2, &[-13.0, -6.0, -6.0, 14.0]) / det;
        let inv = block_inverse(&n, 1).unwrap();
        assert!(max_abs(&(&inv - &adj)) < 1e-15);
    }

    #[test]
    fn block_inverse_rejects_wrong_signs() {
        let bad_leading = Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let e = block_inverse(&bad_leading, 1).unwrap_err();
        assert_eq!(e.block, Block::Leading);
        assert_eq!(e.eigenvalue, -1.0);
        // Positive N22 with N12 = 0: the Schur complement is N22 itself.
        let bad_schur = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        assert_eq!(block_inverse(&bad_schur, 1).unwrap_err().block, Block::Schur);
        // Degenerate splits.
        let only_first = Mat::from_row_slice(1, 1, &[4.0]);
        assert_eq!(block_inverse(&only_first, 1).unwrap()[(0, 0)], 0.25);
        let only_second = Mat::from_row_slice(1, 1, &[-4.0]);
        assert_eq!(block_inverse(&only_second, 0).unwrap()[(0, 0)], -0.25);
        assert!(block_inverse(&Mat::from_row_slice(1, 1, &[4.0]), 0).is_err());
    }

    #[test]
    fn block_inverse_is_an_inverse_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m1 = rng.gen_range(1..4);
            let m2 = rng.gen_range(1..4);
            let x = Mat::from_fn(m1, m1, |_, _| rng.gen_range(-1.0..1.0));
            let y = Mat::from_fn(m2, m2, |_, _| rng.gen_range(-1.0..1.0));
            let c = Mat::from_fn(m1, m2, |_, _| rng.gen_range(-2.0..2.0));
            let n11 = &x * x.transpose() + Mat::identity(m1, m1) * 0.1;
            let n22 = -(&y * y.transpose()) - Mat::identity(m2, m2) * 0.1;
            let n = linalg::vcat(&linalg::hcat(&n11, &c), &linalg::hcat(&c.transpose(), &n22));
            let inv = block_inverse(&n, m1).unwrap();
            let err = max_abs(&(&n * &inv - Mat::identity(m1 + m2, m1 + m2)));
            let scale = n.norm() * inv.norm();
            assert!(err <= 1e-13 * scale.max(1.0), "err {err}, scale {scale}");
        }
    }

    #[test]
    fn pinv_of_exact_low_rank_products() {
        // Products of thin random factors are exactly rank deficient, the
        // case where nalgebra's SVD fails to recompose its input.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5000 {
            let rows = rng.gen_range(1..=8);
            let cols = rng.gen_range(1..=8);
            let rank = rng.gen_range(0..=rows.min(cols));
            let a = Mat::from_fn(rows, rank, |_, _| rng.gen_range(-1.0..1.0))
                * Mat::from_fn(rank, cols, |_, _| rng.gen_range(-1.0..1.0));
            let x = pinv(&a);
            let (ax, xa) = (&a * &x, &x * &a);
            // Rounding in X A X grows like ‖X‖²‖A‖, so scale accordingly.
            let scale = (1.0 + a.norm()).powi(2) * (1.0 + x.norm()).powi(2);
            for e in [&ax * &a - &a, &xa * &x - &x, ax.transpose() - &ax, xa.transpose() - &xa] {
                assert!(max_abs(&e) <= 1e-13 * scale, "{rows}x{cols} rank {rank}: {} (scale {scale})", max_abs(&e));
            }
        }
    }
}
