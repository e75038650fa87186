//! Constrained coupled differential Riccati equations.
//!
//! For a family `P = (P(·,1), …, P(·,L))` of symmetric matrices and regime `i`:
//!
//! ```text
//! M(t;P,i) = P A + Aᵀ P + Cᵀ P C + Q + Σ_j π_ij P(j)
//! L(t;P,i) = P B + Cᵀ P D + Sᵀ
//! N(t;P,i) = Dᵀ P D + R
//! Ṗ(t,i)   = -[M - L N⁻¹ Lᵀ],      P(T,i) = G(i)
//! ```
//!
//! subject to `N11 ≫ 0` and `N22 ≪ 0` along the whole solution. `N⁻¹` is
//! always formed through the Schur complement of `N11`, so the integrator
//! stops exactly when the sign constraints break.

mod inverse;
mod lifted;
mod solver;

pub use inverse::{block_inverse, pinv, range_check, RangeCheck, PINV_RCOND};
pub use lifted::{lifted_rhs, permutation_matrices, LiftedState};
pub use solver::{
    comparison_check, solve_cdre, solve_single_player, solve_with, ComparisonReport, RiccatiSolution,
    SolveOptions, Status,
};

use crate::error::{Error, IndefinitenessError, Result};
use crate::linalg::{self, Mat};
use crate::model::{CellCoefficients, GameModel, Players, RegimeIndex, StackedView};

/// `M`, `L` and `N` at one `(t, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiCoefficients {
    pub m: Mat,
    pub l: Mat,
    pub n: Mat,
    /// Size of player 1's block of `N`.
    pub m1: usize,
}

impl RiccatiCoefficients {
    pub fn n11(&self) -> Mat {
        self.n.view((0, 0), (self.m1, self.m1)).into_owned()
    }

    pub fn n12(&self) -> Mat {
        let m2 = self.n.nrows() - self.m1;
        self.n.view((0, self.m1), (self.m1, m2)).into_owned()
    }

    pub fn n22(&self) -> Mat {
        let m2 = self.n.nrows() - self.m1;
        self.n.view((self.m1, self.m1), (m2, m2)).into_owned()
    }

    /// `(λ_min(N11), -λ_max(N22))`; an empty block has margin `+∞`.
    pub fn margins(&self) -> (f64, f64) {
        (linalg::min_eigenvalue(&self.n11()), -linalg::max_eigenvalue(&self.n22()))
    }

    /// `N⁻¹` through the Schur block formula.
    pub fn n_inverse(&self) -> Result<Mat, IndefinitenessError> {
        block_inverse(&self.n, self.m1)
    }

    /// `M - L N⁻¹ Lᵀ`, symmetrized.
    pub fn riccati_term(&self) -> Result<Mat, IndefinitenessError> {
        let ninv = self.n_inverse()?;
        Ok(linalg::symmetrize(&(&self.m - &self.l * ninv * self.l.transpose())))
    }
}

/// Coefficient maps for regime `i` from one cell's data.
pub(crate) fn assemble_cell(
    model: &GameModel,
    coeffs: &CellCoefficients,
    i: usize,
    pall: &[Mat],
    players: Players,
) -> RiccatiCoefficients {
    let c = coeffs;
    let p = &pall[i];
    let view = StackedView::of(c, players);
    let mut coupling = Mat::zeros(model.n, model.n);
    for (j, pj) in pall.iter().enumerate() {
        let rate = model.generator.rate(i, j);
        if rate != 0.0 {
            coupling += pj * rate;
        }
    }
    let m = p * &c.a + c.a.transpose() * p + c.c.transpose() * p * &c.c + &c.q + coupling;
    let l = p * &view.b + c.c.transpose() * p * &view.d + view.s.transpose();
    let n = view.d.transpose() * p * &view.d + &view.r;
    RiccatiCoefficients {
        m: linalg::symmetrize(&m),
        l,
        n: linalg::symmetrize(&n),
        m1: view.m1,
    }
}

fn check_family(model: &GameModel, pall: &[Mat]) -> Result<()> {
    if pall.len() != model.regime_count() {
        return Err(Error::Dimension(format!(
            "expected {} regime matrices, got {}",
            model.regime_count(),
            pall.len()
        )));
    }
    if let Some(bad) = pall.iter().find(|p| p.shape() != (model.n, model.n)) {
        return Err(Error::Dimension(format!(
            "expected {n}x{n} matrices, got {}x{}",
            bad.nrows(),
            bad.ncols(),
            n = model.n
        )));
    }
    Ok(())
}

fn check_time(model: &GameModel, t: f64) -> Result<()> {
    if !(0.0..=model.horizon()).contains(&t) {
        return Err(Error::TimeOutOfRange { t, horizon: model.horizon() });
    }
    Ok(())
}

/// `M`, `L`, `N` of the two-player equation at `(t, i)`.
pub fn assemble(model: &GameModel, t: f64, i: RegimeIndex, pall: &[Mat]) -> Result<RiccatiCoefficients> {
    check_family(model, pall)?;
    check_time(model, t)?;
    if i.index() >= model.regime_count() {
        return Err(Error::RegimeOutOfRange { value: i.one_based(), count: model.regime_count() });
    }
    Ok(assemble_cell(model, model.at(t, i.index()), i.index(), pall, Players::Both))
}

/// Right-hand side `dP/dt` for every regime, with a given coefficient cell.
pub(crate) fn rhs_cell(
    model: &GameModel,
    cell: usize,
    pall: &[Mat],
    players: Players,
) -> Result<Vec<Mat>, IndefinitenessError> {
    (0..model.regime_count())
        .map(|i| {
            let coeffs = assemble_cell(model, model.cell(cell, i), i, pall, players);
            coeffs.riccati_term().map(|term| -term).map_err(|e| IndefinitenessError { regime: Some(i), ..e })
        })
        .collect()
}

/// `dP/dt(t, i) = -[M - L N⁻¹ Lᵀ](t; P, i)` for all regimes.
pub fn cdre_rhs(model: &GameModel, t: f64, pall: &[Mat]) -> Result<Vec<Mat>> {
    check_family(model, pall)?;
    check_time(model, t)?;
    rhs_cell(model, model.grid.cell_of(t), pall, Players::Both).map_err(|e| {
        let regime = e.regime.unwrap_or(0);
        Error::Indefinite(e.at(t, regime))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::chain::Generator;

    fn terminal_family(model: &GameModel) -> Vec<Mat> {
        (0..model.regime_count()).map(|i| model.terminal(i).clone()).collect()
    }

    fn idx(v: usize) -> RegimeIndex {
        RegimeIndex::new(v, 3).unwrap()
    }

    #[test]
    fn builtin_tables_at_terminal_weights() {
        let model = builtin::three_regime();
        let g = terminal_family(&model);
        let m: Vec<f64> = (1..=3).map(|i| assemble(&model, 1.0, idx(i), &g).unwrap().m[(0, 0)]).collect();
        assert!((m[0] - 1.1).abs() < 1e-12 && m[1].abs() < 1e-12 && (m[2] - 0.1).abs() < 1e-12, "{m:?}");
        let l: Vec<Vec<f64>> = (1..=3)
            .map(|i| assemble(&model, 1.0, idx(i), &g).unwrap().l.iter().copied().collect())
            .collect();
        assert_eq!(l, vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let n1 = assemble(&model, 1.0, idx(1), &g).unwrap().n;
        assert_eq!(n1, Mat::from_row_slice(2, 2, &[9.0, 9.0, 9.0, -13.0]));
    }

    #[test]
    fn zero_data_with_equal_family_gives_zero_maps() {
        let pi = builtin::three_regime().generator;
        let mut model = builtin::zero_game(2, 1, 1, pi, vec![Mat::zeros(2, 2); 3], 10);
        for r in &mut model.regimes {
            r.cells[0].r11 = Mat::zeros(1, 1);
            r.cells[0].r22 = Mat::zeros(1, 1);
        }
        let p = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -3.0]);
        let family = vec![p; 3];
        for i in 1..=3 {
            let c = assemble(&model, 0.5, idx(i), &family).unwrap();
            assert!(c.m.norm() < 1e-15, "{}", c.m);
            assert_eq!(c.l, Mat::zeros(2, 2));
            assert_eq!(c.n, Mat::zeros(2, 2));
        }
    }

    #[test]
    fn assemble_rejects_bad_family() {
        let model = builtin::three_regime();
        assert!(assemble(&model, 0.0, idx(1), &[Mat::zeros(1, 1)]).is_err());
        assert!(assemble(&model, 0.0, idx(1), &vec![Mat::zeros(2, 2); 3]).is_err());
        assert!(assemble(&model, 2.0, idx(1), &vec![Mat::zeros(1, 1); 3]).is_err());
    }

    #[test]
    fn rhs_vanishes_for_zero_game() {
        let pi = builtin::three_regime().generator;
        let model = builtin::zero_game(2, 1, 1, pi, vec![Mat::zeros(2, 2); 3], 10);
        let p = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let rhs = cdre_rhs(&model, 0.3, &vec![p; 3]).unwrap();
        assert!(rhs.iter().all(|m| m.norm() < 1e-15));
    }

    #[test]
    fn rhs_of_scalar_quadratic_case() {
        let model = builtin::scalar_quadratic(10);
        let rhs = cdre_rhs(&model, 0.5, &[Mat::from_element(1, 1, 1.0)]).unwrap();
        assert_eq!(rhs[0][(0, 0)], 1.0);
        let rhs = cdre_rhs(&model, 0.5, &[Mat::from_element(1, 1, 3.0)]).unwrap();
        assert!((rhs[0][(0, 0)] - 9.0).abs() < 1e-14);
    }

    #[test]
    fn rhs_of_builtin_regime_one_at_terminal_weights() {
        let model = builtin::three_regime();
        let rhs = cdre_rhs(&model, 1.0, &terminal_family(&model)).unwrap();
        let expected = -(1.1 - 13.0 / 198.0);
        assert!((rhs[0][(0, 0)] - expected).abs() < 1e-14, "{}", rhs[0][(0, 0)]);
    }

    #[test]
    fn rhs_reports_regime_and_time_of_sign_failure() {
        let mut model = builtin::three_regime();
        model.regimes[1].cells[0].r11 = Mat::from_element(1, 1, -5.0);
        let err = cdre_rhs(&model, 1.0, &terminal_family(&model)).unwrap_err();
        match err {
            Error::Indefinite(e) => {
                assert_eq!(e.regime, Some(1));
                assert_eq!(e.t, Some(1.0));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rhs_is_symmetric_for_random_families() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut c = CellCoefficients::zeros(3, 2, 1);
        let mut fill = |m: &mut Mat| m.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        for m in [&mut c.a, &mut c.b1, &mut c.b2, &mut c.c, &mut c.d1, &mut c.d2, &mut c.s1, &mut c.s2, &mut c.r12] {
            fill(m);
        }
        fill(&mut c.q);
        c.q = linalg::symmetrize(&c.q);
        c.r11 = Mat::identity(2, 2) * 20.0;
        c.r22 = -Mat::identity(1, 1) * 20.0;
        let gen = Generator::new(Mat::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0])).unwrap();
        let model = GameModel {
            n: 3,
            m1: 2,
            m2: 1,
            generator: gen,
            grid: crate::TimeGrid::new(1.0, 4).unwrap(),
            regimes: vec![crate::model::RegimeData::constant(c, Mat::zeros(3, 3), crate::linalg::Vector::zeros(3)); 2],
        };
        assert!(model.validate().is_valid());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let family: Vec<Mat> = (0..2)
                .map(|_| linalg::symmetrize(&Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0))))
                .collect();
            for m in cdre_rhs(&model, 0.2, &family).unwrap() {
                assert!(linalg::max_asymmetry(&m) <= 1e-10);
            }
        }
    }
}
