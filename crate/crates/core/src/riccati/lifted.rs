//! The coupled equations rewritten as one Riccati equation of size `nL`.
//!
//! Regime `i` becomes diagonal block `i` of a block-diagonal state. The
//! diagonal generator entries move into the drift (`A(i) + ½π_ii I`) and the
//! off-diagonal coupling becomes `Σ_j T_j P T_jᵀ`, where `T_j` carries
//! `√π_{i,i+j} I` on the cyclic shift `i → i + j (mod L)`. The big `N` is
//! inverted by plain LU, which makes this an independent check of the
//! per-regime assembly and the Schur-complement inverse.

use crate::chain::Generator;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{GameModel, StackedView, Players};

/// Block-diagonal `(nL) × (nL)` symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedState {
    big: Mat,
    n: usize,
}

impl LiftedState {
    pub fn from_blocks(blocks: &[Mat]) -> Self {
        let n = blocks.first().map_or(0, Mat::nrows);
        Self { big: linalg::block_diag(blocks), n }
    }

    /// Wraps `big`, rejecting any nonzero entry off the `n × n` diagonal blocks.
    pub fn new(big: Mat, n: usize) -> Result<Self> {
        if n == 0 || !big.is_square() || big.nrows() % n != 0 {
            return Err(Error::Dimension(format!(
                "{}x{} is not a stack of {n}x{n} blocks",
                big.nrows(),
                big.ncols()
            )));
        }
        let off = big.iter().enumerate().any(|(k, v)| {
            let (r, c) = (k % big.nrows(), k / big.nrows());
            r / n != c / n && *v != 0.0
        });
        if off {
            return Err(Error::NotBlockDiagonal);
        }
        Ok(Self { big, n })
    }

    pub fn matrix(&self) -> &Mat {
        &self.big
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> Vec<Mat> {
        let count = if self.n == 0 { 0 } else { self.big.nrows() / self.n };
        (0..count)
            .map(|i| self.big.view((i * self.n, i * self.n), (self.n, self.n)).into_owned())
            .collect()
    }
}

/// `T_1, …, T_{L-1}` for a generator, each `(nL) × (nL)`.
pub fn permutation_matrices(generator: &Generator, n: usize) -> Vec<Mat> {
    let l = generator.size();
    (1..l)
        .map(|j| {
            let mut t = Mat::zeros(n * l, n * l);
            for i in 0..l {
                let target = (i + j) % l;
                let w = generator.rate(i, target).sqrt();
                t.view_mut((i * n, target * n), (n, n)).fill_diagonal(w);
            }
            t
        })
        .collect()
}

/// `dP/dt` of the lifted equation at time `t`.
pub fn lifted_rhs(model: &GameModel, t: f64, state: &LiftedState) -> Result<LiftedState> {
    let (n, l) = (model.n, model.regime_count());
    if state.n != n || state.big.nrows() != n * l {
        return Err(Error::Dimension(format!("expected a lifted state of size {}", n * l)));
    }
    LiftedState::new(state.big.clone(), n)?;
    if !(0.0..=model.horizon()).contains(&t) {
        return Err(Error::TimeOutOfRange { t, horizon: model.horizon() });
    }

    let cells: Vec<_> = (0..l).map(|i| model.at(t, i)).collect();
    let views: Vec<_> = cells.iter().map(|c| StackedView::of(c, Players::Both)).collect();
    let shifted: Vec<Mat> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| &c.a + Mat::identity(n, n) * (0.5 * model.generator.rate(i, i)))
        .collect();
    let a = linalg::block_diag(&shifted);
    let c = linalg::block_diag(&cells.iter().map(|c| c.c.clone()).collect::<Vec<_>>());
    let q = linalg::block_diag(&cells.iter().map(|c| c.q.clone()).collect::<Vec<_>>());
    let b = linalg::block_diag(&views.iter().map(|v| v.b.clone()).collect::<Vec<_>>());
    let d = linalg::block_diag(&views.iter().map(|v| v.d.clone()).collect::<Vec<_>>());
    let s = linalg::block_diag(&views.iter().map(|v| v.s.clone()).collect::<Vec<_>>());
    let r = linalg::block_diag(&views.iter().map(|v| v.r.clone()).collect::<Vec<_>>());

    let p = &state.big;
    let mut m = p * &a + a.transpose() * p + c.transpose() * p * &c + q;
    for tj in permutation_matrices(&model.generator, n) {
        m += &tj * p * tj.transpose();
    }
    let lm = p * &b + c.transpose() * p * &d + s.transpose();
    let nm = d.transpose() * p * &d + r;
    let ninv = nm
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel(format!("lifted N is singular at t = {t}")))?;
    let rhs = -linalg::symmetrize(&(linalg::symmetrize(&m) - &lm * ninv * lm.transpose()));
    LiftedState::new(rhs, n)
}
