//! Sufficient test for uniform convexity in `u1` and concavity in `u2`.
//!
//! Itô's rule on `⟨G X, X⟩` for the homogeneous state driven by one player
//! rewrites the cost as a quadratic form in `(X, u_k)` with weights built
//! from `G`. A Young split of the cross term separates `X` from `u_k`, and
//! Gronwall bounds `E∫|X|²` by `γ_k E∫|u_k|²` with
//! `γ_k = c_k (e^{aT} - 1) / a`. Player `k` is certified when
//! `λ_k = n_k - max(0, -μ_k) γ_k > 0`.

use serde::Serialize;

use crate::linalg::{self, Mat};
use crate::model::GameModel;

/// The per-regime matrices the bound is built from, one entry per
/// `(cell, regime)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct UccTables {
    /// `A + Aᵀ + CᵀC + I`.
    pub growth: Vec<Mat>,
    /// `(B_k + CᵀD_k)ᵀ(B_k + CᵀD_k) + D_kᵀD_k` for k = 1, 2.
    pub input: [Vec<Mat>; 2],
    /// `GA + AᵀG + CᵀGC + Q + Σ_j π_ij G(j)`.
    pub state_weight: Vec<Mat>,
    /// `G B_k + CᵀG D_k + S_kᵀ`.
    pub cross: [Vec<Mat>; 2],
    /// `D_kᵀ G D_k + R_kk`.
    pub control_weight: [Vec<Mat>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateOptions {
    /// Young weight `ε` in `2⟨a, b⟩ ≥ -ε|a|² - |b|²/ε`.
    pub weight: f64,
    /// Use this growth rate instead of `max λ_max(A + Aᵀ + CᵀC + I)`.
    pub forced_growth: Option<f64>,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { weight: 1.0, forced_growth: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlayerBound {
    /// `max λ_max` of the input table.
    pub c: f64,
    /// Gronwall factor.
    pub gamma: f64,
    /// Smallest eigenvalue of the signed, Young-corrected state weight.
    pub mu: f64,
    /// Smallest eigenvalue of the signed control weight minus `1/ε`.
    pub n: f64,
    pub lambda: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UccCertificate {
    /// Growth rate actually used.
    pub a: f64,
    /// `max λ_max(A + Aᵀ + CᵀC + I)` from the data.
    pub a_computed: f64,
    pub horizon: f64,
    pub weight: f64,
    pub first: PlayerBound,
    pub second: PlayerBound,
}

impl UccCertificate {
    pub fn certified(&self) -> bool {
        self.first.certified && self.second.certified
    }

    /// Convexity-concavity constant `min(λ1, λ2)` when both players pass.
    pub fn constant(&self) -> Option<f64> {
        self.certified().then(|| self.first.lambda.min(self.second.lambda))
    }
}

/// Tables from the model data, over every coefficient cell.
pub fn ucc_tables(model: &GameModel) -> UccTables {
    let n = model.n;
    let l = model.regime_count();
    let cells = model.regimes.iter().map(|r| r.cells.len()).max().unwrap_or(1);
    let mut t = UccTables {
        growth: Vec::new(),
        input: [Vec::new(), Vec::new()],
        state_weight: Vec::new(),
        cross: [Vec::new(), Vec::new()],
        control_weight: [Vec::new(), Vec::new()],
    };
    for cell in 0..cells {
        for i in 0..l {
            let c = model.cell(cell, i);
            let g = model.terminal(i);
            t.growth.push(&c.a + c.a.transpose() + c.c.transpose() * &c.c + Mat::identity(n, n));
            let mut coupling = Mat::zeros(n, n);
            for j in 0..l {
                coupling += model.terminal(j) * model.generator.rate(i, j);
            }
            t.state_weight.push(linalg::symmetrize(
                &(g * &c.a + c.a.transpose() * g + c.c.transpose() * g * &c.c + &c.q + coupling),
            ));
            for (k, (b, d, s, r)) in [(&c.b1, &c.d1, &c.s1, &c.r11), (&c.b2, &c.d2, &c.s2, &c.r22)].into_iter().enumerate() {
                let e = b + c.c.transpose() * d;
                t.input[k].push(e.transpose() * &e + d.transpose() * d);
                t.cross[k].push(g * b + c.c.transpose() * g * d + s.transpose());
                t.control_weight[k].push(linalg::symmetrize(&(d.transpose() * g * d + r)));
            }
        }
    }
    t
}

impl UccTables {
    /// The certificate for horizon `horizon`.
    pub fn certificate(&self, horizon: f64, opts: &CertificateOptions) -> UccCertificate {
        let a_computed = self.growth.iter().map(linalg::max_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
        let a = opts.forced_growth.unwrap_or(a_computed);
        let eps = opts.weight;
        let bound = |k: usize| {
            let sign = if k == 0 { 1.0 } else { -1.0 };
            let c = self.input[k].iter().map(linalg::max_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
            let gamma = if a.abs() < 1e-12 { c * horizon } else { c * (a * horizon).exp_m1() / a };
            let mu = self
                .state_weight
                .iter()
                .zip(&self.cross[k])
                .map(|(m, l)| linalg::min_eigenvalue(&((m - l * l.transpose() * (sign * eps)) * sign)))
                .fold(f64::INFINITY, f64::min);
            let n = self.control_weight[k]
                .iter()
                .map(|nk| {
                    let dim = nk.nrows();
                    linalg::min_eigenvalue(&(nk * sign - Mat::identity(dim, dim) / eps))
                })
                .fold(f64::INFINITY, f64::min);
            let lambda = n - (-mu).max(0.0) * gamma;
            PlayerBound { c, gamma, mu, n, lambda, certified: lambda > 0.0 }
        };
        UccCertificate { a, a_computed, horizon, weight: eps, first: bound(0), second: bound(1) }
    }
}

/// Certificate straight from the model.
pub fn ucc_certificate(model: &GameModel, opts: &CertificateOptions) -> UccCertificate {
    ucc_tables(model).certificate(model.horizon(), opts)
}
