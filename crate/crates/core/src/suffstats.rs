//! Sufficient statistics and their log-ratio derivatives.
//!
//! In additive log-ratio coordinates `y_j = log(u_j / u_p)` the RPPI model is an
//! exponential family with statistics
//! `t(u) = (u_1^2, ..., u_{p-1}^2, 2 u_1 u_2, ..., 2 u_{p-2} u_{p-1}, log u_1, ..., log u_{p-1})`.
//! `R(u)[k, j] = dt_k / dy_j` and `S(u)[k, j] = d^2 t_k / dy_j^2` are polynomials
//! in `u`, so everything the estimator needs is finite on the closed simplex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Composition, ParamLayout};

/// Per-observation contributions to the score matching estimating equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBlocks {
    /// `W_1(u) = R R'`, `q x q`.
    pub w1: DMatrix<f64>,
    /// `d_1(u) = (1 + beta_p) R u_L - S 1`.
    pub d1: DVector<f64>,
}

fn layout_of(u: &Composition) -> ParamLayout {
    ParamLayout::new(u.p()).expect("compositions have p >= 3")
}

/// The full statistic vector, including the log terms.
pub fn suff_t(u: &Composition) -> Result<DVector<f64>> {
    let layout = layout_of(u);
    let l = layout.l();
    if let Some(j) = u.as_slice()[..l].iter().position(|&x| x == 0.0) {
        return Err(Error::ZeroComponent { index: j + 1 });
    }
    let mut t = polynomial_part(u, &layout);
    for j in 0..l {
        t[layout.beta_index(j)] = u[j].ln();
    }
    Ok(t)
}

fn polynomial_part(u: &Composition, layout: &ParamLayout) -> DVector<f64> {
    let mut t = DVector::zeros(layout.q());
    for i in 0..layout.l() {
        t[i] = u[i] * u[i];
    }
    for (i, j) in layout.pairs() {
        t[layout.offdiag_index(i, j)] = 2.0 * u[i] * u[j];
    }
    t
}

/// The polynomial part of `t`, restricted to the `A_KK` block, so that
/// `suff_t_a(u, k*)' pi = u_K' A_KK u_K`.
pub fn suff_t_a(u: &Composition, kstar: usize) -> DVector<f64> {
    let layout = layout_of(u);
    let mut t = polynomial_part(u, &layout);
    for k in 0..layout.q() {
        if !layout.in_kk_block(k, kstar) {
            t[k] = 0.0;
        }
    }
    t
}

/// Jacobian of `t` with respect to the log-ratio coordinates, `q x (p-1)`.
pub fn r_matrix(u: &Composition) -> DMatrix<f64> {
    let layout = layout_of(u);
    let l = layout.l();
    let mut r = DMatrix::zeros(layout.q(), l);
    // u_i^2 rows
    for i in 0..l {
        let ui2 = u[i] * u[i];
        for j in 0..l {
            r[(i, j)] = if i == j { 2.0 * ui2 * (1.0 - u[j]) } else { -2.0 * ui2 * u[j] };
        }
    }
    // 2 u_i u_j rows
    for (i, j) in layout.pairs() {
        let row = layout.offdiag_index(i, j);
        let uij = u[i] * u[j];
        for k in 0..l {
            r[(row, k)] = if k == i {
                2.0 * uij * (1.0 - 2.0 * u[i])
            } else if k == j {
                2.0 * uij * (1.0 - 2.0 * u[j])
            } else {
                -4.0 * u[k] * uij
            };
        }
    }
    // log u_i rows
    for i in 0..l {
        let row = layout.beta_index(i);
        for j in 0..l {
            r[(row, j)] = if i == j { 1.0 - u[j] } else { -u[j] };
        }
    }
    r
}

/// Second derivatives `d^2 t_k / dy_j^2`, `q x (p-1)`.
pub fn s_matrix(u: &Composition) -> DMatrix<f64> {
    let layout = layout_of(u);
    let l = layout.l();
    let mut s = DMatrix::zeros(layout.q(), l);
    for i in 0..l {
        let ui2 = u[i] * u[i];
        for j in 0..l {
            let uj = u[j];
            s[(i, j)] = if i == j {
                4.0 * uj * uj - 10.0 * uj * uj * uj + 6.0 * uj * uj * uj * uj
            } else {
                -2.0 * ui2 * uj + 6.0 * ui2 * uj * uj
            };
        }
    }
    for (i, j) in layout.pairs() {
        let row = layout.offdiag_index(i, j);
        let uij = u[i] * u[j];
        for k in 0..l {
            let uk = u[k];
            s[(row, k)] = if k == i {
                2.0 * uij - 12.0 * uij * u[i] + 12.0 * uij * u[i] * u[i]
            } else if k == j {
                2.0 * uij - 12.0 * uij * u[j] + 12.0 * uij * u[j] * u[j]
            } else {
                -4.0 * uk * (1.0 - uk) * uij + 8.0 * uk * uk * uij
            };
        }
    }
    for i in 0..l {
        let row = layout.beta_index(i);
        for j in 0..l {
            s[(row, j)] = -u[j] * (1.0 - u[j]);
        }
    }
    s
}

/// `W_1(u)` and `d_1(u)` for one observation.
pub fn score_blocks(u: &Composition, beta_p: f64) -> ScoreBlocks {
    let r = r_matrix(u);
    let s = s_matrix(u);
    let l = u.p() - 1;
    let w1 = &r * r.transpose();
    let u_l = DVector::from_column_slice(&u.as_slice()[..l]);
    let d1 = (1.0 + beta_p) * (&r * u_l) - s.column_sum();
    ScoreBlocks { w1, d1 }
}
