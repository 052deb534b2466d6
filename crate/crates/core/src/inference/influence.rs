//! Influence function of the weighted estimator.
//!
//! With `psi(u) = W_1(u) H pi - d_1(u)` and weight `w(u) = exp(c t_a(u)' pi)`,
//! the estimator solves `E[w psi] = 0`, so
//!
//! ```text
//! G     = E[ w(u) (c psi(u) t_a(u)' + W_1(u) H) ]
//! IF(z) = -G^{-1} w(z) psi(z)
//! ```
//!
//! The expectation is replaced by an average over a reference sample. Weights
//! are scaled by a common constant, which cancels between `G` and `w(z)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{quad_form, Composition, ParamLayout, ParamVector};
use crate::sampling::envelope_max;
use crate::suffstats::{score_blocks, suff_t_a};

/// Largest accepted condition number of the equilibrated `G`.
pub const MAX_G_CONDITION: f64 = 1e12;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceResult {
    pub z: Composition,
    #[serde(rename = "if")]
    pub if_: Vec<f64>,
    /// Row-major `G`.
    pub g: Vec<Vec<f64>>,
    pub mc_samples: usize,
}

/// `G` factorized once, evaluated at many contamination points.
#[derive(Debug, Clone)]
pub struct InfluenceOperator {
    pi0: DVector<f64>,
    h: DVector<f64>,
    a_kk: DMatrix<f64>,
    c: f64,
    kstar: usize,
    beta_p: f64,
    shift: f64,
    g: DMatrix<f64>,
    scale: DVector<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
    mc_samples: usize,
}

impl InfluenceOperator {
    pub fn new(pi0: &ParamVector, c: f64, kstar: usize, reference: &[Composition]) -> Result<Self> {
        Self::with_beta_p(pi0, c, kstar, reference, 0.0)
    }

    pub fn with_beta_p(
        pi0: &ParamVector,
        c: f64,
        kstar: usize,
        reference: &[Composition],
        beta_p: f64,
    ) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::InsufficientData("influence needs a nonempty reference sample".into()));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParams(format!("c must be finite and nonnegative, got {c}")));
        }
        let layout = pi0.layout();
        let p = layout.p();
        if kstar == 0 || kstar > p - 1 {
            return Err(Error::InvalidParams(format!("k* must lie in 1..={}, got {kstar}", p - 1)));
        }
        if let Some(u) = reference.iter().find(|u| u.p() != p) {
            return Err(Error::Dimension(format!("reference point has {} components, expected {p}", u.p())));
        }
        let q = layout.q();
        let pi0_v = DVector::from_column_slice(pi0.as_slice());
        let h = DVector::from_iterator(q, (0..q).map(|k| if layout.in_kk_block(k, kstar) { c + 1.0 } else { 1.0 }));
        let a_kk = DMatrix::from_fn(kstar, kstar, |i, j| pi0.pi[layout.a_index(i, j)]);
        // The largest exponent over the closed simplex, so no weight exceeds 1.
        let shift = c * envelope_max(&a_kk);
        let mut op = Self {
            pi0: pi0_v,
            h,
            a_kk,
            c,
            kstar,
            beta_p,
            shift,
            g: DMatrix::zeros(q, q),
            scale: DVector::zeros(q),
            lu: DMatrix::<f64>::identity(1, 1).lu(),
            condition: f64::NAN,
            mc_samples: reference.len(),
        };
        let partials: Vec<DMatrix<f64>> = reference
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = DMatrix::zeros(q, q);
                for u in chunk {
                    op.accumulate_g(u, &layout, &mut acc);
                }
                acc
            })
            .collect();
        let mut g = DMatrix::zeros(q, q);
        for part in partials {
            g += part;
        }
        g /= reference.len() as f64;

        let diag = g.diagonal();
        if diag.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return Err(Error::SingularG { condition: f64::INFINITY });
        }
        let scale = diag.map(|v| 1.0 / v.abs().sqrt());
        let scaled = DMatrix::from_fn(q, q, |i, j| g[(i, j)] * scale[i] * scale[j]);
        let sv = scaled.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_G_CONDITION) {
            return Err(Error::SingularG { condition });
        }
        op.g = g;
        op.scale = scale;
        op.lu = scaled.lu();
        op.condition = condition;
        Ok(op)
    }

    fn weight(&self, u: &Composition) -> f64 {
        if self.c == 0.0 {
            return 1.0;
        }
        (self.c * quad_form(&self.a_kk, u.as_slice()) - self.shift).exp()
    }

    fn psi(&self, u: &Composition) -> (DVector<f64>, DMatrix<f64>) {
        let b = score_blocks(u, self.beta_p);
        let w1h = DMatrix::from_fn(b.w1.nrows(), b.w1.ncols(), |i, j| b.w1[(i, j)] * self.h[j]);
        let psi = &w1h * &self.pi0 - b.d1;
        (psi, w1h)
    }

    fn accumulate_g(&self, u: &Composition, layout: &ParamLayout, acc: &mut DMatrix<f64>) {
        let w = self.weight(u);
        if w == 0.0 {
            return;
        }
        let (psi, w1h) = self.psi(u);
        *acc += w1h * w;
        if self.c != 0.0 {
            let ta = suff_t_a(u, self.kstar);
            debug_assert_eq!(ta.len(), layout.q());
            acc.ger(self.c * w, &psi, &ta, 1.0);
        }
    }

    /// `IF(z)` in the packed parameter order.
    pub fn evaluate(&self, z: &Composition) -> Vec<f64> {
        let (psi, _) = self.psi(z);
        let rhs = (psi * -self.weight(z)).component_mul(&self.scale);
        let x = self.lu.solve(&rhs).expect("G was checked to be nonsingular");
        x.component_mul(&self.scale).iter().copied().collect()
    }

    pub fn result(&self, z: &Composition) -> InfluenceResult {
        InfluenceResult {
            z: z.clone(),
            if_: self.evaluate(z),
            g: self.g.row_iter().map(|r| r.iter().copied().collect()).collect(),
            mc_samples: self.mc_samples,
        }
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Condition number of `G` after scaling to unit diagonal magnitude.
    pub fn condition(&self) -> f64 {
        self.condition
    }
}

/// One-shot influence function at `z`.
pub fn influence(
    z: &Composition,
    pi0: &ParamVector,
    c: f64,
    kstar: usize,
    reference: &[Composition],
) -> Result<InfluenceResult> {
    Ok(InfluenceOperator::new(pi0, c, kstar, reference)?.result(z))
}

/// All compositions with entries in `{0, 1/n, ..., 1}`, vertices and faces
/// included. There are `C(n + p - 1, p - 1)` of them.
pub fn simplex_lattice(p: usize, n: usize) -> Vec<Composition> {
    fn rec(prefix: &mut Vec<usize>, left: usize, slots: usize, n: usize, out: &mut Vec<Composition>) {
        if slots == 1 {
            prefix.push(left);
            let u = prefix.iter().map(|&k| k as f64 / n as f64).collect();
            out.push(Composition::new(u).expect("lattice point is a composition"));
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(prefix, left - k, slots - 1, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(p), n, p, n.max(1), &mut out);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub n_points: usize,
    pub all_finite: bool,
    /// `max_z |IF(z)|_inf` over the grid.
    pub sup_norm: f64,
    pub argmax: Composition,
    pub vertex_norms: Vec<f64>,
}

/// Evaluates `|IF(z)|_inf` over a grid of contamination points.
pub fn influence_sweep(op: &InfluenceOperator, grid: &[Composition]) -> SweepReport {
    let norms: Vec<f64> =
        grid.par_iter().map(|z| op.evaluate(z).iter().map(|v| v.abs()).fold(0.0, f64::max)).collect();
    let all_finite = norms.iter().all(|v| v.is_finite());
    let (mut best, mut sup) = (0, f64::NEG_INFINITY);
    for (i, &v) in norms.iter().enumerate() {
        if v.is_nan() || v > sup {
            best = i;
            sup = v;
            if v.is_nan() {
                break;
            }
        }
    }
    let p = grid.first().map_or(0, |z| z.p());
    let vertex_norms = (0..p)
        .map(|j| {
            let e = Composition::vertex(p, j).expect("valid vertex");
            op.evaluate(&e).iter().map(|v| v.abs()).fold(0.0, f64::max)
        })
        .collect();
    SweepReport { n_points: grid.len(), all_finite, sup_norm: sup, argmax: grid[best].clone(), vertex_norms }
}
