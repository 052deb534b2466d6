//! Dense helpers: compensated accumulation of the estimating equations and a
//! symmetric positive definite solve with a condition-number guard.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Composition;
use crate::suffstats::{r_matrix, s_matrix};

/// Observations per reduction block. Fixed so that the summation tree does not
/// depend on the number of worker threads.
const CHUNK: usize = 256;

/// Condition number of the equilibrated system above which a solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Neumaier-compensated running sums over a fixed-length buffer.
#[derive(Debug, Clone)]
struct CompensatedBuf {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedBuf {
    fn zeros(len: usize) -> Self {
        Self { sum: vec![0.0; len], comp: vec![0.0; len] }
    }

    #[inline]
    fn add(&mut self, k: usize, x: f64) {
        let s = self.sum[k];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.comp[k] += (s - t) + x;
        } else {
            self.comp[k] += (x - t) + s;
        }
        self.sum[k] = t;
    }

    fn total(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

/// Weighted sums `sum_i w_i W_1(u_i)` and `sum_i w_i d_1(u_i)`.
///
/// `weights` must already be normalized; observations with zero weight are skipped.
pub(crate) fn weighted_sums(data: &[Composition], weights: &[f64], beta_p: f64) -> (DMatrix<f64>, DVector<f64>) {
    let p = data[0].p();
    let l = p - 1;
    let q = p * (p - 1) / 2 + l;
    // Upper triangle of W (row-major, j >= i) followed by d.
    let tri = q * (q + 1) / 2;
    let len = tri + q;

    let partials: Vec<Vec<f64>> = data
        .par_chunks(CHUNK)
        .zip(weights.par_chunks(CHUNK))
        .map(|(us, ws)| {
            let mut acc = CompensatedBuf::zeros(len);
            for (u, &w) in us.iter().zip(ws) {
                if w == 0.0 {
                    continue;
                }
                let r = r_matrix(u);
                let s = s_matrix(u);
                let mut k = 0;
                for a in 0..q {
                    for b in a..q {
                        let mut v = 0.0;
                        for j in 0..l {
                            v += r[(a, j)] * r[(b, j)];
                        }
                        acc.add(k, w * v);
                        k += 1;
                    }
                }
                for a in 0..q {
                    let mut v = 0.0;
                    for j in 0..l {
                        v += (1.0 + beta_p) * r[(a, j)] * u[j] - s[(a, j)];
                    }
                    acc.add(tri + a, w * v);
                }
            }
            acc.total()
        })
        .collect();

    let mut acc = CompensatedBuf::zeros(len);
    for part in &partials {
        for (k, v) in part.iter().enumerate() {
            acc.add(k, *v);
        }
    }
    let flat = acc.total();
    let mut w = DMatrix::zeros(q, q);
    let mut k = 0;
    for a in 0..q {
        for b in a..q {
            w[(a, b)] = flat[k];
            w[(b, a)] = flat[k];
            k += 1;
        }
    }
    let d = DVector::from_column_slice(&flat[tri..]);
    (w, d)
}

/// Validates nonnegative weights and rescales them to sum to one.
pub(crate) fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Weight(format!("weight {} is {}", i + 1, weights[i])));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Weight("all weights are zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Solution of a symmetric positive definite system.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: DVector<f64>,
    /// 2-norm condition number after symmetric diagonal equilibration.
    pub condition: f64,
    /// 2-norm condition number of the matrix as given.
    pub raw_condition: f64,
}

fn eig_condition(m: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` for symmetric positive definite `a`.
///
/// The matrix is first scaled to unit diagonal; the condition number of the
/// scaled matrix decides whether the system is accepted.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, max_condition: f64) -> Result<SpdSolution> {
    let singular = |condition: f64| Error::SingularSystem {
        condition,
        hint: "the weighted moment matrix is rank deficient; use more observations or fewer components"
            .into(),
    };
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(singular(f64::INFINITY));
    }
    let n = a.nrows();
    let diag = a.diagonal();
    if diag.iter().any(|&v| v <= 0.0) {
        return Err(singular(f64::INFINITY));
    }
    let scale = diag.map(|v| 1.0 / v.sqrt());
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let condition = eig_condition(&scaled);
    if !(condition <= max_condition) {
        return Err(singular(condition));
    }
    let chol = scaled.clone().cholesky().ok_or_else(|| singular(condition))?;
    let rhs = b.component_mul(&scale);
    let x = chol.solve(&rhs).component_mul(&scale);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(singular(condition));
    }
    Ok(SpdSolution { x, condition, raw_condition: eig_condition(a) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_recovers_solution() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &a * &x;
        let sol = solve_spd(&a, &b, MAX_CONDITION).unwrap();
        assert!((sol.x - x).amax() < 1e-13);
        assert!(sol.condition >= 1.0);
    }

    #[test]
    fn spd_solve_handles_wild_scaling() {
        // Badly scaled but well conditioned after equilibration.
        let d = DVector::from_vec(vec![1e-8, 1.0, 1e6]);
        let core = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let a = DMatrix::from_fn(3, 3, |i, j| core[(i, j)] * d[i] * d[j]);
        let x = DVector::from_vec(vec![3e7, -1.0, 2e-6]);
        let b = &a * &x;
        let sol = solve_spd(&a, &b, MAX_CONDITION).unwrap();
        assert!(sol.raw_condition > MAX_CONDITION);
        assert!(sol.condition < 10.0);
        for i in 0..3 {
            assert!(((sol.x[i] - x[i]) / x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_solve_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_spd(&a, &b, MAX_CONDITION), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedBuf::zeros(1);
        acc.add(0, 1e16);
        for _ in 0..1000 {
            acc.add(0, 1.0);
        }
        acc.add(0, -1e16);
        assert_eq!(acc.total()[0], 1000.0);
    }

    #[test]
    fn weights_validation() {
        assert!(normalize_weights(&[0.0, 0.0]).is_err());
        assert!(normalize_weights(&[1.0, -1.0]).is_err());
        assert_eq!(normalize_weights(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
    }
}
