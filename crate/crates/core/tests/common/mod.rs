//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rppi::{alr, alr_inverse, Composition, RppiParams};
use rppi::suffstats::suff_t;

/// The p = 3 model used throughout: beta = (-0.3, 0.2, 0), A_L = [[-2, 1], [1, -1]].
pub fn mild() -> RppiParams {
    RppiParams::from_rows(&[vec![-2.0, 1.0], vec![1.0, -1.0]], vec![-0.3, 0.2, 0.0], 2).unwrap()
}

pub fn comp(u: &[f64]) -> Composition {
    Composition::new(u.to_vec()).unwrap()
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out
}

/// Expectations under a p = 3 RPPI density by tensor Gauss-Legendre
/// quadrature. With `u1 = s^(1/(1+b1))`, `u2 = (1-u1) t^(1/(1+b2))` the
/// power singularities at the edges are absorbed into the change of variables.
pub struct Quadrature {
    points: Vec<([f64; 3], f64)>,
}

impl Quadrature {
    pub fn new(params: &RppiParams, n: usize) -> Self {
        let b = params.beta();
        assert_eq!(b.len(), 3);
        let gl = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut total = 0.0;
        for &(s, ws) in &gl {
            let x = s.powf(1.0 / (1.0 + b[0]));
            for &(t, wt) in &gl {
                let y = t.powf(1.0 / (1.0 + b[1]));
                let u = [x, (1.0 - x) * y, (1.0 - x) * (1.0 - y)];
                // u1^b1 du1 = ds/(1+b1); u2^b2 = (1-x)^b2 y^b2; y^b2 dy = dt/(1+b2); Jacobian (1-x).
                let w = ws * wt / ((1.0 + b[0]) * (1.0 + b[1]))
                    * (1.0 - x).powf(b[1] + 1.0)
                    * u[2].powf(b[2])
                    * params.quad_form(&u).exp();
                total += w;
                points.push((u, w));
            }
        }
        points.iter_mut().for_each(|(_, w)| *w /= total);
        Self { points }
    }

    pub fn expect<F: Fn(&[f64; 3]) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(|(u, w)| w * f(u)).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = (Composition, f64)> + '_ {
        self.points.iter().filter(|(u, _)| u.iter().all(|&x| x > 0.0)).map(|(u, w)| (comp(u), *w))
    }
}

/// Central-difference Jacobian `dt_k/dy_j` of the sufficient statistic in ALR coordinates.
pub fn fd_jacobian(u: &Composition, h: f64) -> Vec<Vec<f64>> {
    let y = alr(u).unwrap();
    let t0 = suff_t(u).unwrap();
    let mut jac = vec![vec![0.0; y.len()]; t0.len()];
    for j in 0..y.len() {
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[j] += h;
        ym[j] -= h;
        let tp = suff_t(&alr_inverse(&yp).unwrap()).unwrap();
        let tm = suff_t(&alr_inverse(&ym).unwrap()).unwrap();
        for k in 0..t0.len() {
            jac[k][j] = (tp[k] - tm[k]) / (2.0 * h);
        }
    }
    jac
}

/// Second-difference Laplacian `sum_j d^2 t_k / dy_j^2` in ALR coordinates.
pub fn fd_laplacian(u: &Composition, h: f64) -> Vec<f64> {
    let y = alr(u).unwrap();
    let t0 = suff_t(u).unwrap();
    let mut lap = vec![0.0; t0.len()];
    for j in 0..y.len() {
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[j] += h;
        ym[j] -= h;
        let tp = suff_t(&alr_inverse(&yp).unwrap()).unwrap();
        let tm = suff_t(&alr_inverse(&ym).unwrap()).unwrap();
        for k in 0..t0.len() {
            lap[k] += (tp[k] - 2.0 * t0[k] + tm[k]) / (h * h);
        }
    }
    lap
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
