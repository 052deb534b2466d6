//! Two-sample Kolmogorov-Smirnov comparison with upper-tail truncation.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Values above this were removed from both samples.
    pub cutoff: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7).
pub fn quantile_type7(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// `sup_x |F_a(x) - F_b(x)|` for the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Limiting distribution `P(K > lambda)` of the scaled KS statistic.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form, accurate where the alternating series converges slowly.
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=6).map(|k| (y * ((2 * k - 1) as f64).powi(2)).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic two-sample p-value for statistic `d`.
pub fn ks_p_value(d: f64, n_a: usize, n_b: usize) -> f64 {
    let ne = (n_a * n_b) as f64 / (n_a + n_b) as f64;
    kolmogorov_survival(ne.sqrt() * d)
}

/// Removes values above the `quantile` point of `sample_a` from both samples,
/// then compares them.
pub fn ks_truncated(sample_a: &[f64], sample_b: &[f64], quantile: f64) -> Result<KsResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::InsufficientData("KS comparison needs two nonempty samples".into()));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidParams(format!("quantile must lie in [0, 1], got {quantile}")));
    }
    let cutoff = quantile_type7(sample_a, quantile);
    let a: Vec<f64> = sample_a.iter().copied().filter(|&x| x <= cutoff).collect();
    let b: Vec<f64> = sample_b.iter().copied().filter(|&x| x <= cutoff).collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData(format!("no values at or below the cutoff {cutoff}")));
    }
    let statistic = ks_statistic(&a, &b);
    Ok(KsResult { statistic, p_value: ks_p_value(statistic, a.len(), b.len()), cutoff, n_a: a.len(), n_b: b.len() })
}
