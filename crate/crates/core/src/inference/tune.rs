//! Choice of the robustness constant `c` by comparing each fitted model's
//! simulated marginals with the observed ones.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::ks::{ks_truncated, KsResult};
use crate::model::{proportions, Composition, CountDataset};
use crate::robust::{fit_robust, RobustConfig};
use crate::sampling::{derive_seed, round_proportions, sample_rppi};

/// Fraction of the observed marginal kept before each KS comparison.
pub const TRUNCATION_QUANTILE: f64 = 0.95;
/// Significance level for the recommendation rule.
pub const KS_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct TunePoint {
    pub c: f64,
    /// One entry per component; empty when the fit or the simulation failed.
    pub ks: Vec<KsResult>,
    pub min_p_value: Option<f64>,
    pub weight_cv: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub grid: Vec<f64>,
    pub kstar: usize,
    pub sim_size: usize,
    pub points: Vec<TunePoint>,
    /// Smallest `c` whose components all pass at the 5% level, otherwise the
    /// `c` with the largest minimum p-value. `None` if every grid point failed.
    pub recommended_c: Option<f64>,
}

impl TuneReport {
    /// One row per `(c, component)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["c", "component", "statistic", "p_value", "cutoff", "weight_cv", "error"])
            .map_err(csv_err)?;
        for pt in &self.points {
            let cv = pt.weight_cv.map(|v| v.to_string()).unwrap_or_default();
            if pt.ks.is_empty() {
                let msg = pt.error.clone().unwrap_or_default();
                w.write_record([pt.c.to_string(), String::new(), String::new(), String::new(), String::new(), cv, msg])
                    .map_err(csv_err)?;
                continue;
            }
            for (j, ks) in pt.ks.iter().enumerate() {
                w.write_record([
                    pt.c.to_string(),
                    (j + 1).to_string(),
                    ks.statistic.to_string(),
                    ks.p_value.to_string(),
                    ks.cutoff.to_string(),
                    cv.clone(),
                    String::new(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Sorted, deduplicated copy of a grid of tuning constants.
pub fn validate_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("the c grid is empty".into()));
    }
    if let Some(c) = grid.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(Error::InvalidParams(format!("grid values must be finite and nonnegative, got {c}")));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

fn column(data: &[impl AsRef<[f64]>], j: usize) -> Vec<f64> {
    data.iter().map(|u| u.as_ref()[j]).collect()
}

fn evaluate(
    observed: &[Composition],
    totals: &[u64],
    config: &RobustConfig,
    sim_size: usize,
    seed: u64,
) -> Result<(Vec<KsResult>, f64)> {
    let fit = fit_robust(observed, config)?;
    let (sim, _) = sample_rppi(&fit.params, sim_size, seed)?;
    let rounded: Vec<Vec<f64>> =
        sim.iter().enumerate().map(|(k, u)| round_proportions(u, totals[k % totals.len()])).collect();
    let p = observed[0].p();
    let ks = (0..p)
        .map(|j| ks_truncated(&column(observed, j), &column(&rounded, j), TRUNCATION_QUANTILE))
        .collect::<Result<Vec<_>>>()?;
    Ok((ks, fit.weight_cv))
}

/// Fits the robust estimator at every `c` in `grid`, simulates `sim_size`
/// draws from each fit, rounds them with the observed totals (cycled) and
/// compares every marginal with the observed proportions.
///
/// `base` supplies `k*` and the iteration settings; its `c` is ignored.
/// Failures at individual grid points are recorded and the sweep continues.
pub fn tune_c(
    data: &CountDataset,
    grid: &[f64],
    base: &RobustConfig,
    sim_size: usize,
    seed: u64,
) -> Result<TuneReport> {
    let grid = validate_grid(grid)?;
    if sim_size == 0 {
        return Err(Error::InvalidParams("simulation size must be positive".into()));
    }
    let observed = proportions(data)?;
    let points: Vec<TunePoint> = grid
        .par_iter()
        .enumerate()
        .map(|(g, &c)| {
            let config = RobustConfig { c, ..base.clone() };
            match evaluate(&observed, data.totals(), &config, sim_size, derive_seed(seed, g as u64)) {
                Ok((ks, cv)) => TunePoint {
                    c,
                    min_p_value: ks.iter().map(|k| k.p_value).reduce(f64::min),
                    ks,
                    weight_cv: Some(cv),
                    converged: true,
                    error: None,
                },
                Err(e) => TunePoint {
                    c,
                    ks: Vec::new(),
                    min_p_value: None,
                    weight_cv: None,
                    converged: !matches!(e, Error::NonConvergence { .. }),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let recommended_c = recommend(&points);
    Ok(TuneReport { grid, kstar: base.kstar, sim_size, points, recommended_c })
}

fn recommend(points: &[TunePoint]) -> Option<f64> {
    if let Some(pt) = points.iter().find(|pt| pt.min_p_value.is_some_and(|p| p >= KS_LEVEL)) {
        return Some(pt.c);
    }
    points
        .iter()
        .filter_map(|pt| pt.min_p_value.map(|p| (pt.c, p)))
        .fold(None, |best: Option<(f64, f64)>, (c, p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((c, p)),
        })
        .map(|(c, _)| c)
}
