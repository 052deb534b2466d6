//! Parametric bootstrap under the fitted multinomial latent-variable model.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::tune::csv_err;
use crate::model::{proportions, unpack_with_beta_p, CountDataset, ParamVector};
use crate::robust::{fit_robust, RobustConfig, RobustFitResult};
use crate::sampling::{derive_seed, sample_counts};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapReport {
    /// Requested replicates.
    pub b: usize,
    pub failed: usize,
    pub labels: Vec<String>,
    /// Natural-scale point estimate being assessed.
    pub estimate: Vec<f64>,
    /// Standard deviation of the successful replicate estimates.
    pub se: Vec<f64>,
    /// `estimate / se`.
    pub ratio: Vec<f64>,
    /// Natural-scale estimates of the successful replicates, one row each.
    pub estimates: Vec<Vec<f64>>,
}

impl BootstrapReport {
    /// One row per parameter.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "estimate", "se", "ratio"]).map_err(csv_err)?;
        for k in 0..self.labels.len() {
            w.write_record([
                self.labels[k].clone(),
                self.estimate[k].to_string(),
                self.se[k].to_string(),
                self.ratio[k].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn column_sd(rows: &[Vec<f64>], q: usize) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..q)
        .map(|k| {
            if rows.len() < 2 {
                return f64::NAN;
            }
            let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            (rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

/// Bootstrap standard errors with replicate seeds derived from `seed`.
pub fn bootstrap_se(
    fit: &RobustFitResult,
    data: &CountDataset,
    config: &RobustConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    let seeds: Vec<u64> = (0..b as u64).map(|r| derive_seed(seed, r)).collect();
    bootstrap_with_seeds(&fit.pi_hat, data, config, &seeds)
}

/// Bootstrap around a stored estimate with one explicit seed per replicate.
/// Each replicate simulates counts with the observed totals from the
/// estimate and refits with `config`.
pub fn bootstrap_with_seeds(
    estimate: &ParamVector,
    data: &CountDataset,
    config: &RobustConfig,
    seeds: &[u64],
) -> Result<BootstrapReport> {
    let b = seeds.len();
    if b < 2 {
        return Err(Error::InvalidParams(format!("bootstrap needs B >= 2, got {b}")));
    }
    if estimate.p != data.p() {
        return Err(Error::Dimension(format!("estimate has p = {}, data have p = {}", estimate.p, data.p())));
    }
    let params = unpack_with_beta_p(estimate, estimate.p, config.kstar, config.fit.beta_p)?;
    params.check_integrable()?;
    let replicates: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| {
            let counts = sample_counts(&params, data.totals(), s).ok()?;
            let props = proportions(&counts).ok()?;
            fit_robust(&props, config).ok().map(|f| f.pi_hat.natural())
        })
        .collect();
    let estimates: Vec<Vec<f64>> = replicates.iter().flatten().cloned().collect();
    let failed = b - estimates.len();
    let labels = estimate.layout().labels();
    let estimate = estimate.natural();
    let se = column_sd(&estimates, estimate.len());
    let ratio = estimate.iter().zip(&se).map(|(e, s)| e / s).collect();
    let report = BootstrapReport { b, failed, labels, estimate, se, ratio, estimates };
    if failed as f64 > MAX_FAILURE_RATE * b as f64 {
        return Err(Error::BootstrapDegraded { failed, requested: b, partial: Box::new(report) });
    }
    Ok(report)
}
