//! The unweighted log-ratio score matching estimator (ALR-SME).
//!
//! Score matching in log-ratio coordinates gives linear estimating equations
//! `W pi = d`, with `W` and `d` sample averages of [`score_blocks`]. Because
//! both are polynomial in `u`, observations with exact zeros enter the fit like
//! any other point.
//!
//! [`score_blocks`]: crate::suffstats::score_blocks

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{normalize_weights, solve_spd, weighted_sums, MAX_CONDITION};
use crate::model::{proportions, unpack_with_beta_p, Composition, CountDataset, ParamLayout, ParamVector, RppiParams};

/// Options shared by the unweighted and weighted fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Fixed exponent of the last component. Zero under the RPPI restriction.
    pub beta_p: f64,
    /// Exploratory ridge penalty `eps * |pi|^2`; adds `2 eps` to the diagonal of `W`.
    /// Off by default and not part of the estimator proper.
    pub ridge: f64,
    /// Size of the concentrated block recorded in the returned parameters.
    /// Defaults to `p - 1`.
    pub kstar: Option<usize>,
    /// Refuse systems whose equilibrated condition number exceeds this.
    pub max_condition: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { beta_p: 0.0, ridge: 0.0, kstar: None, max_condition: MAX_CONDITION }
    }
}

/// Outcome of a linear score matching fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub pi_hat: ParamVector,
    pub params: RppiParams,
    pub w_hat: DMatrix<f64>,
    pub d_hat: DVector<f64>,
    /// Condition number of `W` after scaling to unit diagonal.
    pub condition_number: f64,
    /// Condition number of `W` as assembled.
    pub raw_condition_number: f64,
    /// Observations with nonzero weight.
    pub n_used: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Relative residual `|W pi - d|_inf / |d|_inf`.
    pub fn relative_residual(&self) -> f64 {
        let pi = DVector::from_column_slice(self.pi_hat.as_slice());
        let r = &self.w_hat * pi - &self.d_hat;
        r.amax() / self.d_hat.amax().max(f64::MIN_POSITIVE)
    }

    pub fn summary(&self) -> FitSummary {
        let layout = self.pi_hat.layout();
        FitSummary {
            layout_version: self.pi_hat.layout_version,
            p: layout.p(),
            kstar: self.params.kstar(),
            labels: layout.labels(),
            estimates: self.pi_hat.natural(),
            pi: self.pi_hat.pi.clone(),
            condition_number: self.condition_number,
            raw_condition_number: self.raw_condition_number,
            n_used: self.n_used,
            warnings: self.warnings.clone(),
        }
    }
}

/// Serializable view of a [`FitResult`].
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub layout_version: u32,
    pub p: usize,
    pub kstar: usize,
    pub labels: Vec<String>,
    /// Natural-scale estimates (`a_ij`, `beta_j`) in packing order.
    pub estimates: Vec<f64>,
    pub pi: Vec<f64>,
    pub condition_number: f64,
    pub raw_condition_number: f64,
    pub n_used: usize,
    pub warnings: Vec<String>,
}

fn check_data(data: &[Composition]) -> Result<usize> {
    let first = data.first().ok_or_else(|| Error::InsufficientData("no observations".into()))?;
    let p = first.p();
    if let Some(i) = data.iter().position(|u| u.p() != p) {
        return Err(Error::Dimension(format!(
            "observation {} has {} components, expected {p}",
            i + 1,
            data[i].p()
        )));
    }
    Ok(p)
}

/// Weighted estimating-equation moments `(W, d)`.
///
/// `weights` are normalized internally; `None` means uniform `1/n`.
pub fn assemble(
    data: &[Composition],
    weights: Option<&[f64]>,
    beta_p: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_data(data)?;
    let w = resolve_weights(data.len(), weights)?;
    Ok(weighted_sums(data, &w, beta_p))
}

pub(crate) fn resolve_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension(format!("{} weights for {n} observations", w.len())));
            }
            normalize_weights(w)
        }
    }
}

fn zero_column_warnings(data: &[Composition]) -> Vec<String> {
    let p = data[0].p();
    (0..p)
        .filter(|&j| data.iter().all(|u| u[j] == 0.0))
        .map(|j| format!("component {} is zero in every observation; its parameters are poorly determined", j + 1))
        .collect()
}

/// Solves `W pi = d` from already assembled moments, refusing systems built
/// from fewer than `min_obs` observations with nonzero weight.
pub(crate) fn solve_moments(
    w_hat: DMatrix<f64>,
    d_hat: DVector<f64>,
    p: usize,
    n_used: usize,
    min_obs: usize,
    options: &FitOptions,
) -> Result<FitResult> {
    let layout = ParamLayout::new(p)?;
    let q = layout.q();
    if n_used < min_obs {
        return Err(Error::SingularSystem {
            condition: f64::INFINITY,
            hint: format!("{n_used} observations for {q} parameters; need at least {min_obs}"),
        });
    }
    let mut system = w_hat.clone();
    if options.ridge > 0.0 {
        for k in 0..q {
            system[(k, k)] += 2.0 * options.ridge;
        }
    }
    // Rows of W that vanish identically belong to parameters the data carry no
    // information about (a component that is zero in every observation).
    let active: Vec<usize> = (0..q).filter(|&k| system[(k, k)] != 0.0).collect();
    let mut warnings = Vec::new();
    if active.len() < q {
        let labels = layout.labels();
        let dropped: Vec<&str> =
            (0..q).filter(|k| !active.contains(k)).map(|k| labels[k].as_str()).collect();
        warnings.push(format!("parameters {} are not identified by the data and were set to 0", dropped.join(", ")));
    }
    let reduced = system.select_rows(&active).select_columns(&active);
    let rhs = DVector::from_iterator(active.len(), active.iter().map(|&k| d_hat[k]));
    let sol = solve_spd(&reduced, &rhs, options.max_condition)?;
    let mut pi = vec![0.0; q];
    for (slot, &k) in active.iter().enumerate() {
        pi[k] = sol.x[slot];
    }
    let pi_hat = ParamVector::new(p, pi)?;
    let kstar = options.kstar.unwrap_or(p - 1);
    let params = unpack_with_beta_p(&pi_hat, p, kstar, options.beta_p)?;
    Ok(FitResult {
        pi_hat,
        params,
        w_hat,
        d_hat,
        condition_number: sol.condition,
        raw_condition_number: sol.raw_condition,
        n_used,
        warnings,
    })
}

/// Weighted ALR-SME with explicit options.
pub fn fit_alr_sme_with(
    data: &[Composition],
    weights: Option<&[f64]>,
    options: &FitOptions,
) -> Result<FitResult> {
    let p = check_data(data)?;
    let w = resolve_weights(data.len(), weights)?;
    let n_used = w.iter().filter(|&&x| x > 0.0).count();
    let (w_hat, d_hat) = weighted_sums(data, &w, options.beta_p);
    let q = ParamLayout::new(p)?.q();
    let mut fit = solve_moments(w_hat, d_hat, p, n_used, q, options)?;
    let mut warnings = zero_column_warnings(data);
    warnings.append(&mut fit.warnings);
    fit.warnings = warnings;
    Ok(fit)
}

/// The unweighted ALR-SME with default options.
pub fn fit_alr_sme(data: &[Composition]) -> Result<FitResult> {
    fit_alr_sme_with(data, None, &FitOptions::default())
}

/// Fits the multinomial latent-variable model by plugging in `x_i / m_i`.
pub fn fit_from_counts(data: &CountDataset) -> Result<FitResult> {
    fit_alr_sme(&proportions(data)?)
}
