//! Windham-type robust weighting of the ALR-SME.
//!
//! Observations are weighted by `exp(c u_K' A_KK u_K)`, the exp-quadratic factor
//! of the density restricted to the `k*` components that concentrate near
//! zero. Weighting an exponential family by a factor of its own density shifts
//! the natural parameter, so each iteration solves the weighted equations and
//! then undoes that shift. At the fixed point
//!
//! ```text
//! sum_i w_i (W_1(u_i) H pi - d_1(u_i)) = 0,
//! ```
//!
//! where `H` is diagonal with `c + 1` on the `A_KK` entries and 1 elsewhere.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{fit_alr_sme_with, resolve_weights, solve_moments, FitOptions};
use crate::linalg::weighted_sums;
use crate::model::{quad_form, unpack_with_beta_p, Composition, ParamLayout, ParamVector, RppiParams};

/// Iterations with a growing step before damping switches on.
const DAMPING_TRIGGER: usize = 50;

/// Fixed-point residual, relative to `|d|_inf`, required on top of a small step.
const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct RobustConfig {
    /// Robustness tuning constant; `c = 0` is the unweighted estimator.
    pub c: f64,
    /// Number of leading components concentrated near zero.
    pub kstar: usize,
    /// Stop when the relative sup-norm change in the estimate falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting value. Defaults to the unweighted ALR-SME.
    pub init: Option<ParamVector>,
    /// Step averaging `pi <- (1 - lambda) pi_prev + lambda pi_new`. With the
    /// default of 1, damping at 0.5 engages automatically once the step size
    /// has grown in 50 iterations.
    pub damping: f64,
    pub fit: FitOptions,
}

impl RobustConfig {
    pub fn new(c: f64, kstar: usize) -> Self {
        Self { c, kstar, tol: 1e-8, max_iter: 500, init: None, damping: 1.0, fit: FitOptions::default() }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidParams(format!("c must be finite and nonnegative, got {}", self.c)));
        }
        if self.kstar == 0 || self.kstar > p - 1 {
            return Err(Error::InvalidParams(format!("k* must lie in 1..={}, got {}", p - 1, self.kstar)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParams(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if let Some(init) = &self.init {
            if init.p != p {
                return Err(Error::Dimension(format!("initial value is for p = {}, data have p = {p}", init.p)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RobustFitResult {
    pub pi_hat: ParamVector,
    pub params: RppiParams,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Normalized weights at the returned estimate.
    pub final_weights: Vec<f64>,
    /// Coefficient of variation of `final_weights`.
    pub weight_cv: f64,
    /// `|sum_i w_i (W_1 H pi - d_1)|_inf` at the returned estimate.
    pub residual: f64,
    /// `|sum_i w_i d_1|_inf`, the scale for `residual`.
    pub d_norm: f64,
    pub condition_number: f64,
    /// Relative change per iteration.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RobustFitResult {
    pub fn summary(&self) -> RobustSummary {
        let layout = self.pi_hat.layout();
        let (min, max) = self
            .final_weights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        RobustSummary {
            layout_version: self.pi_hat.layout_version,
            p: layout.p(),
            kstar: self.params.kstar(),
            c: self.c,
            labels: layout.labels(),
            estimates: self.pi_hat.natural(),
            pi: self.pi_hat.pi.clone(),
            converged: self.converged,
            iterations: self.iterations,
            residual: self.residual,
            d_norm: self.d_norm,
            condition_number: self.condition_number,
            weights: WeightDiagnostics { min, max, cv: self.weight_cv },
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightDiagnostics {
    pub min: f64,
    pub max: f64,
    pub cv: f64,
}

/// Serializable view of a [`RobustFitResult`].
#[derive(Debug, Clone, Serialize)]
pub struct RobustSummary {
    pub layout_version: u32,
    pub p: usize,
    pub kstar: usize,
    pub c: f64,
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub pi: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub d_norm: f64,
    pub condition_number: f64,
    pub weights: WeightDiagnostics,
    pub warnings: Vec<String>,
}

/// Normalized weights proportional to `exp(c u_K' A_KK u_K)`.
pub fn windham_weights(data: &[Composition], a_kk: &DMatrix<f64>, c: f64) -> Vec<f64> {
    weights_with_prior(data, None, a_kk, c)
}

fn weights_with_prior(data: &[Composition], prior: Option<&[f64]>, a_kk: &DMatrix<f64>, c: f64) -> Vec<f64> {
    let exponents: Vec<f64> = data.iter().map(|u| c * quad_form(a_kk, u.as_slice())).collect();
    normalized_exp(&exponents, prior)
}

/// `prior_i exp(e_i)` normalized, evaluated after subtracting the largest exponent.
pub(crate) fn normalized_exp(exponents: &[f64], prior: Option<&[f64]>) -> Vec<f64> {
    let shift = exponents
        .iter()
        .zip(0..)
        .filter(|(_, i)| prior.map_or(true, |p| p[*i] > 0.0))
        .map(|(e, _)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = exponents
        .iter()
        .enumerate()
        .map(|(i, e)| prior.map_or(1.0, |p| p[i]) * (e - shift).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Diagonal correction matrix: `c + 1` on `A_KK` entries, 1 elsewhere.
pub fn h_matrix(p: usize, kstar: usize, c: f64) -> Result<DMatrix<f64>> {
    let layout = ParamLayout::new(p)?;
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(layout.q(), h_diagonal(&layout, kstar, c))))
}

fn h_diagonal(layout: &ParamLayout, kstar: usize, c: f64) -> impl Iterator<Item = f64> + '_ {
    (0..layout.q()).map(move |k| if layout.in_kk_block(k, kstar) { c + 1.0 } else { 1.0 })
}

fn a_kk_of(pi: &[f64], layout: &ParamLayout, kstar: usize) -> DMatrix<f64> {
    DMatrix::from_fn(kstar, kstar, |i, j| pi[layout.a_index(i, j)])
}

fn cv(weights: &[f64]) -> f64 {
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let var = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Robust fit with uniform case weights.
pub fn fit_robust(data: &[Composition], config: &RobustConfig) -> Result<RobustFitResult> {
    fit_robust_weighted(data, None, config)
}

/// Robust fit where observation `i` carries case weight `case_weights[i]` in
/// addition to its Windham weight. Used for contamination derivatives.
pub fn fit_robust_weighted(
    data: &[Composition],
    case_weights: Option<&[f64]>,
    config: &RobustConfig,
) -> Result<RobustFitResult> {
    let p = data.first().ok_or_else(|| Error::InsufficientData("no observations".into()))?.p();
    config.validate(p)?;
    let prior = case_weights.map(|w| resolve_weights(data.len(), Some(w))).transpose()?;
    let prior = prior.as_deref();
    let layout = ParamLayout::new(p)?;
    let options = FitOptions { kstar: Some(config.kstar), ..config.fit.clone() };
    let c = config.c;

    if c == 0.0 {
        let fit = fit_alr_sme_with(data, prior, &options)?;
        let w = resolve_weights(data.len(), prior)?;
        let residual = (&fit.w_hat * DVector::from_column_slice(fit.pi_hat.as_slice()) - &fit.d_hat).amax();
        return Ok(RobustFitResult {
            params: fit.params,
            c,
            iterations: 1,
            converged: true,
            weight_cv: cv(&w),
            final_weights: w,
            residual,
            d_norm: fit.d_hat.amax(),
            condition_number: fit.condition_number,
            trace: vec![0.0],
            warnings: fit.warnings,
            pi_hat: fit.pi_hat,
        });
    }

    let mut pi = match &config.init {
        Some(init) => init.pi.clone(),
        None => fit_alr_sme_with(data, prior, &options)?.pi_hat.pi,
    };
    // Each observation contributes rank at most p - 1 to the weighted W; weights
    // that underflow are common early on, so only this bound is enforced.
    let min_obs = layout.q().div_ceil(p - 1);
    let in_kk: Vec<bool> = (0..layout.q()).map(|k| layout.in_kk_block(k, config.kstar)).collect();
    let h: Vec<f64> = h_diagonal(&layout, config.kstar, c).collect();
    let mut trace = Vec::new();
    let mut lambda = config.damping;
    let mut growing = 0usize;
    let mut converged = false;
    let mut condition = f64::NAN;
    let mut warnings = Vec::new();
    let (mut w, mut residual, mut d_norm);

    loop {
        let a_kk = a_kk_of(&pi, &layout, config.kstar);
        w = weights_with_prior(data, prior, &a_kk, c);
        let n_used = w.iter().filter(|&&x| x > 0.0).count();
        let (w_hat, d_hat) = weighted_sums(data, &w, options.beta_p);
        let h_pi = DVector::from_iterator(layout.q(), h.iter().zip(&pi).map(|(h, v)| h * v));
        residual = (&w_hat * h_pi - &d_hat).amax();
        d_norm = d_hat.amax();
        // A small step alone is not enough under slow linear convergence.
        if trace.last().is_some_and(|&ch| ch < config.tol) && residual <= RESIDUAL_TOL * d_norm {
            converged = true;
            break;
        }
        if trace.len() >= config.max_iter {
            break;
        }
        let tilde = solve_moments(w_hat, d_hat, p, n_used, min_obs, &options)?;
        condition = tilde.condition_number;
        warnings = tilde.warnings;

        let mut next: Vec<f64> = tilde
            .pi_hat
            .pi
            .iter()
            .zip(&pi)
            .zip(&in_kk)
            .map(|((t, old), &kk)| if kk { t / (c + 1.0) } else { (t + c * old) / (c + 1.0) })
            .collect();
        if lambda < 1.0 {
            for (n, old) in next.iter_mut().zip(&pi) {
                *n = (1.0 - lambda) * old + lambda * *n;
            }
        }
        let step = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let change = step / scale;
        if trace.last().is_some_and(|&prev| change > prev) {
            growing += 1;
            if growing >= DAMPING_TRIGGER && lambda == 1.0 {
                lambda = 0.5;
            }
        }
        trace.push(change);
        pi = next;
        if !change.is_finite() {
            break;
        }
    }

    if !converged {
        return Err(Error::NonConvergence {
            iterations: trace.len(),
            last_change: trace.last().copied().unwrap_or(f64::NAN),
            trace,
            last_pi: pi,
        });
    }

    let pi_hat = ParamVector::new(p, pi)?;
    let params = unpack_with_beta_p(&pi_hat, p, config.kstar, options.beta_p)?;
    Ok(RobustFitResult {
        pi_hat,
        params,
        c,
        iterations: trace.len(),
        converged,
        weight_cv: cv(&w),
        final_weights: w,
        residual,
        d_norm,
        condition_number: condition,
        trace,
        warnings,
    })
}
