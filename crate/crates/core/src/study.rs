//! Monte Carlo studies: simulate from a known truth, optionally contaminate,
//! fit a set of estimators and tabulate root mean squared errors.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::csv_err;
use crate::model::{dataset2_estimates, pack, proportions, Composition, ParamsFile, RppiParams, LAYOUT_VERSION};
use crate::robust::{fit_robust, RobustConfig};
use crate::sampling::{contaminate, contaminate_counts, derive_seed, sample_counts, sample_rppi};

/// A failure rate above this marks an estimator's column as unreliable.
pub const FLAG_FAILURE_RATE: f64 = 0.05;

/// Truth parameters. `a_l` may be left out of a template and supplied later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub kstar: usize,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub a_l: Option<Vec<Vec<f64>>>,
}

impl From<&RppiParams> for Truth {
    fn from(params: &RppiParams) -> Self {
        let file = ParamsFile::from(params);
        Self { kstar: file.kstar, beta: file.beta, a_l: Some(file.a_l) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataMode {
    Continuous,
    /// Counts with total `m` in every row, fitted through their proportions.
    Multinomial { m: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub fraction: f64,
    pub outlier: Composition,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    500
}

/// Where the reweighting iterations of a study fit begin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    /// The unweighted fit to the same sample.
    #[default]
    Unweighted,
    /// The true parameters.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub label: String,
    pub c: f64,
    /// Defaults to the truth's `k*`.
    #[serde(default)]
    pub kstar: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub start: Start,
}

impl EstimatorSpec {
    pub fn new(c: f64) -> Self {
        Self {
            label: format!("c={c}"),
            c,
            kstar: None,
            tol: default_tol(),
            max_iter: default_max_iter(),
            start: Start::Unweighted,
        }
    }

    pub fn starting_at(mut self, start: Start) -> Self {
        self.start = start;
        self
    }

    fn config(&self, truth: &RppiParams) -> RobustConfig {
        let init = match self.start {
            Start::Unweighted => None,
            Start::Truth => Some(pack(truth)),
        };
        RobustConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            init,
            ..RobustConfig::new(self.c, self.kstar.unwrap_or(truth.kstar()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyScenario {
    pub name: String,
    pub truth: Truth,
    pub n: usize,
    pub data_mode: DataMode,
    #[serde(default)]
    pub contamination: Option<Contamination>,
    pub estimators: Vec<EstimatorSpec>,
    pub replicates: usize,
    pub seed: u64,
}

impl StudyScenario {
    /// Truth as model parameters; fails if `a_l` has not been supplied.
    pub fn truth_params(&self) -> Result<RppiParams> {
        let a_l = self.truth.a_l.as_ref().ok_or_else(|| Error::MissingParameter {
            scenario: self.name.clone(),
            parameter: "truth.a_l".into(),
        })?;
        RppiParams::from_rows(a_l, self.truth.beta.clone(), self.truth.kstar)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParams("a study needs at least one replicate".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParams("a study needs at least one estimator".into()));
        }
        if let Some(ct) = &self.contamination {
            if !(0.0..1.0).contains(&ct.fraction) {
                return Err(Error::InvalidParams(format!("contamination fraction {} outside [0, 1)", ct.fraction)));
            }
            if ct.outlier.p() != self.truth.beta.len() {
                return Err(Error::Dimension("outlier dimension differs from the truth".into()));
            }
        }
        if let DataMode::Multinomial { m: 0 } = self.data_mode {
            return Err(Error::InvalidParams("multinomial totals must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RmseTable {
    pub schema_version: u32,
    pub layout_version: u32,
    pub scenario: StudyScenario,
    pub parameters: Vec<String>,
    pub estimators: Vec<String>,
    /// `rmse[k][e]` for parameter `k` and estimator `e`, on the natural scale.
    pub rmse: Vec<Vec<f64>>,
    pub successes: Vec<usize>,
    pub failures: Vec<usize>,
    /// Estimators whose failure rate exceeds 5%.
    pub flagged: Vec<bool>,
}

impl RmseTable {
    pub fn rmse_of(&self, parameter: &str, estimator: &str) -> Option<f64> {
        let k = self.parameters.iter().position(|p| p == parameter)?;
        let e = self.estimators.iter().position(|x| x == estimator)?;
        Some(self.rmse[k][e])
    }

    /// Parameters as rows, estimators as columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["parameter".to_string()];
        header.extend(self.estimators.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (k, name) in self.parameters.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.rmse[k].iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn simulate(scenario: &StudyScenario, truth: &RppiParams, seed: u64) -> Result<Vec<Composition>> {
    let (data_seed, dirt_seed) = (derive_seed(seed, 0), derive_seed(seed, 1));
    match scenario.data_mode {
        DataMode::Continuous => {
            let (u, _) = sample_rppi(truth, scenario.n, data_seed)?;
            match &scenario.contamination {
                Some(ct) => contaminate(&u, ct.fraction, &ct.outlier, dirt_seed),
                None => Ok(u),
            }
        }
        DataMode::Multinomial { m } => {
            let counts = sample_counts(truth, &vec![m; scenario.n], data_seed)?;
            let counts = match &scenario.contamination {
                Some(ct) => contaminate_counts(&counts, ct.fraction, &ct.outlier, dirt_seed)?,
                None => counts,
            };
            proportions(&counts)
        }
    }
}

/// Runs every replicate in parallel; replicate `r` uses a seed derived from
/// `(scenario.seed, r)` so results do not depend on scheduling.
pub fn run_study(scenario: &StudyScenario) -> Result<RmseTable> {
    scenario.validate()?;
    let truth = scenario.truth_params()?;
    let target = pack(&truth).natural();
    let q = target.len();
    let configs: Vec<RobustConfig> = scenario.estimators.iter().map(|e| e.config(&truth)).collect();

    let replicates: Vec<Vec<Option<Vec<f64>>>> = (0..scenario.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let data = simulate(scenario, &truth, derive_seed(scenario.seed, r))?;
            Ok(configs.iter().map(|cfg| fit_robust(&data, cfg).ok().map(|f| f.pi_hat.natural())).collect())
        })
        .collect::<Result<_>>()?;

    let n_est = configs.len();
    let mut sq = vec![vec![0.0; n_est]; q];
    let mut successes = vec![0usize; n_est];
    for rep in &replicates {
        for (e, est) in rep.iter().enumerate() {
            if let Some(est) = est {
                successes[e] += 1;
                for k in 0..q {
                    sq[k][e] += (est[k] - target[k]).powi(2);
                }
            }
        }
    }
    let rmse = sq
        .iter()
        .map(|row| {
            row.iter().zip(&successes).map(|(s, &n)| if n == 0 { f64::NAN } else { (s / n as f64).sqrt() }).collect()
        })
        .collect();
    let failures: Vec<usize> = successes.iter().map(|s| scenario.replicates - s).collect();
    let flagged = failures.iter().map(|&f| f as f64 > FLAG_FAILURE_RATE * scenario.replicates as f64).collect();
    Ok(RmseTable {
        schema_version: 1,
        layout_version: LAYOUT_VERSION,
        scenario: scenario.clone(),
        parameters: truth.layout().labels(),
        estimators: scenario.estimators.iter().map(|e| e.label.clone()).collect(),
        rmse,
        successes,
        failures,
        flagged,
    })
}

/// Desk-scale replicate count used by the presets.
pub const DEFAULT_REPLICATES: usize = 100;

fn estimators(grid: &[f64]) -> Vec<EstimatorSpec> {
    grid.iter().map(|&c| EstimatorSpec::new(c).starting_at(Start::Truth)).collect()
}

fn outlier(u: &[f64]) -> Composition {
    Composition::new(u.to_vec()).expect("static outlier is a composition")
}

/// The eight simulation designs. `sim1`..`sim4` leave `truth.a_l` empty and
/// must be completed before they can run.
pub fn scenario_presets() -> Vec<StudyScenario> {
    let small = Truth { kstar: 2, beta: vec![-0.8, -0.85, 0.0, -0.2, 0.0], a_l: None };
    let small_outlier = Contamination { fraction: 0.054, outlier: outlier(&[0.4, 0.4, 0.0, 0.0, 0.2]) };
    let small_grid = estimators(&[0.0, 0.01, 0.7]);
    let big = Truth::from(&dataset2_estimates());
    let big_outlier = Contamination { fraction: 0.053, outlier: outlier(&[0.4, 0.3, 0.2, 0.1, 0.0]) };
    let big_grid = estimators(&[0.0, 0.01, 0.25, 0.5, 0.75, 1.0, 1.25]);

    let make = |name: &str, truth: &Truth, n, mode, ct: Option<&Contamination>, est: &Vec<EstimatorSpec>| StudyScenario {
        name: name.into(),
        truth: truth.clone(),
        n,
        data_mode: mode,
        contamination: ct.cloned(),
        estimators: est.clone(),
        replicates: DEFAULT_REPLICATES,
        seed: 1,
    };
    let multi = DataMode::Multinomial { m: 2000 };
    vec![
        make("sim1", &small, 92, DataMode::Continuous, None, &small_grid),
        make("sim2", &small, 92, multi, None, &small_grid),
        make("sim3", &small, 92, DataMode::Continuous, Some(&small_outlier), &small_grid),
        make("sim4", &small, 92, multi, Some(&small_outlier), &small_grid),
        make("sim5", &big, 94, DataMode::Continuous, None, &big_grid),
        make("sim6", &big, 94, multi, None, &big_grid),
        make("sim7", &big, 94, DataMode::Continuous, Some(&big_outlier), &big_grid),
        make("sim8", &big, 94, multi, Some(&big_outlier), &big_grid),
    ]
}

pub fn preset(name: &str) -> Option<StudyScenario> {
    scenario_presets().into_iter().find(|s| s.name == name)
}
