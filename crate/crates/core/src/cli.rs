//! The `rppi` command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 unusable input, 3 singular
//! system, 4 non-convergence, 5 degraded bootstrap, 6 missing scenario
//! parameter.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    bootstrap_with_seeds, influence_sweep, simplex_lattice, tune_c, BootstrapReport, InfluenceOperator, InfluenceResult,
    SweepReport, TuneReport,
};
use crate::io::{default_header, read_params, read_table, read_totals, write_compositions, write_counts, write_json, Dataset};
use crate::model::{unpack, Composition, ParamVector, ParamsFile};
use crate::robust::{fit_robust, RobustConfig, RobustSummary};
use crate::sampling::{derive_seed, sample_counts_with_latent, sample_rppi, sample_rppi_mcmc, McmcReport, SamplerReport};
use crate::study::{preset, run_study, RmseTable, StudyScenario};

pub const SCHEMA_VERSION: u32 = 1;
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "rppi", version, about = "Log-ratio score matching for compositional data with exact zeros")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "RPPI_THREADS")]
    pub threads: Option<usize>,
    /// Master random seed.
    #[arg(long, global = true, env = "RPPI_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a CSV of counts or proportions.
    Fit(FitArgs),
    /// Draw compositions or counts from a parameter file.
    Sample(SampleArgs),
    /// Choose the robustness constant c by KS comparison of marginals.
    Tune(TuneArgs),
    /// Parametric bootstrap standard errors for a saved fit.
    Bootstrap(BootstrapArgs),
    /// Run a Monte Carlo study from a scenario file or preset name.
    Study(StudyArgs),
    /// Evaluate the influence function of a saved fit.
    Influence(InfluenceArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub input: PathBuf,
    /// Leading components concentrated near zero; defaults to p - 1.
    #[arg(long)]
    pub kstar: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Exploratory ridge penalty; off by default.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub params: PathBuf,
    /// Number of draws.
    #[arg(long)]
    pub n: Option<usize>,
    /// Common multinomial total; emits counts.
    #[arg(long)]
    pub m: Option<u64>,
    /// File of row totals (header, one total per line); emits counts.
    #[arg(long, conflicts_with = "m")]
    pub m_file: Option<PathBuf>,
    /// Use independence Metropolis-Hastings instead of exact rejection.
    #[arg(long)]
    pub mcmc: bool,
    #[arg(long, default_value_t = 10_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampler diagnostics as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub input: PathBuf,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0:1.5:0.05")]
    pub grid: String,
    #[arg(long)]
    pub kstar: Option<usize>,
    /// Size of each simulated comparison sample.
    #[arg(long = "R", default_value_t = 10_000)]
    pub sim_size: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One row per (c, component).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    pub fit: PathBuf,
    pub data: PathBuf,
    #[arg(long = "B", default_value_t = 100)]
    pub b: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One row per parameter.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Scenario JSON file, or the name of a preset (sim1 .. sim8).
    pub scenario: String,
    /// Replicates; overrides the scenario.
    #[arg(long = "R")]
    pub replicates: Option<usize>,
    /// RMSE table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON sidecar with failure counts. Defaults to the CSV path with a
    /// `.json` extension.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfluenceArgs {
    pub fit: PathBuf,
    /// Contamination point as comma-separated proportions.
    #[arg(long, value_delimiter = ',')]
    pub z: Option<Vec<f64>>,
    /// Lattice resolution for a sweep over the closed simplex.
    #[arg(long)]
    pub grid_density: Option<usize>,
    /// Draws from the fitted model used to estimate G.
    #[arg(long, default_value_t = 100_000)]
    pub reference_size: usize,
    /// Use the rows of this CSV as the reference sample instead.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::Json(_)
        | Error::InvalidParams(_)
        | Error::InvalidComposition(_)
        | Error::Dimension(_)
        | Error::DegenerateRow { .. } => 2,
        Error::SingularSystem { .. } | Error::SingularG { .. } => 3,
        Error::NonConvergence { .. } => 4,
        Error::BootstrapDegraded { .. } => 5,
        Error::MissingParameter { .. } => 6,
        _ => 1,
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: String| Error::InvalidParams(format!("grid `{spec}`: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(bad("empty".into()));
    }
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(bad("need start <= stop and a positive step".into()));
            }
            let k = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=k).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(bad("expected start:stop:step or a list".into())),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Warns when a leading component is more abundant than a trailing one.
fn ordering_warning(data: &[Composition], kstar: usize) -> Option<String> {
    let p = data[0].p();
    let n = data.len() as f64;
    let means: Vec<f64> = (0..p).map(|j| data.iter().map(|u| u[j]).sum::<f64>() / n).collect();
    let lead = means[..kstar].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rest = means[kstar..].iter().cloned().fold(f64::INFINITY, f64::min);
    (lead > rest).then(|| {
        format!(
            "a leading component (mean {lead:.4}) is more abundant than a trailing one (mean {rest:.4}); \
             the first k* = {kstar} columns should be the ones concentrated near zero"
        )
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub input: String,
    pub kstar: usize,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
}

impl FitConfig {
    fn robust(&self) -> RobustConfig {
        let mut cfg = RobustConfig::new(self.c, self.kstar);
        cfg.tol = self.tol;
        cfg.max_iter = self.max_iter;
        cfg.fit.ridge = self.ridge;
        cfg
    }
}

#[derive(Debug, Serialize)]
struct FitOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a FitConfig,
    warnings: Vec<String>,
    fit: RobustSummary,
}

/// The parts of a saved fit needed to reuse it.
#[derive(Debug, Deserialize)]
struct SavedFit {
    config: FitConfig,
    fit: SavedEstimate,
}

#[derive(Debug, Deserialize)]
struct SavedEstimate {
    p: usize,
    pi: Vec<f64>,
}

fn read_saved_fit(path: &Path) -> Result<SavedFit> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let table = read_table(&args.input)?;
    let data = table.data.compositions()?;
    let p = table.data.p();
    let config = FitConfig {
        input: display(&args.input),
        kstar: args.kstar.unwrap_or(p - 1),
        c: args.c,
        tol: args.tol,
        max_iter: args.max_iter,
        ridge: args.ridge,
    };
    let fit = fit_robust(&data, &config.robust())?;
    let mut warnings = Vec::new();
    if let Some(w) = ordering_warning(&data, config.kstar) {
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let out = FitOutput { schema_version: SCHEMA_VERSION, command: "fit", config: &config, warnings, fit: fit.summary() };
    write_json(output(args.out.as_deref())?, &out)
}

#[derive(Debug, Serialize)]
struct SampleConfig {
    params: String,
    n: usize,
    totals: Option<String>,
    mcmc: bool,
    burn_in: usize,
    thin: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SampleOutput {
    schema_version: u32,
    command: &'static str,
    config: SampleConfig,
    rejection: Option<SamplerReport>,
    mcmc: Option<McmcReport>,
}

fn cmd_sample(args: &SampleArgs, seed: u64) -> Result<()> {
    let params = read_params(&args.params)?;
    let header = default_header(params.p());
    let totals = match (&args.m_file, args.m) {
        (Some(path), _) => Some(read_totals(path)?),
        (None, Some(m)) => Some(vec![m; args.n.ok_or_else(|| Error::InvalidParams("--m needs --n".into()))?]),
        (None, None) => None,
    };
    let n = match (&totals, args.n) {
        (Some(t), _) => t.len(),
        (None, Some(n)) => n,
        (None, None) => return Err(Error::InvalidParams("give --n, --m with --n, or --m-file".into())),
    };
    let mut config = SampleConfig {
        params: display(&args.params),
        n,
        totals: args.m_file.as_deref().map(display).or(args.m.map(|m| m.to_string())),
        mcmc: args.mcmc,
        burn_in: args.burn_in,
        thin: args.thin,
        seed,
    };
    let out = output(args.out.as_deref())?;
    let (rejection, mcmc) = match totals {
        Some(totals) => {
            config.mcmc = false;
            let (counts, _, report) = sample_counts_with_latent(&params, &totals, seed)?;
            write_counts(out, &header, &counts)?;
            (Some(report), None)
        }
        None if args.mcmc => {
            let (u, report) = sample_rppi_mcmc(&params, n, seed, args.burn_in, args.thin)?;
            write_compositions(out, &header, &u)?;
            (None, Some(report))
        }
        None => {
            let (u, report) = sample_rppi(&params, n, seed)?;
            write_compositions(out, &header, &u)?;
            (Some(report), None)
        }
    };
    if let Some(path) = &args.report {
        let report = SampleOutput { schema_version: SCHEMA_VERSION, command: "sample", config, rejection, mcmc };
        write_json(File::create(path)?, &report)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TuneConfig {
    input: String,
    grid: String,
    kstar: usize,
    sim_size: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct TuneOutput {
    schema_version: u32,
    command: &'static str,
    config: TuneConfig,
    report: TuneReport,
}

fn require_counts(data: Dataset, path: &Path) -> Result<crate::model::CountDataset> {
    match data {
        Dataset::Counts(c) => Ok(c),
        Dataset::Proportions(_) => Err(Error::Parse {
            line: 2,
            message: format!("{} holds proportions; this command needs integer counts", path.display()),
        }),
    }
}

fn cmd_tune(args: &TuneArgs, seed: u64) -> Result<()> {
    let grid = parse_grid(&args.grid)?;
    let data = require_counts(read_table(&args.input)?.data, &args.input)?;
    let kstar = args.kstar.unwrap_or(data.p() - 1);
    let mut base = RobustConfig::new(0.0, kstar);
    base.tol = args.tol;
    base.max_iter = args.max_iter;
    let report = tune_c(&data, &grid, &base, args.sim_size, seed)?;
    if let Some(path) = &args.csv {
        report.write_csv(File::create(path)?)?;
    }
    let config = TuneConfig {
        input: display(&args.input),
        grid: args.grid.clone(),
        kstar,
        sim_size: args.sim_size,
        tol: args.tol,
        max_iter: args.max_iter,
        seed,
    };
    write_json(output(args.out.as_deref())?, &TuneOutput { schema_version: SCHEMA_VERSION, command: "tune", config, report })
}

#[derive(Debug, Serialize)]
struct BootstrapConfig {
    fit: String,
    data: String,
    b: usize,
    seed: u64,
    estimator: FitConfig,
}

#[derive(Debug, Serialize)]
struct BootstrapOutput<'a> {
    schema_version: u32,
    command: &'static str,
    config: BootstrapConfig,
    degraded: bool,
    report: &'a BootstrapReport,
}

fn cmd_bootstrap(args: &BootstrapArgs, seed: u64) -> Result<()> {
    let saved = read_saved_fit(&args.fit)?;
    let data = require_counts(read_table(&args.data)?.data, &args.data)?;
    if data.p() != saved.fit.p {
        return Err(Error::Dimension(format!("fit has p = {}, data have p = {}", saved.fit.p, data.p())));
    }
    let cfg = saved.config.robust();
    let estimate = ParamVector::new(saved.fit.p, saved.fit.pi.clone())?;
    let seeds: Vec<u64> = (0..args.b as u64).map(|r| derive_seed(seed, r)).collect();
    let config = BootstrapConfig {
        fit: display(&args.fit),
        data: display(&args.data),
        b: args.b,
        seed,
        estimator: saved.config.clone(),
    };
    let (report, err) = match bootstrap_with_seeds(&estimate, &data, &cfg, &seeds) {
        Ok(r) => (r, None),
        Err(Error::BootstrapDegraded { failed, requested, partial }) => {
            ((*partial).clone(), Some(Error::BootstrapDegraded { failed, requested, partial }))
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = &args.csv {
        report.write_csv(File::create(path)?)?;
    }
    let out = BootstrapOutput {
        schema_version: SCHEMA_VERSION,
        command: "bootstrap",
        config,
        degraded: err.is_some(),
        report: &report,
    };
    write_json(output(args.out.as_deref())?, &out)?;
    err.map_or(Ok(()), Err)
}

fn cmd_study(args: &StudyArgs, seed: Option<u64>) -> Result<()> {
    let path = Path::new(&args.scenario);
    let mut scenario: StudyScenario = if path.exists() {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?
    } else {
        preset(&args.scenario).ok_or_else(|| {
            Error::InvalidParams(format!("`{}` is neither a scenario file nor a preset (sim1 .. sim8)", args.scenario))
        })?
    };
    if let Some(r) = args.replicates {
        scenario.replicates = r;
    }
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let table: RmseTable = run_study(&scenario)?;
    table.write_csv(output(args.out.as_deref())?)?;
    let sidecar = args.json.clone().or_else(|| args.out.as_ref().map(|p| p.with_extension("json")));
    if let Some(path) = sidecar {
        write_json(File::create(path)?, &table)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct InfluenceConfig {
    fit: String,
    c: f64,
    kstar: usize,
    z: Option<Vec<f64>>,
    grid_density: Option<usize>,
    reference: String,
    reference_size: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct InfluenceOutput {
    schema_version: u32,
    command: &'static str,
    config: InfluenceConfig,
    labels: Vec<String>,
    g_condition: f64,
    point: Option<InfluenceResult>,
    sweep: Option<SweepReport>,
}

fn cmd_influence(args: &InfluenceArgs, seed: u64) -> Result<()> {
    let saved = read_saved_fit(&args.fit)?;
    let p = saved.fit.p;
    let pi0 = ParamVector::new(p, saved.fit.pi.clone())?;
    let (c, kstar) = (saved.config.c, saved.config.kstar);
    let (reference, source) = match &args.reference {
        Some(path) => (read_table(path)?.data.compositions()?, display(path)),
        None => {
            let params = unpack(&pi0, p, kstar)?;
            (sample_rppi(&params, args.reference_size, seed)?.0, "model".to_string())
        }
    };
    let op = InfluenceOperator::new(&pi0, c, kstar, &reference)?;
    let point = args.z.as_ref().map(|z| Composition::new(z.clone())).transpose()?;
    if point.as_ref().is_some_and(|z| z.p() != p) {
        return Err(Error::Dimension(format!("--z has the wrong number of components; expected {p}")));
    }
    let density = args.grid_density.or(if point.is_none() { Some(20) } else { None });
    let sweep = density.map(|n| influence_sweep(&op, &simplex_lattice(p, n)));
    let config = InfluenceConfig {
        fit: display(&args.fit),
        c,
        kstar,
        z: args.z.clone(),
        grid_density: density,
        reference_size: reference.len(),
        reference: source,
        seed,
    };
    let out = InfluenceOutput {
        schema_version: SCHEMA_VERSION,
        command: "influence",
        config,
        labels: pi0.layout().labels(),
        g_condition: op.condition(),
        point: point.map(|z| op.result(&z)),
        sweep,
    };
    write_json(output(args.out.as_deref())?, &out)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Sample(a) => cmd_sample(a, seed),
        Command::Tune(a) => cmd_tune(a, seed),
        Command::Bootstrap(a) => cmd_bootstrap(a, seed),
        Command::Study(a) => cmd_study(a, cli.seed),
        Command::Influence(a) => cmd_influence(a, seed),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NonConvergence { trace, .. } = &e {
                let tail: Vec<String> = trace.iter().rev().take(5).rev().map(|v| format!("{v:.3e}")).collect();
                eprintln!("last relative changes: {}", tail.join(", "));
            }
            exit_code(&e)
        }
    }
}

/// Writes a parameter file, for scripting round trips.
pub fn write_params(path: &Path, params: &crate::model::RppiParams) -> Result<()> {
    write_json(File::create(path)?, &ParamsFile::from(params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:1.5:0.05").unwrap();
        assert_eq!(g.len(), 31);
        assert_eq!(g[3], 0.15);
        assert_eq!(*g.last().unwrap(), 1.5);
        assert_eq!(parse_grid("0, 0.5,1.25").unwrap(), vec![0.0, 0.5, 1.25]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
