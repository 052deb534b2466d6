//! Exact and MCMC sampling from the RPPI model, multinomial counts, discreteness
//! rounding and contamination.
//!
//! The RPPI density is a Dirichlet(`beta + 1`) density tilted by
//! `exp(u_L' A_L u_L)`. Proposals come from the Dirichlet and are accepted with
//! probability `exp(u_L' A_L u_L - M)`, where `M` is the exact maximum of the
//! quadratic over the closed simplex.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{quad_form, Composition, CountDataset, RppiParams};

/// The random generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Proposals after which a persistently tiny acceptance rate is reported.
const LOW_ACCEPTANCE_PROPOSALS: u64 = 10_000_000;
const LOW_ACCEPTANCE_RATE: f64 = 1e-6;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` of master seed `master`. Independent of thread
/// scheduling, so replicate `k` always sees the same stream.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_add(0x5EED)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerReport {
    pub n_requested: usize,
    pub n_proposals: u64,
    pub acceptance_rate: f64,
    /// Maximum of `u_L' A_L u_L` over the simplex.
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McmcReport {
    pub n_requested: usize,
    pub steps: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
}

/// Maximum of `x' A x` over `{x >= 0, sum x <= 1}`.
///
/// Every face is either a coordinate face through the origin, where the only
/// critical value of a homogeneous quadratic is 0, or lies on `sum x = 1`,
/// where the Lagrange conditions `A_SS x = mu 1`, `1' x = 1` give value `mu`.
/// Degenerate faces attain their maximum on a lower-dimensional face.
pub fn envelope_max(a: &DMatrix<f64>) -> f64 {
    let l = a.nrows();
    assert!(l < 24, "face enumeration is exponential in the dimension");
    let mut best = 0.0_f64;
    for mask in 1u32..(1u32 << l) {
        let idx: Vec<usize> = (0..l).filter(|i| mask & (1 << i) != 0).collect();
        let s = idx.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                kkt[(r, c)] = a[(i, j)];
            }
            kkt[(r, s)] = -1.0;
            kkt[(s, r)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let Some(sol) = kkt.clone().lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !v.is_finite()) || (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        if sol.iter().take(s).any(|&x| x < -1e-12) {
            continue;
        }
        let x: Vec<f64> = sol.iter().take(s).map(|v| v.max(0.0)).collect();
        let mut value = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                value += x[r] * a[(i, j)] * x[c];
            }
        }
        best = best.max(value);
    }
    best
}

struct DirichletProposal {
    gammas: Vec<Gamma<f64>>,
}

impl DirichletProposal {
    fn new(params: &RppiParams) -> Result<Self> {
        let gammas = params
            .beta()
            .iter()
            .map(|b| Gamma::new(b + 1.0, 1.0).map_err(|e| Error::InvalidParams(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self { gammas })
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        loop {
            let mut total = 0.0;
            for (x, g) in out.iter_mut().zip(&self.gammas) {
                *x = g.sample(rng);
                total += *x;
            }
            if total > 0.0 && total.is_finite() {
                out.iter_mut().for_each(|x| *x /= total);
                return;
            }
        }
    }
}

/// Exact draws by rejection from a Dirichlet(`beta + 1`) proposal.
pub fn sample_rppi(params: &RppiParams, n: usize, seed: u64) -> Result<(Vec<Composition>, SamplerReport)> {
    sample_rppi_with(params, n, &mut rng_from_seed(seed))
}

pub fn sample_rppi_with<R: Rng>(
    params: &RppiParams,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Composition>, SamplerReport)> {
    params.check_integrable()?;
    if n == 0 {
        return Err(Error::InsufficientData("requested zero samples".into()));
    }
    let proposal = DirichletProposal::new(params)?;
    let a = params.a_l();
    let tilted = a.iter().any(|&v| v != 0.0);
    let envelope = if tilted { envelope_max(a) } else { 0.0 };
    let mut out = Vec::with_capacity(n);
    let mut u = vec![0.0; params.p()];
    let mut proposals = 0u64;
    while out.len() < n {
        proposal.draw(rng, &mut u);
        proposals += 1;
        let accept = if tilted {
            let log_u = (1.0 - rng.random::<f64>()).ln();
            log_u <= quad_form(a, &u) - envelope
        } else {
            true
        };
        if accept {
            out.push(Composition::new(u.clone())?);
        } else if proposals >= LOW_ACCEPTANCE_PROPOSALS {
            let rate = out.len() as f64 / proposals as f64;
            if rate < LOW_ACCEPTANCE_RATE {
                return Err(Error::LowAcceptance { rate, proposals });
            }
        }
    }
    let report = SamplerReport {
        n_requested: n,
        n_proposals: proposals,
        acceptance_rate: n as f64 / proposals as f64,
        envelope,
    };
    Ok((out, report))
}

/// Independence Metropolis-Hastings with the Dirichlet proposal.
pub fn sample_rppi_mcmc(
    params: &RppiParams,
    n: usize,
    seed: u64,
    burn_in: usize,
    thin: usize,
) -> Result<(Vec<Composition>, McmcReport)> {
    params.check_integrable()?;
    if n == 0 || thin == 0 {
        return Err(Error::InsufficientData("need n >= 1 and thin >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let proposal = DirichletProposal::new(params)?;
    let a = params.a_l();
    let mut current = vec![0.0; params.p()];
    proposal.draw(&mut rng, &mut current);
    let mut current_q = quad_form(a, &current);
    let mut cand = vec![0.0; params.p()];
    let mut out = Vec::with_capacity(n);
    let (mut steps, mut accepted) = (0u64, 0u64);
    let total = burn_in + n * thin;
    for step in 0..total {
        proposal.draw(&mut rng, &mut cand);
        let cand_q = quad_form(a, &cand);
        steps += 1;
        let log_u = (1.0 - rng.random::<f64>()).ln();
        if log_u <= cand_q - current_q {
            std::mem::swap(&mut current, &mut cand);
            current_q = cand_q;
            accepted += 1;
        }
        if step >= burn_in && (step - burn_in + 1) % thin == 0 {
            out.push(Composition::new(current.clone())?);
        }
    }
    let report = McmcReport { n_requested: n, steps, accepted, acceptance_rate: accepted as f64 / steps as f64 };
    Ok((out, report))
}

fn multinomial<R: Rng>(rng: &mut R, m: u64, u: &[f64]) -> Result<Vec<u64>> {
    let p = u.len();
    let mut x = vec![0u64; p];
    let mut remaining = m;
    let mut mass = 1.0_f64;
    for j in 0..p - 1 {
        if remaining == 0 {
            break;
        }
        let prob = if mass > 0.0 { (u[j] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, prob).map_err(|e| Error::InvalidParams(e.to_string()))?;
        x[j] = draw.sample(rng);
        remaining -= x[j];
        mass -= u[j];
    }
    x[p - 1] += remaining;
    Ok(x)
}

/// Multinomial counts with latent RPPI probabilities, returning the latent draws too.
pub fn sample_counts_with_latent(
    params: &RppiParams,
    totals: &[u64],
    seed: u64,
) -> Result<(CountDataset, Vec<Composition>, SamplerReport)> {
    if let Some(i) = totals.iter().position(|&m| m == 0) {
        return Err(Error::DegenerateRow { row: i + 1 });
    }
    let mut rng = rng_from_seed(seed);
    let (latent, report) = sample_rppi_with(params, totals.len(), &mut rng)?;
    let counts = latent
        .iter()
        .zip(totals)
        .map(|(u, &m)| multinomial(&mut rng, m, u.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Ok((CountDataset::new(counts)?, latent, report))
}

/// `x_i | u_i ~ Multinomial(m_i, u_i)` with `u_i ~ RPPI`.
pub fn sample_counts(params: &RppiParams, totals: &[u64], seed: u64) -> Result<CountDataset> {
    Ok(sample_counts_with_latent(params, totals, seed)?.0)
}

/// Rounds each component to the nearest multiple of `1/m` (ties to even).
/// The result is deliberately not renormalized.
pub fn round_proportions(u: &Composition, m: u64) -> Vec<f64> {
    let m = m.max(1) as f64;
    u.as_slice().iter().map(|x| (x * m).round_ties_even() / m).collect()
}

/// Number of rows replaced for a contamination fraction.
pub fn contamination_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

fn contaminated_rows(fraction: f64, n: usize, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParams(format!("contamination fraction must lie in [0, 1), got {fraction}")));
    }
    let k = contamination_count(fraction, n);
    let mut rng = rng_from_seed(seed);
    let mut rows = index::sample(&mut rng, n, k).into_vec();
    rows.sort_unstable();
    Ok(rows)
}

/// Replaces `round(fraction * n)` uniformly chosen rows by `outlier`.
pub fn contaminate(
    data: &[Composition],
    fraction: f64,
    outlier: &Composition,
    seed: u64,
) -> Result<Vec<Composition>> {
    if data.iter().any(|u| u.p() != outlier.p()) {
        return Err(Error::Dimension("outlier dimension differs from the data".into()));
    }
    let mut out = data.to_vec();
    for i in contaminated_rows(fraction, data.len(), seed)? {
        out[i] = outlier.clone();
    }
    Ok(out)
}

/// Count-data version of [`contaminate`]: replaced rows become
/// `round(outlier * m_i)`, adjusted so that the row total stays `m_i`.
pub fn contaminate_counts(
    data: &CountDataset,
    fraction: f64,
    outlier: &Composition,
    seed: u64,
) -> Result<CountDataset> {
    if data.p() != outlier.p() {
        return Err(Error::Dimension("outlier dimension differs from the data".into()));
    }
    let mut rows = data.rows().to_vec();
    for i in contaminated_rows(fraction, data.n(), seed)? {
        let m = data.totals()[i];
        let mut row: Vec<u64> = outlier.as_slice().iter().map(|x| (x * m as f64).round() as u64).collect();
        let total: u64 = row.iter().sum();
        let big = (0..row.len()).max_by(|&a, &b| row[a].cmp(&row[b]).then(b.cmp(&a))).unwrap();
        if total > m {
            row[big] -= total - m;
        } else {
            row[big] += m - total;
        }
        rows[i] = row;
    }
    CountDataset::new(rows)
}
