//! Compositions, count data and RPPI parameters.
//!
//! The restricted PPI density on the simplex is proportional to
//! `prod_j u_j^beta_j * exp(u_L' A_L u_L)` where `u_L` holds the first `p - 1`
//! components, the linear term is fixed at zero and `beta_p = 0`. The most
//! abundant component is expected to be listed last.
//!
//! The canonical parameter vector packs the upper triangle of `A_L` and the
//! shifted exponents `1 + beta_j`:
//!
//! ```text
//! (a_11, ..., a_{p-1,p-1}, a_12, a_13, ..., a_{p-2,p-1}, 1 + beta_1, ..., 1 + beta_{p-1})
//! ```
//!
//! with the off-diagonal pairs in lexicographic order. This ordering is the
//! wire contract for every JSON file the crate reads or writes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag written into every serialized parameter object.
pub const LAYOUT_VERSION: u32 = 1;

/// Components smaller than this are snapped to exact zero.
pub const ZERO_SNAP: f64 = 1e-15;

/// A point on the closed `(p-1)`-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Composition(Vec<f64>);

impl Composition {
    /// Validates and renormalizes `u` so that it sums to one.
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.len() < 3 {
            return Err(Error::InvalidComposition(format!(
                "need at least 3 components, got {}",
                u.len()
            )));
        }
        if let Some((j, x)) = u.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidComposition(format!(
                "component {} is {x}; entries must be finite and nonnegative",
                j + 1
            )));
        }
        let total: f64 = u.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidComposition("components sum to zero".into()));
        }
        let p = u.len() as f64;
        let mut u = u;
        if (total - 1.0).abs() > 4.0 * p * f64::EPSILON {
            u.iter_mut().for_each(|x| *x /= total);
        }
        let mut snapped = false;
        for x in u.iter_mut() {
            if *x < ZERO_SNAP && *x != 0.0 {
                *x = 0.0;
                snapped = true;
            }
        }
        if snapped {
            let total: f64 = u.iter().sum();
            u.iter_mut().for_each(|x| *x /= total);
        }
        Ok(Self(u))
    }

    /// The barycenter of the simplex.
    pub fn uniform(p: usize) -> Result<Self> {
        Self::new(vec![1.0; p])
    }

    /// The vertex putting all mass on component `j` (0-based).
    pub fn vertex(p: usize, j: usize) -> Result<Self> {
        if j >= p {
            return Err(Error::Dimension(format!("vertex {j} out of range for p = {p}")));
        }
        let mut u = vec![0.0; p];
        u[j] = 1.0;
        Self::new(u)
    }

    pub fn p(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// True when any component is exactly zero.
    pub fn on_boundary(&self) -> bool {
        self.0.iter().any(|&x| x == 0.0)
    }
}

impl std::ops::Index<usize> for Composition {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

impl AsRef<[f64]> for Composition {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Composition {
    type Error = Error;
    fn try_from(u: Vec<f64>) -> Result<Self> {
        Self::new(u)
    }
}

impl From<Composition> for Vec<f64> {
    fn from(c: Composition) -> Self {
        c.0
    }
}

/// Additive log-ratio transform `y_j = log(u_j / u_p)`.
pub fn alr(u: &Composition) -> Result<Vec<f64>> {
    let p = u.p();
    if let Some(j) = u.as_slice().iter().position(|&x| x == 0.0) {
        return Err(Error::ZeroComponent { index: j + 1 });
    }
    let last = u[p - 1].ln();
    Ok(u.as_slice()[..p - 1].iter().map(|x| x.ln() - last).collect())
}

/// Inverse of [`alr`], evaluated with a max shift so that large `y` cannot overflow.
pub fn alr_inverse(y: &[f64]) -> Result<Composition> {
    if y.len() < 2 {
        return Err(Error::Dimension(format!(
            "log-ratio vector needs at least 2 entries, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidComposition("log-ratio coordinates must be finite".into()));
    }
    // The implicit last coordinate is y_p = 0.
    let shift = y.iter().copied().fold(0.0_f64, f64::max);
    let mut u: Vec<f64> = y.iter().map(|v| (v - shift).exp()).collect();
    u.push((-shift).exp());
    let total: f64 = u.iter().sum();
    u.iter_mut().for_each(|x| *x /= total);
    Ok(Composition(u))
}

/// Multinomial count data, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
}

impl CountDataset {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InsufficientData("count dataset has no rows".into()));
        }
        let p = counts[0].len();
        if p < 3 {
            return Err(Error::Dimension(format!("need at least 3 components, got {p}")));
        }
        let mut totals = Vec::with_capacity(counts.len());
        for (i, row) in counts.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension(format!(
                    "row {} has {} entries, expected {p}",
                    i + 1,
                    row.len()
                )));
            }
            let m: u64 = row.iter().sum();
            if m == 0 {
                return Err(Error::DegenerateRow { row: i + 1 });
            }
            totals.push(m);
        }
        Ok(Self { counts, totals })
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn p(&self) -> usize {
        self.counts[0].len()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }
}

/// Sample proportions `x_ij / m_i`.
pub fn proportions(data: &CountDataset) -> Result<Vec<Composition>> {
    data.rows()
        .iter()
        .zip(data.totals())
        .enumerate()
        .map(|(i, (row, &m))| {
            if m == 0 {
                return Err(Error::DegenerateRow { row: i + 1 });
            }
            let m = m as f64;
            Composition::new(row.iter().map(|&x| x as f64 / m).collect())
        })
        .collect()
}

/// Index arithmetic for the canonical parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    p: usize,
}

impl ParamLayout {
    pub fn new(p: usize) -> Result<Self> {
        if p < 3 {
            return Err(Error::Dimension(format!("p must be at least 3, got {p}")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of rows of `A_L`.
    pub fn l(&self) -> usize {
        self.p - 1
    }

    /// Total number of parameters, `p(p-1)/2 + (p-1)`.
    pub fn q(&self) -> usize {
        self.p * (self.p - 1) / 2 + (self.p - 1)
    }

    pub fn n_offdiag(&self) -> usize {
        let l = self.l();
        l * (l - 1) / 2
    }

    pub fn diag_index(&self, i: usize) -> usize {
        i
    }

    /// Position of `a_ij`, `i < j`, both 0-based.
    pub fn offdiag_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.l());
        let l = self.l();
        // pairs (0,1), (0,2), ..., (0,l-1), (1,2), ...
        l + i * (2 * l - i - 1) / 2 + (j - i - 1)
    }

    /// Position of `1 + beta_j`, 0-based.
    pub fn beta_index(&self, j: usize) -> usize {
        self.l() + self.n_offdiag() + j
    }

    /// Position of `a_ij` for any ordering of `i`, `j`.
    pub fn a_index(&self, i: usize, j: usize) -> usize {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.diag_index(i),
            std::cmp::Ordering::Less => self.offdiag_index(i, j),
            std::cmp::Ordering::Greater => self.offdiag_index(j, i),
        }
    }

    /// Lexicographic off-diagonal pairs in packing order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let l = self.l();
        (0..l).flat_map(move |i| (i + 1..l).map(move |j| (i, j)))
    }

    /// True for entries of the `A_KK` block (diagonal and off-diagonal).
    pub fn in_kk_block(&self, index: usize, kstar: usize) -> bool {
        let l = self.l();
        if index < l {
            return index < kstar;
        }
        if index < l + self.n_offdiag() {
            let (_, j) = self.pairs().nth(index - l).expect("index in range");
            return j < kstar;
        }
        false
    }

    /// Human-readable names: `a11`, `a12`, ..., `beta1`, using 1-based indices.
    pub fn labels(&self) -> Vec<String> {
        let wide = self.l() > 9;
        let a = |i: usize, j: usize| {
            if wide {
                format!("a{}_{}", i + 1, j + 1)
            } else {
                format!("a{}{}", i + 1, j + 1)
            }
        };
        let mut out: Vec<String> = (0..self.l()).map(|i| a(i, i)).collect();
        out.extend(self.pairs().map(|(i, j)| a(i, j)));
        out.extend((0..self.l()).map(|j| format!("beta{}", j + 1)));
        out
    }
}

/// Parameters of the restricted PPI model.
#[derive(Debug, Clone, PartialEq)]
pub struct RppiParams {
    p: usize,
    a_l: DMatrix<f64>,
    beta: Vec<f64>,
    kstar: usize,
}

impl RppiParams {
    /// `beta` has length `p`; the last entry is normally zero.
    pub fn new(a_l: DMatrix<f64>, beta: Vec<f64>, kstar: usize) -> Result<Self> {
        let p = beta.len();
        ParamLayout::new(p)?;
        if a_l.nrows() != p - 1 || a_l.ncols() != p - 1 {
            return Err(Error::Dimension(format!(
                "A_L must be {0}x{0} for p = {p}, got {1}x{2}",
                p - 1,
                a_l.nrows(),
                a_l.ncols()
            )));
        }
        if kstar == 0 || kstar > p - 1 {
            return Err(Error::InvalidParams(format!("k* must lie in 1..={}, got {kstar}", p - 1)));
        }
        if a_l.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        let scale = a_l.amax().max(1.0);
        for i in 0..p - 1 {
            for j in i + 1..p - 1 {
                if (a_l[(i, j)] - a_l[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParams(format!(
                        "A_L is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { p, a_l, beta, kstar })
    }

    /// Dirichlet special case `A_L = 0`.
    pub fn dirichlet(beta: Vec<f64>, kstar: usize) -> Result<Self> {
        let l = beta.len().saturating_sub(1);
        Self::new(DMatrix::zeros(l, l), beta, kstar)
    }

    pub fn from_rows(a_l: &[Vec<f64>], beta: Vec<f64>, kstar: usize) -> Result<Self> {
        let l = a_l.len();
        if a_l.iter().any(|r| r.len() != l) {
            return Err(Error::Dimension("A_L rows must all have the same length".into()));
        }
        Self::new(DMatrix::from_fn(l, l, |i, j| a_l[i][j]), beta, kstar)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kstar(&self) -> usize {
        self.kstar
    }

    pub fn a_l(&self) -> &DMatrix<f64> {
        &self.a_l
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_p(&self) -> f64 {
        self.beta[self.p - 1]
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout { p: self.p }
    }

    /// The upper-left `k* x k*` block of `A_L`.
    pub fn a_kk(&self) -> DMatrix<f64> {
        self.a_l.view((0, 0), (self.kstar, self.kstar)).into_owned()
    }

    pub fn with_kstar(mut self, kstar: usize) -> Result<Self> {
        if kstar == 0 || kstar > self.p - 1 {
            return Err(Error::InvalidParams(format!(
                "k* must lie in 1..={}, got {kstar}",
                self.p - 1
            )));
        }
        self.kstar = kstar;
        Ok(self)
    }

    /// Requires `beta_j > -1` for every component so the density is integrable.
    pub fn check_integrable(&self) -> Result<()> {
        if let Some(j) = self.beta.iter().position(|&b| b <= -1.0) {
            return Err(Error::InvalidParams(format!(
                "beta_{} = {} must exceed -1 for the density to be integrable",
                j + 1,
                self.beta[j]
            )));
        }
        Ok(())
    }

    /// The quadratic form `u_L' A_L u_L`.
    pub fn quad_form(&self, u: &[f64]) -> f64 {
        quad_form(&self.a_l, &u[..self.p - 1])
    }

    /// Unnormalized log density `sum beta_j log u_j + u_L' A_L u_L` on the open simplex.
    pub fn log_density_unnormalized(&self, u: &[f64]) -> f64 {
        let dir: f64 = self
            .beta
            .iter()
            .zip(u)
            .map(|(b, x)| if *b == 0.0 { 0.0 } else { b * x.ln() })
            .sum();
        dir + self.quad_form(u)
    }
}

pub(crate) fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let k = a.nrows();
    let mut total = 0.0;
    for i in 0..k {
        if x[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..k {
            row += a[(i, j)] * x[j];
        }
        total += x[i] * row;
    }
    total
}

/// The canonical parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layout_version: u32,
    pub p: usize,
    pub pi: Vec<f64>,
}

impl ParamVector {
    pub fn new(p: usize, pi: Vec<f64>) -> Result<Self> {
        let layout = ParamLayout::new(p)?;
        if pi.len() != layout.q() {
            return Err(Error::Dimension(format!(
                "parameter vector for p = {p} needs {} entries, got {}",
                layout.q(),
                pi.len()
            )));
        }
        Ok(Self { layout_version: LAYOUT_VERSION, p, pi })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout { p: self.p }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    /// Natural-scale values: `a_ij` unchanged, `beta_j = pi_j - 1` for the exponent block.
    pub fn natural(&self) -> Vec<f64> {
        let start = self.layout().beta_index(0);
        self.pi
            .iter()
            .enumerate()
            .map(|(k, v)| if k >= start { v - 1.0 } else { *v })
            .collect()
    }
}

/// Packs parameters into the canonical vector.
pub fn pack(params: &RppiParams) -> ParamVector {
    let layout = params.layout();
    let mut pi = Vec::with_capacity(layout.q());
    pi.extend((0..layout.l()).map(|i| params.a_l[(i, i)]));
    pi.extend(layout.pairs().map(|(i, j)| params.a_l[(i, j)]));
    pi.extend(params.beta[..layout.l()].iter().map(|b| 1.0 + b));
    ParamVector { layout_version: LAYOUT_VERSION, p: params.p, pi }
}

/// Inverse of [`pack`] with `beta_p = 0`.
pub fn unpack(pi: &ParamVector, p: usize, kstar: usize) -> Result<RppiParams> {
    unpack_with_beta_p(pi, p, kstar, 0.0)
}

pub fn unpack_with_beta_p(pi: &ParamVector, p: usize, kstar: usize, beta_p: f64) -> Result<RppiParams> {
    if pi.p != p {
        return Err(Error::Dimension(format!("parameter vector is for p = {}, not {p}", pi.p)));
    }
    let layout = ParamLayout::new(p)?;
    if pi.pi.len() != layout.q() {
        return Err(Error::Dimension(format!(
            "parameter vector for p = {p} needs {} entries, got {}",
            layout.q(),
            pi.pi.len()
        )));
    }
    let l = layout.l();
    let mut a = DMatrix::zeros(l, l);
    for i in 0..l {
        a[(i, i)] = pi.pi[i];
    }
    for (i, j) in layout.pairs() {
        let v = pi.pi[layout.offdiag_index(i, j)];
        a[(i, j)] = v;
        a[(j, i)] = v;
    }
    let mut beta: Vec<f64> = (0..l).map(|j| pi.pi[layout.beta_index(j)] - 1.0).collect();
    beta.push(beta_p);
    RppiParams::new(a, beta, kstar)
}

/// JSON form of [`RppiParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub layout_version: u32,
    pub p: usize,
    pub kstar: usize,
    pub a_l: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

impl From<&RppiParams> for ParamsFile {
    fn from(params: &RppiParams) -> Self {
        let l = params.p - 1;
        Self {
            layout_version: LAYOUT_VERSION,
            p: params.p,
            kstar: params.kstar,
            a_l: (0..l).map(|i| (0..l).map(|j| params.a_l[(i, j)]).collect()).collect(),
            beta: params.beta.clone(),
        }
    }
}

impl TryFrom<ParamsFile> for RppiParams {
    type Error = Error;
    fn try_from(file: ParamsFile) -> Result<Self> {
        if file.layout_version != LAYOUT_VERSION {
            return Err(Error::InvalidParams(format!(
                "unsupported layout version {}",
                file.layout_version
            )));
        }
        if file.beta.len() != file.p {
            return Err(Error::Dimension(format!(
                "beta has {} entries but p = {}",
                file.beta.len(),
                file.p
            )));
        }
        RppiParams::from_rows(&file.a_l, file.beta, file.kstar)
    }
}

/// Parameter estimates for the second microbiome dataset (p = 5, k* = 4),
/// used as the truth in the Monte Carlo presets.
pub fn dataset2_estimates() -> RppiParams {
    let a = [
        [-141.924, -16586.0, -5877.63, -11524.5],
        [-16586.0, -9856.69, -38106.8, 11709.2],
        [-5877.63, -38106.8, -5184.47, 8260.35],
        [-11524.5, 11709.2, 8260.35, -216660.00],
    ];
    let rows: Vec<Vec<f64>> = a.iter().map(|r| r.to_vec()).collect();
    RppiParams::from_rows(&rows, vec![-0.904976, -0.909160, -0.740065, -0.464586, 0.0], 4)
        .expect("static parameters are valid")
}
