//! Random synthesis codes for distributed source simulation.
//!
//! A code is a codebook of `M = ⌈e^{nR}⌉` sequences `w^n(m)`. Message `m` is
//! uniform; the two processors independently draw `x^n ~ P(·|w^n(m))` and
//! `y^n ~ P(·|w^n(m))`, giving
//!
//! `P(x^n, y^n) = (1/M) Σ_m P(x^n | w^n(m)) P(y^n | w^n(m))`.
//!
//! With [`Truncation::Typical`] the codewords are drawn from `Q_W^n`
//! conditioned on `T^n_{ε'}(Q_W)` and each leg from `Q^n_{X|W}` conditioned
//! on the conditional typical set `T^n_ε(Q_WX | w^n)`. With
//! [`Truncation::None`] everything is a plain product law.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{renyi_mass, tv, RenyiOrder};
use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, CondPmf, FinitePmf, JointPmf, MarkovCoupling};
use crate::rng::{stream, StreamRng};
use crate::typicality::{is_cond_typical, log_cond_accept, max_cond_defect, typical_types, TypicalSpec};

/// Largest dense `|X|^n |Y|^n` handled exactly.
pub const EXACT_CELLS_MAX: usize = 1 << 22;
/// Largest codebook handled by exact induced-joint evaluation.
pub const EXACT_CODEWORDS_MAX: usize = 1 << 14;
/// Largest codebook that may be built at all.
pub const CODEWORDS_MAX: usize = 1 << 24;
/// Attempts before a rejection sampler gives up.
pub const MAX_REJECTIONS: usize = 1_000_000;

const CODEBOOK_CELL: u64 = 0;
const ESTIMATE_CELL: u64 = 1;
const MC_BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    /// Plain i.i.d. codewords and memoryless legs.
    None,
    /// Typicality-truncated laws with `0 < eps_prime < eps <= 1`.
    Typical { eps: f64, eps_prime: f64 },
}

impl Truncation {
    pub fn validate(&self) -> Result<()> {
        if let Truncation::Typical { eps, eps_prime } = *self {
            if !(eps_prime > 0.0 && eps_prime < eps && eps <= 1.0) {
                return Err(Error::config(format!(
                    "truncation needs 0 < eps' < eps <= 1, got eps = {eps}, eps' = {eps_prime}"
                )));
            }
        }
        Ok(())
    }

    fn eps(&self) -> Option<f64> {
        match *self {
            Truncation::None => None,
            Truncation::Typical { eps, .. } => Some(eps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// `⌈e^{nR}⌉`, ignoring rounding noise just above an integer so that
/// `n = 4, R = log 2` gives 16.
pub fn codebook_size(n: usize, rate: f64) -> Result<usize> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::config(format!("rate must be finite and nonnegative, got {rate}")));
    }
    let log_m = n as f64 * rate;
    if log_m > (CODEWORDS_MAX as f64).ln() + 1e-9 {
        return Err(Error::budget(format!("e^(nR) = e^{log_m:.3} codewords exceeds the limit {CODEWORDS_MAX}")));
    }
    let m = log_m.exp();
    let r = m.round();
    let m = if (m - r).abs() <= 1e-9 * r.max(1.0) { r } else { m.ceil() };
    Ok((m as usize).max(1))
}

/// One leg `P(·|w^n)`: `Q^n_{·|W}` optionally conditioned on conditional typicality.
#[derive(Debug, Clone)]
struct Leg {
    q_w: FinitePmf,
    cond: CondPmf,
    eps: Option<f64>,
    /// `log Q(x|w)` at `w * k + x`
    log_q: Vec<f64>,
    k: usize,
}

impl Leg {
    fn new(q_w: &FinitePmf, cond: &CondPmf, eps: Option<f64>) -> Self {
        let k = cond.n_outputs();
        let mut log_q = Vec::with_capacity(cond.n_inputs() * k);
        for w in 0..cond.n_inputs() {
            for x in 0..k {
                let v = cond.get(w, x);
                log_q.push(if v > 0.0 { v.ln() } else { f64::NEG_INFINITY });
            }
        }
        Leg { q_w: q_w.clone(), cond: cond.clone(), eps, log_q, k }
    }

    fn log_accept(&self, w_counts: &[usize]) -> Result<f64> {
        match self.eps {
            None => Ok(0.0),
            Some(eps) => log_cond_accept(w_counts, &self.q_w, &self.cond, eps),
        }
    }

    fn admits(&self, x: &[usize], w: &[usize]) -> bool {
        match self.eps {
            None => true,
            Some(eps) => is_cond_typical(x, w, &self.q_w, &self.cond, eps),
        }
    }

    /// `log P(x^n | w^n)` given the precomputed acceptance log-probability.
    fn log_prob(&self, x: &[usize], w: &[usize], log_accept: f64) -> f64 {
        let mut acc = 0.0;
        for (&wi, &xi) in w.iter().zip(x) {
            acc += self.log_q[wi * self.k + xi];
            if acc == f64::NEG_INFINITY {
                return acc;
            }
        }
        if !self.admits(x, w) {
            return f64::NEG_INFINITY;
        }
        acc - log_accept
    }

    /// Dense `P(·|w^n)` over all `k^n` sequences, little-endian indexing.
    fn prob_vector(&self, w: &[usize], log_accept: f64) -> Vec<f64> {
        let n = w.len();
        let total = self.k.pow(n as u32);
        let mut seq = vec![0usize; n];
        (0..total)
            .map(|idx| {
                decode(idx, self.k, &mut seq);
                self.log_prob(&seq, w, log_accept).exp()
            })
            .collect()
    }

    fn sample<R: Rng + ?Sized>(&self, w: &[usize], rng: &mut R, log_accept: f64) -> Result<Vec<usize>> {
        if log_accept == f64::NEG_INFINITY {
            return Err(Error::EmptyTypicalSet {
                reason: "conditional typical set is empty for this codeword".into(),
                typical_prob: Some(0.0),
            });
        }
        let mut x = vec![0usize; w.len()];
        for _ in 0..MAX_REJECTIONS {
            for (xi, &wi) in x.iter_mut().zip(w) {
                *xi = self.cond.row(wi).sample(rng);
            }
            if self.admits(&x, w) {
                return Ok(x);
            }
        }
        Err(Error::EmptyTypicalSet {
            reason: format!("conditional rejection sampler gave up after {MAX_REJECTIONS} attempts"),
            typical_prob: Some(log_accept.exp()),
        })
    }
}

fn decode(mut idx: usize, k: usize, out: &mut [usize]) {
    for s in out.iter_mut() {
        *s = idx % k;
        idx /= k;
    }
}

/// Little-endian index of a sequence over an alphabet of size `k`.
pub fn seq_index(seq: &[usize], k: usize) -> usize {
    seq.iter().rev().fold(0, |acc, &s| acc * k + s)
}

fn counts_of(seq: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0usize; k];
    for &s in seq {
        c[s] += 1;
    }
    c
}

/// Draw from `Q_W^n` conditioned on `T^n_{ε'}(Q_W)` by rejection.
pub fn truncated_w_sampler<R: Rng + ?Sized>(base: &MarkovCoupling, n: usize, eps_prime: f64, rng: &mut R) -> Result<Vec<usize>> {
    let spec = TypicalSpec::new(base.q_w.clone(), n, eps_prime)?;
    let p = spec.prob_exact().ok();
    sample_typical(&spec, rng, p)
}

fn sample_typical<R: Rng + ?Sized>(spec: &TypicalSpec, rng: &mut R, known_prob: Option<f64>) -> Result<Vec<usize>> {
    let empty = spec.count_ranges().is_none();
    if empty || known_prob == Some(0.0) {
        return Err(Error::EmptyTypicalSet {
            reason: format!("no sequence of length {} is {}-typical", spec.n, spec.eps),
            typical_prob: Some(0.0),
        });
    }
    let mut w = vec![0usize; spec.n];
    for _ in 0..MAX_REJECTIONS {
        for wi in w.iter_mut() {
            *wi = spec.q.sample(rng);
        }
        if spec.contains(&w) {
            return Ok(w);
        }
    }
    let p = match known_prob {
        Some(p) => Some(p),
        None => spec.prob_exact().ok(),
    };
    Err(Error::EmptyTypicalSet {
        reason: format!("typical rejection sampler gave up after {MAX_REJECTIONS} attempts"),
        typical_prob: p,
    })
}

/// Draw one leg given `w^n`, from `Q^n(·|w^n)` conditioned on conditional
/// typicality by rejection.
pub fn truncated_cond_sampler<R: Rng + ?Sized>(
    base: &MarkovCoupling,
    w_seq: &[usize],
    eps: f64,
    rng: &mut R,
    axis: Axis,
) -> Result<Vec<usize>> {
    let cond = match axis {
        Axis::X => &base.q_x_given_w,
        Axis::Y => &base.q_y_given_w,
    };
    let leg = Leg::new(&base.q_w, cond, Some(eps));
    let la = leg.log_accept(&counts_of(w_seq, base.w_size()))?;
    leg.sample(w_seq, rng, la)
}

/// A sampled codebook together with the two legs.
#[derive(Debug, Clone)]
pub struct SynthesisCode {
    pub n: usize,
    pub rate: f64,
    pub m_count: usize,
    pub codebook: Vec<Vec<usize>>,
    pub base: MarkovCoupling,
    pub truncation: Truncation,
    pub seed: u64,
    leg_x: Leg,
    leg_y: Leg,
    /// `(log A_X, log A_Y)` per codeword
    log_accept: Vec<(f64, f64)>,
    log_pi: Vec<f64>,
}

/// Samples `⌈e^{nR}⌉` codewords, codeword `m` from its own RNG stream.
pub fn build_code(base: &MarkovCoupling, n: usize, rate: f64, truncation: Truncation, seed: u64) -> Result<SynthesisCode> {
    truncation.validate()?;
    if n == 0 {
        return Err(Error::config("block length must be positive"));
    }
    let m_count = codebook_size(n, rate)?;
    let nw = base.w_size();
    let (spec, known) = match truncation {
        Truncation::None => (None, None),
        Truncation::Typical { eps_prime, .. } => {
            let spec = TypicalSpec::new(base.q_w.clone(), n, eps_prime)?;
            let p = spec.prob_exact().ok();
            (Some(spec), p)
        }
    };
    let codebook: Vec<Vec<usize>> = (0..m_count)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream(seed, CODEBOOK_CELL, m as u64);
            match &spec {
                None => Ok((0..n).map(|_| base.q_w.sample(&mut rng)).collect()),
                Some(spec) => sample_typical(spec, &mut rng, known),
            }
        })
        .collect::<Result<_>>()?;

    let leg_x = Leg::new(&base.q_w, &base.q_x_given_w, truncation.eps());
    let leg_y = Leg::new(&base.q_w, &base.q_y_given_w, truncation.eps());
    let mut cache: HashMap<Vec<usize>, (f64, f64)> = HashMap::new();
    let mut log_accept = Vec::with_capacity(m_count);
    for w in &codebook {
        let c = counts_of(w, nw);
        let la = match cache.get(&c) {
            Some(&v) => v,
            None => {
                let v = (leg_x.log_accept(&c)?, leg_y.log_accept(&c)?);
                cache.insert(c, v);
                v
            }
        };
        if la.0 == f64::NEG_INFINITY || la.1 == f64::NEG_INFINITY {
            return Err(Error::EmptyTypicalSet {
                reason: format!("a codeword has an empty conditional typical set at n = {n}"),
                typical_prob: Some(0.0),
            });
        }
        log_accept.push(la);
    }
    let pi = base.xy_marginal();
    let log_pi = pi.mass().iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    Ok(SynthesisCode { n, rate, m_count, codebook, base: base.clone(), truncation, seed, leg_x, leg_y, log_accept, log_pi })
}

impl SynthesisCode {
    pub fn x_size(&self) -> usize {
        self.base.x_size()
    }

    pub fn y_size(&self) -> usize {
        self.base.y_size()
    }

    /// Target `π = Q_XY`.
    pub fn target(&self) -> JointPmf {
        self.base.xy_marginal()
    }

    pub fn log_px_given_m(&self, x: &[usize], m: usize) -> f64 {
        self.leg_x.log_prob(x, &self.codebook[m], self.log_accept[m].0)
    }

    pub fn log_py_given_m(&self, y: &[usize], m: usize) -> f64 {
        self.leg_y.log_prob(y, &self.codebook[m], self.log_accept[m].1)
    }

    /// `log P(x^n, y^n)` by direct summation over messages.
    pub fn log_prob_xy(&self, x: &[usize], y: &[usize]) -> f64 {
        let terms: Vec<f64> = (0..self.m_count).map(|m| self.log_px_given_m(x, m) + self.log_py_given_m(y, m)).collect();
        log_sum_exp(&terms) - (self.m_count as f64).ln()
    }

    /// `log π^n(x^n, y^n)`.
    pub fn log_pi_n(&self, x: &[usize], y: &[usize]) -> f64 {
        let ny = self.y_size();
        x.iter().zip(y).map(|(&a, &b)| self.log_pi[a * ny + b]).sum()
    }

    /// Draw `(x^n, y^n)` from the induced joint.
    pub fn sample_xy<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
        let m = rng.random_range(0..self.m_count);
        let w = &self.codebook[m];
        let x = self.leg_x.sample(w, rng, self.log_accept[m].0)?;
        let y = self.leg_y.sample(w, rng, self.log_accept[m].1)?;
        Ok((x, y))
    }

    /// Draw `(x^n, y^n)` from `π^n`.
    pub fn sample_pi<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let pi = self.target().flatten();
        let ny = self.y_size();
        let mut x = Vec::with_capacity(self.n);
        let mut y = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let c = pi.sample(rng);
            x.push(c / ny);
            y.push(c % ny);
        }
        (x, y)
    }

    pub fn exact_within_budget(&self) -> bool {
        dense_cells(self.x_size(), self.y_size(), self.n).is_some_and(|c| c <= EXACT_CELLS_MAX)
            && self.m_count <= EXACT_CODEWORDS_MAX
    }
}

fn dense_cells(nx: usize, ny: usize, n: usize) -> Option<usize> {
    nx.checked_pow(n as u32)?.checked_mul(ny.checked_pow(n as u32)?)
}

/// Dense induced joint over `X^n × Y^n`, row-major in `(x index, y index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedJointExact {
    pub n: usize,
    pub x_size: usize,
    pub y_size: usize,
    pub mass: Vec<f64>,
}

impl InducedJointExact {
    pub fn rows(&self) -> usize {
        self.x_size.pow(self.n as u32)
    }

    pub fn cols(&self) -> usize {
        self.y_size.pow(self.n as u32)
    }

    pub fn get(&self, x: &[usize], y: &[usize]) -> f64 {
        self.mass[seq_index(x, self.x_size) * self.cols() + seq_index(y, self.y_size)]
    }

    /// Marginal over `X^n`.
    pub fn x_marginal(&self) -> Vec<f64> {
        self.mass.chunks(self.cols()).map(|r| r.iter().sum()).collect()
    }
}

/// `π^n` as a dense vector in the same layout as [`InducedJointExact`].
pub fn product_power(pi: &JointPmf, n: usize) -> Result<Vec<f64>> {
    let (nx, ny) = (pi.dims()[0], pi.dims()[1]);
    let cells = dense_cells(nx, ny, n).filter(|&c| c <= EXACT_CELLS_MAX);
    let cells = cells.ok_or_else(|| Error::budget(format!("dense π^n at n = {n} exceeds {EXACT_CELLS_MAX} cells")))?;
    let cols = ny.pow(n as u32);
    let mut out = vec![0.0; cells];
    out.par_chunks_mut(cols).enumerate().for_each(|(xi, row)| {
        let mut x = vec![0usize; n];
        let mut y = vec![0usize; n];
        decode(xi, nx, &mut x);
        for (yi, v) in row.iter_mut().enumerate() {
            decode(yi, ny, &mut y);
            *v = x.iter().zip(&y).map(|(&a, &b)| pi.mass()[a * ny + b]).product();
        }
    });
    Ok(out)
}

/// `P(x^n, y^n) = (1/M) Σ_m P(x^n|w(m)) P(y^n|w(m))`, grouping repeated codewords.
pub fn induced_joint_exact(code: &SynthesisCode) -> Result<InducedJointExact> {
    if !code.exact_within_budget() {
        return Err(Error::budget(format!(
            "exact induced joint needs |X|^n|Y|^n <= {EXACT_CELLS_MAX} and M <= {EXACT_CODEWORDS_MAX} (n = {}, M = {})",
            code.n, code.m_count
        )));
    }
    let mut groups: BTreeMap<&[usize], (usize, usize)> = BTreeMap::new();
    for (m, w) in code.codebook.iter().enumerate() {
        groups.entry(w.as_slice()).or_insert((m, 0)).1 += 1;
    }
    let inv_m = 1.0 / code.m_count as f64;
    let legs: Vec<(f64, Vec<f64>, Vec<f64>)> = groups
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&(m, mult)| {
            let w = &code.codebook[m];
            let (ax, ay) = code.log_accept[m];
            (mult as f64 * inv_m, code.leg_x.prob_vector(w, ax), code.leg_y.prob_vector(w, ay))
        })
        .collect();
    Ok(mix_outer(code.n, code.x_size(), code.y_size(), &legs))
}

fn mix_outer(n: usize, nx: usize, ny: usize, legs: &[(f64, Vec<f64>, Vec<f64>)]) -> InducedJointExact {
    let rows = nx.pow(n as u32);
    let cols = ny.pow(n as u32);
    let mut mass = vec![0.0; rows * cols];
    mass.par_chunks_mut(cols).enumerate().for_each(|(xi, row)| {
        for (weight, px, py) in legs {
            let a = weight * px[xi];
            if a == 0.0 {
                continue;
            }
            for (v, &b) in row.iter_mut().zip(py) {
                *v += a * b;
            }
        }
    });
    InducedJointExact { n, x_size: nx, y_size: ny, mass }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMethod {
    Exact,
    MonteCarlo,
}

impl EstimateMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            EstimateMethod::Exact => "exact",
            EstimateMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// A divergence value with provenance. Exact values carry `std_error = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub point: f64,
    /// `point / n`
    pub per_symbol: f64,
    pub std_error: f64,
    pub method: EstimateMethod,
    pub samples: usize,
    pub seed: u64,
    /// Infinite because some `π^n`-null sequence receives mass (or, for
    /// `s <= -1`-like orders, the supports miss), not because of sampling.
    pub structurally_infinite: bool,
}

impl DivergenceEstimate {
    fn exact(point: f64, n: usize, seed: u64) -> Self {
        DivergenceEstimate {
            point,
            per_symbol: point / n as f64,
            std_error: 0.0,
            method: EstimateMethod::Exact,
            samples: 0,
            seed,
            structurally_infinite: point.is_infinite(),
        }
    }
}

/// Runs `samples` draws in fixed-size blocks, each block with its own
/// stream, and returns the per-draw values in order.
fn mc_values<F>(samples: usize, seed: u64, stream_base: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut StreamRng) -> Result<f64> + Sync,
{
    let blocks = samples.div_ceil(MC_BLOCK);
    let chunks: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, ESTIMATE_CELL, stream_base + b as u64);
            let len = MC_BLOCK.min(samples - b * MC_BLOCK);
            (0..len).map(|_| f(&mut rng)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Plug-in `g(mean)` with its jackknife standard error.
fn jackknife<G: Fn(f64) -> f64>(v: &[f64], g: G) -> (f64, f64) {
    let n = v.len();
    let total: f64 = v.iter().sum();
    let point = g(total / n as f64);
    if n < 2 {
        return (point, f64::INFINITY);
    }
    let loo: Vec<f64> = v.iter().map(|x| g((total - x) / (n - 1) as f64)).collect();
    if loo.iter().any(|x| !x.is_finite()) {
        return (point, f64::INFINITY);
    }
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    (point, var.sqrt())
}

/// `|P_{X^nY^n} - π^n|`: exact within budget, otherwise the Monte-Carlo
/// mean of `(1 - P/π)^+` under `π^n`.
pub fn estimate_tv(code: &SynthesisCode, samples: usize, seed: u64) -> Result<DivergenceEstimate> {
    if code.exact_within_budget() {
        let p = induced_joint_exact(code)?;
        let q = product_power(&code.target(), code.n)?;
        return Ok(DivergenceEstimate::exact(tv(&p.mass, &q)?, code.n, seed));
    }
    estimate_tv_mc(code, samples, seed)
}

/// Monte-Carlo TV regardless of budget.
pub fn estimate_tv_mc(code: &SynthesisCode, samples: usize, seed: u64) -> Result<DivergenceEstimate> {
    if samples == 0 {
        return Err(Error::config("Monte-Carlo estimate needs at least one sample"));
    }
    let v = mc_values(samples, seed, 0, |rng| {
        let (x, y) = code.sample_pi(rng);
        let ratio = (code.log_prob_xy(&x, &y) - code.log_pi_n(&x, &y)).exp();
        Ok((1.0 - ratio).max(0.0))
    })?;
    let (point, se) = mean_and_se(&v);
    Ok(DivergenceEstimate {
        point,
        per_symbol: point / code.n as f64,
        std_error: se,
        method: EstimateMethod::MonteCarlo,
        samples,
        seed,
        structurally_infinite: false,
    })
}

/// `D_{1+s}(P_{X^nY^n} ‖ π^n)`: exact within budget, otherwise Monte-Carlo.
pub fn estimate_renyi(code: &SynthesisCode, s: f64, samples: usize, seed: u64) -> Result<DivergenceEstimate> {
    let ord = RenyiOrder::new(s)?;
    if code.exact_within_budget() {
        let p = induced_joint_exact(code)?;
        let q = product_power(&code.target(), code.n)?;
        return Ok(DivergenceEstimate::exact(renyi_mass(&p.mass, &q, ord)?, code.n, seed));
    }
    estimate_renyi_mc(code, s, samples, seed)
}

/// Monte-Carlo Rényi divergence regardless of budget. For `s >= 0` the
/// draws come from `P`; for `s < 0` from `π^n`.
pub fn estimate_renyi_mc(code: &SynthesisCode, s: f64, samples: usize, seed: u64) -> Result<DivergenceEstimate> {
    RenyiOrder::new(s)?;
    if samples == 0 {
        return Err(Error::config("Monte-Carlo estimate needs at least one sample"));
    }
    let n = code.n;
    let from_p = s >= 0.0;
    // log(P/π) at each draw
    let lr = mc_values(samples, seed, 0, |rng| {
        let (x, y) = if from_p { code.sample_xy(rng)? } else { code.sample_pi(rng) };
        Ok(code.log_prob_xy(&x, &y) - code.log_pi_n(&x, &y))
    })?;
    let mk = |point: f64, se: f64, structural: bool| DivergenceEstimate {
        point: if point.is_nan() { f64::INFINITY } else { point.max(0.0) },
        per_symbol: point.max(0.0) / n as f64,
        std_error: se,
        method: EstimateMethod::MonteCarlo,
        samples,
        seed,
        structurally_infinite: structural,
    };
    if from_p && lr.contains(&f64::INFINITY) {
        return Ok(mk(f64::INFINITY, 0.0, true));
    }
    let (point, se) = if s == 0.0 {
        mean_and_se(&lr)
    } else if s > 0.0 {
        // E_P[(P/π)^s] = Σ P^{1+s} π^{-s}; shift by the max to stay finite
        let shift = lr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v: Vec<f64> = lr.iter().map(|l| (s * (l - shift)).exp()).collect();
        jackknife(&v, |m| shift + m.ln() / s)
    } else if s == -1.0 {
        let v: Vec<f64> = lr.iter().map(|l| if *l > f64::NEG_INFINITY { 1.0 } else { 0.0 }).collect();
        jackknife(&v, |m| -m.ln())
    } else {
        // E_π[(P/π)^{1+s}]
        let v: Vec<f64> = lr.iter().map(|l| ((1.0 + s) * l).exp()).collect();
        jackknife(&v, |m| m.ln() / s)
    };
    let structural = point.is_infinite() && lr.iter().all(|l| *l == f64::NEG_INFINITY);
    Ok(mk(point, se, structural))
}

/// `max{D_{1+s}(P_{X|W} ‖ π | P_W) - R, D_{1+s}(P_X ‖ π)}`.
pub fn gamma_oneshot(p_w: &FinitePmf, cond: &CondPmf, pi: &FinitePmf, rate: f64, s: f64) -> Result<f64> {
    let (cond_term, marg_term) = oneshot_terms(p_w, cond, pi, s)?;
    Ok((cond_term - rate).max(marg_term))
}

/// `(D_{1+s}(P_{X|W} ‖ π | P_W), D_{1+s}(P_X ‖ π))`.
fn oneshot_terms(p_w: &FinitePmf, cond: &CondPmf, pi: &FinitePmf, s: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::config(format!("one-shot bound needs s in (0, 1], got {s}")));
    }
    if cond.n_inputs() != p_w.alphabet_size() || cond.n_outputs() != pi.alphabet_size() {
        return Err(Error::config("one-shot instance shapes disagree"));
    }
    let ord = RenyiOrder::new(s)?;
    let joint = JointPmf::glue(p_w, cond)?;
    let cond_term = crate::divergence::conditional_renyi(&joint, &CondPmf::constant(p_w.alphabet_size(), pi), ord)?;
    let px = joint.marginal_pmf(1)?;
    let marg_term = renyi_mass(px.mass(), pi.mass(), ord)?;
    Ok((cond_term, marg_term))
}

/// `Σ_x P(x|u)^{1+s} π(x)^{-s}` for the codebook mixture `P(x|u) = (1/M) Σ_m P(x|w_m)`.
fn codebook_moment(codebook: &[usize], cond: &CondPmf, pi: &FinitePmf, s: f64) -> f64 {
    let m = codebook.len() as f64;
    let mut acc = 0.0;
    for x in 0..pi.alphabet_size() {
        let p: f64 = codebook.iter().map(|&w| cond.get(w, x)).sum::<f64>() / m;
        if p > 0.0 {
            acc += if pi.get(x) > 0.0 { p.powf(1.0 + s) * pi.get(x).powf(-s) } else { f64::INFINITY };
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OneShotMode {
    /// Weighted enumeration of all `|W|^M` codebooks.
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneShotReport {
    pub m_count: usize,
    pub s: f64,
    /// `E_U e^{s D_{1+s}(P_{X|U=u} ‖ π)}` averaged over codebooks
    pub lhs: f64,
    pub lhs_std_error: f64,
    /// `e^{s D(P_{X|W}‖π|P_W) - sR} + e^{s D(P_X‖π)}`
    pub rhs: f64,
    /// `2 e^{s Γ}`
    pub rhs_gamma: f64,
    pub holds: bool,
    pub holds_gamma: bool,
}

/// Checks the one-shot soft-covering bound for a codebook of `m_count`
/// i.i.d. `P_W` codewords, `R = log m_count`. Monte-Carlo mode allows three
/// standard errors of slack.
pub fn oneshot_bound_verify(
    p_w: &FinitePmf,
    cond: &CondPmf,
    pi: &FinitePmf,
    m_count: usize,
    s: f64,
    mode: OneShotMode,
) -> Result<OneShotReport> {
    if m_count == 0 {
        return Err(Error::config("codebook must be nonempty"));
    }
    let rate = (m_count as f64).ln();
    let (cond_term, marg_term) = oneshot_terms(p_w, cond, pi, s)?;
    let rhs = (s * cond_term - s * rate).exp() + (s * marg_term).exp();
    let rhs_gamma = 2.0 * (s * gamma_oneshot(p_w, cond, pi, rate, s)?).exp();
    let nw = p_w.alphabet_size();
    let (lhs, se) = match mode {
        OneShotMode::Exact => {
            let total = (nw as f64).powi(m_count as i32);
            if total > 1e7 {
                return Err(Error::budget(format!("{total} codebooks are too many to enumerate")));
            }
            let mut book = vec![0usize; m_count];
            let mut acc = 0.0;
            for idx in 0..total as usize {
                decode(idx, nw, &mut book);
                let weight: f64 = book.iter().map(|&w| p_w.get(w)).product();
                if weight > 0.0 {
                    acc += weight * codebook_moment(&book, cond, pi, s);
                }
            }
            (acc, 0.0)
        }
        OneShotMode::MonteCarlo { trials, seed } => {
            if trials < 2 {
                return Err(Error::config("Monte-Carlo one-shot check needs at least two trials"));
            }
            let v = mc_values(trials, seed, 0, |rng| {
                let book: Vec<usize> = (0..m_count).map(|_| p_w.sample(rng)).collect();
                Ok(codebook_moment(&book, cond, pi, s))
            })?;
            mean_and_se(&v)
        }
    };
    let slack = 3.0 * se + 1e-12 * rhs;
    Ok(OneShotReport {
        m_count,
        s,
        lhs,
        lhs_std_error: se,
        rhs,
        rhs_gamma,
        holds: lhs <= rhs + slack,
        holds_gamma: lhs <= rhs_gamma + slack,
    })
}

/// Per-`w^n` leg tables for the W-marginalized truncated construction.
struct Construction {
    leg_x: Leg,
    leg_y: Leg,
    /// typical W-types with `(log P_{W^n}(w) for one sequence of that type, log A_X, log A_Y)`
    types: Vec<(Vec<usize>, f64, f64, f64)>,
    log_w_norm: f64,
}

impl Construction {
    fn new(base: &MarkovCoupling, n: usize, eps: f64, eps_prime: f64) -> Result<Self> {
        Truncation::Typical { eps, eps_prime }.validate()?;
        let spec = TypicalSpec::new(base.q_w.clone(), n, eps_prime)?;
        let log_w_norm = spec.log_prob_exact()?;
        if log_w_norm == f64::NEG_INFINITY {
            return Err(Error::EmptyTypicalSet { reason: format!("T_eps'(Q_W) is empty at n = {n}"), typical_prob: Some(0.0) });
        }
        let leg_x = Leg::new(&base.q_w, &base.q_x_given_w, Some(eps));
        let leg_y = Leg::new(&base.q_w, &base.q_y_given_w, Some(eps));
        let mut types = Vec::new();
        for counts in typical_types(&spec) {
            let lw: f64 = counts
                .iter()
                .zip(base.q_w.mass())
                .map(|(&c, &q)| if c == 0 { 0.0 } else { c as f64 * q.ln() })
                .sum::<f64>()
                - log_w_norm;
            let ax = leg_x.log_accept(&counts)?;
            let ay = leg_y.log_accept(&counts)?;
            if ax == f64::NEG_INFINITY || ay == f64::NEG_INFINITY {
                return Err(Error::EmptyTypicalSet {
                    reason: format!("conditional typical set is empty for W-type {counts:?} at n = {n}"),
                    typical_prob: Some(0.0),
                });
            }
            types.push((counts, lw, ax, ay));
        }
        Ok(Construction { leg_x, leg_y, types, log_w_norm })
    }

    /// `δ_n = 1 - Q_W^n(T_{ε'}) · min_w A_X(w) · min_w A_Y(w)` and the two
    /// conditional defects `(δ_1, δ_2)`.
    fn deltas(&self) -> (f64, f64, f64) {
        let min_ax = self.types.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
        let min_ay = self.types.iter().map(|t| t.3).fold(f64::INFINITY, f64::min);
        let delta_n = -(self.log_w_norm + min_ax + min_ay).exp_m1();
        (delta_n, -min_ax.exp_m1(), -min_ay.exp_m1())
    }

    /// A representative sequence for each W-type.
    fn representative(counts: &[usize]) -> Vec<usize> {
        counts.iter().enumerate().flat_map(|(w, &c)| std::iter::repeat_n(w, c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub n: usize,
    pub s: f64,
    pub delta_n: f64,
    /// `max P(x^n,y^n) / π^n(x^n,y^n)` over the support of `P`
    pub max_ratio: f64,
    /// `1 / (1 - δ_n)`
    pub ratio_bound: f64,
    pub divergence: f64,
    /// `((1+s)/s) log(1/(1-δ_n))`
    pub divergence_bound: f64,
    pub pointwise_ok: bool,
    pub divergence_ok: bool,
}

/// Exact check of `P ≤ π^n / (1 - δ_n)` for the truncated construction with
/// `W^n` marginalized (no codebook), and of the implied Rényi bound.
pub fn truncation_domination(base: &MarkovCoupling, n: usize, eps: f64, eps_prime: f64, s: f64) -> Result<DominationReport> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::config(format!("domination check needs s in (0, 1], got {s}")));
    }
    let (nw, nx, ny) = (base.w_size(), base.x_size(), base.y_size());
    let w_total = nw.checked_pow(n as u32).filter(|&c| c <= 1 << 16);
    let w_total = w_total.ok_or_else(|| Error::budget(format!("enumerating W^n at n = {n} is over budget")))?;
    let cons = Construction::new(base, n, eps, eps_prime)?;
    let pi_n = product_power(&base.xy_marginal(), n)?;
    let w_spec = TypicalSpec::new(base.q_w.clone(), n, eps_prime)?;
    let mut type_index: HashMap<Vec<usize>, usize> = HashMap::new();
    for (i, t) in cons.types.iter().enumerate() {
        type_index.insert(t.0.clone(), i);
    }
    let mut legs = Vec::new();
    let mut w = vec![0usize; n];
    for idx in 0..w_total {
        decode(idx, nw, &mut w);
        if !w_spec.contains(&w) {
            continue;
        }
        let (_, lw, ax, ay) = &cons.types[type_index[&counts_of(&w, nw)]];
        legs.push((lw.exp(), cons.leg_x.prob_vector(&w, *ax), cons.leg_y.prob_vector(&w, *ay)));
    }
    let p = mix_outer(n, nx, ny, &legs);
    let (delta_n, _, _) = cons.deltas();
    let ratio_bound = 1.0 / (1.0 - delta_n);
    let mut max_ratio: f64 = 0.0;
    for (&a, &b) in p.mass.iter().zip(&pi_n) {
        if a > 0.0 {
            max_ratio = max_ratio.max(if b > 0.0 { a / b } else { f64::INFINITY });
        }
    }
    let divergence = renyi_mass(&p.mass, &pi_n, RenyiOrder::new(s)?)?;
    let divergence_bound = (1.0 + s) / s * ratio_bound.ln();
    Ok(DominationReport {
        n,
        s,
        delta_n,
        max_ratio,
        ratio_bound,
        divergence,
        divergence_bound,
        pointwise_ok: max_ratio <= ratio_bound * (1.0 + 1e-12),
        divergence_ok: divergence <= divergence_bound + 1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBoundReport {
    pub n: usize,
    pub s: f64,
    pub eps: f64,
    pub eps_prime: f64,
    /// `(1/n) D_{1+s}(P_{W^nX^nY^n} ‖ P_{W^n} π^n)`
    pub lhs: f64,
    /// `(1-ε)²/(1+ε') I_Q(XY;W) + 4ε/(1-ε') H_Q(XY)`
    pub rhs: f64,
    /// `(1+ε)²/(1-ε') H_Q(XY) - (1-ε)²/(1+ε') H_Q(XY|W)`, the form before simplification
    pub rhs_unsimplified: f64,
    /// `-(1/n) log((1-δ_1)(1-δ_2))`
    pub correction: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    /// `rhs + correction - lhs`
    pub slack: f64,
}

impl RateBoundReport {
    pub fn holds(&self) -> bool {
        self.slack >= 0.0
    }
}

/// Exact per-symbol divergence of the truncated construction against the
/// asymptotic rate bound plus its finite-`n` correction.
pub fn rate_bound_check(base: &MarkovCoupling, n: usize, eps: f64, eps_prime: f64, s: f64) -> Result<RateBoundReport> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::config(format!("rate bound check needs s in (0, 1], got {s}")));
    }
    let (nx, ny) = (base.x_size(), base.y_size());
    let cells = dense_cells(nx, ny, n).filter(|&c| c <= EXACT_CELLS_MAX);
    if cells.is_none() {
        return Err(Error::budget(format!("exact rate bound at n = {n} exceeds {EXACT_CELLS_MAX} cells")));
    }
    let cons = Construction::new(base, n, eps, eps_prime)?;
    let pi_n = product_power(&base.xy_marginal(), n)?;
    let cols = ny.pow(n as u32);
    let lf = crate::typicality::log_factorials(n);

    // Σ_w P(w) Σ_{x,y} P(x|w)^{1+s} P(y|w)^{1+s} π^{-s}; the inner sum depends
    // on w only through its type
    let mut terms = Vec::with_capacity(cons.types.len());
    for (counts, lw, ax, ay) in &cons.types {
        let w = Construction::representative(counts);
        let px = cons.leg_x.prob_vector(&w, *ax);
        let py = cons.leg_y.prob_vector(&w, *ay);
        // collected before summing so the order is independent of threads
        let rows: Vec<f64> = px
            .par_iter()
            .enumerate()
            .map(|(xi, &a)| {
                if a == 0.0 {
                    return 0.0;
                }
                let row = &pi_n[xi * cols..(xi + 1) * cols];
                let mut acc = 0.0;
                for (&b, &q) in py.iter().zip(row) {
                    if b > 0.0 {
                        acc += (a * b).powf(1.0 + s) * q.powf(-s);
                    }
                }
                acc
            })
            .collect();
        let inner: f64 = rows.iter().sum();
        let log_mult = lf[n] - counts.iter().map(|&c| lf[c]).sum::<f64>();
        terms.push(log_mult + lw + inner.ln());
    }
    let lhs = log_sum_exp(&terms) / (n as f64 * s);

    let i_q = base.mutual_information_xy_w();
    let h_xy = base.xy_marginal().entropy();
    let lo = (1.0 - eps).powi(2) / (1.0 + eps_prime);
    let hi = (1.0 + eps).powi(2) / (1.0 - eps_prime);
    let rhs = lo * i_q + 4.0 * eps / (1.0 - eps_prime) * h_xy;
    let rhs_unsimplified = hi * h_xy - lo * (h_xy - i_q);
    let (_, delta_1, delta_2) = cons.deltas();
    let correction = -((1.0 - delta_1) * (1.0 - delta_2)).ln() / n as f64;
    Ok(RateBoundReport {
        n,
        s,
        eps,
        eps_prime,
        lhs,
        rhs,
        rhs_unsimplified,
        correction,
        delta_1,
        delta_2,
        slack: rhs + correction - lhs,
    })
}

/// Largest conditional-typicality defect of either leg over `T^n_{ε'}(Q_W)`.
pub fn worst_leg_defects(base: &MarkovCoupling, n: usize, eps: f64, eps_prime: f64) -> Result<(Option<f64>, Option<f64>)> {
    Ok((
        max_cond_defect(&base.q_w, &base.q_x_given_w, n, eps, eps_prime)?,
        max_cond_defect(&base.q_w, &base.q_y_given_w, n, eps, eps_prime)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn product_base() -> MarkovCoupling {
        let pi = fixtures::product_source();
        MarkovCoupling::new(
            FinitePmf::point(1, 0),
            CondPmf::constant(1, &pi.marginal_pmf(0).unwrap()),
            CondPmf::constant(1, &pi.marginal_pmf(1).unwrap()),
        )
        .unwrap()
    }

    fn soft_base() -> MarkovCoupling {
        let bsc = CondPmf::bsc(0.3).unwrap();
        MarkovCoupling::new(FinitePmf::uniform(2), bsc.clone(), bsc).unwrap()
    }

    #[test]
    fn codebook_sizes() {
        assert_eq!(codebook_size(7, 0.0).unwrap(), 1);
        assert_eq!(codebook_size(4, 2f64.ln()).unwrap(), 16);
        assert_eq!(codebook_size(3, 0.5).unwrap(), 5);
        assert!(codebook_size(100, 1.0).is_err());
        assert!(codebook_size(3, -0.1).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        let t = Truncation::Typical { eps: 1.0, eps_prime: 0.5 };
        let a = build_code(&base, 6, 0.4, t, 9).unwrap();
        let b = build_code(&base, 6, 0.4, t, 9).unwrap();
        let c = build_code(&base, 6, 0.4, t, 10).unwrap();
        assert_eq!(a.codebook, b.codebook);
        assert_ne!(a.codebook, c.codebook);
        assert_eq!(a.m_count, 12);
        let spec = TypicalSpec::new(base.q_w.clone(), 6, 0.5).unwrap();
        assert!(a.codebook.iter().all(|w| spec.contains(w)));
    }

    #[test]
    fn w_sampler_trivial_cases() {
        let mut rng = stream(1, 0, 0);
        let leg = CondPmf::constant(1, &FinitePmf::new(vec![0.2, 0.8]).unwrap());
        let one = MarkovCoupling::new(FinitePmf::point(1, 0), leg.clone(), leg).unwrap();
        assert_eq!(truncated_w_sampler(&one, 5, 0.1, &mut rng).unwrap(), vec![0; 5]);
        let empty = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        match truncated_w_sampler(&empty, 1, 0.1, &mut rng) {
            Err(Error::EmptyTypicalSet { typical_prob, .. }) => assert_eq!(typical_prob, Some(0.0)),
            other => panic!("expected an empty-set error, got {other:?}"),
        }
    }

    #[test]
    fn w_sampler_matches_exact_acceptance() {
        let base = soft_base();
        let (n, eps_p) = (20, 0.3);
        let spec = TypicalSpec::new(base.q_w.clone(), n, eps_p).unwrap();
        let p = spec.prob_exact().unwrap();
        let mut rng = stream(5, 0, 0);
        let draws = 100_000;
        let mut hits = 0usize;
        for _ in 0..draws {
            let w: Vec<usize> = (0..n).map(|_| base.q_w.sample(&mut rng)).collect();
            if spec.contains(&w) {
                hits += 1;
            }
        }
        let rate = hits as f64 / draws as f64;
        assert!((rate - p).abs() <= 3.0 * (p * (1.0 - p) / draws as f64).sqrt());
        for _ in 0..2000 {
            let w = truncated_w_sampler(&base, n, eps_p, &mut rng).unwrap();
            assert!(spec.contains(&w));
        }
    }

    #[test]
    fn cond_sampler_cases() {
        let mut rng = stream(2, 0, 0);
        let det = MarkovCoupling::new(FinitePmf::uniform(2), CondPmf::deterministic(&[1, 0], 2), CondPmf::deterministic(&[0, 1], 2)).unwrap();
        let w = vec![0, 1, 1, 0, 1, 0];
        assert_eq!(truncated_cond_sampler(&det, &w, 0.5, &mut rng, Axis::X).unwrap(), vec![1, 0, 0, 1, 0, 1]);
        assert_eq!(truncated_cond_sampler(&det, &w, 0.5, &mut rng, Axis::Y).unwrap(), w);

        // BSC(0.1) legs, n = 30, eps = 0.4, eps' = 0.2
        let bsc = CondPmf::bsc(0.1).unwrap();
        let base = MarkovCoupling::new(FinitePmf::uniform(2), bsc.clone(), bsc.clone()).unwrap();
        let (n, eps, eps_p) = (30, 0.4, 0.2);
        let bound = crate::typicality::contyplem_bound(eps, eps_p, n, bsc.min_positive(), 2, 2).unwrap();
        let w = truncated_w_sampler(&base, n, eps_p, &mut rng).unwrap();
        let accept = log_cond_accept(&counts_of(&w, 2), &base.q_w, &bsc, eps).unwrap().exp();
        assert!(accept >= 1.0 - bound);
        let x = truncated_cond_sampler(&base, &w, eps, &mut rng, Axis::X).unwrap();
        assert!(is_cond_typical(&x, &w, &base.q_w, &bsc, eps));
    }

    #[test]
    fn induced_joint_single_letter() {
        let base = soft_base();
        let code = build_code(&base, 1, 0.0, Truncation::None, 3).unwrap();
        let j = induced_joint_exact(&code).unwrap();
        let w = code.codebook[0][0];
        for x in 0..2 {
            for y in 0..2 {
                assert_abs_diff_eq!(j.get(&[x], &[y]), base.q_x_given_w.get(w, x) * base.q_y_given_w.get(w, y), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn induced_joint_matches_brute_force_and_marginal() {
        let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        for (t, n) in [(Truncation::None, 4), (Truncation::Typical { eps: 1.0, eps_prime: 0.5 }, 5), (Truncation::None, 3)] {
            let code = build_code(&base, n, 0.5, t, 17).unwrap();
            let j = induced_joint_exact(&code).unwrap();
            assert_abs_diff_eq!(j.mass.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            let mut x = vec![0usize; n];
            let mut y = vec![0usize; n];
            for xi in 0..j.rows() {
                decode(xi, 2, &mut x);
                for yi in 0..j.cols() {
                    decode(yi, 2, &mut y);
                    assert_abs_diff_eq!(j.mass[xi * j.cols() + yi], code.log_prob_xy(&x, &y).exp(), epsilon = 1e-12);
                }
                let direct: f64 = (0..code.m_count).map(|m| code.log_px_given_m(&x, m).exp()).sum::<f64>() / code.m_count as f64;
                assert_abs_diff_eq!(j.x_marginal()[xi], direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn copy_source_tv_falls_with_codebook_size() {
        let base = MarkovCoupling::copy_of(&fixtures::copy_source(2)).unwrap();
        let mean_tv = |rate: f64| {
            (0..8).map(|seed| estimate_tv(&build_code(&base, 4, rate, Truncation::None, seed).unwrap(), 0, 0).unwrap().point).sum::<f64>() / 8.0
        };
        let small = mean_tv(0.5);
        let mid = mean_tv(1.0);
        let large = mean_tv(2.0);
        assert!(large < mid && mid < small, "{small} {mid} {large}");
        assert!(large < 0.1);
    }

    #[test]
    fn matching_product_code_has_zero_divergence() {
        let code = build_code(&product_base(), 5, 0.0, Truncation::None, 1).unwrap();
        assert!(estimate_tv(&code, 0, 0).unwrap().point < 1e-12);
        for s in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let d = estimate_renyi(&code, s, 0, 0).unwrap();
            assert_eq!(d.method, EstimateMethod::Exact);
            assert_eq!(d.std_error, 0.0);
            assert!(d.point < 1e-10);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        let code = build_code(&base, 5, 0.45, Truncation::None, 4).unwrap();
        let exact = estimate_tv(&code, 0, 0).unwrap();
        let mc = estimate_tv_mc(&code, 40_000, 8).unwrap();
        assert!((exact.point - mc.point).abs() <= 3.0 * mc.std_error, "{exact:?} {mc:?}");
        for s in [-0.5, 0.0, 0.5, 1.0] {
            let e = estimate_renyi(&code, s, 0, 0).unwrap();
            let m = estimate_renyi_mc(&code, s, 40_000, 21).unwrap();
            assert!((e.point - m.point).abs() <= 3.0 * m.std_error + 1e-3, "s = {s}: {e:?} {m:?}");
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        let code = build_code(&base, 6, 0.3, Truncation::Typical { eps: 1.0, eps_prime: 0.5 }, 4).unwrap();
        let a = estimate_renyi_mc(&code, 0.5, 5000, 3).unwrap();
        let b = estimate_renyi_mc(&code, 0.5, 5000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn renyi_estimate_monotone_in_order() {
        let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        for seed in 0..4 {
            let code = build_code(&base, 4, 0.6, Truncation::None, seed).unwrap();
            let half = estimate_renyi(&code, 0.5, 0, 0).unwrap().point;
            let one = estimate_renyi(&code, 1.0, 0, 0).unwrap().point;
            assert!(half <= one + 1e-12);
        }
    }

    #[test]
    fn induced_joint_stays_absolutely_continuous() {
        // codewords only use W symbols of positive mass, so P ≪ π^n and
        // every order stays finite even under heavy truncation
        let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        let code = build_code(&base, 6, 0.2, Truncation::Typical { eps: 1.0, eps_prime: 0.5 }, 0).unwrap();
        for s in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let d = estimate_renyi(&code, s, 0, 0).unwrap();
            assert!(d.point.is_finite() && !d.structurally_infinite);
        }
    }

    #[test]
    fn gamma_cases() {
        let p_w = FinitePmf::new(vec![0.4, 0.6]).unwrap();
        let cond = CondPmf::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let pi = FinitePmf::new(vec![0.5, 0.5]).unwrap();
        let ord = RenyiOrder::new(0.5).unwrap();
        let joint = JointPmf::glue(&p_w, &cond).unwrap();
        let px = joint.marginal_pmf(1).unwrap();
        let marg = crate::divergence::renyi(&px, &pi, ord).unwrap();
        let cterm = crate::divergence::conditional_renyi(&joint, &CondPmf::constant(2, &pi), ord).unwrap();
        assert_abs_diff_eq!(gamma_oneshot(&p_w, &cond, &pi, 1e6, 0.5).unwrap(), marg, epsilon = 1e-15);
        assert_abs_diff_eq!(gamma_oneshot(&p_w, &cond, &pi, 0.0, 0.5).unwrap(), cterm.max(marg), epsilon = 1e-15);
        // P_X = π and R above the conditional term
        let px_pi = px.clone();
        assert_eq!(gamma_oneshot(&p_w, &cond, &px_pi, cterm + 10.0, 0.5).unwrap(), 0.0);
        assert!(gamma_oneshot(&p_w, &cond, &pi, 0.0, 0.0).is_err());
    }

    #[test]
    fn oneshot_single_codeword_and_small_books() {
        let p_w = FinitePmf::new(vec![0.3, 0.7]).unwrap();
        let cond = CondPmf::new(vec![vec![0.8, 0.2], vec![0.35, 0.65]]).unwrap();
        let pi = FinitePmf::new(vec![0.45, 0.55]).unwrap();
        let s = 0.7;
        let r = oneshot_bound_verify(&p_w, &cond, &pi, 1, s, OneShotMode::Exact).unwrap();
        let (cterm, mterm) = oneshot_terms(&p_w, &cond, &pi, s).unwrap();
        assert_abs_diff_eq!(r.lhs, (s * cterm).exp(), epsilon = 1e-12);
        assert!(r.rhs - r.lhs >= (s * mterm).exp() - 1e-12);
        for m in [2, 4] {
            let r = oneshot_bound_verify(&p_w, &cond, &pi, m, s, OneShotMode::Exact).unwrap();
            assert!(r.holds && r.holds_gamma);
            let mc = oneshot_bound_verify(&p_w, &cond, &pi, m, s, OneShotMode::MonteCarlo { trials: 20_000, seed: 2 }).unwrap();
            assert!((mc.lhs - r.lhs).abs() <= 4.0 * mc.lhs_std_error);
        }
    }

    #[test]
    fn domination_on_soft_coupling() {
        let r = truncation_domination(&soft_base(), 6, 0.6, 0.3, 1.0).unwrap();
        assert!(r.pointwise_ok && r.divergence_ok, "{r:?}");
        assert!(r.delta_n > 0.0 && r.delta_n < 1.0);
    }

    #[test]
    fn rate_bound_product_base() {
        let r = rate_bound_check(&product_base(), 6, 0.5, 0.25, 1.0).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.lhs >= 0.0);
    }

    #[test]
    fn rate_bound_empty_shell_is_an_error() {
        let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        assert!(matches!(rate_bound_check(&base, 8, 0.4, 0.2, 1.0), Err(Error::EmptyTypicalSet { .. })));
    }
}
