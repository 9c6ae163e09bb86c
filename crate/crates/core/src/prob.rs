//! Finite probability primitives.
//!
//! Everything here lives on small alphabets (a handful of symbols), so all
//! storage is dense. Logarithms are natural and `0 log 0 = 0` throughout.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Σ p - 1|` accepted at construction time.
pub const NORMALIZATION_TOL: f64 = 1e-12;

fn check_masses(mass: &[f64], what: &str) -> Result<()> {
    if mass.is_empty() {
        return Err(Error::config(format!("{what}: empty alphabet")));
    }
    let mut total = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::config(format!("{what}: entry {i} = {m} is not a probability")));
        }
        total += m;
    }
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::config(format!(
            "{what}: masses sum to {total:.17}, off by more than {NORMALIZATION_TOL:e}"
        )));
    }
    Ok(())
}

/// `x log x` with the `0 log 0 = 0` convention.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Natural-log `log(sum(exp(v)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// A probability mass function over `{0, .., k-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePmf {
    mass: Vec<f64>,
}

impl FinitePmf {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        check_masses(&mass, "pmf")?;
        Ok(FinitePmf { mass })
    }

    /// Builds a pmf from nonnegative weights by dividing through by their sum.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("weights must be finite, nonnegative and not all zero"));
        }
        FinitePmf::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform pmf needs a nonempty alphabet");
        FinitePmf { mass: vec![1.0 / k as f64; k] }
    }

    pub fn point(k: usize, at: usize) -> Self {
        assert!(at < k);
        let mut mass = vec![0.0; k];
        mass[at] = 1.0;
        FinitePmf { mass }
    }

    pub fn alphabet_size(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.mass.len()).filter(|&i| self.mass[i] > 0.0).collect()
    }

    /// Smallest strictly positive mass.
    pub fn min_positive(&self) -> f64 {
        self.mass.iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min)
    }

    pub fn entropy(&self) -> f64 {
        -self.mass.iter().map(|&m| xlogx(m)).sum::<f64>()
    }

    /// Inverse-CDF draw; deterministic given the RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            acc += m;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// `log Π p(seq_i)`, `-inf` as soon as a symbol has zero mass.
    pub fn log_product_mass(&self, seq: &[usize]) -> f64 {
        log_product_mass(self, seq)
    }

    /// Single whitespace-separated line.
    pub fn to_text(&self) -> String {
        format_row(&self.mass)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rows = parse_rows(text)?;
        if rows.len() != 1 {
            return Err(Error::Parse(format!("expected one row for a pmf, found {}", rows.len())));
        }
        FinitePmf::new(rows.into_iter().next().unwrap())
    }
}

/// `Σ_i log p(seq_i)`; zero for the empty sequence, `-inf` when any symbol has zero mass.
pub fn log_product_mass(p: &FinitePmf, seq: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &s in seq {
        let m = p.mass[s];
        if m <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += m.ln();
    }
    acc
}

/// A conditional pmf `P(out | in)` stored as one row per conditioning symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondPmf {
    rows: Vec<FinitePmf>,
}

impl CondPmf {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::config("conditional pmf needs at least one row"));
        }
        let width = rows[0].len();
        let mut out = Vec::with_capacity(rows.len());
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != width {
                return Err(Error::config(format!("row {i} has {} entries, expected {width}", r.len())));
            }
            check_masses(&r, &format!("conditional row {i}"))?;
            out.push(FinitePmf { mass: r });
        }
        Ok(CondPmf { rows: out })
    }

    pub fn from_rows(rows: Vec<FinitePmf>) -> Result<Self> {
        CondPmf::new(rows.into_iter().map(|r| r.mass).collect())
    }

    /// Deterministic channel `in -> map[in]`.
    pub fn deterministic(map: &[usize], out_size: usize) -> Self {
        CondPmf { rows: map.iter().map(|&j| FinitePmf::point(out_size, j)).collect() }
    }

    /// Every row equal to `p`.
    pub fn constant(n_rows: usize, p: &FinitePmf) -> Self {
        CondPmf { rows: vec![p.clone(); n_rows] }
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        CondPmf::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn n_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.rows[0].alphabet_size()
    }

    pub fn row(&self, i: usize) -> &FinitePmf {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[FinitePmf] {
        &self.rows
    }

    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.rows[input].mass[output]
    }

    /// `min { P(out|in) : P(out|in) > 0 }`.
    pub fn min_positive(&self) -> f64 {
        self.rows.iter().map(FinitePmf::min_positive).fold(f64::INFINITY, f64::min)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format_row(&r.mass));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        CondPmf::new(parse_rows(text)?)
    }
}

/// Dense joint pmf over a product alphabet, row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    dims: Vec<usize>,
    mass: Vec<f64>,
}

impl JointPmf {
    pub fn new(dims: Vec<usize>, mass: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::config(format!("invalid joint dims {dims:?}")));
        }
        let size: usize = dims.iter().product();
        if size != mass.len() {
            return Err(Error::config(format!(
                "joint dims {dims:?} need {size} entries, got {}",
                mass.len()
            )));
        }
        check_masses(&mass, "joint pmf")?;
        Ok(JointPmf { dims, mass })
    }

    /// Two-axis joint from a row-per-first-symbol matrix.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::config("empty matrix"));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::config("ragged matrix"));
        }
        JointPmf::new(vec![rows.len(), width], rows.concat())
    }

    pub fn product(p: &FinitePmf, q: &FinitePmf) -> Self {
        let mut mass = Vec::with_capacity(p.alphabet_size() * q.alphabet_size());
        for &a in p.mass() {
            for &b in q.mass() {
                mass.push(a * b);
            }
        }
        JointPmf { dims: vec![p.alphabet_size(), q.alphabet_size()], mass }
    }

    /// `P_A × P_{B|A}` as a two-axis joint.
    pub fn glue(p: &FinitePmf, cond: &CondPmf) -> Result<Self> {
        if p.alphabet_size() != cond.n_inputs() {
            return Err(Error::config("marginal and conditional disagree on the conditioning alphabet"));
        }
        let mut mass = Vec::with_capacity(p.alphabet_size() * cond.n_outputs());
        for (a, &pa) in p.mass().iter().enumerate() {
            for &b in cond.row(a).mass() {
                mass.push(pa * b);
            }
        }
        Ok(JointPmf { dims: vec![p.alphabet_size(), cond.n_outputs()], mass })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn n_axes(&self) -> usize {
        self.dims.len()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, &d)| acc * d + c)
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.mass[self.index(coords)]
    }

    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        for (slot, &d) in c.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        c
    }

    /// Sum out every axis not listed in `axes`. The result keeps the axes in
    /// the order given.
    pub fn marginal(&self, axes: &[usize]) -> Result<JointPmf> {
        if axes.is_empty() {
            return Err(Error::config("marginal needs at least one axis"));
        }
        for (i, &a) in axes.iter().enumerate() {
            if a >= self.dims.len() || axes[..i].contains(&a) {
                return Err(Error::config(format!("invalid marginal axes {axes:?} for dims {:?}", self.dims)));
            }
        }
        let out_dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![0.0; out_dims.iter().product()];
        for (flat, &m) in self.mass.iter().enumerate() {
            let c = self.coords(flat);
            let idx = axes.iter().zip(&out_dims).fold(0, |acc, (&a, &d)| acc * d + c[a]);
            out[idx] += m;
        }
        Ok(JointPmf { dims: out_dims, mass: out })
    }

    pub fn marginal_pmf(&self, axis: usize) -> Result<FinitePmf> {
        Ok(FinitePmf { mass: self.marginal(&[axis])?.mass })
    }

    /// View the whole joint as a pmf over the flattened super-alphabet.
    pub fn flatten(&self) -> FinitePmf {
        FinitePmf { mass: self.mass.clone() }
    }

    /// Regroup into a two-axis joint: `left` axes form the first super-symbol,
    /// `right` axes the second.
    pub fn group(&self, left: &[usize], right: &[usize]) -> Result<JointPmf> {
        let mut order = left.to_vec();
        order.extend_from_slice(right);
        let m = self.marginal(&order)?;
        let l: usize = left.iter().map(|&a| self.dims[a]).product();
        let r: usize = right.iter().map(|&a| self.dims[a]).product();
        Ok(JointPmf { dims: vec![l, r], mass: m.mass })
    }

    /// `P(axis 1 | axis 0)` for a two-axis joint. Rows with zero marginal
    /// are filled with the uniform pmf.
    pub fn conditional(&self) -> Result<CondPmf> {
        if self.dims.len() != 2 {
            return Err(Error::config("conditional() needs a two-axis joint"));
        }
        let (a, b) = (self.dims[0], self.dims[1]);
        let rows = (0..a)
            .map(|i| {
                let row = &self.mass[i * b..(i + 1) * b];
                let tot: f64 = row.iter().sum();
                if tot > 0.0 {
                    FinitePmf { mass: row.iter().map(|v| v / tot).collect() }
                } else {
                    FinitePmf::uniform(b)
                }
            })
            .collect();
        Ok(CondPmf { rows })
    }

    /// `λ P + (1-λ) Q`.
    pub fn mix(lambda: f64, p: &JointPmf, q: &JointPmf) -> Result<JointPmf> {
        if p.dims != q.dims || !(0.0..=1.0).contains(&lambda) {
            return Err(Error::config("mixture needs equal shapes and λ in [0,1]"));
        }
        let mass = p.mass.iter().zip(&q.mass).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        Ok(JointPmf { dims: p.dims.clone(), mass })
    }

    pub fn entropy(&self) -> f64 {
        -self.mass.iter().map(|&m| xlogx(m)).sum::<f64>()
    }

    /// `I(A;B)` of a two-axis joint.
    pub fn mutual_information(&self) -> Result<f64> {
        mutual_information(self)
    }

    pub fn to_text(&self) -> Result<String> {
        if self.dims.len() != 2 {
            return Err(Error::config("text format holds two-axis joints only"));
        }
        let b = self.dims[1];
        let mut s = String::new();
        for row in self.mass.chunks(b) {
            s.push_str(&format_row(row));
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        JointPmf::from_matrix(&parse_rows(text)?)
    }

    pub(crate) fn from_raw(dims: Vec<usize>, mass: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), mass.len());
        JointPmf { dims, mass }
    }
}

/// `I(A;B) = Σ P(a,b) log(P(a,b) / (P(a)P(b)))` for a two-axis joint.
pub fn mutual_information(joint: &JointPmf) -> Result<f64> {
    if joint.dims.len() != 2 {
        return Err(Error::config("mutual information needs a two-axis joint"));
    }
    let (na, nb) = (joint.dims[0], joint.dims[1]);
    let pa: Vec<f64> = (0..na).map(|a| joint.mass[a * nb..(a + 1) * nb].iter().sum()).collect();
    let mut pb = vec![0.0; nb];
    for a in 0..na {
        for b in 0..nb {
            pb[b] += joint.mass[a * nb + b];
        }
    }
    let mut mi = 0.0;
    for a in 0..na {
        for b in 0..nb {
            let p = joint.mass[a * nb + b];
            if p > 0.0 {
                mi += p * (p / (pa[a] * pb[b])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// A distribution `Q_W Q_{X|W} Q_{Y|W}`, i.e. a feasible point of the
/// common-information program whenever its `(X,Y)` marginal matches the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCoupling {
    pub q_w: FinitePmf,
    pub q_x_given_w: CondPmf,
    pub q_y_given_w: CondPmf,
}

impl MarkovCoupling {
    pub fn new(q_w: FinitePmf, q_x_given_w: CondPmf, q_y_given_w: CondPmf) -> Result<Self> {
        if q_x_given_w.n_inputs() != q_w.alphabet_size() || q_y_given_w.n_inputs() != q_w.alphabet_size() {
            return Err(Error::config("conditionals must have one row per W symbol"));
        }
        Ok(MarkovCoupling { q_w, q_x_given_w, q_y_given_w })
    }

    /// `W = (X,Y)`: always feasible, with `I(XY;W) = H(XY)`.
    pub fn copy_of(pi: &JointPmf) -> Result<Self> {
        if pi.n_axes() != 2 {
            return Err(Error::config("copy coupling needs a two-axis target"));
        }
        let (nx, ny) = (pi.dims()[0], pi.dims()[1]);
        let xs: Vec<usize> = (0..nx * ny).map(|w| w / ny).collect();
        let ys: Vec<usize> = (0..nx * ny).map(|w| w % ny).collect();
        MarkovCoupling::new(pi.flatten(), CondPmf::deterministic(&xs, nx), CondPmf::deterministic(&ys, ny))
    }

    pub fn w_size(&self) -> usize {
        self.q_w.alphabet_size()
    }

    pub fn x_size(&self) -> usize {
        self.q_x_given_w.n_outputs()
    }

    pub fn y_size(&self) -> usize {
        self.q_y_given_w.n_outputs()
    }

    /// Joint over `W × X × Y`.
    pub fn induced_joint(&self) -> JointPmf {
        let (nw, nx, ny) = (self.w_size(), self.x_size(), self.y_size());
        let mut mass = Vec::with_capacity(nw * nx * ny);
        for w in 0..nw {
            let pw = self.q_w.get(w);
            for x in 0..nx {
                let px = self.q_x_given_w.get(w, x);
                for y in 0..ny {
                    mass.push(pw * px * self.q_y_given_w.get(w, y));
                }
            }
        }
        JointPmf::from_raw(vec![nw, nx, ny], mass)
    }

    /// The `(X,Y)` marginal.
    pub fn xy_marginal(&self) -> JointPmf {
        let (nw, nx, ny) = (self.w_size(), self.x_size(), self.y_size());
        let mut mass = vec![0.0; nx * ny];
        for w in 0..nw {
            let pw = self.q_w.get(w);
            for x in 0..nx {
                let px = pw * self.q_x_given_w.get(w, x);
                for y in 0..ny {
                    mass[x * ny + y] += px * self.q_y_given_w.get(w, y);
                }
            }
        }
        JointPmf::from_raw(vec![nx, ny], mass)
    }

    pub fn wx_joint(&self) -> JointPmf {
        JointPmf::glue(&self.q_w, &self.q_x_given_w).expect("shapes checked at construction")
    }

    pub fn wy_joint(&self) -> JointPmf {
        JointPmf::glue(&self.q_w, &self.q_y_given_w).expect("shapes checked at construction")
    }

    /// `I(XY;W)` under the coupling.
    pub fn mutual_information_xy_w(&self) -> f64 {
        let j = self.induced_joint().group(&[0], &[1, 2]).expect("three-axis joint");
        mutual_information(&j).expect("two-axis joint")
    }

    /// Drop `W` symbols with zero (or below `floor`) mass and renormalize.
    pub fn pruned(&self, floor: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.w_size()).filter(|&w| self.q_w.get(w) > floor).collect();
        if keep.is_empty() {
            return Err(Error::config("pruning removed every W symbol"));
        }
        let qw = FinitePmf::from_weights(&keep.iter().map(|&w| self.q_w.get(w)).collect::<Vec<_>>())?;
        let xs = keep.iter().map(|&w| self.q_x_given_w.row(w).clone()).collect();
        let ys = keep.iter().map(|&w| self.q_y_given_w.row(w).clone()).collect();
        MarkovCoupling::new(qw, CondPmf::from_rows(xs)?, CondPmf::from_rows(ys)?)
    }
}

/// Empirical symbol counts of a length-`n` sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SequenceType {
    pub n: usize,
    pub counts: Vec<usize>,
}

impl SequenceType {
    pub fn new(counts: Vec<usize>) -> Self {
        let n = counts.iter().sum();
        SequenceType { n, counts }
    }

    pub fn of(seq: &[usize], alphabet_size: usize) -> Result<Self> {
        let mut counts = vec![0; alphabet_size];
        for &s in seq {
            if s >= alphabet_size {
                return Err(Error::config(format!("symbol {s} outside alphabet of size {alphabet_size}")));
            }
            counts[s] += 1;
        }
        Ok(SequenceType { n: seq.len(), counts })
    }

    /// `counts / n`; undefined for `n = 0`.
    pub fn empirical(&self) -> Result<FinitePmf> {
        if self.n == 0 {
            return Err(Error::domain("empirical pmf of an empty sequence"));
        }
        let n = self.n as f64;
        Ok(FinitePmf { mass: self.counts.iter().map(|&c| c as f64 / n).collect() })
    }
}

fn format_row(row: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // shortest round-trip representation
        write!(s, "{v:?}").unwrap();
    }
    s
}

/// Whitespace-separated decimal rows; blank lines and `#` comments ignored.
pub fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {tok:?}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no numeric rows found".into()));
    }
    Ok(rows)
}
