//! Method-of-types utilities for relative-deviation typical sets.
//!
//! A sequence `x^n` is ε-typical for `Q` when every symbol frequency obeys
//! `|T(x) - Q(x)| <= ε Q(x)`; in particular symbols outside the support of
//! `Q` may not occur. Conditional typicality of `x^n` given `w^n` is joint
//! typicality of the pair for `Q_WX`.
//!
//! Exact probabilities are sums of multinomial masses over admissible types.
//! Because the admissible region is a box intersected with the simplex, the
//! sum factorizes symbol by symbol and is evaluated with an `O(k n^2)`
//! log-space convolution instead of listing compositions one by one.

use crate::error::{Error, Result};
use crate::prob::{CondPmf, FinitePmf};

/// Slack on the frequency scale when comparing against `ε Q(x)`, so that
/// boundary types such as `|0.6 - 0.5| <= 0.2 * 0.5` are not lost to rounding.
pub const FREQ_TOL: f64 = 1e-12;

/// Upper limit on `k (n+1)^2` inner steps for one exact evaluation.
pub const MAX_WORK: usize = 200_000_000;

/// Whether `count` out of `n` is within the relative band around `q`.
#[inline]
pub fn count_ok(count: usize, n: usize, q: f64, eps: f64) -> bool {
    if q <= 0.0 {
        return count == 0;
    }
    if n == 0 {
        // the empirical pmf of an empty sequence is undefined; treat the
        // empty sequence as typical so that products over symbols behave
        return true;
    }
    let f = count as f64 / n as f64;
    (f - q).abs() <= eps * q + FREQ_TOL
}

/// Inclusive range of admissible counts, or `None` when no count qualifies.
pub fn count_range(n: usize, q: f64, eps: f64) -> Option<(usize, usize)> {
    let mut lo = None;
    let mut hi = None;
    for c in 0..=n {
        if count_ok(c, n, q, eps) {
            lo.get_or_insert(c);
            hi = Some(c);
        }
    }
    Some((lo?, hi?))
}

/// Reference pmf, block length and tolerance of an ε-typical set.
#[derive(Debug, Clone, PartialEq)]
pub struct TypicalSpec {
    pub q: FinitePmf,
    pub n: usize,
    pub eps: f64,
}

impl TypicalSpec {
    pub fn new(q: FinitePmf, n: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(TypicalSpec { q, n, eps })
    }

    pub fn contains(&self, seq: &[usize]) -> bool {
        is_typical(seq, self)
    }

    /// Whether a type (symbol counts summing to `n`) is admissible.
    pub fn admits_counts(&self, counts: &[usize]) -> bool {
        counts.len() == self.q.alphabet_size()
            && counts.iter().sum::<usize>() == self.n
            && counts.iter().zip(self.q.mass()).all(|(&c, &q)| count_ok(c, self.n, q, self.eps))
    }

    /// Per-symbol admissible count ranges; `None` if some symbol has none.
    pub fn count_ranges(&self) -> Option<Vec<(usize, usize)>> {
        self.q.mass().iter().map(|&q| count_range(self.n, q, self.eps)).collect()
    }

    pub fn log_prob_exact(&self) -> Result<f64> {
        let ranges = match self.count_ranges() {
            Some(r) => r,
            None => return Ok(f64::NEG_INFINITY),
        };
        let lf = log_factorials(self.n);
        log_box_multinomial(self.n, self.q.mass(), &ranges, &lf)
    }

    pub fn prob_exact(&self) -> Result<f64> {
        Ok(self.log_prob_exact()?.exp().min(1.0))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::config(format!("typicality tolerance must be positive and finite, got {eps}")));
    }
    Ok(())
}

/// Relative-deviation membership test. Wrong length or out-of-alphabet
/// symbols make the answer `false`.
pub fn is_typical(seq: &[usize], spec: &TypicalSpec) -> bool {
    if seq.len() != spec.n {
        return false;
    }
    let k = spec.q.alphabet_size();
    let mut counts = vec![0usize; k];
    for &s in seq {
        if s >= k {
            return false;
        }
        counts[s] += 1;
    }
    counts.iter().zip(spec.q.mass()).all(|(&c, &q)| count_ok(c, spec.n, q, spec.eps))
}

/// Exact `Q^n(T^n_ε(Q))`.
pub fn typical_prob_exact(spec: &TypicalSpec) -> Result<f64> {
    spec.prob_exact()
}

/// `ln k!` for `k = 0..=n`.
pub fn log_factorials(n: usize) -> Vec<f64> {
    let mut lf = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    lf.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        lf.push(acc);
    }
    lf
}

/// `log Σ_c multinomial(n; c) Π q_i^{c_i}` over compositions of `n` with
/// `c_i` inside `ranges[i]`. `lf` must cover `0..=n`.
pub fn log_box_multinomial(n: usize, q: &[f64], ranges: &[(usize, usize)], lf: &[f64]) -> Result<f64> {
    let k = q.len();
    let work = k.saturating_mul((n + 1).saturating_mul(n + 1));
    if work > MAX_WORK {
        return Err(Error::budget(format!(
            "type enumeration over {k} symbols at n = {n} needs about {work} steps (limit {MAX_WORK})"
        )));
    }
    let lo_total: usize = ranges.iter().map(|r| r.0).sum();
    let hi_total: usize = ranges.iter().map(|r| r.1).sum();
    if lo_total > n || hi_total < n {
        return Ok(f64::NEG_INFINITY);
    }
    // g[r] = log Σ Π q_i^{c_i} / c_i! over partial compositions summing to r
    let mut g = vec![f64::NEG_INFINITY; n + 1];
    g[0] = 0.0;
    let mut next = vec![f64::NEG_INFINITY; n + 1];
    let mut reach = 0usize;
    for (&qi, &(lo, hi)) in q.iter().zip(ranges) {
        let lq = if qi > 0.0 { qi.ln() } else { f64::NEG_INFINITY };
        let new_reach = (reach + hi).min(n);
        for r in 0..=new_reach {
            let c_max = hi.min(r);
            let c_min = lo.max(r.saturating_sub(reach));
            if c_min > c_max {
                next[r] = f64::NEG_INFINITY;
                continue;
            }
            let term = |c: usize| {
                let base = g[r - c];
                if base == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let pow = if c == 0 { 0.0 } else { c as f64 * lq };
                base + pow - lf[c]
            };
            let mut m = f64::NEG_INFINITY;
            for c in c_min..=c_max {
                m = m.max(term(c));
            }
            if m == f64::NEG_INFINITY {
                next[r] = m;
                continue;
            }
            let mut s = 0.0;
            for c in c_min..=c_max {
                s += (term(c) - m).exp();
            }
            next[r] = m + s.ln();
        }
        for v in next.iter_mut().skip(new_reach + 1) {
            *v = f64::NEG_INFINITY;
        }
        std::mem::swap(&mut g, &mut next);
        reach = new_reach;
    }
    Ok((lf[n] + g[n]).min(0.0))
}

/// Joint typicality of `(w^n, x^n)` for `Q_WX = Q_W ⊗ Q_{X|W}`, i.e.
/// membership of `x^n` in the conditional typical set given `w^n`.
pub fn is_cond_typical(x_seq: &[usize], w_seq: &[usize], q_w: &FinitePmf, q_x_given_w: &CondPmf, eps: f64) -> bool {
    let n = w_seq.len();
    if x_seq.len() != n {
        return false;
    }
    let (nw, nx) = (q_x_given_w.n_inputs(), q_x_given_w.n_outputs());
    if q_w.alphabet_size() != nw {
        return false;
    }
    let mut counts = vec![0usize; nw * nx];
    for (&w, &x) in w_seq.iter().zip(x_seq) {
        if w >= nw || x >= nx {
            return false;
        }
        counts[w * nx + x] += 1;
    }
    (0..nw).all(|w| (0..nx).all(|x| count_ok(counts[w * nx + x], n, q_w.get(w) * q_x_given_w.get(w, x), eps)))
}

/// Log-probability that `x^n ~ Π_i Q(·|w_i)` is conditionally typical, as a
/// function of the counts `n_w` of the conditioning sequence only. Given
/// `w^n`, the per-symbol sub-blocks are independent multinomials and the
/// joint condition splits across them.
pub fn log_cond_accept(w_counts: &[usize], q_w: &FinitePmf, q_x_given_w: &CondPmf, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let nw = q_x_given_w.n_inputs();
    if w_counts.len() != nw || q_w.alphabet_size() != nw {
        return Err(Error::config("conditioning counts, Q_W and Q_X|W disagree on the W alphabet"));
    }
    let n: usize = w_counts.iter().sum();
    let lf = log_factorials(n);
    let mut total = 0.0;
    for (w, &nw_count) in w_counts.iter().enumerate() {
        let row = q_x_given_w.row(w).mass();
        let mut ranges = Vec::with_capacity(row.len());
        for &qx in row {
            let target = q_w.get(w) * qx;
            // c_{wx} <= n_w always; admissibility is judged on the n scale
            let mut r = None;
            for c in 0..=nw_count {
                if count_ok(c, n, target, eps) {
                    r = Some(match r {
                        None => (c, c),
                        Some((lo, _)) => (lo, c),
                    });
                }
            }
            match r {
                Some(r) => ranges.push(r),
                None => return Ok(f64::NEG_INFINITY),
            }
        }
        let lp = log_box_multinomial(nw_count, row, &ranges, &lf)?;
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        total += lp;
    }
    Ok(total.min(0.0))
}

/// Exact `1 - Q^n_{X|W}(T^n_ε(Q_WX | w^n) | w^n)`.
///
/// Only conditioning sequences in `T^n_{ε'}(Q_W)` are accepted; outside that
/// set the uniform bound says nothing and the call is a domain error.
pub fn cond_typical_defect_exact(
    q_w: &FinitePmf,
    q_x_given_w: &CondPmf,
    w_seq: &[usize],
    eps: f64,
    eps_prime: f64,
) -> Result<f64> {
    check_order(eps, eps_prime)?;
    let w_spec = TypicalSpec::new(q_w.clone(), w_seq.len(), eps_prime)?;
    if !w_spec.contains(w_seq) {
        return Err(Error::domain("conditioning sequence is not ε'-typical for Q_W"));
    }
    let mut counts = vec![0usize; q_w.alphabet_size()];
    for &w in w_seq {
        counts[w] += 1;
    }
    cond_typical_defect_from_counts(&counts, q_w, q_x_given_w, eps)
}

/// Defect for any conditioning sequence with the given counts.
pub fn cond_typical_defect_from_counts(
    w_counts: &[usize],
    q_w: &FinitePmf,
    q_x_given_w: &CondPmf,
    eps: f64,
) -> Result<f64> {
    let lp = log_cond_accept(w_counts, q_w, q_x_given_w, eps)?;
    Ok((-lp.exp_m1()).clamp(0.0, 1.0))
}

/// All admissible counts of `T^n_{ε'}(Q_W)`, in lexicographic order.
pub fn typical_types(spec: &TypicalSpec) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let ranges = match spec.count_ranges() {
        Some(r) => r,
        None => return out,
    };
    let mut cur = Vec::with_capacity(ranges.len());
    fn rec(i: usize, left: usize, ranges: &[(usize, usize)], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == ranges.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let (lo, hi) = ranges[i];
        for c in lo..=hi.min(left) {
            cur.push(c);
            rec(i + 1, left - c, ranges, cur, out);
            cur.pop();
        }
    }
    rec(0, spec.n, &ranges, &mut cur, &mut out);
    out
}

/// Largest defect over every conditioning sequence in `T^n_{ε'}(Q_W)`.
/// `None` when that set is empty.
pub fn max_cond_defect(q_w: &FinitePmf, q_x_given_w: &CondPmf, n: usize, eps: f64, eps_prime: f64) -> Result<Option<f64>> {
    check_order(eps, eps_prime)?;
    let spec = TypicalSpec::new(q_w.clone(), n, eps_prime)?;
    let mut worst: Option<f64> = None;
    for counts in typical_types(&spec) {
        let d = cond_typical_defect_from_counts(&counts, q_w, q_x_given_w, eps)?;
        worst = Some(worst.map_or(d, |m: f64| m.max(d)));
    }
    Ok(worst)
}

fn check_order(eps: f64, eps_prime: f64) -> Result<()> {
    if !(eps_prime > 0.0 && eps_prime < eps && eps <= 1.0) {
        return Err(Error::config(format!("need 0 < eps' < eps <= 1, got eps = {eps}, eps' = {eps_prime}")));
    }
    Ok(())
}

/// Uniform bound on the conditional-typicality defect over `w^n ∈ T^n_{ε'}`:
///
/// `|X||W| (exp(-(1/3)((ε-ε')/(1+ε'))^2 n q_min) + exp(-(1/2)((ε-ε')/(1-ε'))^2 n q_min))`
///
/// where `q_min` is the smallest positive entry of `Q_{X|W}`.
pub fn contyplem_bound(eps: f64, eps_prime: f64, n: usize, q_min: f64, x_size: usize, w_size: usize) -> Result<f64> {
    check_order(eps, eps_prime)?;
    if !(q_min > 0.0 && q_min <= 1.0) {
        return Err(Error::config(format!("q_min must lie in (0, 1], got {q_min}")));
    }
    let gap = eps - eps_prime;
    let nq = n as f64 * q_min;
    let upper = (-(gap / (1.0 + eps_prime)).powi(2) * nq / 3.0).exp();
    let lower = (-(gap / (1.0 - eps_prime)).powi(2) * nq / 2.0).exp();
    Ok((x_size * w_size) as f64 * (upper + lower))
}

/// `min Q(x|w)` over positive entries, the constant in the bound as usually stated.
pub fn cond_q_min(q_x_given_w: &CondPmf) -> f64 {
    q_x_given_w.min_positive()
}

/// `min Q_W(w) Q(x|w)` over positive entries. Each cell of the joint type is
/// a binomial with mean about `n Q_W(w) Q(x|w)`, so this is the constant a
/// Chernoff argument actually delivers; with the conditional minimum the
/// bound can fail once `Q_W` is skewed and `n` is large.
pub fn joint_q_min(q_w: &FinitePmf, q_x_given_w: &CondPmf) -> f64 {
    let mut m = f64::INFINITY;
    for w in 0..q_w.alphabet_size() {
        for x in 0..q_x_given_w.n_outputs() {
            let v = q_w.get(w) * q_x_given_w.get(w, x);
            if v > 0.0 {
                m = m.min(v);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn pmf(v: &[f64]) -> FinitePmf {
        FinitePmf::new(v.to_vec()).unwrap()
    }

    #[test]
    fn membership_examples() {
        let spec = TypicalSpec::new(pmf(&[0.5, 0.5]), 10, 0.2).unwrap();
        let mut seq = vec![0; 10];
        seq[..6].iter_mut().for_each(|s| *s = 1);
        assert!(spec.contains(&seq));
        seq[6] = 1;
        assert!(!spec.contains(&seq));

        let exact = TypicalSpec::new(pmf(&[0.25, 0.75]), 4, 0.01).unwrap();
        assert!(exact.contains(&[1, 0, 1, 1]));

        let zero = TypicalSpec::new(pmf(&[0.0, 1.0]), 3, 1.0).unwrap();
        assert!(!zero.contains(&[1, 0, 1]));
        assert!(zero.contains(&[1, 1, 1]));
        assert!(!zero.contains(&[1, 1]));
        assert!(TypicalSpec::new(pmf(&[0.5, 0.5]), 3, 0.0).is_err());
    }

    #[test]
    fn exact_probability_examples() {
        for n in [1, 5, 17] {
            let all = TypicalSpec::new(pmf(&[0.5, 0.5]), n, 1.0).unwrap();
            assert_abs_diff_eq!(all.prob_exact().unwrap(), 1.0, epsilon = 1e-12);
        }
        let none = TypicalSpec::new(pmf(&[0.5, 0.5]), 1, 0.1).unwrap();
        assert_eq!(none.prob_exact().unwrap(), 0.0);
        // n = 10, eps = 0.2: counts 4..=6 of fair coin flips
        let mid = TypicalSpec::new(pmf(&[0.5, 0.5]), 10, 0.2).unwrap();
        assert_abs_diff_eq!(mid.prob_exact().unwrap(), (210.0 + 252.0 + 210.0) / 1024.0, epsilon = 1e-13);
    }

    #[test]
    fn exact_probability_matches_brute_force() {
        let q = pmf(&[0.2, 0.5, 0.3]);
        for n in 1..=9 {
            for eps in [0.1, 0.3, 0.6, 1.0] {
                let spec = TypicalSpec::new(q.clone(), n, eps).unwrap();
                let mut total = 0.0;
                let mut seq = vec![0usize; n];
                for mut idx in 0..3usize.pow(n as u32) {
                    for s in seq.iter_mut() {
                        *s = idx % 3;
                        idx /= 3;
                    }
                    if spec.contains(&seq) {
                        total += q.log_product_mass(&seq).exp();
                    }
                }
                assert_abs_diff_eq!(spec.prob_exact().unwrap(), total, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_probability_matches_monte_carlo() {
        let spec = TypicalSpec::new(pmf(&[0.9, 0.1]), 50, 0.5).unwrap();
        let p = spec.prob_exact().unwrap();
        let trials = 1_000_000;
        let mut rng = crate::rng::stream(11, 0, 0);
        let mut hits = 0u64;
        for _ in 0..trials {
            let ones = (0..50).filter(|_| rng.random::<f64>() < 0.1).count();
            if spec.admits_counts(&[50 - ones, ones]) {
                hits += 1;
            }
        }
        let est = hits as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((est - p).abs() <= 3.0 * se, "exact {p} vs monte carlo {est} (se {se})");
    }

    #[test]
    fn probability_monotone_in_eps() {
        let q = pmf(&[0.15, 0.35, 0.5]);
        for n in [10, 40, 120] {
            let mut prev = 0.0;
            for k in 1..=20 {
                let p = TypicalSpec::new(q.clone(), n, k as f64 * 0.05).unwrap().prob_exact().unwrap();
                assert!(p >= prev - 1e-12);
                prev = p;
            }
        }
    }

    #[test]
    fn probability_tends_to_one_in_n() {
        let q = pmf(&[0.3, 0.7]);
        let at = |n| TypicalSpec::new(q.clone(), n, 0.3).unwrap().prob_exact().unwrap();
        assert!(at(200) > at(50));
        assert!(at(50) > at(10));
        assert!(at(200) > 0.99);
    }

    #[test]
    fn members_satisfy_tv_half_bound() {
        let q = pmf(&[0.1, 0.3, 0.6]);
        let mut rng = crate::rng::stream(3, 0, 0);
        for _ in 0..2000 {
            let n = rng.random_range(1..30);
            let eps = rng.random_range(0.05..1.0);
            let spec = TypicalSpec::new(q.clone(), n, eps).unwrap();
            let seq: Vec<usize> = (0..n).map(|_| q.sample(&mut rng)).collect();
            if spec.contains(&seq) {
                let t = crate::prob::SequenceType::of(&seq, 3).unwrap().empirical().unwrap();
                let tv = crate::divergence::tv(t.mass(), q.mass()).unwrap();
                assert!(tv <= eps / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let spec = TypicalSpec::new(FinitePmf::uniform(8), 20_000, 0.5).unwrap();
        assert!(matches!(spec.prob_exact(), Err(Error::Budget(_))));
    }

    #[test]
    fn deterministic_conditionals_have_no_defect() {
        let q_w = pmf(&[0.4, 0.6]);
        let cond = CondPmf::deterministic(&[1, 0], 2);
        let w = [0, 1, 1, 0, 1];
        assert_eq!(cond_typical_defect_exact(&q_w, &cond, &w, 0.3, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn cond_defect_matches_exhaustive_enumeration() {
        let q_w = pmf(&[0.5, 0.5]);
        let cond = CondPmf::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let n = 8;
        for (eps, eps_p) in [(0.4, 0.2), (0.6, 0.3), (1.0, 0.5)] {
            let w_spec = TypicalSpec::new(q_w.clone(), n, eps_p).unwrap();
            for w_idx in 0..256usize {
                let w: Vec<usize> = (0..n).map(|i| (w_idx >> i) & 1).collect();
                if !w_spec.contains(&w) {
                    assert!(matches!(cond_typical_defect_exact(&q_w, &cond, &w, eps, eps_p), Err(Error::Domain(_))));
                    continue;
                }
                let mut inside = 0.0;
                for x_idx in 0..256usize {
                    let x: Vec<usize> = (0..n).map(|i| (x_idx >> i) & 1).collect();
                    if is_cond_typical(&x, &w, &q_w, &cond, eps) {
                        inside += w.iter().zip(&x).map(|(&a, &b)| cond.get(a, b)).product::<f64>();
                    }
                }
                let exact = cond_typical_defect_exact(&q_w, &cond, &w, eps, eps_p).unwrap();
                assert_abs_diff_eq!(exact, 1.0 - inside, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bound_examples() {
        assert_abs_diff_eq!(contyplem_bound(1.0, 0.5, 0, 0.3, 2, 2).unwrap(), 8.0, epsilon = 1e-15);
        let b = contyplem_bound(0.4, 0.1, 100, 0.1, 2, 2).unwrap();
        let hand = 4.0 * ((-(0.3f64 / 1.1).powi(2) * 10.0 / 3.0).exp() + (-(0.3f64 / 0.9).powi(2) * 5.0).exp());
        assert_abs_diff_eq!(b, hand, epsilon = 1e-14);
        let mut prev = f64::INFINITY;
        for n in (0..5000).step_by(50) {
            let v = contyplem_bound(0.4, 0.1, n, 0.1, 2, 2).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-4);
        assert!(contyplem_bound(0.2, 0.3, 10, 0.1, 2, 2).is_err());
        assert!(contyplem_bound(1.2, 0.3, 10, 0.1, 2, 2).is_err());
        assert!(contyplem_bound(0.4, 0.3, 10, 0.0, 2, 2).is_err());
    }

    #[test]
    fn bound_dominates_defect_where_informative() {
        // n large enough that the bound drops below 1
        let q_w = pmf(&[0.5, 0.5]);
        let cond = CondPmf::new(vec![vec![0.6, 0.4], vec![0.45, 0.55]]).unwrap();
        for n in [200, 400, 800] {
            let worst = max_cond_defect(&q_w, &cond, n, 0.6, 0.3).unwrap().unwrap();
            let bound = contyplem_bound(0.6, 0.3, n, cond.min_positive(), 2, 2).unwrap();
            assert!(worst <= bound, "n = {n}: defect {worst} above bound {bound}");
        }
    }

    #[test]
    fn conditional_minimum_is_too_optimistic_for_skewed_w() {
        let q_w = pmf(&[0.1, 0.9]);
        let cond = CondPmf::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let n = 2048;
        let worst = max_cond_defect(&q_w, &cond, n, 0.6, 0.3).unwrap().unwrap();
        let literal = contyplem_bound(0.6, 0.3, n, cond_q_min(&cond), 2, 2).unwrap();
        let joint = contyplem_bound(0.6, 0.3, n, joint_q_min(&q_w, &cond), 2, 2).unwrap();
        assert!(worst > literal);
        assert!(worst <= joint);
    }
}
