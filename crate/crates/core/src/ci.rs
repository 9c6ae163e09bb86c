//! Wyner's common information `min I(XY;W)` over couplings `X - W - Y` with
//! `(X,Y)`-marginal equal to a target `π`, and the Rényi upper bound that
//! replaces the mutual information by averaged Rényi divergences.
//!
//! The search runs over softmax logits of `(Q_W, Q_{X|W}, Q_{Y|W})`. The
//! marginal constraint is handled by an augmented Lagrangian whose penalty
//! weight grows from `mu_start` to `mu_max`; each inner problem is solved by
//! L-BFGS with analytic gradients.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::tv;
use crate::error::{Error, Result};
use crate::optim::{lbfgs, softmax_backward, softmax_into, LbfgsOptions};
use crate::prob::{xlogx, CondPmf, FinitePmf, JointPmf, MarkovCoupling};
use crate::rng;

/// Logit given to symbols that start with zero mass.
const FLOOR_LOGIT: f64 = -30.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiOptions {
    /// Size of the `W` alphabet; `None` means `|X||Y|`, which is always enough.
    pub w_size: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    /// Maximum TV between the induced `Q_XY` and `π` for a feasible answer.
    pub feas_tol: f64,
    pub mu_start: f64,
    pub mu_max: f64,
    pub max_outer: usize,
    pub inner_iter: usize,
}

impl Default for CiOptions {
    fn default() -> Self {
        CiOptions {
            w_size: None,
            restarts: 64,
            seed: 0x5eed,
            feas_tol: 1e-8,
            mu_start: 1e2,
            mu_max: 1e6,
            max_outer: 40,
            inner_iter: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiSolution {
    pub value: f64,
    pub argmin: MarkovCoupling,
    /// TV between the argmin's `(X,Y)` marginal and `π`.
    pub constraint_residual: f64,
    pub restarts_used: usize,
    /// False when no restart reached the feasibility tolerance; the returned
    /// coupling is then the least infeasible one.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Objective {
    MutualInformation,
    /// `Σ_w Q_W(w) D_{1+s}(Q_{X|W=w} Q_{Y|W=w} ‖ π)`, summed over `supp(π)`.
    Renyi(f64),
}

struct Problem<'a> {
    pi: &'a [f64],
    h_pi: f64,
    nw: usize,
    nx: usize,
    ny: usize,
    objective: Objective,
}

struct Scratch {
    qw: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    qxy: Vec<f64>,
    gq: Vec<f64>,
    ga: Vec<f64>,
    gb: Vec<f64>,
    h: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn n_params(&self) -> usize {
        self.nw * (1 + self.nx + self.ny)
    }

    fn scratch(&self) -> Scratch {
        let (nw, nx, ny) = (self.nw, self.nx, self.ny);
        Scratch {
            qw: vec![0.0; nw],
            a: vec![0.0; nw * nx],
            b: vec![0.0; nw * ny],
            qxy: vec![0.0; nx * ny],
            gq: vec![0.0; nw],
            ga: vec![0.0; nw * nx],
            gb: vec![0.0; nw * ny],
            h: vec![0.0; nx * ny],
        }
    }

    fn forward(&self, z: &[f64], sc: &mut Scratch) {
        let (nw, nx, ny) = (self.nw, self.nx, self.ny);
        softmax_into(&z[..nw], &mut sc.qw);
        let za = &z[nw..nw + nw * nx];
        let zb = &z[nw + nw * nx..];
        for w in 0..nw {
            softmax_into(&za[w * nx..(w + 1) * nx], &mut sc.a[w * nx..(w + 1) * nx]);
            softmax_into(&zb[w * ny..(w + 1) * ny], &mut sc.b[w * ny..(w + 1) * ny]);
        }
        sc.qxy.iter_mut().for_each(|v| *v = 0.0);
        for w in 0..nw {
            for x in 0..nx {
                let wa = sc.qw[w] * sc.a[w * nx + x];
                for y in 0..ny {
                    sc.qxy[x * ny + y] += wa * sc.b[w * ny + y];
                }
            }
        }
    }

    /// Objective value and its gradient with respect to the probabilities.
    fn objective_and_partials(&self, sc: &mut Scratch) -> f64 {
        let (nw, nx, ny) = (self.nw, self.nx, self.ny);
        match self.objective {
            Objective::MutualInformation => {
                // On the feasible set I(XY;W) = H(π) - H(XY|W), and H(XY|W)
                // splits over the two legs. Dropping H(Q_XY) in favour of
                // the constant H(π) removes the pull towards collapsing Q_XY.
                let mut value = self.h_pi;
                for w in 0..nw {
                    let a = &sc.a[w * nx..(w + 1) * nx];
                    let b = &sc.b[w * ny..(w + 1) * ny];
                    let own: f64 = a.iter().map(|&v| xlogx(v)).sum::<f64>() + b.iter().map(|&v| xlogx(v)).sum::<f64>();
                    value += sc.qw[w] * own;
                    sc.gq[w] = own;
                    for x in 0..nx {
                        sc.ga[w * nx + x] = if a[x] > 0.0 { sc.qw[w] * (a[x].ln() + 1.0) } else { 0.0 };
                    }
                    for y in 0..ny {
                        sc.gb[w * ny + y] = if b[y] > 0.0 { sc.qw[w] * (b[y].ln() + 1.0) } else { 0.0 };
                    }
                }
                value
            }
            Objective::Renyi(s) => {
                let mut value = 0.0;
                for w in 0..nw {
                    let a = &sc.a[w * nx..(w + 1) * nx];
                    let b = &sc.b[w * ny..(w + 1) * ny];
                    // t(x,y) = a^{1+s} b^{1+s} π^{-s}
                    let mut total = 0.0;
                    let mut ta = vec![0.0; nx];
                    let mut tb = vec![0.0; ny];
                    for x in 0..nx {
                        for y in 0..ny {
                            let p = self.pi[x * ny + y];
                            if p <= 0.0 || a[x] <= 0.0 || b[y] <= 0.0 {
                                continue;
                            }
                            let t = ((1.0 + s) * (a[x].ln() + b[y].ln()) - s * p.ln()).exp();
                            total += t;
                            ta[x] += t;
                            tb[y] += t;
                        }
                    }
                    if total <= 0.0 {
                        return f64::INFINITY;
                    }
                    let d = total.ln() / s;
                    value += sc.qw[w] * d;
                    sc.gq[w] = d;
                    let k = sc.qw[w] * (1.0 + s) / (s * total);
                    for x in 0..nx {
                        sc.ga[w * nx + x] = if a[x] > 0.0 { k * ta[x] / a[x] } else { 0.0 };
                    }
                    for y in 0..ny {
                        sc.gb[w * ny + y] = if b[y] > 0.0 { k * tb[y] / b[y] } else { 0.0 };
                    }
                }
                value
            }
        }
    }

    /// Augmented Lagrangian `f + Σ λ g + (μ/2) Σ g²` with `g = Q_XY - π`,
    /// gradient written with respect to the logits.
    fn lagrangian(&self, z: &[f64], lambda: &[f64], mu: f64, grad: &mut [f64], sc: &mut Scratch) -> f64 {
        let (nw, nx, ny) = (self.nw, self.nx, self.ny);
        self.forward(z, sc);
        let mut value = self.objective_and_partials(sc);
        if !value.is_finite() {
            return value;
        }
        for i in 0..nx * ny {
            let g = sc.qxy[i] - self.pi[i];
            value += lambda[i] * g + 0.5 * mu * g * g;
            sc.h[i] = lambda[i] + mu * g;
        }
        for w in 0..nw {
            let a = &sc.a[w * nx..(w + 1) * nx];
            let b = &sc.b[w * ny..(w + 1) * ny];
            let mut tq = 0.0;
            for x in 0..nx {
                let mut row = 0.0;
                for y in 0..ny {
                    row += sc.h[x * ny + y] * b[y];
                }
                tq += a[x] * row;
                sc.ga[w * nx + x] += sc.qw[w] * row;
            }
            for y in 0..ny {
                let mut col = 0.0;
                for x in 0..nx {
                    col += sc.h[x * ny + y] * a[x];
                }
                sc.gb[w * ny + y] += sc.qw[w] * col;
            }
            sc.gq[w] += tq;
        }
        softmax_backward(&sc.qw, &sc.gq, &mut grad[..nw]);
        let (ga_out, gb_out) = grad[nw..].split_at_mut(nw * nx);
        for w in 0..nw {
            softmax_backward(&sc.a[w * nx..(w + 1) * nx], &sc.ga[w * nx..(w + 1) * nx], &mut ga_out[w * nx..(w + 1) * nx]);
            softmax_backward(&sc.b[w * ny..(w + 1) * ny], &sc.gb[w * ny..(w + 1) * ny], &mut gb_out[w * ny..(w + 1) * ny]);
        }
        value
    }

    fn coupling(&self, z: &[f64]) -> MarkovCoupling {
        let mut sc = self.scratch();
        self.forward(z, &mut sc);
        let (nx, ny) = (self.nx, self.ny);
        let renorm = |v: &[f64]| {
            let t: f64 = v.iter().sum();
            v.iter().map(|x| x / t).collect::<Vec<f64>>()
        };
        let qw = FinitePmf::new(renorm(&sc.qw)).expect("softmax output is a pmf");
        let xs = CondPmf::new(sc.a.chunks(nx).map(renorm).collect()).expect("softmax rows");
        let ys = CondPmf::new(sc.b.chunks(ny).map(renorm).collect()).expect("softmax rows");
        MarkovCoupling::new(qw, xs, ys).expect("consistent shapes")
    }

    fn objective_value(&self, c: &MarkovCoupling) -> f64 {
        match self.objective {
            Objective::MutualInformation => c.mutual_information_xy_w(),
            Objective::Renyi(s) => renyi_objective(c, self.pi, s),
        }
    }

    fn random_start<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n_params())
            .map(|_| {
                let e: f64 = rng.sample(Exp1);
                e.max(1e-300).ln()
            })
            .collect()
    }

    fn copy_start(&self) -> Option<Vec<f64>> {
        let (nw, nx, ny) = (self.nw, self.nx, self.ny);
        if nw < nx * ny {
            return None;
        }
        let mut z = vec![FLOOR_LOGIT; self.n_params()];
        for w in 0..nx * ny {
            let p = self.pi[w];
            z[w] = if p > 0.0 { p.ln() } else { FLOOR_LOGIT };
            let (x, y) = (w / ny, w % ny);
            z[nw + w * nx + x] = 0.0;
            z[nw + nw * nx + w * ny + y] = 0.0;
        }
        // extra W symbols beyond |X||Y| stay at the floor
        Some(z)
    }

    fn solve_from(&self, mut z: Vec<f64>, opts: &CiOptions) -> (MarkovCoupling, f64, f64) {
        let m = self.nx * self.ny;
        let mut lambda = vec![0.0; m];
        let mut mu = opts.mu_start;
        let inner = LbfgsOptions { max_iter: opts.inner_iter, grad_tol: 1e-11, f_tol: 1e-15, ..Default::default() };
        let mut sc = self.scratch();
        let mut last = f64::INFINITY;
        for _ in 0..opts.max_outer {
            let res = lbfgs(|x, g| self.lagrangian(x, &lambda, mu, g, &mut sc), z, &inner);
            z = res.x;
            self.forward(&z, &mut sc);
            for i in 0..m {
                lambda[i] += mu * (sc.qxy[i] - self.pi[i]);
            }
            let residual = tv(&sc.qxy, self.pi).unwrap_or(f64::INFINITY);
            let value = self.objective_and_partials(&mut sc);
            let settled = (value - last).abs() < 1e-12;
            last = value;
            if residual <= 0.05 * opts.feas_tol && settled && mu >= opts.mu_max {
                break;
            }
            mu = (mu * 10.0).min(opts.mu_max);
        }
        let c = self.coupling(&z);
        let residual = tv(c.xy_marginal().mass(), self.pi).unwrap_or(f64::INFINITY);
        let value = self.objective_value(&c);
        (c, value, residual)
    }
}

fn renyi_objective(c: &MarkovCoupling, pi: &[f64], s: f64) -> f64 {
    let (nx, ny) = (c.x_size(), c.y_size());
    let mut value = 0.0;
    for w in 0..c.w_size() {
        let qw = c.q_w.get(w);
        if qw <= 0.0 {
            continue;
        }
        let mut total = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                let p = pi[x * ny + y];
                let ab = c.q_x_given_w.get(w, x) * c.q_y_given_w.get(w, y);
                if p > 0.0 && ab > 0.0 {
                    total += ((1.0 + s) * ab.ln() - s * p.ln()).exp();
                }
            }
        }
        value += qw * total.ln() / s;
    }
    value
}

fn check_target(pi: &JointPmf) -> Result<(usize, usize)> {
    if pi.n_axes() != 2 {
        return Err(Error::config("common information needs a two-axis target"));
    }
    Ok((pi.dims()[0], pi.dims()[1]))
}

fn solve(pi: &JointPmf, objective: Objective, opts: &CiOptions) -> Result<CiSolution> {
    let (nx, ny) = check_target(pi)?;
    if opts.restarts == 0 {
        return Err(Error::config("at least one restart is required"));
    }
    let nw = opts.w_size.unwrap_or(nx * ny);
    if nw == 0 {
        return Err(Error::config("W alphabet must be nonempty"));
    }
    let prob = Problem { pi: pi.mass(), h_pi: pi.entropy(), nw, nx, ny, objective };
    let copy = prob.copy_start();
    let runs: Vec<(MarkovCoupling, f64, f64)> = (0..opts.restarts)
        .into_par_iter()
        .map(|k| {
            let z0 = match (k, &copy) {
                (0, Some(z)) => z.clone(),
                _ => prob.random_start(&mut rng::stream(opts.seed, 0, k as u64)),
            };
            prob.solve_from(z0, opts)
        })
        .collect();
    Ok(pick_best(runs, opts.feas_tol))
}

/// Feasible minimum, ties to the lowest restart index; if nothing is
/// feasible, the least infeasible run.
fn pick_best(runs: Vec<(MarkovCoupling, f64, f64)>, feas_tol: f64) -> CiSolution {
    let restarts_used = runs.len();
    let mut best: Option<usize> = None;
    for (k, r) in runs.iter().enumerate() {
        if r.2 <= feas_tol && r.1.is_finite() && best.is_none_or(|b| r.1 < runs[b].1) {
            best = Some(k);
        }
    }
    let converged = best.is_some();
    let idx = best.unwrap_or_else(|| {
        (0..runs.len()).fold(0, |b, k| if runs[k].2 < runs[b].2 { k } else { b })
    });
    let (argmin, value, constraint_residual) = runs.into_iter().nth(idx).expect("nonempty runs");
    CiSolution { value, argmin, constraint_residual, restarts_used, converged }
}

/// `C_Wyner(X;Y) = min I(XY;W)` subject to `Q_XY = π` and `X - W - Y`.
pub fn wyner_ci(pi: &JointPmf, opts: &CiOptions) -> Result<CiSolution> {
    solve(pi, Objective::MutualInformation, opts)
}

/// Upper bound `min Σ_w Q_W(w) D_{1+s}(Q_{X|W=w} Q_{Y|W=w} ‖ π)` over the same
/// feasible set, `s ∈ (0, 1]`.
pub fn renyi_ci_upper(pi: &JointPmf, s: f64, opts: &CiOptions) -> Result<CiSolution> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::config(format!("s = {s} outside (0, 1]")));
    }
    solve(pi, Objective::Renyi(s), opts)
}

/// Brute-force common information of a binary pair with binary `W`.
///
/// Parameterizes `Q_W(0) = q` and `P(X=1|W=0) = a0`; the `X`-marginal fixes
/// `a1`, and the two remaining constraints are linear in
/// `(P(Y=1|W=0), P(Y=1|W=1))`, so every grid point is exactly feasible.
/// A coarse `grid × grid` sweep is followed by repeated zooms around the best
/// cell.
pub fn wyner_ci_oracle(pi: &JointPmf, grid: usize) -> Result<f64> {
    if pi.dims() != [2, 2] {
        return Err(Error::config("oracle handles 2x2 targets only"));
    }
    if grid < 3 {
        return Err(Error::config("oracle grid needs at least 3 points per axis"));
    }
    let m = pi.mass();
    let px1 = m[2] + m[3];
    let py1 = m[1] + m[3];
    let p11 = m[3];

    let eval = |q: f64, a0: f64| -> Option<f64> {
        if !(q > 0.0 && q < 1.0) || !(0.0..=1.0).contains(&a0) {
            return None;
        }
        let a1 = (px1 - q * a0) / (1.0 - q);
        if !(-1e-12..=1.0 + 1e-12).contains(&a1) {
            return None;
        }
        let a1 = a1.clamp(0.0, 1.0);
        let det = q * (1.0 - q) * (a1 - a0);
        let (b0, b1) = if det.abs() < 1e-14 {
            // X independent of W: feasible only for a product target, and then
            // b0 = b1 makes W independent of everything
            if (p11 - a0 * py1).abs() > 1e-12 {
                return None;
            }
            (py1, py1)
        } else {
            // q b0 + (1-q) b1 = py1 ; q a0 b0 + (1-q) a1 b1 = p11
            let b0 = (py1 * (1.0 - q) * a1 - (1.0 - q) * p11) / det;
            let b1 = (q * p11 - q * a0 * py1) / det;
            (b0, b1)
        };
        if !(-1e-12..=1.0 + 1e-12).contains(&b0) || !(-1e-12..=1.0 + 1e-12).contains(&b1) {
            return None;
        }
        let (b0, b1) = (b0.clamp(0.0, 1.0), b1.clamp(0.0, 1.0));
        let mut info = 0.0;
        for (qw, a, b) in [(q, a0, b0), (1.0 - q, a1, b1)] {
            for x in 0..2 {
                let ax = if x == 1 { a } else { 1.0 - a };
                for y in 0..2 {
                    let by = if y == 1 { b } else { 1.0 - b };
                    let joint = ax * by;
                    let target = m[2 * x + y];
                    if joint > 0.0 && target > 0.0 {
                        info += qw * joint * (joint / target).ln();
                    }
                }
            }
        }
        Some(info.max(0.0))
    };

    let mut best = (f64::INFINITY, 0.5, 0.5);
    let sweep = |q_lo: f64, q_hi: f64, a_lo: f64, a_hi: f64, best: &mut (f64, f64, f64)| {
        for i in 0..grid {
            let q = q_lo + (q_hi - q_lo) * i as f64 / (grid - 1) as f64;
            for j in 0..grid {
                let a0 = a_lo + (a_hi - a_lo) * j as f64 / (grid - 1) as f64;
                if let Some(v) = eval(q, a0) {
                    if v < best.0 {
                        *best = (v, q, a0);
                    }
                }
            }
        }
    };
    let eps_q = 1e-9;
    sweep(eps_q, 1.0 - eps_q, 0.0, 1.0, &mut best);
    if best.0 == f64::INFINITY {
        return Err(Error::domain("oracle grid contains no feasible coupling"));
    }
    let mut half_q = 2.0 / (grid - 1) as f64;
    let mut half_a = 2.0 / (grid - 1) as f64;
    for _ in 0..12 {
        let (_, q, a0) = best;
        sweep(
            (q - half_q).max(eps_q),
            (q + half_q).min(1.0 - eps_q),
            (a0 - half_a).max(0.0),
            (a0 + half_a).min(1.0),
            &mut best,
        );
        half_q *= 4.0 / (grid - 1) as f64;
        half_a *= 4.0 / (grid - 1) as f64;
        half_q = half_q.max(1e-12);
        half_a = half_a.max(1e-12);
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn quick() -> CiOptions {
        CiOptions { restarts: 16, ..Default::default() }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pi = fixtures::dsbs(0.1).unwrap();
        for objective in [Objective::MutualInformation, Objective::Renyi(0.7)] {
            let prob = Problem { pi: pi.mass(), h_pi: pi.entropy(), nw: 3, nx: 2, ny: 2, objective };
            let mut r = rng::stream(1, 2, 3);
            let z = prob.random_start(&mut r);
            let lambda = vec![0.3, -0.2, 0.1, 0.05];
            let mut sc = prob.scratch();
            let mut g = vec![0.0; z.len()];
            prob.lagrangian(&z, &lambda, 50.0, &mut g, &mut sc);
            for i in 0..z.len() {
                let h = 1e-6;
                let mut zp = z.clone();
                zp[i] += h;
                let mut zm = z.clone();
                zm[i] -= h;
                let mut dummy = vec![0.0; z.len()];
                let fp = prob.lagrangian(&zp, &lambda, 50.0, &mut dummy, &mut sc);
                let fm = prob.lagrangian(&zm, &lambda, 50.0, &mut dummy, &mut sc);
                assert_abs_diff_eq!(g[i], (fp - fm) / (2.0 * h), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn product_source_has_zero_ci() {
        let sol = wyner_ci(&fixtures::product_source(), &quick()).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.value, 0.0, epsilon = 1e-6);
        assert!(sol.constraint_residual <= 1e-8);
    }

    #[test]
    fn copy_source_has_ci_log2() {
        let sol = wyner_ci(&fixtures::copy_source(2), &quick()).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.value, 2f64.ln(), epsilon = 1e-3);
    }

    #[test]
    fn dsbs_matches_closed_form_and_oracle() {
        let pi = fixtures::dsbs(0.1).unwrap();
        let sol = wyner_ci(&pi, &quick()).unwrap();
        let closed = fixtures::dsbs_wyner_ci(0.1);
        let oracle = wyner_ci_oracle(&pi, 401).unwrap();
        assert_abs_diff_eq!(oracle, closed, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.value, oracle, epsilon = 1e-3);
    }

    #[test]
    fn oracle_fixtures() {
        assert_abs_diff_eq!(wyner_ci_oracle(&fixtures::product_source(), 101).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(wyner_ci_oracle(&fixtures::copy_source(2), 101).unwrap(), 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn renyi_upper_dominates() {
        let pi = fixtures::dsbs(0.1).unwrap();
        let ci = wyner_ci(&pi, &quick()).unwrap().value;
        let up = renyi_ci_upper(&pi, 1.0, &quick()).unwrap();
        assert!(up.converged);
        assert!(up.value >= ci - 1e-6, "{} < {}", up.value, ci);
        let prod = renyi_ci_upper(&fixtures::product_source(), 0.5, &quick()).unwrap();
        assert_abs_diff_eq!(prod.value, 0.0, epsilon = 1e-6);
        assert!(renyi_ci_upper(&pi, 1.5, &quick()).is_err());
    }
}
