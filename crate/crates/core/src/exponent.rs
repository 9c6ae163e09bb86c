//! Strong-converse exponent machinery.
//!
//! For a joint `Q_XYU` whose `(X,Y)` marginal lives inside `supp(π)`,
//!
//! ```text
//! ω(x,y|u) = ᾱ(log Q_XY/π + log Q_{XY|U}/(Q_{X|U} Q_{Y|U})) + α log Q_{XY|U}/π
//! Ω(Q)     = -log E_Q[exp(-θ ω)]
//! F(R)     = sup_{α,θ} (min_Q Ω(Q) - θαR) / (1 + (5-3α)θ)
//! ```
//!
//! and `R^(α)(Q) = E_Q[ω]`. Everything is parameterized by softmax logits over
//! the cells `supp(π) × U`, so the support condition holds by construction.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{wyner_ci, CiOptions, CiSolution};
use crate::error::{Error, Result};
use crate::optim::{golden_section, lbfgs, softmax_into, LbfgsOptions};
use crate::prob::{log_sum_exp, JointPmf, MarkovCoupling};
use crate::rng;

const MASS_FLOOR: f64 = 1e-15;

/// A joint `Q_XYU` with `supp(Q_XY) ⊆ supp(π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedJoint {
    joint: JointPmf,
}

impl AugmentedJoint {
    pub fn new(joint: JointPmf, pi: &JointPmf) -> Result<Self> {
        if joint.n_axes() != 3 || pi.n_axes() != 2 || joint.dims()[..2] != *pi.dims() {
            return Err(Error::config("augmented joint must be X×Y×U over the target's alphabets"));
        }
        let nu = joint.dims()[2];
        for (xy, &p) in pi.mass().iter().enumerate() {
            if p <= 0.0 && joint.mass()[xy * nu..(xy + 1) * nu].iter().any(|&m| m > 0.0) {
                return Err(Error::domain("Q_XY puts mass outside supp(π)"));
            }
        }
        Ok(AugmentedJoint { joint })
    }

    /// `Q_XYU(x,y,u) = Q_W(u) Q_{X|W}(x|u) Q_{Y|W}(y|u)`, with mass outside
    /// `supp(π)` removed and the remainder renormalized.
    pub fn from_coupling(c: &MarkovCoupling, pi: &JointPmf) -> Result<Self> {
        let wxy = c.induced_joint();
        let (nw, nx, ny) = (c.w_size(), c.x_size(), c.y_size());
        if pi.dims() != [nx, ny] {
            return Err(Error::config("coupling and target disagree on alphabets"));
        }
        let mut mass = vec![0.0; nx * ny * nw];
        for x in 0..nx {
            for y in 0..ny {
                if pi.get(&[x, y]) <= 0.0 {
                    continue;
                }
                for u in 0..nw {
                    mass[(x * ny + y) * nw + u] = wxy.get(&[u, x, y]);
                }
            }
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("coupling has no mass inside supp(π)"));
        }
        mass.iter_mut().for_each(|m| *m /= total);
        let joint = JointPmf::new(vec![nx, ny, nw], mass)?;
        AugmentedJoint::new(joint, pi)
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    pub fn u_size(&self) -> usize {
        self.joint.dims()[2]
    }
}

/// A point `(α, θ)` of the exponent's outer supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPoint {
    pub alpha: f64,
    pub theta: f64,
}

impl ExponentPoint {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::config(format!("invalid exponent point α = {alpha}, θ = {theta}")));
        }
        Ok(ExponentPoint { alpha, theta })
    }
}

/// Marginals of a dense `X×Y×U` array.
struct Marginals {
    xy: Vec<f64>,
    u: Vec<f64>,
    xu: Vec<f64>,
    yu: Vec<f64>,
}

fn marginals(q: &[f64], nx: usize, ny: usize, nu: usize) -> Marginals {
    let mut m = Marginals { xy: vec![0.0; nx * ny], u: vec![0.0; nu], xu: vec![0.0; nx * nu], yu: vec![0.0; ny * nu] };
    for x in 0..nx {
        for y in 0..ny {
            for u in 0..nu {
                let v = q[(x * ny + y) * nu + u];
                m.xy[x * ny + y] += v;
                m.u[u] += v;
                m.xu[x * nu + u] += v;
                m.yu[y * nu + u] += v;
            }
        }
    }
    m
}

fn omega_raw(q: &[f64], m: &Marginals, pi: &[f64], alpha: f64, x: usize, y: usize, u: usize, ny: usize, nu: usize) -> f64 {
    let ab = 1.0 - alpha;
    let xy = x * ny + y;
    q[xy * nu + u].ln() - pi[xy].ln() + ab * m.xy[xy].ln() + (ab - alpha) * m.u[u].ln()
        - ab * m.xu[x * nu + u].ln()
        - ab * m.yu[y * nu + u].ln()
}

/// `ω^(α)_Q(x,y|u)`; defined on `supp(Q)` only.
pub fn omega(q: &AugmentedJoint, pi: &JointPmf, alpha: f64, x: usize, y: usize, u: usize) -> Result<f64> {
    let [nx, ny, nu] = [q.joint.dims()[0], q.joint.dims()[1], q.joint.dims()[2]];
    if x >= nx || y >= ny || u >= nu {
        return Err(Error::domain("symbol outside the alphabet"));
    }
    if q.joint.get(&[x, y, u]) <= 0.0 {
        return Err(Error::domain(format!("ω is undefined outside supp(Q): ({x},{y},{u})")));
    }
    let m = marginals(q.joint.mass(), nx, ny, nu);
    Ok(omega_raw(q.joint.mass(), &m, pi.mass(), alpha, x, y, u, ny, nu))
}

/// `Ω^(α,θ)(Q) = -log E_Q[exp(-θ ω)]`, the expectation running over `supp(Q)`.
pub fn big_omega_q(q: &AugmentedJoint, pi: &JointPmf, pt: ExponentPoint) -> f64 {
    if pt.theta == 0.0 {
        return 0.0;
    }
    let [nx, ny, nu] = [q.joint.dims()[0], q.joint.dims()[1], q.joint.dims()[2]];
    let mass = q.joint.mass();
    let m = marginals(mass, nx, ny, nu);
    let mut cells = Vec::with_capacity(mass.len());
    for x in 0..nx {
        for y in 0..ny {
            for u in 0..nu {
                let v = mass[(x * ny + y) * nu + u];
                if v > 0.0 {
                    cells.push((v, omega_raw(mass, &m, pi.mass(), pt.alpha, x, y, u, ny, nu)));
                }
            }
        }
    }
    let c: f64 = cells.iter().map(|(v, w)| v * w).sum();
    let max_arg = cells.iter().map(|(_, w)| -pt.theta * (w - c)).fold(f64::NEG_INFINITY, f64::max);
    if max_arg < 1.0 {
        let shifted: f64 = cells.iter().map(|(v, w)| v * (-pt.theta * (w - c)).exp_m1()).sum();
        pt.theta * c - shifted.ln_1p()
    } else {
        let terms: Vec<f64> = cells.iter().map(|(v, w)| v.ln() - pt.theta * (w - c)).collect();
        pt.theta * c - log_sum_exp(&terms)
    }
}

/// `R^(α)(Q) = ᾱ(D(Q_XY‖π) + D(Q_{XY|U}‖Q_{X|U}Q_{Y|U}|Q_U)) + α D(Q_{XY|U}‖π|Q_U)`,
/// evaluated term by term from the relative entropies.
pub fn r_alpha_q(q: &AugmentedJoint, pi: &JointPmf, alpha: f64) -> f64 {
    let [nx, ny, nu] = [q.joint.dims()[0], q.joint.dims()[1], q.joint.dims()[2]];
    let mass = q.joint.mass();
    let m = marginals(mass, nx, ny, nu);
    let mut d_xy = 0.0;
    for (i, &v) in m.xy.iter().enumerate() {
        if v > 0.0 {
            d_xy += v * (v / pi.mass()[i]).ln();
        }
    }
    // conditional mutual information I(X;Y|U) and D(Q_{XY|U} ‖ π | Q_U)
    let mut cmi = 0.0;
    let mut d_cond = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            for u in 0..nu {
                let v = mass[(x * ny + y) * nu + u];
                if v <= 0.0 {
                    continue;
                }
                cmi += v * (v * m.u[u] / (m.xu[x * nu + u] * m.yu[y * nu + u])).ln();
                d_cond += v * (v / (m.u[u] * pi.mass()[x * ny + y])).ln();
            }
        }
    }
    (1.0 - alpha) * (d_xy + cmi) + alpha * d_cond
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentOptions {
    /// Size of the auxiliary alphabet; `None` means `|X||Y|`.
    pub u_size: Option<usize>,
    /// Restarts of every inner minimization over `Q_XYU`.
    pub restarts: usize,
    pub seed: u64,
    /// Finite stand-in for the unbounded `θ` range.
    pub theta_max: f64,
    pub theta_min: f64,
    pub alpha_points: usize,
    pub theta_points: usize,
    /// Width at which the coordinatewise golden-section refinement stops.
    pub refine_tol: f64,
    pub refine_rounds: usize,
    pub inner_iter: usize,
    pub ci: CiOptions,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        ExponentOptions {
            u_size: None,
            restarts: 32,
            seed: 0xe4b0,
            theta_max: 10.0,
            theta_min: 1e-4,
            alpha_points: 33,
            theta_points: 65,
            refine_tol: 1e-6,
            refine_rounds: 2,
            inner_iter: 500,
            ci: CiOptions::default(),
        }
    }
}

/// Result of an inner minimization over `Q_XYU`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerMin {
    pub value: f64,
    pub argmin: AugmentedJoint,
    /// False if any restart hit its iteration cap or the early-stop floor.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    /// `Ω^(α,θ)(Q) / θ`
    Omega(ExponentPoint),
    RAlpha(f64),
}

/// Precomputed context for one target `π`: the cell layout, the common
/// information (whose argmin seeds the inner searches) and the options.
pub struct ExponentSolver {
    pi: JointPmf,
    nx: usize,
    ny: usize,
    nu: usize,
    /// `(x, y)` pairs in `supp(π)`.
    pairs: Vec<(usize, usize)>,
    ci: CiSolution,
    lifted: Vec<f64>,
    product: Vec<f64>,
    opts: ExponentOptions,
}

struct Work {
    q: Vec<f64>,
    full: Vec<f64>,
    lz: Vec<f64>,
    qg: Vec<f64>,
}

impl ExponentSolver {
    pub fn new(pi: &JointPmf, opts: ExponentOptions) -> Result<Self> {
        if pi.n_axes() != 2 {
            return Err(Error::config("exponent needs a two-axis target"));
        }
        if opts.restarts == 0 {
            return Err(Error::config("at least one restart is required"));
        }
        let (nx, ny) = (pi.dims()[0], pi.dims()[1]);
        let nu = opts.u_size.unwrap_or(nx * ny);
        let pairs: Vec<(usize, usize)> =
            (0..nx).flat_map(|x| (0..ny).map(move |y| (x, y))).filter(|&(x, y)| pi.get(&[x, y]) > 0.0).collect();
        let ci_opts = CiOptions { w_size: Some(nu), ..opts.ci.clone() };
        let ci = wyner_ci(pi, &ci_opts)?;
        let mut solver = ExponentSolver { pi: pi.clone(), nx, ny, nu, pairs, ci, lifted: vec![], product: vec![], opts };
        let lifted = AugmentedJoint::from_coupling(&solver.ci.argmin, pi)?;
        solver.lifted = solver.logits_of(&lifted);
        let px = pi.marginal_pmf(0)?;
        let py = pi.marginal_pmf(1)?;
        solver.product = solver
            .pairs
            .iter()
            .flat_map(|&(x, y)| std::iter::repeat_n((px.get(x) * py.get(y)).ln(), nu))
            .collect();
        Ok(solver)
    }

    pub fn pi(&self) -> &JointPmf {
        &self.pi
    }

    pub fn ci(&self) -> &CiSolution {
        &self.ci
    }

    pub fn options(&self) -> &ExponentOptions {
        &self.opts
    }

    fn n_cells(&self) -> usize {
        self.pairs.len() * self.nu
    }

    fn logits_of(&self, q: &AugmentedJoint) -> Vec<f64> {
        let floor = MASS_FLOOR.ln();
        self.pairs
            .iter()
            .flat_map(|&(x, y)| (0..self.nu).map(move |u| (x, y, u)))
            .map(|(x, y, u)| {
                let v = q.joint.get(&[x, y, u]);
                if v > MASS_FLOOR {
                    v.ln()
                } else {
                    floor
                }
            })
            .collect()
    }

    fn work(&self) -> Work {
        let n = self.n_cells();
        Work { q: vec![0.0; n], full: vec![0.0; self.nx * self.ny * self.nu], lz: vec![0.0; n], qg: vec![0.0; n] }
    }

    fn scatter(&self, wk: &mut Work) {
        wk.full.iter_mut().for_each(|v| *v = 0.0);
        let nu = self.nu;
        for (k, &(x, y)) in self.pairs.iter().enumerate() {
            let base = (x * self.ny + y) * nu;
            wk.full[base..base + nu].copy_from_slice(&wk.q[k * nu..(k + 1) * nu]);
        }
    }

    fn to_joint(&self, z: &[f64]) -> AugmentedJoint {
        let mut wk = self.work();
        softmax_into(z, &mut wk.q);
        self.scatter(&mut wk);
        let total: f64 = wk.full.iter().sum();
        wk.full.iter_mut().for_each(|v| *v /= total);
        let joint = JointPmf::new(vec![self.nx, self.ny, self.nu], wk.full).expect("softmax output is normalized");
        AugmentedJoint { joint }
    }

    /// Objective and logit gradient for the given target.
    fn eval(&self, target: Target, z: &[f64], grad: &mut [f64], wk: &mut Work) -> f64 {
        let (ny, nu) = (self.ny, self.nu);
        softmax_into(z, &mut wk.q);
        self.scatter(wk);
        let m = marginals(&wk.full, self.nx, ny, nu);
        let pi = self.pi.mass();
        match target {
            Target::RAlpha(alpha) => {
                let mut value = 0.0;
                for (k, &(x, y)) in self.pairs.iter().enumerate() {
                    for u in 0..nu {
                        let i = k * nu + u;
                        let w = if wk.q[i] > 0.0 { omega_raw(&wk.full, &m, pi, alpha, x, y, u, ny, nu) } else { 0.0 };
                        wk.lz[i] = w;
                        value += wk.q[i] * w;
                    }
                }
                // ∂R/∂Q = ω + const, so the logit gradient is Q (ω - E ω)
                for i in 0..wk.q.len() {
                    grad[i] = wk.q[i] * (wk.lz[i] - value);
                }
                value
            }
            Target::Omega(pt) => {
                let (a, th) = (pt.alpha, pt.theta);
                let ab = 1.0 - a;
                // ω into lz, centred at c = E_Q[ω] so that small θ keeps
                // full relative precision through expm1/log1p
                let mut c = 0.0;
                for (k, &(x, y)) in self.pairs.iter().enumerate() {
                    for u in 0..nu {
                        let i = k * nu + u;
                        wk.lz[i] = if wk.q[i] > 0.0 { omega_raw(&wk.full, &m, pi, a, x, y, u, ny, nu) } else { 0.0 };
                        c += wk.q[i] * wk.lz[i];
                    }
                }
                let mut shifted = 0.0;
                let mut log_z = f64::NEG_INFINITY;
                let mut max_arg = f64::NEG_INFINITY;
                for i in 0..wk.q.len() {
                    if wk.q[i] > 0.0 {
                        max_arg = max_arg.max(-th * (wk.lz[i] - c));
                    }
                }
                let value = if max_arg < 1.0 {
                    for i in 0..wk.q.len() {
                        if wk.q[i] > 0.0 {
                            shifted += wk.q[i] * (-th * (wk.lz[i] - c)).exp_m1();
                        }
                    }
                    c - shifted.ln_1p() / th
                } else {
                    let terms: Vec<f64> = (0..wk.q.len())
                        .map(|i| if wk.q[i] > 0.0 { wk.q[i].ln() - th * (wk.lz[i] - c) } else { f64::NEG_INFINITY })
                        .collect();
                    log_z = log_sum_exp(&terms);
                    c - log_z / th
                };
                let log_norm = if max_arg < 1.0 { shifted.ln_1p() } else { log_z };
                for i in 0..wk.q.len() {
                    wk.lz[i] = if wk.q[i] > 0.0 {
                        wk.q[i].ln() - th * (wk.lz[i] - c) - log_norm
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                // tilted weights ρ and their marginals
                let mut r_xy = vec![0.0; self.nx * ny];
                let mut r_u = vec![0.0; nu];
                let mut r_xu = vec![0.0; self.nx * nu];
                let mut r_yu = vec![0.0; ny * nu];
                for (k, &(x, y)) in self.pairs.iter().enumerate() {
                    for u in 0..nu {
                        let rho = wk.lz[k * nu + u].exp();
                        wk.lz[k * nu + u] = rho;
                        r_xy[x * ny + y] += rho;
                        r_u[u] += rho;
                        r_xu[x * nu + u] += rho;
                        r_yu[y * nu + u] += rho;
                    }
                }
                // Q(t) ∂(-log Z)/∂Q(t), divided by θ
                let mut mean = 0.0;
                for (k, &(x, y)) in self.pairs.iter().enumerate() {
                    for u in 0..nu {
                        let i = k * nu + u;
                        let qi = wk.q[i];
                        let t = (1.0 - th) * wk.lz[i]
                            + if qi > 0.0 {
                                th * qi
                                    * (-ab * r_xy[x * ny + y] / m.xy[x * ny + y] - (ab - a) * r_u[u] / m.u[u]
                                        + ab * r_xu[x * nu + u] / m.xu[x * nu + u]
                                        + ab * r_yu[y * nu + u] / m.yu[y * nu + u])
                            } else {
                                0.0
                            };
                        wk.qg[i] = -t / th;
                        mean += wk.qg[i];
                    }
                }
                for i in 0..wk.q.len() {
                    grad[i] = wk.qg[i] - wk.q[i] * mean;
                }
                value
            }
        }
    }

    fn starts(&self, cell_id: u64, warm: Option<&[f64]>, count: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        out.push(self.lifted.clone());
        if count > 1 {
            out.push(self.product.clone());
        }
        if let Some(w) = warm {
            if out.len() < count {
                out.push(w.to_vec());
            }
        }
        let mut k = 0u64;
        while out.len() < count {
            let mut r = rng::stream(self.opts.seed, cell_id, k);
            out.push((0..self.n_cells()).map(|_| r.sample::<f64, _>(Exp1).max(1e-300).ln()).collect());
            k += 1;
        }
        out
    }

    /// Minimizes the target from every start; returns `(value, logits, converged)`
    /// for the best (lowest value, lowest start index on ties).
    fn minimize(&self, target: Target, starts: Vec<Vec<f64>>, stop_below: f64) -> (f64, Vec<f64>, bool) {
        let opts = LbfgsOptions {
            max_iter: self.opts.inner_iter,
            grad_tol: 1e-12,
            f_tol: 1e-15,
            stop_below,
            ..Default::default()
        };
        let runs: Vec<_> = starts
            .into_par_iter()
            .map(|z0| {
                let mut wk = self.work();
                let m = lbfgs(|z, g| self.eval(target, z, g, &mut wk), z0, &opts);
                (m.value, m.x, m.converged)
            })
            .collect();
        let all_converged = runs.iter().all(|r| r.2);
        let best = (0..runs.len())
            .filter(|&k| runs[k].0.is_finite())
            .fold(None, |b: Option<usize>, k| match b {
                Some(j) if runs[j].0 <= runs[k].0 => Some(j),
                _ => Some(k),
            })
            .unwrap_or(0);
        let (v, x, _) = runs.into_iter().nth(best).expect("nonempty");
        (v, x, all_converged)
    }

    fn cell_id(alpha: f64, theta: f64) -> u64 {
        alpha.to_bits() ^ theta.to_bits().rotate_left(29)
    }

    fn omega_min_inner(&self, pt: ExponentPoint, warm: Option<&[f64]>, stop_below: f64) -> (f64, Vec<f64>, bool) {
        if pt.theta == 0.0 {
            return (0.0, self.lifted.clone(), true);
        }
        let starts = self.starts(Self::cell_id(pt.alpha, pt.theta), warm, self.opts.restarts);
        let (v, z, ok) = self.minimize(Target::Omega(pt), starts, stop_below / pt.theta);
        (v * pt.theta, z, ok)
    }

    /// `Ω^(α,θ) = min_{Q ∈ 𝒬} Ω^(α,θ)(Q)`.
    pub fn big_omega_min(&self, pt: ExponentPoint) -> InnerMin {
        let (value, z, converged) = self.omega_min_inner(pt, None, f64::NEG_INFINITY);
        InnerMin { value, argmin: self.to_joint(&z), converged }
    }

    /// `R^(α) = min_{Q ∈ 𝒬} R^(α)(Q)`.
    pub fn r_alpha_min(&self, alpha: f64) -> InnerMin {
        let starts = self.starts(Self::cell_id(alpha, -1.0), None, self.opts.restarts);
        let (value, z, converged) = self.minimize(Target::RAlpha(alpha), starts, f64::NEG_INFINITY);
        InnerMin { value, argmin: self.to_joint(&z), converged }
    }

    /// `sup_α R^(α)/α` over `alpha_grid`.
    pub fn r_sh(&self, alpha_grid: &[f64]) -> Result<RshReport> {
        if alpha_grid.is_empty() || alpha_grid.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::config("α grid must be nonempty and inside (0, 1]"));
        }
        let ratios: Vec<f64> = alpha_grid.iter().map(|&a| self.r_alpha_min(a).value / a).collect();
        let (k, &value) = ratios
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |b, (k, v)| if *v > *b.1 { (k, v) } else { b });
        Ok(RshReport { value, alpha_star: alpha_grid[k], alphas: alpha_grid.to_vec(), ratios })
    }

    /// `F^(α,θ)(R) = (Ω^(α,θ) - θαR) / (1 + (5-3α)θ)`.
    pub fn f_point(&self, rate: f64, pt: ExponentPoint) -> Result<f64> {
        if !(rate >= 0.0) {
            return Err(Error::config(format!("rate {rate} must be nonnegative")));
        }
        let omega = self.big_omega_min(pt).value;
        Ok(f_from_omega(omega, rate, pt))
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        let n = self.opts.alpha_points.max(2);
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    pub fn theta_grid(&self) -> Vec<f64> {
        let n = self.opts.theta_points.max(2);
        let (lo, hi) = (self.opts.theta_min.ln(), self.opts.theta_max.ln());
        (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
    }

    /// `Ω^(α,θ)` on the full `(α, θ)` grid. Rows run in parallel; within a
    /// row each `θ` is warm-started from its predecessor's argmin. Inner
    /// searches stop once `Ω < 0`, since such cells cannot give a positive
    /// exponent at any nonnegative rate.
    pub fn omega_grid(&self) -> OmegaGrid {
        let alphas = self.alpha_grid();
        let thetas = self.theta_grid();
        let rows: Vec<Vec<(f64, Vec<f64>)>> = alphas
            .par_iter()
            .map(|&alpha| {
                let mut row = Vec::with_capacity(thetas.len());
                let mut warm: Option<Vec<f64>> = None;
                for &theta in &thetas {
                    let pt = ExponentPoint { alpha, theta };
                    let (v, z, _) = self.omega_min_inner(pt, warm.as_deref(), 0.0);
                    warm = if v >= 0.0 { Some(z.clone()) } else { None };
                    row.push((v, z));
                }
                row
            })
            .collect();
        let mut values = Vec::with_capacity(alphas.len() * thetas.len());
        let mut argmins = Vec::with_capacity(alphas.len() * thetas.len());
        for row in rows {
            for (v, z) in row {
                values.push(v);
                argmins.push(z);
            }
        }
        OmegaGrid { alphas, thetas, values, argmins }
    }

    /// `F(R)` from a precomputed grid, refined coordinatewise by
    /// golden-section search around the best grid cell.
    pub fn f_rate_with_grid(&self, grid: &OmegaGrid, rate: f64) -> Result<FRate> {
        if !(rate >= 0.0) {
            return Err(Error::config(format!("rate {rate} must be nonnegative")));
        }
        let nt = grid.thetas.len();
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (k, &omega) in grid.values.iter().enumerate() {
            let pt = ExponentPoint { alpha: grid.alphas[k / nt], theta: grid.thetas[k % nt] };
            let f = f_from_omega(omega, rate, pt);
            if f > best.0 {
                best = (f, k);
            }
        }
        let (grid_value, k) = best;
        let (ia, it) = (k / nt, k % nt);
        let mut alpha = grid.alphas[ia];
        let mut theta = grid.thetas[it];
        let mut value = grid_value;
        if grid_value > 0.0 {
            let warm = grid.argmins[k].clone();
            let eval = |a: f64, t: f64| -> f64 {
                let pt = ExponentPoint { alpha: a.clamp(0.0, 1.0), theta: t };
                let (omega, _, _) = self.omega_min_inner(pt, Some(&warm), f64::NEG_INFINITY);
                f_from_omega(omega, rate, pt)
            };
            let a_lo = grid.alphas[ia.saturating_sub(1)];
            let a_hi = grid.alphas[(ia + 1).min(grid.alphas.len() - 1)];
            let t_lo = grid.thetas[it.saturating_sub(1)].ln();
            let t_hi = grid.thetas[(it + 1).min(nt - 1)].ln();
            for _ in 0..self.opts.refine_rounds {
                let (a, fa) = golden_section(|a| -eval(a, theta), a_lo, a_hi, self.opts.refine_tol);
                if -fa > value {
                    value = -fa;
                    alpha = a;
                }
                let (lt, ft) = golden_section(|lt| -eval(alpha, lt.exp()), t_lo, t_hi, self.opts.refine_tol);
                if -ft > value {
                    value = -ft;
                    theta = lt.exp();
                }
            }
        }
        Ok(FRate { rate, value: value.max(0.0), raw: value, alpha, theta })
    }

    /// `F(R) = sup_{α,θ} F^(α,θ)(R)`, clamped below at zero.
    pub fn f_rate(&self, rate: f64) -> Result<FRate> {
        let grid = self.omega_grid();
        self.f_rate_with_grid(&grid, rate)
    }

    /// `(1/θ) Ω^(α,θ)` along a list of `θ`, against `R^(α)`.
    pub fn theta_limit_check(&self, alpha: f64, thetas: &[f64]) -> Result<ThetaLimitReport> {
        if thetas.is_empty() || thetas.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::config("θ list must be nonempty and positive"));
        }
        let r_alpha = self.r_alpha_min(alpha).value;
        let scaled: Vec<f64> = thetas
            .iter()
            .map(|&t| self.big_omega_min(ExponentPoint { alpha, theta: t }).value / t)
            .collect();
        let gaps = scaled.iter().map(|v| (v - r_alpha).abs()).collect();
        Ok(ThetaLimitReport { alpha, thetas: thetas.to_vec(), scaled, r_alpha, gaps })
    }
}

pub fn f_from_omega(omega: f64, rate: f64, pt: ExponentPoint) -> f64 {
    if pt.theta == 0.0 {
        return 0.0;
    }
    (omega - pt.theta * pt.alpha * rate) / (1.0 + (5.0 - 3.0 * pt.alpha) * pt.theta)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaGrid {
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    /// Row-major over `(α, θ)`. Entries below zero are only upper bounds.
    pub values: Vec<f64>,
    pub argmins: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FRate {
    pub rate: f64,
    /// `max(raw, 0)`.
    pub value: f64,
    pub raw: f64,
    pub alpha: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RshReport {
    pub value: f64,
    pub alpha_star: f64,
    pub alphas: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaLimitReport {
    pub alpha: f64,
    pub thetas: Vec<f64>,
    /// `(1/θ) Ω^(α,θ)` per entry of `thetas`.
    pub scaled: Vec<f64>,
    pub r_alpha: f64,
    pub gaps: Vec<f64>,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Convenience wrapper: `Ω^(α,θ)` for a one-off target.
pub fn big_omega_min(pi: &JointPmf, pt: ExponentPoint, opts: &ExponentOptions) -> Result<InnerMin> {
    Ok(ExponentSolver::new(pi, opts.clone())?.big_omega_min(pt))
}

pub fn r_alpha_min(pi: &JointPmf, alpha: f64, opts: &ExponentOptions) -> Result<InnerMin> {
    Ok(ExponentSolver::new(pi, opts.clone())?.r_alpha_min(alpha))
}

pub fn r_sh(pi: &JointPmf, alpha_grid: &[f64], opts: &ExponentOptions) -> Result<RshReport> {
    ExponentSolver::new(pi, opts.clone())?.r_sh(alpha_grid)
}

pub fn f_point(pi: &JointPmf, rate: f64, pt: ExponentPoint, opts: &ExponentOptions) -> Result<f64> {
    ExponentSolver::new(pi, opts.clone())?.f_point(rate, pt)
}

pub fn f_rate(pi: &JointPmf, rate: f64, opts: &ExponentOptions) -> Result<FRate> {
    ExponentSolver::new(pi, opts.clone())?.f_rate(rate)
}

pub fn theta_limit_check(pi: &JointPmf, alpha: f64, thetas: &[f64], opts: &ExponentOptions) -> Result<ThetaLimitReport> {
    ExponentSolver::new(pi, opts.clone())?.theta_limit_check(alpha, thetas)
}

/// Uniform-in-`U` lift `π ⊗ Unif(U)`.
pub fn product_lift(pi: &JointPmf, nu: usize) -> AugmentedJoint {
    let mass: Vec<f64> = pi.mass().iter().flat_map(|&p| std::iter::repeat_n(p / nu as f64, nu)).collect();
    let dims = vec![pi.dims()[0], pi.dims()[1], nu];
    AugmentedJoint { joint: JointPmf::new(dims, mass).expect("normalized") }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::prob::mutual_information;
    use approx::assert_abs_diff_eq;

    fn random_q(seed: u64, pi: &JointPmf, nu: usize) -> AugmentedJoint {
        let mut r = rng::stream(seed, 7, 7);
        let mass: Vec<f64> = pi
            .mass()
            .iter()
            .flat_map(|&p| (0..nu).map(move |_| p))
            .map(|p| if p > 0.0 { r.sample::<f64, _>(Exp1) } else { 0.0 })
            .collect();
        let t: f64 = mass.iter().sum();
        let mut mass: Vec<f64> = mass.iter().map(|v| v / t).collect();
        let last = mass.iter().rposition(|&v| v > 0.0).unwrap();
        mass[last] = 1.0 - mass.iter().enumerate().filter(|&(i, _)| i != last).map(|(_, v)| v).sum::<f64>();
        let dims = vec![pi.dims()[0], pi.dims()[1], nu];
        AugmentedJoint::new(JointPmf::new(dims, mass).unwrap(), pi).unwrap()
    }

    fn quick() -> ExponentOptions {
        ExponentOptions { restarts: 8, ci: CiOptions { restarts: 8, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn omega_vanishes_on_product_lift() {
        let pi = fixtures::product_source();
        let q = product_lift(&pi, 4);
        for alpha in [0.0, 0.3, 1.0] {
            for x in 0..2 {
                for y in 0..2 {
                    for u in 0..4 {
                        assert_abs_diff_eq!(omega(&q, &pi, alpha, x, y, u).unwrap(), 0.0, epsilon = 1e-14);
                    }
                }
            }
            for theta in [0.0, 0.5, 3.0] {
                let pt = ExponentPoint::new(alpha, theta).unwrap();
                assert_abs_diff_eq!(big_omega_q(&q, &pi, pt), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn omega_term_by_term() {
        let pi = JointPmf::from_matrix(&[vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap();
        let q = random_q(3, &pi, 4);
        let j = q.joint();
        let g = |x: usize, y: usize, u: usize| j.get(&[x, y, u]);
        let qu = |u: usize| (0..2).flat_map(|x| (0..2).map(move |y| (x, y))).map(|(x, y)| g(x, y, u)).sum::<f64>();
        let qxy = |x: usize, y: usize| (0..4).map(|u| g(x, y, u)).sum::<f64>();
        let qxu = |x: usize, u: usize| g(x, 0, u) + g(x, 1, u);
        let qyu = |y: usize, u: usize| g(0, y, u) + g(1, y, u);
        for alpha in [0.0, 0.25, 1.0] {
            for (x, y, u) in [(0, 0, 0), (1, 0, 2), (1, 1, 3), (0, 1, 1)] {
                let p = pi.get(&[x, y]);
                let cond = g(x, y, u) / qu(u);
                let cx = qxu(x, u) / qu(u);
                let cy = qyu(y, u) / qu(u);
                let expect = (1.0 - alpha) * ((qxy(x, y) / p).ln() + (cond / (cx * cy)).ln()) + alpha * (cond / p).ln();
                assert_abs_diff_eq!(omega(&q, &pi, alpha, x, y, u).unwrap(), expect, epsilon = 1e-12);
                if alpha == 1.0 {
                    assert_abs_diff_eq!(expect, (cond / p).ln(), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn omega_rejects_points_outside_support() {
        let pi = fixtures::copy_source(2);
        let q = random_q(1, &pi, 4);
        assert!(matches!(omega(&q, &pi, 0.5, 0, 1, 0), Err(Error::Domain(_))));
        let bad = JointPmf::new(vec![2, 2, 1], vec![0.25; 4]).unwrap();
        assert!(AugmentedJoint::new(bad, &pi).is_err());
    }

    #[test]
    fn r_alpha_is_expected_omega() {
        let pi = fixtures::dsbs(0.1).unwrap();
        for seed in 0..100 {
            let q = random_q(seed, &pi, 4);
            let alpha = (seed as f64) / 99.0;
            let j = q.joint().mass();
            let mut e = 0.0;
            for x in 0..2 {
                for y in 0..2 {
                    for u in 0..4 {
                        let v = j[(x * 2 + y) * 4 + u];
                        if v > 0.0 {
                            e += v * omega(&q, &pi, alpha, x, y, u).unwrap();
                        }
                    }
                }
            }
            assert_abs_diff_eq!(r_alpha_q(&q, &pi, alpha), e, epsilon = 1e-12);
        }
    }

    #[test]
    fn r_alpha_one_on_markov_lift_is_mutual_information() {
        let c = fixtures::dsbs_wyner_coupling(0.1).unwrap();
        let pi = fixtures::dsbs(0.1).unwrap();
        let q = AugmentedJoint::from_coupling(&c, &pi).unwrap();
        let iu = mutual_information(&q.joint().group(&[0, 1], &[2]).unwrap()).unwrap();
        assert_abs_diff_eq!(r_alpha_q(&q, &pi, 1.0), iu, epsilon = 1e-12);
        assert_abs_diff_eq!(iu, fixtures::dsbs_wyner_ci(0.1), epsilon = 1e-12);
    }

    #[test]
    fn jensen_and_concavity() {
        let pi = fixtures::dsbs(0.1).unwrap();
        for seed in 0..50 {
            let q = random_q(seed, &pi, 4);
            for alpha in [0.0, 0.5, 1.0] {
                let r = r_alpha_q(&q, &pi, alpha);
                let thetas: Vec<f64> = (0..41).map(|i| i as f64 * 0.05).collect();
                let vals: Vec<f64> =
                    thetas.iter().map(|&t| big_omega_q(&q, &pi, ExponentPoint { alpha, theta: t })).collect();
                assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-15);
                for (t, v) in thetas.iter().zip(&vals) {
                    assert!(*v <= t * r + 1e-12, "Jensen fails: {v} > {}", t * r);
                }
                for w in vals.windows(3) {
                    assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let pi = fixtures::dsbs(0.2).unwrap();
        let solver = ExponentSolver::new(&pi, quick()).unwrap();
        let mut r = rng::stream(9, 9, 9);
        let z: Vec<f64> = (0..solver.n_cells()).map(|_| r.sample::<f64, _>(Exp1).ln()).collect();
        for target in [
            Target::RAlpha(0.3),
            Target::Omega(ExponentPoint { alpha: 0.3, theta: 0.7 }),
            Target::Omega(ExponentPoint { alpha: 1.0, theta: 2.5 }),
        ] {
            let mut wk = solver.work();
            let mut g = vec![0.0; z.len()];
            solver.eval(target, &z, &mut g, &mut wk);
            for i in 0..z.len() {
                let h = 1e-6;
                let mut zp = z.clone();
                zp[i] += h;
                let mut zm = z.clone();
                zm[i] -= h;
                let mut d = vec![0.0; z.len()];
                let fp = solver.eval(target, &zp, &mut d, &mut wk);
                let fm = solver.eval(target, &zm, &mut d, &mut wk);
                assert_abs_diff_eq!(g[i], (fp - fm) / (2.0 * h), epsilon = 1e-7);
            }
            // the scaled objective agrees with the public evaluator
            if let Target::Omega(pt) = target {
                let q = solver.to_joint(&z);
                let v = solver.eval(target, &z, &mut g, &mut wk);
                assert_abs_diff_eq!(v * pt.theta, big_omega_q(&q, &pi, pt), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inner_minima_basic_cases() {
        let pi = fixtures::product_source();
        let s = ExponentSolver::new(&pi, quick()).unwrap();
        assert_eq!(s.big_omega_min(ExponentPoint { alpha: 0.4, theta: 0.0 }).value, 0.0);
        for (a, t) in [(0.0, 0.1), (0.5, 0.3), (1.0, 0.05)] {
            let v = s.big_omega_min(ExponentPoint { alpha: a, theta: t }).value;
            assert!(v <= 1e-9, "{v}");
        }
        assert!(s.r_alpha_min(0.5).value.abs() < 1e-8);
    }

    #[test]
    fn f_point_trivial_cases() {
        let pi = fixtures::dsbs(0.1).unwrap();
        let s = ExponentSolver::new(&pi, quick()).unwrap();
        assert_eq!(s.f_point(0.3, ExponentPoint { alpha: 0.7, theta: 0.0 }).unwrap(), 0.0);
        let pt = ExponentPoint { alpha: 0.0, theta: 0.05 };
        let omega = s.big_omega_min(pt).value;
        assert_abs_diff_eq!(s.f_point(0.0, pt).unwrap(), omega / 1.25, epsilon = 1e-9);
        assert_abs_diff_eq!(s.f_point(5.0, pt).unwrap(), omega / 1.25, epsilon = 1e-9);
        assert!(s.f_point(-1.0, pt).is_err());
    }

    #[test]
    fn copy_source_lift_gives_alpha_log2() {
        // U = X = Y uniform: ω ≡ α log 2
        let pi = fixtures::copy_source(2);
        let c = crate::prob::MarkovCoupling::copy_of(&pi).unwrap();
        let q = AugmentedJoint::from_coupling(&c.pruned(0.0).unwrap(), &pi).unwrap();
        let q4 = {
            let mut m = vec![0.0; 16];
            let j = q.joint();
            for x in 0..2 {
                for y in 0..2 {
                    for u in 0..j.dims()[2] {
                        m[(x * 2 + y) * 4 + u] = j.get(&[x, y, u]);
                    }
                }
            }
            AugmentedJoint::new(JointPmf::new(vec![2, 2, 4], m).unwrap(), &pi).unwrap()
        };
        for alpha in [0.2, 0.5, 0.9] {
            assert_abs_diff_eq!(r_alpha_q(&q4, &pi, alpha), alpha * 2f64.ln(), epsilon = 1e-12);
            let pt = ExponentPoint { alpha, theta: 0.8 };
            assert_abs_diff_eq!(big_omega_q(&q4, &pi, pt), 0.8 * alpha * 2f64.ln(), epsilon = 1e-12);
        }
    }
}
