//! The acceptance suite: twelve checks with pinned tolerances and runtime
//! limits, shared by `wyner verify` and the `acceptance` test target.

use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use wyner_core::ci::{wyner_ci, wyner_ci_oracle, CiOptions};
use wyner_core::divergence::{renyi, sason_inf, sason_lower_bound, tv, RenyiOrder};
use wyner_core::exponent::{log_grid, ExponentOptions, ExponentSolver, OmegaGrid};
use wyner_core::fixtures;
use wyner_core::prob::{CondPmf, FinitePmf, JointPmf, MarkovCoupling};
use wyner_core::rng::{self, StreamRng};
use wyner_core::synthesis::{
    build_code, estimate_renyi, estimate_tv, oneshot_bound_verify, rate_bound_check, truncation_domination, OneShotMode,
    Truncation,
};
use wyner_core::typicality::{cond_q_min, contyplem_bound, max_cond_defect};
use wyner_core::Result;

use crate::summary::ls_slope;

pub const AXIOM_PAIRS: usize = 1000;
pub const AXIOM_ORDERS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
pub const AXIOM_TOL: f64 = 1e-10;
/// `sason_inf` is a grid search refined by golden section
pub const SASON_INF_TOL: f64 = 1e-7;

pub const CI_PRODUCT_TOL: f64 = 1e-6;
pub const CI_COPY_TOL: f64 = 1e-3;
pub const CI_ORACLE_TOL: f64 = 1e-3;
pub const CI_ORACLE_SOURCES: u64 = 20;
pub const CI_ORACLE_GRID: usize = 401;

pub const RSH_TOL: f64 = 2e-2;
pub const THETA_GAP_TOL: f64 = 1e-2;
pub const THETA_FLOOR: f64 = 1e-9;
pub const F_SIGN_TOL: f64 = 1e-4;

pub const ONESHOT_RANDOM: usize = 100;
pub const ONESHOT_TRIALS: usize = 10_000;

pub const SIGMAS: f64 = 3.0;
pub const REGRESSION_TOL: f64 = 1e-9;

/// Mean exact `D_2` of the untruncated DSBS(0.1) code at `R = 1.2 C` over
/// seeds 0..5, n = 4, 6, 8, 10; frozen from the first run.
pub const FROZEN_ACHIEVABILITY: [f64; 4] = [0.46797828770184957, 0.4862900668758279, 0.40202925043318727, 0.3391163192515819];
pub const ACHIEVABILITY_N: [usize; 4] = [4, 6, 8, 10];
pub const ACHIEVABILITY_SEEDS: u64 = 5;

pub const CONVERSE_N: [usize; 3] = [8, 12, 16];
pub const CONVERSE_SEEDS: u64 = 10;
pub const CONVERSE_SAMPLES: usize = 20_000;
pub const CONVERSE_TRUNCATION: Truncation = Truncation::Typical { eps: 1.0, eps_prime: 0.5 };

/// Criteria that cannot pass as stated; see the README.
pub const KNOWN_INFEASIBLE: &[u8] = &[11];

pub const LIMITS_SECS: [u64; 12] = [10, 120, 300, 300, 900, 120, 120, 60, 600, 900, 120, 3600];

pub const NAMES: [&str; 12] = [
    "divergence axioms",
    "CI correctness",
    "r_sh identity",
    "theta -> 0 limit",
    "exponent sign",
    "one-shot bound",
    "conditional typicality",
    "truncation domination",
    "achievability trend",
    "strong converse",
    "rate bound",
    "reproducibility",
];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<24} {}  ({:.1}s / {}s)  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.limit.as_secs(),
            self.detail
        )
    }
}

/// What the suite needs from its environment.
pub struct VerifyContext {
    /// `wyner` executable, for the reproducibility check
    pub bin: Option<PathBuf>,
    pub plan: PathBuf,
    dsbs: OnceLock<Result<(ExponentSolver, OmegaGrid)>>,
}

impl VerifyContext {
    pub fn new(bin: Option<PathBuf>, plan: PathBuf) -> Self {
        VerifyContext { bin, plan, dsbs: OnceLock::new() }
    }

    fn dsbs_grid(&self) -> Result<&(ExponentSolver, OmegaGrid)> {
        self.dsbs
            .get_or_init(|| {
                let s = ExponentSolver::new(&fixtures::dsbs(0.1)?, ExponentOptions::default())?;
                let g = s.omega_grid();
                Ok((s, g))
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

type Check = std::result::Result<String, String>;

pub fn run_criterion(id: u8, ctx: &VerifyContext) -> Outcome {
    let start = Instant::now();
    let r: Check = match id {
        1 => axioms(),
        2 => ci_correctness(),
        3 => rsh_identity(),
        4 => theta_limit(),
        5 => exponent_sign(ctx),
        6 => oneshot(),
        7 => conditional_typicality(),
        8 => domination(),
        9 => achievability(),
        10 => converse(ctx),
        11 => rate_bound(),
        12 => reproducibility(ctx),
        _ => Err(format!("no criterion {id}")),
    };
    let elapsed = start.elapsed();
    let idx = (id as usize).clamp(1, 12) - 1;
    let limit = Duration::from_secs(LIMITS_SECS[idx]);
    let (mut passed, mut detail) = match r {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if passed && elapsed > limit {
        passed = false;
        detail = format!("over time limit; {detail}");
    }
    Outcome { id, name: NAMES[idx], passed, detail, elapsed, limit }
}

/// Runs every criterion in order, reporting each as it finishes.
pub fn run_all(ctx: &VerifyContext, mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    (1..=12)
        .map(|id| {
            let o = run_criterion(id, ctx);
            report(&o);
            o
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_pmf(r: &mut StreamRng, k: usize, zeros: bool) -> FinitePmf {
    loop {
        let w: Vec<f64> = (0..k)
            .map(|_| if zeros && r.random_bool(1.0 / 7.0) { 0.0 } else { r.random_range(0.01..1.0) })
            .collect();
        if w.iter().sum::<f64>() > 0.0 {
            return FinitePmf::from_weights(&w).expect("positive weights");
        }
    }
}

fn axioms() -> Check {
    let fails: Vec<String> = (0..AXIOM_PAIRS as u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng::stream(1, 1, i);
            let k = r.random_range(2..6);
            let p = random_pmf(&mut r, k, true);
            let q = random_pmf(&mut r, k, false);
            axiom_pair(&p, &q).err().map(|e| format!("pair {i}: {e}"))
        })
        .collect();
    match fails.first() {
        None => Ok(format!("{AXIOM_PAIRS} pairs x {} orders", AXIOM_ORDERS.len())),
        Some(f) => Err(format!("{} pairs failed, first: {f}", fails.len())),
    }
}

fn axiom_pair(p: &FinitePmf, q: &FinitePmf) -> std::result::Result<(), String> {
    let t = tv(p.mass(), q.mass()).map_err(err)?;
    let mut prev = 0.0f64;
    for s in AXIOM_ORDERS {
        let ord = RenyiOrder::new(s).map_err(err)?;
        let d = renyi(p, q, ord).map_err(err)?;
        let same = renyi(q, q, ord).map_err(err)?;
        ensure(d >= -AXIOM_TOL, || format!("s = {s}: D = {d} < 0"))?;
        ensure(same.abs() <= AXIOM_TOL, || format!("s = {s}: D(q||q) = {same}"))?;
        ensure(d >= prev - AXIOM_TOL, || format!("s = {s}: not monotone ({d} < {prev})"))?;
        prev = d;
        ensure(d >= (1.0 + s) * t * t / 2.0 - AXIOM_TOL, || format!("s = {s}: Pinsker chain fails"))?;
        let inf = sason_inf(t, ord).map_err(err)?;
        ensure(d >= inf - SASON_INF_TOL, || format!("s = {s}: D = {d} below inf {inf}"))?;
        let closed = sason_lower_bound(t, ord);
        ensure(inf >= closed - AXIOM_TOL, || format!("s = {s}: inf {inf} below closed form {closed}"))?;
    }
    Ok(())
}

/// Random binary joint pmf, Exp(1) weights.
pub fn random_binary_source(seed: u64) -> JointPmf {
    let mut r = rng::stream(seed, 99, 0);
    let w: Vec<f64> = (0..4).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
    JointPmf::new(vec![2, 2], FinitePmf::from_weights(&w).expect("positive").mass().to_vec()).expect("normalized")
}

fn ci_correctness() -> Check {
    let opts = CiOptions::default();
    let product = wyner_ci(&fixtures::product_source(), &opts).map_err(err)?.value;
    ensure(product.abs() <= CI_PRODUCT_TOL, || format!("product source: {product}"))?;
    let copy = wyner_ci(&fixtures::copy_source(2), &opts).map_err(err)?.value;
    ensure((copy - 2f64.ln()).abs() <= CI_COPY_TOL, || format!("copy source: {copy}"))?;
    let gaps: Vec<f64> = (0..CI_ORACLE_SOURCES)
        .into_par_iter()
        .map(|k| {
            let pi = random_binary_source(k);
            let sol = wyner_ci(&pi, &opts)?;
            Ok((sol.value - wyner_ci_oracle(&pi, CI_ORACLE_GRID)?).abs())
        })
        .collect::<Result<_>>()
        .map_err(err)?;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    ensure(worst <= CI_ORACLE_TOL, || format!("oracle gap {worst:.3e}"))?;
    Ok(format!("product {product:.1e}, copy {copy:.6}, worst oracle gap {worst:.2e}"))
}

pub fn rsh_alpha_grid() -> Vec<f64> {
    log_grid(1e-3, 1.0, 16)
}

fn rsh_identity() -> Check {
    let mut parts = Vec::new();
    for (name, pi) in [
        ("dsbs", fixtures::dsbs(0.1).map_err(err)?),
        ("copy", fixtures::copy_source(2)),
        ("product", fixtures::product_source()),
    ] {
        let solver = ExponentSolver::new(&pi, ExponentOptions::default()).map_err(err)?;
        let r = solver.r_sh(&rsh_alpha_grid()).map_err(err)?;
        let c = solver.ci().value;
        let gap = (r.value - c).abs();
        ensure(gap <= RSH_TOL, || format!("{name}: r_sh {} vs C {c}", r.value))?;
        parts.push(format!("{name} {gap:.1e}"));
    }
    Ok(format!("|r_sh - C|: {}", parts.join(", ")))
}

fn theta_limit() -> Check {
    let solver = ExponentSolver::new(&fixtures::dsbs(0.1).map_err(err)?, ExponentOptions::default()).map_err(err)?;
    let thetas = [1e-2, 1e-3, 1e-4];
    let mut worst = 0.0f64;
    for alpha in [0.25, 0.5, 1.0] {
        let rep = solver.theta_limit_check(alpha, &thetas).map_err(err)?;
        let g = &rep.gaps;
        ensure(g[2] <= THETA_GAP_TOL, || format!("alpha = {alpha}: gap {} at theta = 1e-4", g[2]))?;
        for w in g.windows(2) {
            ensure(w[1] <= w[0].max(THETA_FLOOR), || format!("alpha = {alpha}: gaps {g:?} not shrinking"))?;
        }
        worst = worst.max(g[2]);
    }
    Ok(format!("largest gap at theta = 1e-4: {worst:.1e}"))
}

fn exponent_sign(ctx: &VerifyContext) -> Check {
    let copy_solver = ExponentSolver::new(&fixtures::copy_source(2), ExponentOptions::default()).map_err(err)?;
    let copy_grid = copy_solver.omega_grid();
    let dsbs = ctx.dsbs_grid().map_err(err)?;
    let mut parts = Vec::new();
    for (name, solver, grid) in [("dsbs", &dsbs.0, &dsbs.1), ("copy", &copy_solver, &copy_grid)] {
        let c = solver.ci().value;
        for m in [0.5, 0.9, 1.0, 1.2, 2.0] {
            let f = solver.f_rate_with_grid(grid, m * c).map_err(err)?.value;
            if m < 1.0 {
                ensure(f >= F_SIGN_TOL, || format!("{name}: F({m}C) = {f:.3e} below {F_SIGN_TOL}"))?;
            } else {
                ensure(f <= F_SIGN_TOL, || format!("{name}: F({m}C) = {f:.3e} above {F_SIGN_TOL}"))?;
            }
            if m == 0.5 || m == 1.0 {
                parts.push(format!("{name} F({m}C)={f:.2e}"));
            }
        }
    }
    Ok(parts.join(", "))
}

fn binary_cond(a: f64, b: f64) -> CondPmf {
    CondPmf::new(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]).expect("rows are pmfs")
}

fn oneshot() -> Check {
    // exhaustive: binary W and X
    let mut exact_cases = 0;
    for i in 0..12u64 {
        let mut r = rng::stream(6, 1, i);
        let p_w = random_pmf(&mut r, 2, false);
        let cond = binary_cond(r.random_range(0.02..0.98), r.random_range(0.02..0.98));
        let pi = random_pmf(&mut r, 2, false);
        for m in [1, 2, 4] {
            for s in [0.25, 0.5, 1.0] {
                let rep = oneshot_bound_verify(&p_w, &cond, &pi, m, s, OneShotMode::Exact).map_err(err)?;
                ensure(rep.holds, || format!("exact instance {i}, M = {m}, s = {s}: {rep:?}"))?;
                exact_cases += 1;
            }
        }
    }
    let fails: Vec<String> = (0..ONESHOT_RANDOM as u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = rng::stream(6, 2, i);
            let nw = r.random_range(2..4);
            let nx = r.random_range(2..4);
            let p_w = random_pmf(&mut r, nw, false);
            let rows: Vec<FinitePmf> = (0..nw).map(|_| random_pmf(&mut r, nx, false)).collect();
            let cond = CondPmf::from_rows(rows).expect("rows are pmfs");
            let pi = random_pmf(&mut r, nx, false);
            let m = r.random_range(1..9);
            let s = r.random_range(0.05..1.0);
            let mode = OneShotMode::MonteCarlo { trials: ONESHOT_TRIALS, seed: i };
            match oneshot_bound_verify(&p_w, &cond, &pi, m, s, mode) {
                Ok(rep) if rep.holds => None,
                Ok(rep) => Some(format!("random {i}: {rep:?}")),
                Err(e) => Some(format!("random {i}: {e}")),
            }
        })
        .collect();
    ensure(fails.is_empty(), || format!("{} failures, first: {}", fails.len(), fails[0]))?;
    Ok(format!("{exact_cases} exact cases, {ONESHOT_RANDOM} Monte-Carlo instances"))
}

pub fn typicality_instances() -> Vec<(FinitePmf, CondPmf)> {
    vec![
        (FinitePmf::uniform(2), binary_cond(0.9, 0.1)),
        (FinitePmf::uniform(2), binary_cond(0.6, 0.45)),
        (FinitePmf::new(vec![0.3, 0.7]).expect("pmf"), binary_cond(0.2, 0.6)),
        (FinitePmf::new(vec![0.4, 0.6]).expect("pmf"), binary_cond(0.5, 0.5)),
    ]
}

fn conditional_typicality() -> Check {
    let mut cases = Vec::new();
    for (i, _) in typicality_instances().iter().enumerate() {
        for pair in [(0.4, 0.2), (0.6, 0.3)] {
            for n in 8..=64usize {
                cases.push((i, pair, n));
            }
        }
    }
    let inst = typicality_instances();
    let results: Vec<std::result::Result<f64, String>> = cases
        .par_iter()
        .map(|&(i, (eps, eps_p), n)| {
            let (q_w, cond) = &inst[i];
            let bound = contyplem_bound(eps, eps_p, n, cond_q_min(cond), 2, 2).map_err(err)?;
            match max_cond_defect(q_w, cond, n, eps, eps_p).map_err(err)? {
                Some(w) if w > bound => Err(format!("instance {i}, n = {n}, eps = {eps}: {w} > {bound}")),
                Some(w) => Ok(bound - w),
                None => Ok(f64::INFINITY),
            }
        })
        .collect();
    let mut min_slack = f64::INFINITY;
    for r in results {
        min_slack = min_slack.min(r?);
    }
    Ok(format!("{} cases, smallest slack {min_slack:.3}", cases.len()))
}

pub fn domination_couplings() -> Vec<(&'static str, MarkovCoupling)> {
    let bsc = CondPmf::bsc(0.3).expect("crossover in range");
    vec![
        ("dsbs", fixtures::dsbs_wyner_coupling(0.1).expect("valid coupling")),
        ("copy", MarkovCoupling::copy_of(&fixtures::copy_source(2)).expect("valid coupling")),
        ("soft", MarkovCoupling::new(FinitePmf::uniform(2), bsc.clone(), bsc).expect("valid coupling")),
    ]
}

fn domination() -> Check {
    let mut count = 0;
    let mut max_delta = 0.0f64;
    for (name, base) in domination_couplings() {
        for n in [2, 4, 6, 8] {
            for s in [0.5, 1.0] {
                let r = truncation_domination(&base, n, 1.0, 0.5, s).map_err(|e| format!("{name} n = {n}: {e}"))?;
                ensure(r.pointwise_ok, || format!("{name} n = {n}: ratio {} > {}", r.max_ratio, r.ratio_bound))?;
                ensure(r.divergence_ok, || format!("{name} n = {n}: D {} > {}", r.divergence, r.divergence_bound))?;
                max_delta = max_delta.max(r.delta_n);
                count += 1;
            }
        }
    }
    Ok(format!("{count} cases at (eps, eps') = (1, 0.5), largest delta_n {max_delta:.3}"))
}

/// Mean exact `D_2` over the achievability seeds at each n.
pub fn achievability_means() -> Result<Vec<f64>> {
    let base = fixtures::dsbs_wyner_coupling(0.1)?;
    let rate = 1.2 * fixtures::dsbs_wyner_ci(0.1);
    ACHIEVABILITY_N
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = (0..ACHIEVABILITY_SEEDS)
                .into_par_iter()
                .map(|seed| {
                    let code = build_code(&base, n, rate, Truncation::None, seed)?;
                    Ok(estimate_renyi(&code, 1.0, 0, seed)?.point)
                })
                .collect::<Result<_>>()?;
            Ok(vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

fn achievability() -> Check {
    let means = achievability_means().map_err(err)?;
    let xs: Vec<f64> = ACHIEVABILITY_N.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let slope = ls_slope(&xs, &ys).ok_or("no slope")?;
    for ((n, m), f) in ACHIEVABILITY_N.iter().zip(&means).zip(FROZEN_ACHIEVABILITY) {
        ensure(*m <= f + REGRESSION_TOL, || format!("n = {n}: {m} above frozen {f}"))?;
    }
    ensure(slope < 0.0, || format!("slope {slope} not negative; means {means:?}"))?;
    Ok(format!("log-slope {slope:.4}, means {}", fmt_list(&means)))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn converse(ctx: &VerifyContext) -> Check {
    let (solver, grid) = ctx.dsbs_grid().map_err(err)?;
    let base = fixtures::dsbs_wyner_coupling(0.1).map_err(err)?;
    let rate = 0.5 * fixtures::dsbs_wyner_ci(0.1);
    let f = solver.f_rate_with_grid(grid, rate).map_err(err)?.value;
    let mut means = Vec::new();
    for n in CONVERSE_N {
        let floor = 1.0 - 4.0 * (-(n as f64) * f).exp();
        let est: Vec<(f64, f64)> = (0..CONVERSE_SEEDS)
            .into_par_iter()
            .map(|seed| {
                let code = build_code(&base, n, rate, CONVERSE_TRUNCATION, seed)?;
                let e = estimate_tv(&code, CONVERSE_SAMPLES, seed)?;
                Ok((e.point, e.std_error))
            })
            .collect::<Result<_>>()
            .map_err(err)?;
        for (seed, (t, se)) in est.iter().enumerate() {
            ensure(*t >= floor - SIGMAS * se, || format!("n = {n}, seed {seed}: TV {t} below {floor} - 3({se})"))?;
        }
        means.push(est.iter().map(|e| e.0).sum::<f64>() / est.len() as f64);
    }
    ensure(means.windows(2).all(|w| w[1] > w[0]), || format!("mean TV not increasing: {means:?}"))?;
    Ok(format!("F(R) = {f:.3e}, mean TV {}", fmt_list(&means)))
}

fn rate_bound() -> Check {
    let base = fixtures::dsbs_wyner_coupling(0.1).map_err(err)?;
    match rate_bound_check(&base, 8, 0.4, 0.2, 1.0) {
        Ok(r) if r.holds() => Ok(format!("slack {:.4}", r.slack)),
        Ok(r) => Err(format!("slack {} negative", r.slack)),
        Err(e) => {
            let wider = rate_bound_check(&base, 8, 1.0, 0.5, 1.0)
                .map(|r| format!("; at (eps, eps') = (1, 0.5) slack {:.4}", r.slack))
                .unwrap_or_default();
            Err(format!("{e}{wider}"))
        }
    }
}

fn reproducibility(ctx: &VerifyContext) -> Check {
    let bin = ctx.bin.as_ref().ok_or("path of the wyner binary is unknown")?;
    let dir = std::env::temp_dir().join(format!("wyner-repro-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    let mut csvs = Vec::new();
    for tag in ["a", "b"] {
        let stem = dir.join(tag);
        let status = Command::new(bin)
            .arg("sweep")
            .arg(&ctx.plan)
            .args(["--seed", "7", "--out"])
            .arg(&stem)
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
            .map_err(err)?;
        // 3 only signals cell errors, which the suite plan contains by design
        ensure(matches!(status.code(), Some(0) | Some(3)), || format!("sweep exited with {status}"))?;
        csvs.push(std::fs::read(crate::run::with_suffix(&stem, ".csv")).map_err(err)?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    ensure(csvs[0] == csvs[1], || "CSV outputs differ".into())?;
    Ok(format!("{} identical bytes", csvs[0].len()))
}
