//! Plan execution.
//!
//! Shared inputs (CI values, exponent grids) are computed once per source in
//! a pre-pass. The plan is then expanded into independent tasks which run in
//! parallel; rows come back in task order, so the output never depends on
//! scheduling.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use wyner_core::ci::{wyner_ci, wyner_ci_oracle, CiOptions, CiSolution};
use wyner_core::exponent::{ExponentSolver, OmegaGrid};
use wyner_core::prob::{CondPmf, FinitePmf, MarkovCoupling};
use wyner_core::rng;
use wyner_core::synthesis::{
    build_code, estimate_renyi, estimate_tv, oneshot_bound_verify, rate_bound_check, truncation_domination, OneShotMode,
    Truncation,
};
use wyner_core::typicality::{cond_q_min, contyplem_bound, max_cond_defect};
use wyner_core::{Error, Result};

use crate::plan::{ExperimentPlan, ExponentQuantity, Metric, SimulateCell};
use crate::source::{error_code, SourceSpec};

/// One output line. Optional numeric fields are left blank in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub cell: usize,
    pub kind: &'static str,
    pub source: String,
    pub quantity: String,
    pub s: Option<f64>,
    pub n: Option<usize>,
    pub rate_multiple: Option<f64>,
    pub rate: Option<f64>,
    pub seed: Option<u64>,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub method: &'static str,
    pub reference: Option<f64>,
    pub reference_kind: &'static str,
    /// `ok`, `holds`, `violated` or `error`
    pub status: &'static str,
    pub error: String,
}

impl Row {
    fn new(cell: usize, kind: &'static str, source: impl Into<String>, quantity: impl Into<String>) -> Self {
        Row {
            cell,
            kind,
            source: source.into(),
            quantity: quantity.into(),
            s: None,
            n: None,
            rate_multiple: None,
            rate: None,
            seed: None,
            value: None,
            std_error: None,
            method: "exact",
            reference: None,
            reference_kind: "",
            status: "ok",
            error: String::new(),
        }
    }

    fn check(mut self, holds: bool) -> Self {
        self.status = if holds { "holds" } else { "violated" };
        self
    }

    fn fail(mut self, e: &Error) -> Self {
        self.status = "error";
        self.error = format!("{}: {e}", error_code(e));
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<Row>,
    /// Wall time of the task that produced each row, in milliseconds.
    pub wall_ms: Vec<f64>,
}

impl SweepResult {
    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.status == "error").count()
    }

    pub fn to_csv(&self) -> std::io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }

    pub fn to_json(&self, plan: &ExperimentPlan) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct JsonRow<'a> {
            #[serde(flatten)]
            row: &'a Row,
            wall_ms: f64,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            plan: &'a ExperimentPlan,
            rows: Vec<JsonRow<'a>>,
        }
        let rows = self.rows.iter().zip(&self.wall_ms).map(|(row, &wall_ms)| JsonRow { row, wall_ms }).collect();
        serde_json::to_string_pretty(&Doc { plan, rows })
    }

    /// Writes `<stem>.csv`, `<stem>.json` and `<stem>.summary.csv`.
    pub fn write(&self, plan: &ExperimentPlan, stem: &Path) -> std::io::Result<()> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(with_suffix(stem, ".csv"), self.to_csv()?)?;
        let json = self.to_json(plan).map_err(std::io::Error::other)?;
        std::fs::File::create(with_suffix(stem, ".json"))?.write_all(json.as_bytes())?;
        let summary = crate::summary::render_summary(self);
        std::fs::write(with_suffix(stem, ".summary.csv"), summary.csv)?;
        Ok(())
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "cell",
    "kind",
    "source",
    "quantity",
    "s",
    "n",
    "rate_multiple",
    "rate",
    "seed",
    "value",
    "std_error",
    "method",
    "reference",
    "reference_kind",
    "status",
    "error",
];

pub fn with_suffix(stem: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

/// Per-source exponent solver and, when some cell needs `F(R)`, its grid.
struct ExponentEntry {
    solver: ExponentSolver,
    grid: Option<OmegaGrid>,
}

struct Caches {
    ci: BTreeMap<String, Result<CiSolution>>,
    exponent: BTreeMap<String, Result<ExponentEntry>>,
}

impl Caches {
    fn ci(&self, src: &SourceSpec) -> Result<&CiSolution> {
        match self.ci.get(&src.label()) {
            Some(Ok(c)) => Ok(c),
            Some(Err(e)) => Err(e.clone()),
            None => Err(Error::Config(format!("no CI computed for {}", src.label()))),
        }
    }

    fn exponent(&self, src: &SourceSpec) -> Result<&ExponentEntry> {
        match self.exponent.get(&src.label()) {
            Some(Ok(c)) => Ok(c),
            Some(Err(e)) => Err(e.clone()),
            None => Err(Error::Config(format!("no exponent solver for {}", src.label()))),
        }
    }

    /// `(multiple, absolute rate)` pairs, multiples resolved against `C`.
    fn rates(&self, src: &SourceSpec, multiples: &[f64], absolute: &[f64]) -> Result<Vec<(Option<f64>, f64)>> {
        let mut out = Vec::new();
        if !multiples.is_empty() {
            let c = self.ci(src)?.value;
            out.extend(multiples.iter().map(|&m| (Some(m), m * c)));
        }
        out.extend(absolute.iter().map(|&r| (None, r)));
        Ok(out)
    }
}

fn build_caches(plan: &ExperimentPlan) -> Caches {
    let mut ci_sources: BTreeMap<String, SourceSpec> = BTreeMap::new();
    for s in plan
        .ci
        .iter()
        .map(|c| &c.source)
        .chain(plan.simulate.iter().map(|c| &c.source))
        .chain(plan.domination.iter().map(|c| &c.source))
        .chain(plan.rate_bound.iter().map(|c| &c.source))
    {
        ci_sources.insert(s.label(), s.clone());
    }
    for c in &plan.exponent {
        if c.quantity == ExponentQuantity::FRate && !c.rate_multiples.is_empty() {
            ci_sources.insert(c.source.label(), c.source.clone());
        }
    }
    let mut exp_sources: BTreeMap<String, (SourceSpec, bool)> = BTreeMap::new();
    for c in &plan.exponent {
        let e = exp_sources.entry(c.source.label()).or_insert((c.source.clone(), false));
        e.1 |= c.quantity == ExponentQuantity::FRate;
    }
    for c in plan.simulate.iter().filter(|c| c.metric == Metric::Tv && c.converse_reference) {
        exp_sources.entry(c.source.label()).or_insert((c.source.clone(), true)).1 = true;
    }

    let ci_list: Vec<(String, SourceSpec)> = ci_sources.into_iter().collect();
    let ci: BTreeMap<String, Result<CiSolution>> = ci_list
        .par_iter()
        .map(|(label, spec)| (label.clone(), spec.resolve().and_then(|pi| wyner_ci(&pi, &CiOptions::default()))))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let opts = plan.exponent_grid.options();
    let exp_list: Vec<(String, (SourceSpec, bool))> = exp_sources.into_iter().collect();
    let exponent = exp_list
        .par_iter()
        .map(|(label, (spec, need_grid))| {
            let entry = spec.resolve().and_then(|pi| ExponentSolver::new(&pi, opts.clone())).map(|solver| {
                let grid = need_grid.then(|| solver.omega_grid());
                ExponentEntry { solver, grid }
            });
            (label.clone(), entry)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    Caches { ci, exponent }
}

/// Seed of replicate `id` in cell `cell`, derived from the master seed.
pub fn derive_seed(master: u64, cell: usize, id: u64) -> u64 {
    rng::stream(master, cell as u64, id).next_u64()
}

type Task<'a> = Box<dyn Fn() -> Vec<Row> + Send + Sync + 'a>;

/// Runs every cell of `plan`. Cell errors are recorded in their rows and do
/// not stop the run.
pub fn run_plan(plan: &ExperimentPlan) -> SweepResult {
    let caches = build_caches(plan);
    let tasks = expand(plan, &caches);
    let out: Vec<(Vec<Row>, f64)> = tasks
        .par_iter()
        .map(|t| {
            let start = Instant::now();
            let rows = t();
            (rows, start.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let mut result = SweepResult::default();
    for (rows, ms) in out {
        result.wall_ms.extend(std::iter::repeat_n(ms, rows.len()));
        result.rows.extend(rows);
    }
    result
}

fn expand<'a>(plan: &'a ExperimentPlan, caches: &'a Caches) -> Vec<Task<'a>> {
    let mut tasks: Vec<Task<'a>> = Vec::new();
    let mut cell = 0usize;

    for c in &plan.ci {
        let id = cell;
        tasks.push(Box::new(move || ci_rows(id, c.source.clone(), c.oracle_grid, caches)));
        cell += 1;
    }

    for c in &plan.exponent {
        let id = cell;
        let label = c.source.label();
        match c.quantity {
            ExponentQuantity::FRate => {
                let rates = match caches.rates(&c.source, &c.rate_multiples, &c.rates) {
                    Ok(r) => r,
                    Err(e) => {
                        let row = Row::new(id, "exponent", label.clone(), "f_rate").fail(&e);
                        tasks.push(Box::new(move || vec![row.clone()]));
                        cell += 1;
                        continue;
                    }
                };
                for (mult, rate) in rates {
                    let src = &c.source;
                    let label = label.clone();
                    tasks.push(Box::new(move || {
                        let mut row = Row::new(id, "exponent", label.clone(), "f_rate");
                        row.rate_multiple = mult;
                        row.rate = Some(rate);
                        row.method = "grid";
                        match f_at(caches, src, rate) {
                            Ok(f) => row.value = Some(f),
                            Err(e) => row = row.fail(&e),
                        }
                        vec![row]
                    }));
                }
            }
            ExponentQuantity::RSh => {
                tasks.push(Box::new(move || {
                    let mut row = Row::new(id, "exponent", label.clone(), "r_sh");
                    row.method = "grid";
                    let r = caches.exponent(&c.source).and_then(|e| {
                        let rep = e.solver.r_sh(&c.alphas)?;
                        Ok((rep.value, e.solver.ci().value))
                    });
                    match r {
                        Ok((v, ci)) => {
                            row.value = Some(v);
                            row.reference = Some(ci);
                            row.reference_kind = "wyner_ci";
                        }
                        Err(e) => row = row.fail(&e),
                    }
                    vec![row]
                }));
            }
            ExponentQuantity::ThetaLimit => {
                for &alpha in &c.alphas {
                    let label = label.clone();
                    tasks.push(Box::new(move || {
                        let quantity = |theta: String| format!("omega_over_theta(alpha={alpha},theta={theta})");
                        let rep = match caches.exponent(&c.source).and_then(|e| e.solver.theta_limit_check(alpha, &c.thetas)) {
                            Ok(r) => r,
                            Err(e) => return vec![Row::new(id, "exponent", label.clone(), quantity("*".into())).fail(&e)],
                        };
                        rep.thetas
                            .iter()
                            .zip(&rep.scaled)
                            .map(|(&theta, &v)| {
                                let mut row = Row::new(id, "exponent", label.clone(), quantity(theta.to_string()));
                                row.method = "grid";
                                row.value = Some(v);
                                row.reference = Some(rep.r_alpha);
                                row.reference_kind = "r_alpha";
                                row
                            })
                            .collect()
                    }));
                }
            }
        }
        cell += 1;
    }

    for c in &plan.simulate {
        let id = cell;
        let label = c.source.label();
        let prep = caches.rates(&c.source, &c.rate_multiples, &c.rates).and_then(|rates| {
            let pi = c.source.resolve()?;
            let coupling = c.source.coupling(&pi, caches.ci(&c.source).ok())?;
            Ok((rates, coupling))
        });
        let (rates, coupling) = match prep {
            Ok(p) => p,
            Err(e) => {
                let row = Row::new(id, "simulate", label.clone(), metric_name(c.metric)).fail(&e);
                tasks.push(Box::new(move || vec![row.clone()]));
                cell += 1;
                continue;
            }
        };
        let orders: Vec<Option<f64>> = match c.metric {
            Metric::Renyi => c.s.iter().map(|&s| Some(s)).collect(),
            Metric::Tv => vec![None],
        };
        for s in orders {
            for &(mult, rate) in &rates {
                for &n in &c.n {
                    for &rep in &c.seeds {
                        let coupling = coupling.clone();
                        let label = label.clone();
                        let seed = derive_seed(plan.seed, id, rep);
                        tasks.push(Box::new(move || {
                            vec![simulate_row(id, &label, c, caches, &coupling, s, mult, rate, n, seed)]
                        }));
                    }
                }
            }
        }
        cell += 1;
    }

    for c in &plan.typicality {
        let id = cell;
        for &n in &c.n {
            tasks.push(Box::new(move || {
                let mut row = Row::new(id, "typicality", "inline", "max_cond_defect");
                row.n = Some(n);
                row.reference_kind = "defect_bound";
                let r = (|| {
                    let q_w = FinitePmf::new(c.q_w.clone())?;
                    let cond = CondPmf::new(c.rows.clone())?;
                    let bound =
                        contyplem_bound(c.eps, c.eps_prime, n, cond_q_min(&cond), cond.n_outputs(), q_w.alphabet_size())?;
                    Ok::<_, Error>((max_cond_defect(&q_w, &cond, n, c.eps, c.eps_prime)?, bound))
                })();
                match r {
                    Ok((worst, bound)) => {
                        row.reference = Some(bound);
                        // an empty ε'-typical set has nothing to check
                        row.value = worst;
                        row.check(worst.is_none_or(|w| w <= bound))
                    }
                    Err(e) => row.fail(&e),
                }
                .into_vec()
            }));
        }
        cell += 1;
    }

    for c in &plan.domination {
        let id = cell;
        let label = c.source.label();
        for &n in &c.n {
            let label = label.clone();
            tasks.push(Box::new(move || {
                let mut rows = Vec::new();
                let base = Row::new(id, "domination", label.clone(), "");
                let r = coupling_for(&c.source, caches).and_then(|b| truncation_domination(&b, n, c.eps, c.eps_prime, c.s));
                match r {
                    Ok(rep) => {
                        let mut a = base.clone();
                        a.quantity = "max_ratio".into();
                        a.n = Some(n);
                        a.s = Some(c.s);
                        a.value = Some(rep.max_ratio);
                        a.reference = Some(rep.ratio_bound);
                        a.reference_kind = "1/(1-delta_n)";
                        rows.push(a.check(rep.pointwise_ok));
                        let mut b = base;
                        b.quantity = "renyi".into();
                        b.n = Some(n);
                        b.s = Some(c.s);
                        b.value = Some(rep.divergence);
                        b.reference = Some(rep.divergence_bound);
                        b.reference_kind = "((1+s)/s)log(1/(1-delta_n))";
                        rows.push(b.check(rep.divergence_ok));
                    }
                    Err(e) => {
                        let mut a = base;
                        a.n = Some(n);
                        rows.push(a.fail(&e));
                    }
                }
                rows
            }));
        }
        cell += 1;
    }

    for c in &plan.rate_bound {
        let id = cell;
        let label = c.source.label();
        tasks.push(Box::new(move || {
            let mut row = Row::new(id, "rate_bound", label.clone(), format!("renyi_per_symbol(eps={},eps_prime={})", c.eps, c.eps_prime));
            row.n = Some(c.n);
            row.s = Some(c.s);
            row.reference_kind = "rate_bound+correction";
            match coupling_for(&c.source, caches).and_then(|b| rate_bound_check(&b, c.n, c.eps, c.eps_prime, c.s)) {
                Ok(rep) => {
                    row.value = Some(rep.lhs);
                    row.reference = Some(rep.rhs + rep.correction);
                    row.check(rep.holds())
                }
                Err(e) => row.fail(&e),
            }
            .into_vec()
        }));
        cell += 1;
    }

    for c in &plan.oneshot {
        let id = cell;
        for &m in &c.m {
            for &s in &c.s {
                let seed = derive_seed(plan.seed, id, m as u64);
                tasks.push(Box::new(move || {
                    let mut row = Row::new(id, "oneshot", "inline", format!("moment(m={m})"));
                    row.s = Some(s);
                    row.rate = Some((m as f64).ln());
                    row.reference_kind = "oneshot_bound";
                    let mode = if c.trials == 0 {
                        OneShotMode::Exact
                    } else {
                        row.method = "monte_carlo";
                        row.seed = Some(seed);
                        OneShotMode::MonteCarlo { trials: c.trials, seed }
                    };
                    let r = (|| {
                        let p_w = FinitePmf::new(c.p_w.clone())?;
                        let cond = CondPmf::new(c.rows.clone())?;
                        let pi = FinitePmf::new(c.pi.clone())?;
                        oneshot_bound_verify(&p_w, &cond, &pi, m, s, mode)
                    })();
                    match r {
                        Ok(rep) => {
                            row.value = Some(rep.lhs);
                            row.std_error = Some(rep.lhs_std_error);
                            row.reference = Some(rep.rhs);
                            row.check(rep.holds)
                        }
                        Err(e) => row.fail(&e),
                    }
                    .into_vec()
                }));
            }
        }
        cell += 1;
    }

    tasks
}

trait IntoVec {
    fn into_vec(self) -> Vec<Row>;
}

impl IntoVec for Row {
    fn into_vec(self) -> Vec<Row> {
        vec![self]
    }
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Renyi => "renyi",
        Metric::Tv => "tv",
    }
}

fn coupling_for(src: &SourceSpec, caches: &Caches) -> Result<MarkovCoupling> {
    let pi = src.resolve()?;
    src.coupling(&pi, caches.ci(src).ok())
}

fn f_at(caches: &Caches, src: &SourceSpec, rate: f64) -> Result<f64> {
    let e = caches.exponent(src)?;
    let grid = e.grid.as_ref().ok_or_else(|| Error::Config("no exponent grid".into()))?;
    Ok(e.solver.f_rate_with_grid(grid, rate)?.value)
}

fn ci_rows(id: usize, src: SourceSpec, oracle_grid: Option<usize>, caches: &Caches) -> Vec<Row> {
    let label = src.label();
    let mut row = Row::new(id, "ci", label.clone(), "wyner_ci");
    row.method = "solver";
    let sol = match caches.ci(&src) {
        Ok(s) => s,
        Err(e) => return vec![row.fail(&e)],
    };
    row.value = Some(sol.value);
    let mut rows = vec![row];
    if let Some(grid) = oracle_grid {
        let mut o = Row::new(id, "ci", label, "wyner_ci_oracle");
        o.method = "grid";
        match src.resolve().and_then(|pi| wyner_ci_oracle(&pi, grid)) {
            Ok(v) => {
                o.value = Some(v);
                o.reference = Some(sol.value);
                o.reference_kind = "wyner_ci";
                o = o.check((v - sol.value).abs() <= 1e-3);
            }
            Err(e) => o = o.fail(&e),
        }
        rows.push(o);
    }
    rows
}

#[allow(clippy::too_many_arguments)]
fn simulate_row(
    id: usize,
    label: &str,
    c: &SimulateCell,
    caches: &Caches,
    coupling: &MarkovCoupling,
    s: Option<f64>,
    mult: Option<f64>,
    rate: f64,
    n: usize,
    seed: u64,
) -> Row {
    let mut row = Row::new(id, "simulate", label, metric_name(c.metric));
    row.s = s;
    row.n = Some(n);
    row.rate_multiple = mult;
    row.rate = Some(rate);
    row.seed = Some(seed);
    let trunc = match c.truncation {
        Some(t) => Truncation::Typical { eps: t.eps, eps_prime: t.eps_prime },
        None => Truncation::None,
    };
    let est = build_code(coupling, n, rate, trunc, seed).and_then(|code| match s {
        Some(s) => estimate_renyi(&code, s, c.samples, seed),
        None => estimate_tv(&code, c.samples, seed),
    });
    let est = match est {
        Ok(e) => e,
        Err(e) => return row.fail(&e),
    };
    row.value = Some(est.point);
    row.std_error = Some(est.std_error);
    row.method = est.method.tag();
    if c.metric == Metric::Tv && c.converse_reference {
        row.reference_kind = "1-4exp(-nF)";
        match f_at(caches, &c.source, rate) {
            Ok(f) => {
                let r = 1.0 - 4.0 * (-(n as f64) * f).exp();
                row.reference = Some(r);
                row = row.check(est.point >= r - 3.0 * est.std_error);
            }
            Err(e) => row = row.fail(&e),
        }
    }
    row
}

/// Loads, runs and writes a plan; returns the result for the caller to
/// summarize. `seed` overrides the plan's master seed.
pub fn sweep(path: &Path, seed: Option<u64>, out: Option<&Path>) -> std::result::Result<(ExperimentPlan, SweepResult), Error> {
    let mut plan = ExperimentPlan::load(path)?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    if let Some(o) = out {
        plan.out = Some(o.to_path_buf());
    }
    let result = run_plan(&plan);
    if let Some(stem) = &plan.out {
        result.write(&plan, stem).map_err(|e| Error::Config(format!("writing {}: {e}", stem.display())))?;
    }
    Ok((plan, result))
}
