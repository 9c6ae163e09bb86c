use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wyner_cli::criteria::{self, VerifyContext, KNOWN_INFEASIBLE};
use wyner_cli::plan::{
    CiCell, ExperimentPlan, ExponentCell, ExponentQuantity, Metric, SimulateCell, TruncationSpec,
};
use wyner_cli::run::{run_plan, sweep, SweepResult};
use wyner_cli::source::SourceSpec;
use wyner_cli::summary::render_summary;
use wyner_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_CELLS: u8 = 3;

#[derive(Parser)]
#[command(name = "wyner", version, about = "Wyner common information and distributed source simulation experiments")]
struct Cli {
    /// Master seed (overrides the plan's)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output stem: writes <out>.csv, <out>.json and <out>.summary.csv
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Wyner common information of a source
    Ci {
        #[command(flatten)]
        source: SourceArg,
        /// Also run the binary grid oracle at this resolution
        #[arg(long)]
        oracle_grid: Option<usize>,
    },
    /// Strong converse exponent F(R), r_sh, or the theta -> 0 limit
    Exponent {
        #[command(flatten)]
        source: SourceArg,
        #[arg(long, value_enum, default_value = "f-rate")]
        quantity: Quantity,
        #[command(flatten)]
        rates: RateArgs,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        thetas: Vec<f64>,
    },
    /// Build random synthesis codes and measure their divergence from pi^n
    Simulate {
        #[command(flatten)]
        source: SourceArg,
        #[arg(long, value_enum, default_value = "renyi")]
        metric: MetricArg,
        /// Renyi orders 1+s
        #[arg(long, value_delimiter = ',', default_value = "1")]
        s: Vec<f64>,
        #[command(flatten)]
        rates: RateArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Replicate ids
        #[arg(long, value_delimiter = ',', default_value = "0")]
        reps: Vec<u64>,
        /// Monte-Carlo draws beyond the exact budget
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        /// Truncate codewords to typical sets (needs --eps-prime too)
        #[arg(long, requires = "eps_prime")]
        eps: Option<f64>,
        #[arg(long, requires = "eps")]
        eps_prime: Option<f64>,
        /// Attach 1 - 4exp(-nF(R)) to TV rows
        #[arg(long)]
        converse: bool,
    },
    /// Run the acceptance suite
    Verify {
        /// Plan used by the reproducibility check
        #[arg(long, default_value = "crates/cli/plans/paper_suite.plan")]
        plan: PathBuf,
        /// Run only these criteria
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Run a plan file
    Sweep { plan: PathBuf },
}

#[derive(Args)]
struct SourceArg {
    /// Fixture name (dsbs(p), copy, product) or rows such as "0.45 0.05; 0.05 0.45"
    #[arg(long, default_value = "dsbs(0.1)")]
    source: String,
}

#[derive(Args)]
struct RateArgs {
    /// Rates as multiples of the computed common information
    #[arg(long, value_delimiter = ',')]
    rate_multiple: Vec<f64>,
    /// Absolute rates in nats
    #[arg(long, value_delimiter = ',')]
    rate: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    FRate,
    RSh,
    ThetaLimit,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Renyi,
    Tv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    let mut plan = match cli.cmd {
        Cmd::Sweep { plan } => {
            let (_, result) = sweep(&plan, cli.seed, cli.out.as_deref())?;
            print!("{}", render_summary(&result).text);
            return Ok(finish(&result));
        }
        Cmd::Verify { plan, only } => return Ok(verify(plan, only)),
        Cmd::Ci { source, oracle_grid } => ExperimentPlan {
            ci: vec![CiCell { source: SourceSpec::from_arg(&source.source)?, oracle_grid }],
            ..Default::default()
        },
        Cmd::Exponent { source, quantity, rates, alphas, thetas } => {
            let quantity = match quantity {
                Quantity::FRate => ExponentQuantity::FRate,
                Quantity::RSh => ExponentQuantity::RSh,
                Quantity::ThetaLimit => ExponentQuantity::ThetaLimit,
            };
            let alphas = if alphas.is_empty() && quantity == ExponentQuantity::RSh { criteria::rsh_alpha_grid() } else { alphas };
            ExperimentPlan {
                exponent: vec![ExponentCell {
                    source: SourceSpec::from_arg(&source.source)?,
                    quantity,
                    rate_multiples: rates.rate_multiple,
                    rates: rates.rate,
                    alphas,
                    thetas,
                }],
                ..Default::default()
            }
        }
        Cmd::Simulate { source, metric, s, rates, n, reps, samples, eps, eps_prime, converse } => ExperimentPlan {
            simulate: vec![SimulateCell {
                source: SourceSpec::from_arg(&source.source)?,
                metric: match metric {
                    MetricArg::Renyi => Metric::Renyi,
                    MetricArg::Tv => Metric::Tv,
                },
                s,
                rate_multiples: rates.rate_multiple,
                rates: rates.rate,
                n,
                seeds: reps,
                samples,
                truncation: eps.zip(eps_prime).map(|(eps, eps_prime)| TruncationSpec { eps, eps_prime }),
                converse_reference: converse,
            }],
            ..Default::default()
        },
    };
    plan.seed = cli.seed.unwrap_or(0);
    plan.validate()?;
    let result = run_plan(&plan);
    let csv = result.to_csv().map_err(|e| Error::Config(e.to_string()))?;
    print!("{}", String::from_utf8_lossy(&csv));
    if let Some(stem) = &cli.out {
        result.write(&plan, stem).map_err(|e| Error::Config(format!("writing {}: {e}", stem.display())))?;
    }
    Ok(finish(&result))
}

fn finish(result: &SweepResult) -> ExitCode {
    let errors = result.error_count();
    if errors > 0 {
        eprintln!("{errors} cell(s) failed");
        ExitCode::from(EXIT_CELLS)
    } else {
        ExitCode::SUCCESS
    }
}

fn verify(plan: PathBuf, only: Vec<u8>) -> ExitCode {
    let ctx = VerifyContext::new(std::env::current_exe().ok(), plan);
    let ids: Vec<u8> = if only.is_empty() { (1..=12).collect() } else { only };
    let mut failed = Vec::new();
    for id in ids {
        let o = criteria::run_criterion(id, &ctx);
        println!("{}", o.line());
        if !o.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    let expected = failed.iter().all(|id| KNOWN_INFEASIBLE.contains(id));
    println!("failed: {failed:?}{}", if expected { " (all known infeasible)" } else { "" });
    ExitCode::from(EXIT_CELLS)
}
