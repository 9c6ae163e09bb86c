//! Source descriptions shared by plans and subcommands.

use serde::{Deserialize, Serialize};
use wyner_core::ci::CiSolution;
use wyner_core::fixtures;
use wyner_core::prob::{CondPmf, FinitePmf, JointPmf, MarkovCoupling};
use wyner_core::{Error, Result};

/// A target `π_XY`: a named fixture or an inline matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl SourceSpec {
    /// Stable label used as a cache key and in output rows.
    pub fn label(&self) -> String {
        match self {
            SourceSpec::Named(n) => n.clone(),
            SourceSpec::Matrix(rows) => {
                let body: Vec<String> = rows
                    .iter()
                    .map(|r| r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" "))
                    .collect();
                format!("[{}]", body.join("; "))
            }
        }
    }

    /// Command-line form: a fixture name, or matrix rows separated by `;`
    /// such as `"0.45 0.05; 0.05 0.45"`.
    pub fn from_arg(arg: &str) -> Result<Self> {
        let t = arg.trim();
        if t.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            Ok(SourceSpec::Matrix(wyner_core::prob::parse_rows(&t.replace(';', "\n"))?))
        } else {
            Ok(SourceSpec::Named(t.to_string()))
        }
    }

    pub fn resolve(&self) -> Result<JointPmf> {
        match self {
            SourceSpec::Named(n) => fixtures::by_name(n).ok_or_else(|| Error::Config(format!("unknown fixture {n:?}"))),
            SourceSpec::Matrix(rows) => JointPmf::from_matrix(rows),
        }
    }

    /// DSBS crossover when this names a DSBS fixture.
    pub fn dsbs_crossover(&self) -> Option<f64> {
        match self {
            SourceSpec::Named(n) => {
                let rest = n.strip_prefix("dsbs")?;
                rest.trim_start_matches(['(', ':', '_']).trim_end_matches(')').parse().ok()
            }
            SourceSpec::Matrix(_) => None,
        }
    }

    /// Coupling used to build synthesis codes for this source.
    ///
    /// DSBS fixtures get the closed-form optimal coupling and the copy fixture
    /// the copy coupling. A product target needs no common randomness, so
    /// `|W| = 1`. Anything else uses the pruned argmin of the CI solver.
    pub fn coupling(&self, pi: &JointPmf, ci: Option<&CiSolution>) -> Result<MarkovCoupling> {
        if let Some(p) = self.dsbs_crossover() {
            return fixtures::dsbs_wyner_coupling(p);
        }
        if let SourceSpec::Named(n) = self {
            match n.as_str() {
                "copy" => return MarkovCoupling::copy_of(pi),
                "product" => {
                    let x = pi.marginal_pmf(0)?;
                    let y = pi.marginal_pmf(1)?;
                    return MarkovCoupling::new(
                        FinitePmf::uniform(1),
                        CondPmf::constant(1, &x),
                        CondPmf::constant(1, &y),
                    );
                }
                _ => {}
            }
        }
        let sol = ci.ok_or_else(|| Error::Config(format!("source {} needs a CI solution for its coupling", self.label())))?;
        sol.argmin.pruned(1e-9)
    }
}

/// Short machine-readable code for an error, used in output rows.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Domain(_) => "domain",
        Error::Budget(_) => "budget",
        Error::EmptyTypicalSet { .. } => "empty_typical_set",
        Error::Parse(_) => "parse",
    }
}
