//! Declarative experiment plans.
//!
//! A plan is a TOML file with a master seed, an output stem and one array of
//! tables per cell kind. Cells are numbered in a fixed kind order (the order
//! of the fields below), then in file order within a kind.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wyner_core::{Error, Result};

use crate::source::SourceSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub seed: u64,
    /// Output stem; `<out>.csv`, `<out>.json` and `<out>.summary.csv` are written.
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub exponent_grid: GridSpec,
    #[serde(default)]
    pub ci: Vec<CiCell>,
    #[serde(default)]
    pub exponent: Vec<ExponentCell>,
    #[serde(default)]
    pub simulate: Vec<SimulateCell>,
    #[serde(default)]
    pub typicality: Vec<TypicalityCell>,
    #[serde(default)]
    pub domination: Vec<DominationCell>,
    #[serde(default)]
    pub rate_bound: Vec<RateBoundCell>,
    #[serde(default)]
    pub oneshot: Vec<OneShotCell>,
}

/// Resolution of the `(α, θ)` grid behind `F(R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub alpha_points: usize,
    pub theta_points: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub restarts: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let d = wyner_core::exponent::ExponentOptions::default();
        GridSpec {
            alpha_points: d.alpha_points,
            theta_points: d.theta_points,
            theta_min: d.theta_min,
            theta_max: d.theta_max,
            restarts: d.restarts,
        }
    }
}

impl GridSpec {
    pub fn options(&self) -> wyner_core::exponent::ExponentOptions {
        wyner_core::exponent::ExponentOptions {
            alpha_points: self.alpha_points,
            theta_points: self.theta_points,
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            restarts: self.restarts,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiCell {
    pub source: SourceSpec,
    /// Also report the binary grid oracle at this resolution.
    pub oracle_grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentQuantity {
    FRate,
    RSh,
    ThetaLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentCell {
    pub source: SourceSpec,
    pub quantity: ExponentQuantity,
    #[serde(default)]
    pub rate_multiples: Vec<f64>,
    #[serde(default)]
    pub rates: Vec<f64>,
    /// α grid for `r_sh`, α values for `theta_limit`
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub thetas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Renyi,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub eps: f64,
    pub eps_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCell {
    pub source: SourceSpec,
    pub metric: Metric,
    /// Rényi orders `1+s`; ignored for TV.
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub rate_multiples: Vec<f64>,
    #[serde(default)]
    pub rates: Vec<f64>,
    pub n: Vec<usize>,
    /// Replicate indices; each maps to a code seed derived from the master seed.
    pub seeds: Vec<u64>,
    /// Monte-Carlo draws when the exact budget is exceeded.
    #[serde(default)]
    pub samples: usize,
    pub truncation: Option<TruncationSpec>,
    /// Attach `1 - 4 e^{-n F(R)}` to TV rows.
    #[serde(default)]
    pub converse_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypicalityCell {
    pub q_w: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub n: Vec<usize>,
    pub eps: f64,
    pub eps_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominationCell {
    pub source: SourceSpec,
    pub n: Vec<usize>,
    pub eps: f64,
    pub eps_prime: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBoundCell {
    pub source: SourceSpec,
    pub n: usize,
    pub eps: f64,
    pub eps_prime: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneShotCell {
    pub p_w: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub m: Vec<usize>,
    pub s: Vec<f64>,
    /// 0 enumerates every codebook.
    #[serde(default)]
    pub trials: usize,
}

impl ExperimentPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks that every fixture resolves and every list is usable, so that
    /// a bad plan fails before any work starts.
    pub fn validate(&self) -> Result<()> {
        let sources = self
            .ci
            .iter()
            .map(|c| &c.source)
            .chain(self.exponent.iter().map(|c| &c.source))
            .chain(self.simulate.iter().map(|c| &c.source))
            .chain(self.domination.iter().map(|c| &c.source))
            .chain(self.rate_bound.iter().map(|c| &c.source));
        for s in sources {
            s.resolve()?;
        }
        for c in &self.exponent {
            let needs_rates = c.quantity == ExponentQuantity::FRate;
            if needs_rates && c.rate_multiples.is_empty() && c.rates.is_empty() {
                return Err(Error::Config("f_rate cell lists no rates".into()));
            }
            if c.quantity != ExponentQuantity::FRate && c.alphas.is_empty() {
                return Err(Error::Config("r_sh and theta_limit cells need alphas".into()));
            }
            if c.quantity == ExponentQuantity::ThetaLimit && c.thetas.is_empty() {
                return Err(Error::Config("theta_limit cell needs thetas".into()));
            }
        }
        for c in &self.simulate {
            if c.rate_multiples.is_empty() && c.rates.is_empty() {
                return Err(Error::Config("simulate cell lists no rates".into()));
            }
            if c.metric == Metric::Renyi && c.s.is_empty() {
                return Err(Error::Config("renyi simulate cell lists no s".into()));
            }
            if c.n.is_empty() || c.seeds.is_empty() {
                return Err(Error::Config("simulate cell needs n and seeds".into()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.ci.is_empty()
            && self.exponent.is_empty()
            && self.simulate.is_empty()
            && self.typicality.is_empty()
            && self.domination.is_empty()
            && self.rate_bound.is_empty()
            && self.oneshot.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_inline_sources() {
        let p = ExperimentPlan::parse(
            r#"
            seed = 3
            [[ci]]
            source = "product"
            [[ci]]
            source = [[0.5, 0.0], [0.0, 0.5]]
            "#,
        )
        .unwrap();
        assert_eq!(p.seed, 3);
        assert_eq!(p.ci.len(), 2);
        assert!(matches!(p.ci[1].source, SourceSpec::Matrix(_)));
    }

    #[test]
    fn rejects_unknown_fixture_and_keys() {
        assert!(ExperimentPlan::parse("[[ci]]\nsource = \"nope\"").is_err());
        assert!(ExperimentPlan::parse("sed = 1").is_err());
        assert!(ExperimentPlan::parse("").unwrap().is_empty());
    }
}
