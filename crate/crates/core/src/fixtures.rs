//! Standard sources used by tests, experiments and the CLI.

use crate::error::Result;
use crate::prob::{CondPmf, FinitePmf, JointPmf, MarkovCoupling};

/// Doubly symmetric binary source: uniform `X`, `Y = X ⊕ Bern(p)`.
pub fn dsbs(p: f64) -> Result<JointPmf> {
    JointPmf::from_matrix(&[vec![(1.0 - p) / 2.0, p / 2.0], vec![p / 2.0, (1.0 - p) / 2.0]])
}

/// `X = Y` uniform on `k` symbols.
pub fn copy_source(k: usize) -> JointPmf {
    let mut mass = vec![0.0; k * k];
    for i in 0..k {
        mass[i * k + i] = 1.0 / k as f64;
    }
    JointPmf::new(vec![k, k], mass).expect("diagonal uniform joint")
}

/// Independent `X ~ (0.3, 0.7)` and `Y ~ (0.6, 0.4)`.
pub fn product_source() -> JointPmf {
    JointPmf::product(&FinitePmf::new(vec![0.3, 0.7]).unwrap(), &FinitePmf::new(vec![0.6, 0.4]).unwrap())
}

/// Crossover of the two BSC legs in the optimal coupling for the DSBS:
/// `2a(1-a) = p`.
pub fn dsbs_wyner_crossover(p: f64) -> f64 {
    (1.0 - (1.0 - 2.0 * p).sqrt()) / 2.0
}

/// Uniform binary `W` with both legs BSC(a), `2a(1-a) = p`.
pub fn dsbs_wyner_coupling(p: f64) -> Result<MarkovCoupling> {
    let a = dsbs_wyner_crossover(p);
    MarkovCoupling::new(FinitePmf::uniform(2), CondPmf::bsc(a)?, CondPmf::bsc(a)?)
}

/// Closed-form common information of the DSBS:
/// `log 2 + h(p) - 2 h(a)` with `h` the binary entropy in nats.
pub fn dsbs_wyner_ci(p: f64) -> f64 {
    let h = |t: f64| FinitePmf::new(vec![t, 1.0 - t]).map(|f| f.entropy()).unwrap_or(0.0);
    let a = dsbs_wyner_crossover(p);
    2f64.ln() + h(p) - 2.0 * h(a)
}

/// Named fixture lookup used by configuration files.
pub fn by_name(name: &str) -> Option<JointPmf> {
    match name {
        "product" => Some(product_source()),
        "copy" => Some(copy_source(2)),
        _ => {
            let p: f64 = name.strip_prefix("dsbs")?.trim_start_matches(['(', ':', '_']).trim_end_matches(')').parse().ok()?;
            if (0.0..=1.0).contains(&p) {
                dsbs(p).ok()
            } else {
                None
            }
        }
    }
}
