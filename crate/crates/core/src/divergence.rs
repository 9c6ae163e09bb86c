//! Rényi divergences, total variation and the binary-reduction bounds that
//! relate the two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::prob::{log_sum_exp, CondPmf, FinitePmf, JointPmf};

/// Order `1+s` of a Rényi divergence, `s ∈ [-1, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenyiOrder {
    s: f64,
}

impl RenyiOrder {
    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() || s < -1.0 {
            return Err(Error::config(format!("Rényi parameter s = {s} outside [-1, ∞)")));
        }
        Ok(RenyiOrder { s })
    }

    /// Relative entropy (`s = 0`).
    pub fn kl() -> Self {
        RenyiOrder { s: 0.0 }
    }

    /// Order zero (`s = -1`).
    pub fn zero() -> Self {
        RenyiOrder { s: -1.0 }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn order(&self) -> f64 {
        1.0 + self.s
    }
}

/// Divergence between two nonnegative mass vectors of equal length. No
/// normalization checks; callers guarantee the inputs are pmfs.
pub(crate) fn renyi_raw(p: &[f64], q: &[f64], s: f64) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let raw = if s == 0.0 {
        let mut acc = 0.0;
        for (&a, &b) in p.iter().zip(q) {
            if a > 0.0 {
                if b <= 0.0 {
                    return f64::INFINITY;
                }
                acc += a * (a / b).ln();
            }
        }
        acc
    } else if s == -1.0 {
        let mass: f64 = p.iter().zip(q).filter(|(&a, _)| a > 0.0).map(|(_, &b)| b).sum();
        if mass <= 0.0 {
            return f64::INFINITY;
        }
        -mass.ln()
    } else {
        let mut terms = Vec::with_capacity(p.len());
        for (&a, &b) in p.iter().zip(q) {
            if a <= 0.0 {
                continue;
            }
            if b <= 0.0 {
                if s > 0.0 {
                    return f64::INFINITY;
                }
                // q^{-s} = q^{|s|} = 0
                continue;
            }
            terms.push((1.0 + s) * a.ln() - s * b.ln());
        }
        let lse = log_sum_exp(&terms);
        if lse == f64::NEG_INFINITY {
            // only reachable for s < 0: disjoint supports
            return f64::INFINITY;
        }
        lse / s
    };
    raw.max(0.0)
}

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::config(format!("alphabet mismatch: {} vs {}", p.len(), q.len())));
    }
    Ok(())
}

/// `D_{1+s}(p‖q) = (1/s) log Σ_{supp p} p^{1+s} q^{-s}`, with the KL and
/// order-zero forms at `s = 0` and `s = -1`. Absolute-continuity failures
/// yield `+∞`.
pub fn renyi(p: &FinitePmf, q: &FinitePmf, ord: RenyiOrder) -> Result<f64> {
    same_len(p.mass(), q.mass())?;
    Ok(renyi_raw(p.mass(), q.mass(), ord.s))
}

/// Rényi divergence between two mass vectors of equal length, for callers
/// holding dense arrays (sums are trusted, not re-checked).
pub fn renyi_mass(p: &[f64], q: &[f64], ord: RenyiOrder) -> Result<f64> {
    same_len(p, q)?;
    Ok(renyi_raw(p, q, ord.s))
}

/// Rényi divergence between two joints of identical shape.
pub fn renyi_joint(p: &JointPmf, q: &JointPmf, ord: RenyiOrder) -> Result<f64> {
    if p.dims() != q.dims() {
        return Err(Error::config(format!("joint shape mismatch: {:?} vs {:?}", p.dims(), q.dims())));
    }
    Ok(renyi_raw(p.mass(), q.mass(), ord.s))
}

/// `D_{1+s}(P_{Y|X} ‖ Q_{Y|X} | P_X) = D_{1+s}(P_X P_{Y|X} ‖ P_X Q_{Y|X})`.
pub fn conditional_renyi(p_joint: &JointPmf, q_cond: &CondPmf, ord: RenyiOrder) -> Result<f64> {
    if p_joint.n_axes() != 2 {
        return Err(Error::config("conditional divergence needs a two-axis joint"));
    }
    let px = p_joint.marginal_pmf(0)?;
    if q_cond.n_inputs() != px.alphabet_size() || q_cond.n_outputs() != p_joint.dims()[1] {
        return Err(Error::config("conditional shape does not match the joint"));
    }
    let glued = JointPmf::glue(&px, q_cond)?;
    renyi_joint(p_joint, &glued, ord)
}

/// `(1/2) Σ |p - q|` over mass vectors of equal length.
pub fn tv(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * d).min(1.0))
}

/// Binary Rényi divergence `d_{1+s}(p‖q)` between Bernoulli laws.
pub fn binary_renyi(p: f64, q: f64, ord: RenyiOrder) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let q = q.clamp(0.0, 1.0);
    renyi_raw(&[p, 1.0 - p], &[q, 1.0 - q], ord.s)
}

const SASON_GRID: usize = 10_001;

/// `inf_{q ∈ [0, 1-ε]} d_{1+s}(q+ε ‖ q)`: the least divergence compatible
/// with total variation `ε`. Order zero has infimum 0.
pub fn sason_inf(eps: f64, ord: RenyiOrder) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::config(format!("eps = {eps} outside [0,1]")));
    }
    if ord.s == -1.0 || eps == 0.0 {
        return Ok(0.0);
    }
    let f = |q: f64| binary_renyi(q + eps, q, ord);
    let span = 1.0 - eps;
    if span <= 0.0 {
        return Ok(f(0.0));
    }
    let step = span / (SASON_GRID - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..SASON_GRID {
        let v = f(i as f64 * step);
        if v < best.1 {
            best = (i, v);
        }
    }
    let lo = best.0.saturating_sub(1) as f64 * step;
    let hi = ((best.0 + 1).min(SASON_GRID - 1) as f64 * step).min(span);
    let (_, refined) = golden_section(f, lo, hi, 1e-10);
    Ok(best.1.min(refined))
}

/// Pinsker-type lower bound `(1+s) ε² / 2`.
pub fn pinsker_lb(eps: f64, s: f64) -> f64 {
    (1.0 + s) * eps * eps / 2.0
}

/// Which side of order one a closed-form bound addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundSide {
    /// Bounds `inf d_{1-s}` for `s ∈ (0,1)`.
    OrderBelowOne,
    /// Bounds `inf d_{1+s}` for `s ≥ 0`.
    OrderAboveOne,
}

/// `[min{1, (1-s)/s} log 1/(1-ε) - (1/s) log 2]^+`, a lower bound on
/// `inf_q d_{1-s}(q+ε‖q)` for `s ∈ (0,1)`.
pub fn sason_basic_lb(eps: f64, s: f64) -> f64 {
    if eps >= 1.0 {
        return f64::INFINITY;
    }
    let v = (1.0f64).min((1.0 - s) / s) * (1.0 / (1.0 - eps)).ln() - 2f64.ln() / s;
    v.max(0.0)
}

/// Improved closed forms obtained by optimizing the basic bound over orders.
///
/// Below one (order `1-s`):
/// `[log 1/(4(1-ε))]^+` for `s ≤ 1/2`, the basic bound at `s` when `s > 1/2`
/// and `ε > 1/2`, and `0` otherwise. Above one: `[log 1/(4(1-ε))]^+`.
pub fn sason_closed_lb(eps: f64, s: f64, side: BoundSide) -> f64 {
    let quarter = || {
        if eps >= 1.0 {
            f64::INFINITY
        } else {
            (1.0 / (4.0 * (1.0 - eps))).ln().max(0.0)
        }
    };
    match side {
        BoundSide::OrderAboveOne => quarter(),
        BoundSide::OrderBelowOne => {
            if s <= 0.5 {
                quarter()
            } else if eps > 0.5 {
                sason_basic_lb(eps, s)
            } else {
                0.0
            }
        }
    }
}

/// Closed-form lower bound on `inf_q d_{1+s}(q+ε‖q)` for an arbitrary order.
pub fn sason_lower_bound(eps: f64, ord: RenyiOrder) -> f64 {
    let s = ord.s;
    if s >= 0.0 {
        sason_closed_lb(eps, s, BoundSide::OrderAboveOne)
    } else if s > -1.0 {
        sason_closed_lb(eps, -s, BoundSide::OrderBelowOne)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pmf(v: &[f64]) -> FinitePmf {
        FinitePmf::new(v.to_vec()).unwrap()
    }

    fn ord(s: f64) -> RenyiOrder {
        RenyiOrder::new(s).unwrap()
    }

    #[test]
    fn renyi_examples() {
        let p = pmf(&[0.3, 0.7]);
        for s in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            assert_abs_diff_eq!(renyi(&p, &p, ord(s)).unwrap(), 0.0, epsilon = 1e-15);
        }
        let v = renyi(&pmf(&[1.0, 0.0]), &pmf(&[0.5, 0.5]), RenyiOrder::zero()).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-15);
        let v = renyi(&pmf(&[0.5, 0.5]), &pmf(&[0.25, 0.75]), ord(1.0)).unwrap();
        assert_abs_diff_eq!(v, (4.0f64 / 3.0).ln(), epsilon = 1e-14);
    }

    #[test]
    fn renyi_infinities() {
        let p = pmf(&[0.5, 0.5]);
        let q = pmf(&[1.0, 0.0]);
        assert_eq!(renyi(&p, &q, ord(0.5)).unwrap(), f64::INFINITY);
        assert_eq!(renyi(&p, &q, RenyiOrder::kl()).unwrap(), f64::INFINITY);
        assert!(renyi(&p, &q, ord(-0.5)).unwrap().is_finite());
        let r = pmf(&[0.0, 1.0]);
        assert_eq!(renyi(&q, &r, ord(-0.5)).unwrap(), f64::INFINITY);
        assert_eq!(renyi(&q, &r, RenyiOrder::zero()).unwrap(), f64::INFINITY);
        assert!(renyi(&p, &pmf(&[0.2, 0.3, 0.5]), ord(1.0)).is_err());
        assert!(RenyiOrder::new(-1.5).is_err());
    }

    #[test]
    fn conditional_renyi_examples() {
        let joint = JointPmf::from_matrix(&[vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap();
        let own = joint.conditional().unwrap();
        assert_abs_diff_eq!(conditional_renyi(&joint, &own, ord(0.5)).unwrap(), 0.0, epsilon = 1e-14);

        let single = JointPmf::from_matrix(&[vec![0.3, 0.7]]).unwrap();
        let q = CondPmf::new(vec![vec![0.6, 0.4]]).unwrap();
        for s in [-0.5, 0.0, 1.0] {
            let lhs = conditional_renyi(&single, &q, ord(s)).unwrap();
            let rhs = renyi(&pmf(&[0.3, 0.7]), &pmf(&[0.6, 0.4]), ord(s)).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-14);
        }

        // independent gluing by hand: P_X = (0.5, 0.5), Q rows (0.9,0.1),(0.3,0.7)
        let q = CondPmf::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let p = [0.4, 0.1, 0.2, 0.3];
        let g = [0.45, 0.05, 0.15, 0.35];
        let direct: f64 = p.iter().zip(g).map(|(a, b)| a * a / b).sum::<f64>().ln();
        assert_abs_diff_eq!(conditional_renyi(&joint, &q, ord(1.0)).unwrap(), direct, epsilon = 1e-14);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(tv(&[0.7, 0.3], &[0.4, 0.6]).unwrap(), 0.3, epsilon = 1e-15);
        assert!(tv(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn binary_renyi_examples() {
        assert_eq!(binary_renyi(0.3, 0.3, ord(0.7)), 0.0);
        assert_abs_diff_eq!(binary_renyi(1.0, 0.5, RenyiOrder::kl()), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(binary_renyi(0.75, 0.5, ord(1.0)), 1.25f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn sason_inf_examples() {
        for s in [-1.0, -0.5, 0.0, 1.0] {
            assert_eq!(sason_inf(0.0, ord(s)).unwrap(), 0.0);
        }
        assert_eq!(sason_inf(1.0, ord(0.5)).unwrap(), f64::INFINITY);
        assert_eq!(sason_inf(1.0, RenyiOrder::zero()).unwrap(), 0.0);
        let v = sason_inf(0.5, ord(-0.5)).unwrap();
        assert!(v >= pinsker_lb(0.5, -0.5));
        assert!(v >= sason_closed_lb(0.5, 0.5, BoundSide::OrderBelowOne));
        assert!(v >= sason_basic_lb(0.5, 0.5));
        // relative entropy: the symmetric pair is optimal by convexity in q around 1/2
        let kl = sason_inf(0.2, RenyiOrder::kl()).unwrap();
        assert!(kl <= binary_renyi(0.6, 0.4, RenyiOrder::kl()) + 1e-15);
        assert!(sason_inf(1.5, RenyiOrder::kl()).is_err());
    }

    #[test]
    fn sason_inf_below_every_grid_point() {
        for &(eps, s) in &[(0.3, 1.0), (0.6, -0.5), (0.1, 0.0), (0.9, 2.0)] {
            let inf = sason_inf(eps, ord(s)).unwrap();
            for i in 0..=1000 {
                let q = i as f64 * (1.0 - eps) / 1000.0;
                assert!(inf <= binary_renyi(q + eps, q, ord(s)) + 1e-15);
            }
        }
    }

    #[test]
    fn pinsker_examples() {
        assert_eq!(pinsker_lb(0.0, 0.3), 0.0);
        assert_eq!(pinsker_lb(1.0, 0.0), 0.5);
        assert_eq!(pinsker_lb(0.5, 1.0), 0.25);
    }

    #[test]
    fn closed_lb_examples() {
        assert_abs_diff_eq!(sason_closed_lb(0.75, 0.3, BoundSide::OrderAboveOne), 0.0, epsilon = 1e-15);
        let eps = 1.0 - 1.0 / (4.0 * std::f64::consts::E);
        assert_abs_diff_eq!(sason_closed_lb(eps, 0.3, BoundSide::OrderAboveOne), 1.0, epsilon = 1e-12);
        assert_eq!(sason_closed_lb(0.5, 0.5, BoundSide::OrderBelowOne), 0.0);
        assert_eq!(sason_closed_lb(0.4, 0.8, BoundSide::OrderBelowOne), 0.0);
        let v = sason_closed_lb(0.99, 0.75, BoundSide::OrderBelowOne);
        assert_abs_diff_eq!(v, ((1.0 / 3.0) * 100f64.ln() - 2f64.ln() / 0.75).max(0.0), epsilon = 1e-14);
    }
}
