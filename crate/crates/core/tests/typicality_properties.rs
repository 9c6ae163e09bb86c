use proptest::prelude::*;
use wyner_core::prob::{CondPmf, FinitePmf};
use wyner_core::typicality::{contyplem_bound, cond_q_min, max_cond_defect, TypicalSpec};

fn binary_instances() -> Vec<(FinitePmf, CondPmf)> {
    let rows = |a: f64, b: f64| CondPmf::new(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]).unwrap();
    vec![
        (FinitePmf::uniform(2), rows(0.9, 0.1)),
        (FinitePmf::uniform(2), rows(0.6, 0.45)),
        (FinitePmf::new(vec![0.3, 0.7]).unwrap(), rows(0.2, 0.6)),
        (FinitePmf::new(vec![0.4, 0.6]).unwrap(), rows(0.5, 0.5)),
    ]
}

#[test]
fn defect_below_uniform_bound_on_small_blocks() {
    for (q_w, cond) in binary_instances() {
        for (eps, eps_p) in [(0.4, 0.2), (0.6, 0.3)] {
            for n in 8..=64 {
                let bound = contyplem_bound(eps, eps_p, n, cond_q_min(&cond), 2, 2).unwrap();
                if let Some(worst) = max_cond_defect(&q_w, &cond, n, eps, eps_p).unwrap() {
                    assert!(worst <= bound, "n = {n}: {worst} > {bound}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn typical_probability_monotone(w in prop::collection::vec(0.05f64..1.0, 2..5), n in 1usize..60) {
        let q = FinitePmf::from_weights(&w).unwrap();
        let mut prev = 0.0;
        for k in 1..=10 {
            let p = TypicalSpec::new(q.clone(), n, k as f64 * 0.1).unwrap().prob_exact().unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p >= prev - 1e-12);
            prev = p;
        }
    }
}

#[test]
fn typical_probability_rises_toward_one() {
    let q = FinitePmf::new(vec![0.2, 0.3, 0.5]).unwrap();
    // consecutive n are not monotone (the count lattice shifts against the
    // band edges, e.g. n = 50 vs 60), so the trend is checked along doublings
    let ps: Vec<f64> = (0..6).map(|k| TypicalSpec::new(q.clone(), 10 << k, 0.3).unwrap().prob_exact().unwrap()).collect();
    for w in ps.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{ps:?}");
    }
    assert!(ps[5] > 0.99, "{ps:?}");
}
