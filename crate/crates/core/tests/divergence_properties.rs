use proptest::prelude::*;
use wyner_core::divergence::{renyi, renyi_mass, sason_inf, sason_lower_bound, tv, RenyiOrder};
use wyner_core::prob::{CondPmf, FinitePmf};

fn pmf(k: usize) -> impl Strategy<Value = FinitePmf> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 6 => 0.01f64..1.0], k)
        .prop_filter("not all zero", |w| w.iter().sum::<f64>() > 0.0)
        .prop_map(|w| FinitePmf::from_weights(&w).unwrap())
}

fn full_pmf(k: usize) -> impl Strategy<Value = FinitePmf> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|w| FinitePmf::from_weights(&w).unwrap())
}

fn pair() -> impl Strategy<Value = (FinitePmf, FinitePmf)> {
    (2usize..6).prop_flat_map(|k| (pmf(k), full_pmf(k)))
}

const ORDERS: [f64; 7] = [-1.0, -0.7, -0.5, 0.0, 0.3, 0.5, 1.0];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn nonnegative_and_monotone_in_order((p, q) in pair()) {
        let mut prev = 0.0f64;
        for s in ORDERS {
            let d = renyi(&p, &q, RenyiOrder::new(s).unwrap()).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!(d >= prev - 1e-10, "s = {}: {} < {}", s, d, prev);
            prev = d;
        }
    }

    #[test]
    fn identity_of_indiscernibles(q in (2usize..6).prop_flat_map(full_pmf)) {
        for s in ORDERS {
            prop_assert!(renyi(&q, &q, RenyiOrder::new(s).unwrap()).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn pinsker_and_sason_chains((p, q) in pair()) {
        let t = tv(p.mass(), q.mass()).unwrap();
        for s in ORDERS {
            let ord = RenyiOrder::new(s).unwrap();
            let d = renyi(&p, &q, ord).unwrap();
            prop_assert!(d >= (1.0 + s) * t * t / 2.0 - 1e-10);
            let inf = sason_inf(t, ord).unwrap();
            prop_assert!(d >= inf - 1e-7, "s = {}: D = {} below inf {}", s, d, inf);
            prop_assert!(inf >= sason_lower_bound(t, ord) - 1e-9);
        }
    }

    #[test]
    fn orders_near_one_approach_kl((p, q) in pair()) {
        let kl = renyi(&p, &q, RenyiOrder::kl()).unwrap();
        for s in [1e-6, -1e-6] {
            let d = renyi(&p, &q, RenyiOrder::new(s).unwrap()).unwrap();
            prop_assert!((d - kl).abs() <= 1e-4 * (1.0 + kl));
        }
    }

    #[test]
    fn data_processing((p, q) in pair(), rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 5)) {
        let k = p.alphabet_size();
        let chan = CondPmf::new(rows[..k].iter().map(|r| {
            let t: f64 = r.iter().sum();
            r.iter().map(|v| v / t).collect()
        }).collect()).unwrap();
        let push = |f: &FinitePmf| -> Vec<f64> {
            (0..3).map(|y| (0..k).map(|x| f.get(x) * chan.get(x, y)).sum()).collect()
        };
        let (pw, qw) = (push(&p), push(&q));
        for s in ORDERS {
            let ord = RenyiOrder::new(s).unwrap();
            let before = renyi(&p, &q, ord).unwrap();
            let after = renyi_mass(&pw, &qw, ord).unwrap();
            prop_assert!(after <= before + 1e-10);
        }
    }
}
