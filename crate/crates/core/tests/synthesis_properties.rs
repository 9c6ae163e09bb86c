use rand::Rng;
use wyner_core::fixtures;
use wyner_core::prob::{CondPmf, FinitePmf, MarkovCoupling};
use wyner_core::rng;
use wyner_core::synthesis::{
    build_code, estimate_renyi, estimate_tv, induced_joint_exact, oneshot_bound_verify, truncation_domination,
    OneShotMode, Truncation,
};

fn couplings() -> Vec<(&'static str, MarkovCoupling)> {
    let bsc = CondPmf::bsc(0.3).unwrap();
    vec![
        ("dsbs", fixtures::dsbs_wyner_coupling(0.1).unwrap()),
        ("copy", MarkovCoupling::copy_of(&fixtures::copy_source(2)).unwrap()),
        ("soft", MarkovCoupling::new(FinitePmf::uniform(2), bsc.clone(), bsc).unwrap()),
    ]
}

#[test]
fn induced_joint_equals_pointwise_definition() {
    let trunc = [Truncation::None, Truncation::Typical { eps: 1.0, eps_prime: 0.5 }];
    for (name, base) in couplings() {
        for t in trunc {
            let code = build_code(&base, 4, 0.4, t, 5).unwrap();
            let j = induced_joint_exact(&code).unwrap();
            assert!((j.mass.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for xi in 0..16usize {
                let x: Vec<usize> = (0..4).map(|i| (xi >> i) & 1).collect();
                for yi in 0..16usize {
                    let y: Vec<usize> = (0..4).map(|i| (yi >> i) & 1).collect();
                    let direct: f64 = (0..code.m_count)
                        .map(|m| code.log_px_given_m(&x, m).exp() * code.log_py_given_m(&y, m).exp())
                        .sum::<f64>()
                        / code.m_count as f64;
                    assert!((j.get(&x, &y) - direct).abs() <= 1e-12, "{name}");
                }
            }
        }
    }
}

#[test]
fn truncation_dominates_pointwise() {
    for (name, base) in couplings() {
        for n in [2, 4, 6, 8] {
            let r = truncation_domination(&base, n, 1.0, 0.5, 1.0).unwrap();
            assert!(r.pointwise_ok && r.divergence_ok, "{name} n = {n}: {r:?}");
        }
    }
}

#[test]
fn low_rate_codes_stay_far_from_target() {
    // F(0.5 C) on the DSBS, frozen from the exponent grid
    let f: f64 = 1.154105e-2;
    let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
    let rate = 0.5 * fixtures::dsbs_wyner_ci(0.1);
    for seed in 0..3 {
        let code = build_code(&base, 8, rate, Truncation::None, seed).unwrap();
        let t = estimate_tv(&code, 0, seed).unwrap();
        assert!(t.point >= 1.0 - 4.0 * (-8.0 * f).exp());
    }
}

#[test]
fn estimates_are_reproducible() {
    let base = fixtures::dsbs_wyner_coupling(0.1).unwrap();
    let a = build_code(&base, 12, 0.3, Truncation::Typical { eps: 1.0, eps_prime: 0.5 }, 7).unwrap();
    let b = build_code(&base, 12, 0.3, Truncation::Typical { eps: 1.0, eps_prime: 0.5 }, 7).unwrap();
    assert_eq!(a.codebook, b.codebook);
    assert_eq!(estimate_tv(&a, 3000, 1).unwrap(), estimate_tv(&b, 3000, 1).unwrap());
    assert_eq!(estimate_renyi(&a, -0.5, 3000, 1).unwrap(), estimate_renyi(&b, -0.5, 3000, 1).unwrap());
}

#[test]
fn oneshot_bound_on_random_instances() {
    let mut r = rng::stream(1, 2, 3);
    for _ in 0..20 {
        let nw = r.random_range(2..4);
        let nx = r.random_range(2..4);
        let weights = |r: &mut rng::StreamRng, k: usize| -> Vec<f64> { (0..k).map(|_| r.random_range(0.05..1.0)).collect() };
        let p_w = FinitePmf::from_weights(&weights(&mut r, nw)).unwrap();
        let cond = CondPmf::from_rows((0..nw).map(|_| FinitePmf::from_weights(&weights(&mut r, nx)).unwrap()).collect()).unwrap();
        let pi = FinitePmf::from_weights(&weights(&mut r, nx)).unwrap();
        let m = r.random_range(1..5);
        let s = r.random_range(0.05..1.0);
        let rep = oneshot_bound_verify(&p_w, &cond, &pi, m, s, OneShotMode::Exact).unwrap();
        assert!(rep.holds && rep.holds_gamma, "{rep:?}");
    }
}
