mod common;

use proptest::prelude::*;

use common::*;
use rcp_fluid::bifurcation::{estimate_eta_c, HopfSetup};
use rcp_fluid::{solve, QueueFunction};

fn queue_family() -> impl Strategy<Value = QueueFunction> {
    prop_oneof![
        (0.01f64..10.0).prop_map(|k| QueueFunction::Linear { k }),
        (0.01f64..10.0, 1.0f64..4.0).prop_map(|(k, m)| QueueFunction::Power { k, m }),
        (0.01f64..10.0, 0.5f64..20.0).prop_map(|(k, capacity)| QueueFunction::Mm1Scaled { k, capacity }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queue_derivative_matches_finite_difference(q in queue_family(), frac in 0.02f64..0.95) {
        let y = q.pole().map_or(frac * 10.0, |p| frac * p);
        prop_assert!(derivative_error(&q, y) < 1e-6);
    }

    #[test]
    fn water_fill_ignores_ordering(seed in any::<u64>(), shuffle in any::<u64>(), queues in any::<bool>()) {
        let (net, q) = seeded(seed, &options(queues, false));
        prop_assert!(permutation_mismatch(&net, &q, shuffle) < 1e-12);
    }

    #[test]
    fn water_fill_is_feasible(seed in any::<u64>()) {
        let (net, q) = seeded(seed, &Default::default());
        let eq = solve(&net, &q).unwrap();
        for l in 0..net.num_links() {
            let load = eq.aggregate(&net, l);
            let cap = eq.effective_capacity[l];
            prop_assert!(load <= cap * (1.0 + 1e-12));
            if eq.saturated[l] {
                prop_assert!(rel(load, cap) < 1e-9);
            }
        }
    }

    #[test]
    fn bottleneck_lhs_grows_with_alpha(seed in any::<u64>(), factor in 1.0f64..4.0) {
        let (net, q) = seeded(seed, &options(false, false));
        for l in 0..net.num_links() {
            prop_assert!(monotone_in_alpha(&net, &q, l, factor), "link {}", l);
        }
    }

    #[test]
    fn bottleneck_lhs_grows_with_rtt(seed in any::<u64>(), factor in 1.0f64..4.0) {
        let (net, q) = seeded(seed, &Default::default());
        for r in 0..net.num_routes() {
            prop_assert!(monotone_in_rtt(&net, &q, r, factor), "route {}", r);
        }
    }

    #[test]
    fn decentralized_condition_is_stronger(seed in any::<u64>()) {
        let (net, q) = seeded(seed, &Default::default());
        prop_assert!(decentralized_implies_bottleneck(&net, &q));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn equilibrium_does_not_drift(seed in any::<u64>(), queues in any::<bool>()) {
        let (net, q) = seeded(seed, &options(queues, false));
        prop_assert!(fixed_point_drift(&net, &q) < 1e-8);
    }
}

#[test]
fn rk4_step_halving() {
    let (net, q) = smooth_network();
    let ratio = step_halving_ratio(&net, &q, 2.0, 8.0, 0.0125);
    assert!(ratio >= 8.0, "{ratio}");
}

#[test]
fn threshold_estimate_ignores_perturbation_size() {
    let estimates: Vec<f64> = [0.001, 0.05]
        .iter()
        .map(|&p| {
            let setup = HopfSetup { perturbation: p, horizon_taus: 2000.0, ..HopfSetup::new(1.0, 1.0) };
            let c = setup.predicted_eta_c();
            estimate_eta_c(&setup, (0.5 * c, 1.5 * c), 1e-3).unwrap().eta_c
        })
        .collect();
    assert!(rel(estimates[0], estimates[1]) < 0.02, "{estimates:?}");
}
