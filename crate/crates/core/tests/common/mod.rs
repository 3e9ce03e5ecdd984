//! Checks shared by the property suite and the acceptance runner. Each one
//! returns the measured quantity so callers can choose how to report it.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use rcp_fluid::random::{random_network, RandomNetworkOptions};
use rcp_fluid::sim::{run, RunawayPolicy};
use rcp_fluid::stability::{bottleneck_condition, decentralized_condition};
use rcp_fluid::{solve, Link, Network, QueueFunction, Route, SimConfig};

pub fn seeded(seed: u64, opts: &RandomNetworkOptions) -> (Network, Vec<QueueFunction>) {
    random_network(&mut StdRng::seed_from_u64(seed), opts)
}

/// Options restricted to `β = 0` links, or to links that all carry a queue.
pub fn options(queues: bool, delay_free: bool) -> RandomNetworkOptions {
    let base = if delay_free { RandomNetworkOptions::delay_free() } else { RandomNetworkOptions::default() };
    RandomNetworkOptions { queue_probability: if queues { 1.0 } else { 0.0 }, ..base }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Relative gap between `p'(y)` and a central difference.
pub fn derivative_error(q: &QueueFunction, y: f64) -> f64 {
    let h = 1e-5 * y;
    let fd = (q.eval(y + h).unwrap() - q.eval(y - h).unwrap()) / (2.0 * h);
    rel(fd, q.eval_derivative(y).unwrap())
}

pub fn queue_samples() -> Vec<QueueFunction> {
    vec![
        QueueFunction::Linear { k: 0.3 },
        QueueFunction::Linear { k: 4.0 },
        QueueFunction::Power { k: 0.5, m: 1.5 },
        QueueFunction::Power { k: 2.0, m: 3.0 },
        QueueFunction::Mm1Scaled { k: 1.0, capacity: 2.0 },
        QueueFunction::Mm1Scaled { k: 0.2, capacity: 10.0 },
    ]
}

/// Largest relative change in any route or link rate after shuffling the
/// order of links and routes.
pub fn permutation_mismatch(net: &Network, queues: &[QueueFunction], shuffle_seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(shuffle_seed);
    let mut li: Vec<usize> = (0..net.num_links()).collect();
    let mut ri: Vec<usize> = (0..net.num_routes()).collect();
    li.shuffle(&mut rng);
    ri.shuffle(&mut rng);
    let links: Vec<Link> = li.iter().map(|&l| net.link(l).clone()).collect();
    let routes: Vec<Route> = ri.iter().map(|&r| net.route(r).clone()).collect();
    let qs: Vec<QueueFunction> = li.iter().map(|&l| queues[l]).collect();
    let permuted = net.rebuilt(links, routes);

    let a = solve(net, queues).unwrap();
    let b = solve(&permuted, &qs).unwrap();
    let routes = ri.iter().enumerate().map(|(k, &r)| rel(b.rates[k], a.rates[r]));
    let links = li.iter().enumerate().map(|(k, &l)| rel(b.link_rates[k], a.link_rates[l]));
    routes.chain(links).fold(0.0, f64::max)
}

/// Largest drift, relative to `R̄`, of route rates and saturated link rates
/// when the simulation starts at equilibrium.
pub fn fixed_point_drift(net: &Network, queues: &[QueueFunction]) -> f64 {
    let eq = solve(net, queues).unwrap();
    let step = net.min_positive_delay().map_or(0.01, |d| (d / 20.0).min(0.01));
    let horizon = 10.0 * net.max_rtt().max(1.0);
    let cfg = SimConfig::new(step, horizon, eq.link_rates.clone()).stride(10).runaway(RunawayPolicy::Hold);
    let trace = run(net, queues, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for (r, series) in trace.route_rates.iter().enumerate() {
        for &x in series {
            worst = worst.max(rel(x, eq.rates[r]));
        }
    }
    for (l, series) in trace.rates.iter().enumerate() {
        if eq.saturated[l] {
            for &v in series {
                worst = worst.max(rel(v, eq.link_rates[l]));
            }
        }
    }
    worst
}

/// Three links on one bottleneck with single-hop routes of unequal delay, so
/// no min ever switches.
pub fn smooth_network() -> (Network, Vec<QueueFunction>) {
    let routes = vec![
        Route::new("a", ["l"], vec![0.25], 1.0),
        Route::new("b", ["l"], vec![0.5], 1.5),
        Route::new("c", ["l"], vec![0.75], 2.0),
    ];
    let net = Network::checked(vec![Link::new("l", 2.0, 0.8, 0.3)], routes).unwrap();
    (net, vec![QueueFunction::Linear { k: 1.0 }])
}

/// `|R_h - R_{h/2}| / |R_{h/2} - R_{h/4}|` at the end of a run from a 30%
/// perturbation; about 16 for a fourth order scheme.
pub fn step_halving_ratio(net: &Network, queues: &[QueueFunction], eta: f64, horizon: f64, h: f64) -> f64 {
    let eq = solve(net, queues).unwrap();
    let init: Vec<f64> = eq.link_rates.iter().map(|r| 1.3 * r).collect();
    let finals: Vec<Vec<f64>> = [h, h / 2.0, h / 4.0]
        .iter()
        .map(|&step| {
            let cfg = SimConfig::new(step, horizon, init.clone()).eta(eta).stride(usize::MAX);
            let trace = run(net, queues, &cfg).unwrap();
            trace.rates.iter().map(|s| *s.last().unwrap()).collect()
        })
        .collect();
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    gap(&finals[0], &finals[1]) / gap(&finals[1], &finals[2])
}

pub fn bottleneck_lhs(net: &Network, queues: &[QueueFunction]) -> Vec<f64> {
    let eq = solve(net, queues).unwrap();
    (0..net.num_links()).map(|l| bottleneck_condition(net, l, &eq, &queues[l]).unwrap()).collect()
}

/// Scaling link `l`'s α up never lowers its bottleneck left-hand side.
/// Holds for `β = 0` links, whose effective capacity ignores α; with a queue
/// term a larger α raises `ȳ_l` and can move routes to other bottlenecks.
pub fn monotone_in_alpha(net: &Network, queues: &[QueueFunction], l: usize, factor: f64) -> bool {
    let pinned = net.with_pinned_d().unwrap();
    let before = bottleneck_lhs(&pinned, queues)[l];
    let after = bottleneck_lhs(&pinned.with_alpha(l, net.link(l).alpha * factor), queues)[l];
    after >= before * (1.0 - 1e-12)
}

/// Stretching route `r`'s delays never lowers any bottleneck left-hand side.
pub fn monotone_in_rtt(net: &Network, queues: &[QueueFunction], r: usize, factor: f64) -> bool {
    let pinned = net.with_pinned_d().unwrap();
    let before = bottleneck_lhs(&pinned, queues);
    let after = bottleneck_lhs(&pinned.with_scaled_rtt(r, factor), queues);
    before.iter().zip(&after).all(|(b, a)| *a >= b * (1.0 - 1e-12))
}

/// Every link meeting the decentralized condition meets the bottleneck one.
pub fn decentralized_implies_bottleneck(net: &Network, queues: &[QueueFunction]) -> bool {
    let eq = solve(net, queues).unwrap();
    (0..net.num_links()).all(|l| {
        let dec = decentralized_condition(net, l, &eq, &queues[l]).unwrap();
        let bot = bottleneck_condition(net, l, &eq, &queues[l]).unwrap();
        dec >= 1.0 || bot < 1.0
    })
}
