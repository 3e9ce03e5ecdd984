//! Local stability conditions, gain recommendations and single-link Hopf
//! predictions.
//!
//! Two sufficient conditions are evaluated per link. The bottleneck form
//! sums round trip times only over the routes the link actually holds at
//! equilibrium; the decentralized form needs nothing but the packet-weighted
//! round trip time seen by the link and always dominates the first.

use std::f64::consts::PI;

use serde::Serialize;

use crate::equilibrium::{check_single_bottleneck, Equilibrium};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::queue::QueueFunction;

/// `α/(dC) + β p'(ȳ)/(d²C)`: linearized gain of link `l` at equilibrium.
pub fn link_gain(network: &Network, l: usize, eq: &Equilibrium, q: &QueueFunction) -> Result<f64> {
    let link = network.link(l);
    let d = network.d(l)?;
    let c = link.capacity;
    let queue_slope = if link.beta == 0.0 { 0.0 } else { q.eval_derivative(eq.effective_capacity[l])? };
    Ok(link.alpha / (d * c) + link.beta * queue_slope / (d * d * c))
}

/// Left-hand side of the bottleneck condition for link `l`:
/// gain · R̄_l · Σ τ_r over routes bottlenecked at `l`.
pub fn bottleneck_condition(network: &Network, l: usize, eq: &Equilibrium, q: &QueueFunction) -> Result<f64> {
    let held_rtt: f64 = network
        .routes_through(l)
        .iter()
        .filter(|&&r| eq.is_bottleneck(r, l))
        .map(|&r| network.route(r).rtt)
        .sum();
    if held_rtt == 0.0 {
        return Ok(0.0);
    }
    Ok(link_gain(network, l, eq, q)? * eq.link_rates[l] * held_rtt)
}

/// Left-hand side of the decentralized condition for link `l`:
/// `(α/d + β p'(ȳ)/d²)(ȳ/C) d^p`.
pub fn decentralized_condition(
    network: &Network,
    l: usize,
    eq: &Equilibrium,
    q: &QueueFunction,
) -> Result<f64> {
    let dp = network.per_packet_rtt(l, &eq.rates)?;
    // gain · C == α/d + β p'/d²
    let gain = link_gain(network, l, eq, q)? * network.link(l).capacity;
    Ok(gain * eq.effective_capacity[l] / network.link(l).capacity * dp)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaRecommendation {
    pub alpha: f64,
    /// `β = 0`: the elasticity factor is dropped and `α = d^p / d`.
    pub beta_zero_variant: bool,
}

/// `α = d^p / (d (1 + γ))` with `γ` the queue elasticity at `ȳ_l`.
///
/// `ȳ_l` itself depends on `α_l`, so the recommendation is only
/// self-consistent after re-solving the equilibrium with it; see
/// [`apply_recommended_alpha`].
pub fn recommend_alpha(
    network: &Network,
    l: usize,
    eq: &Equilibrium,
    q: &QueueFunction,
) -> Result<AlphaRecommendation> {
    let dp = network.per_packet_rtt(l, &eq.rates)?;
    let d = network.d(l)?;
    let link = network.link(l);
    if link.beta == 0.0 {
        return Ok(AlphaRecommendation { alpha: dp / d, beta_zero_variant: true });
    }
    let gamma =
        q.elasticity(eq.effective_capacity[l]).map_err(|_| Error::ZeroQueueAtEquilibrium(link.id.clone()))?;
    Ok(AlphaRecommendation { alpha: dp / (d * (1.0 + gamma)), beta_zero_variant: false })
}

/// Network copy with every link's alpha replaced by its recommendation.
pub fn apply_recommended_alpha(
    network: &Network,
    eq: &Equilibrium,
    queues: &[QueueFunction],
) -> Result<Network> {
    let mut links = network.links().to_vec();
    for (l, link) in links.iter_mut().enumerate() {
        link.alpha = recommend_alpha(network, l, eq, &queues[l])?.alpha;
    }
    Ok(network.rebuilt(links, network.routes().to_vec()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkStability {
    pub link: String,
    pub bottleneck_lhs: f64,
    pub bottleneck_ok: bool,
    pub decentralized_lhs: f64,
    pub decentralized_ok: bool,
    pub recommended_alpha: Option<f64>,
    pub alpha_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub links: Vec<LinkStability>,
    pub all_ok: bool,
    /// Every route has a single bottleneck at equilibrium.
    pub assumption_ok: bool,
    pub note: Option<String>,
}

pub fn stability_report(
    network: &Network,
    eq: &Equilibrium,
    queues: &[QueueFunction],
) -> Result<StabilityReport> {
    let assumption_ok = check_single_bottleneck(network, eq).all_single;
    let mut links = Vec::with_capacity(network.num_links());
    for l in 0..network.num_links() {
        let q = &queues[l];
        let bottleneck_lhs = bottleneck_condition(network, l, eq, q)?;
        let decentralized_lhs = decentralized_condition(network, l, eq, q)?;
        let (recommended_alpha, alpha_note) = match recommend_alpha(network, l, eq, q) {
            Ok(rec) if rec.beta_zero_variant => {
                (Some(rec.alpha), Some("γ undefined, β=0 variant".to_owned()))
            }
            Ok(rec) => (Some(rec.alpha), None),
            Err(e) => (None, Some(e.to_string())),
        };
        links.push(LinkStability {
            link: network.link(l).id.clone(),
            bottleneck_ok: bottleneck_lhs < 1.0,
            bottleneck_lhs,
            decentralized_ok: decentralized_lhs < 1.0,
            decentralized_lhs,
            recommended_alpha,
            alpha_note,
        });
    }
    let all_ok = links.iter().all(|l| l.bottleneck_ok);
    let note = (!assumption_ok)
        .then(|| "assumption violated: some route has several bottlenecks; result not guaranteed".to_owned());
    Ok(StabilityReport { links, all_ok, assumption_ok, note })
}

/// `sqrt(20π / (3π - 2))`.
pub fn hopf_amplitude_constant() -> f64 {
    (20.0 * PI / (3.0 * PI - 2.0)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HopfPrediction {
    pub eta_c: f64,
    pub period: f64,
    /// Multiplies `sqrt(η - η_c)` in the bifurcating amplitude.
    pub amplitude_coefficient: f64,
}

/// Hopf point of the single-link, single-delay model with `β = 0`.
///
/// The linearization around `R̄` is `u̇ = -η(α/τ) u(t-τ) - η α/(τR̄) u(t) u(t-τ)`,
/// so the generic delay equation's coefficients are `ξ_x = α/τ` and
/// `ξ_xy = α/(τR̄)`.
pub fn hopf_prediction(alpha: f64, tau: f64, rbar: f64) -> HopfPrediction {
    HopfPrediction {
        eta_c: PI / (2.0 * alpha),
        period: 4.0 * tau,
        amplitude_coefficient: rbar * hopf_amplitude_constant(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve;
    use crate::network::{Link, Route};
    use approx::assert_relative_eq;

    fn single_link(alpha: f64, rtts: &[f64]) -> Network {
        let routes =
            rtts.iter().enumerate().map(|(i, &t)| Route::at_source(format!("r{i}"), ["l"], t)).collect();
        Network::new(vec![Link::new("l", 2.0, alpha, 0.0).with_d(1.0)], routes)
    }

    fn report(net: &Network, queues: &[QueueFunction]) -> StabilityReport {
        let eq = solve(net, queues).unwrap();
        stability_report(net, &eq, queues).unwrap()
    }

    #[test]
    fn bottleneck_condition_examples() {
        let r = report(&single_link(0.5, &[1.0, 1.0]), &[QueueFunction::Zero]);
        assert_relative_eq!(r.links[0].bottleneck_lhs, 0.5, max_relative = 1e-15);
        assert!(r.links[0].bottleneck_ok && r.all_ok);

        let r = report(&single_link(1.2, &[1.0, 1.0]), &[QueueFunction::Zero]);
        assert_relative_eq!(r.links[0].bottleneck_lhs, 1.2, max_relative = 1e-15);
        assert!(!r.links[0].bottleneck_ok && !r.all_ok);
    }

    #[test]
    fn link_without_held_routes_is_trivially_fine() {
        let net = Network::new(
            vec![Link::new("A", 1.0, 1.0, 0.0), Link::new("B", 5.0, 50.0, 0.0)],
            vec![Route::at_source("r", ["A", "B"], 1.0)],
        );
        let r = report(&net, &[QueueFunction::Zero; 2]);
        assert_eq!(r.links[1].bottleneck_lhs, 0.0);
        assert!(r.links[1].bottleneck_ok);
    }

    #[test]
    fn decentralized_equals_bottleneck_on_symmetric_link() {
        let net = single_link(0.7, &[1.0, 2.0, 3.0]);
        let r = report(&net, &[QueueFunction::Zero]);
        assert_relative_eq!(r.links[0].decentralized_lhs, r.links[0].bottleneck_lhs, max_relative = 1e-14);
    }

    #[test]
    fn long_unheld_route_inflates_decentralized_lhs() {
        // r2 is held by A, so B only holds r3 but sees r2's long rtt.
        let net = Network::new(
            vec![Link::new("A", 1.0, 0.5, 0.0), Link::new("B", 3.0, 0.5, 0.0)],
            vec![
                Route::at_source("r1", ["A"], 1.0),
                Route::at_source("r2", ["A", "B"], 10.0),
                Route::at_source("r3", ["B"], 1.0),
            ],
        );
        let r = report(&net, &[QueueFunction::Zero; 2]);
        let b = &r.links[1];
        assert!(b.decentralized_lhs > b.bottleneck_lhs);
        // d_B = 5.5, R̄_B = 2.5: bottleneck = 0.5/(5.5·3)·2.5·1
        assert_relative_eq!(b.bottleneck_lhs, 0.5 / 16.5 * 2.5, max_relative = 1e-14);
        // decentralized = (0.5/5.5)(3/3)(0.5·10 + 2.5·1)/3
        assert_relative_eq!(b.decentralized_lhs, 0.5 / 5.5 * 7.5 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn vanishing_gain() {
        let r = report(&single_link(1e-9, &[1.0, 4.0]), &[QueueFunction::Zero]);
        assert!(r.links[0].decentralized_lhs < 1e-8 && r.links[0].decentralized_ok);
    }

    #[test]
    fn recommend_alpha_examples() {
        // d^p = d and γ = 1
        let mut net = single_link(1.0, &[1.0, 1.0]);
        let mut links = net.links().to_vec();
        links[0].beta = 1.0;
        net = net.rebuilt(links, net.routes().to_vec());
        let q = [QueueFunction::Linear { k: 1.0 }];
        let eq = solve(&net, &q).unwrap();
        let rec = recommend_alpha(&net, 0, &eq, &q[0]).unwrap();
        assert_relative_eq!(rec.alpha, 0.5, max_relative = 1e-15);
        assert!(!rec.beta_zero_variant);

        let q = [QueueFunction::Power { k: 1.0, m: 2.0 }];
        let eq = solve(&net, &q).unwrap();
        assert_relative_eq!(
            recommend_alpha(&net, 0, &eq, &q[0]).unwrap().alpha,
            1.0 / 3.0,
            max_relative = 1e-15
        );

        // β = 0: d^p = 1.5 with d pinned to 2
        let net = Network::new(
            vec![Link::new("l", 2.0, 1.0, 0.0).with_d(2.0)],
            vec![Route::at_source("a", ["l"], 1.0), Route::at_source("b", ["l"], 2.0)],
        );
        let eq = solve(&net, &[QueueFunction::Zero]).unwrap();
        let rec = recommend_alpha(&net, 0, &eq, &QueueFunction::Zero).unwrap();
        assert_relative_eq!(rec.alpha, 0.75, max_relative = 1e-15);
        assert!(rec.beta_zero_variant);
        let r = stability_report(&net, &eq, &[QueueFunction::Zero]).unwrap();
        assert_eq!(r.links[0].alpha_note.as_deref(), Some("γ undefined, β=0 variant"));
    }

    #[test]
    fn zero_queue_with_positive_beta_is_an_error() {
        let net = Network::new(vec![Link::new("l", 2.0, 1.0, 0.5)], vec![Route::at_source("a", ["l"], 1.0)]);
        let eq = solve(&net, &[QueueFunction::Zero]).unwrap();
        assert!(matches!(
            recommend_alpha(&net, 0, &eq, &QueueFunction::Zero),
            Err(Error::ZeroQueueAtEquilibrium(_))
        ));
    }

    #[test]
    fn hopf_examples() {
        let p = hopf_prediction(1.0, 1.0, 1.0);
        assert_relative_eq!(p.eta_c, std::f64::consts::FRAC_PI_2, max_relative = 1e-15);
        assert_eq!(p.period, 4.0);
        // 20π / 7.424778 = 8.462452, sqrt = 2.909030
        assert!((p.amplitude_coefficient - 2.909030).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hopf_product_is_quarter_turn(alpha in 1e-3f64..1e3, tau in 1e-3f64..1e3) {
                let p = hopf_prediction(alpha, tau, 1.0);
                prop_assert!((p.eta_c * alpha - PI / 2.0).abs() <= 4.0 * f64::EPSILON);
                prop_assert_eq!(p.period, 4.0 * tau);
            }
        }
    }
}
