//! Limiting rate vector of the delay-free dynamics.
//!
//! Each link balances its rate update at an effective capacity `ȳ_l` below
//! its raw capacity (the queue term eats into it). The limiting route rates
//! are the max-min fair allocation against those effective capacities,
//! obtained by progressive filling.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::queue::QueueFunction;
use crate::Link;

/// Relative tolerance for comparing water-filling levels.
pub const LEVEL_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for deciding `x̄_r = R̄_l`.
pub const BOTTLENECK_TOLERANCE: f64 = 1e-9;

const BISECTION_CAP: usize = 200;

/// `α/(dC)(C - y) - β p(y)/(d²C)`: the bracket of the link rate update.
pub fn rate_balance(link: &Link, d: f64, q: &QueueFunction, y: f64) -> Result<f64> {
    let c = link.capacity;
    let queue = if link.beta == 0.0 { 0.0 } else { q.eval(y)? };
    Ok(link.alpha / (d * c) * (c - y) - link.beta * queue / (d * d * c))
}

/// Aggregate rate at which `link`'s rate update balances.
pub fn effective_capacity(link: &Link, d: f64, q: &QueueFunction) -> f64 {
    if link.beta == 0.0 || q.is_zero() {
        return link.capacity;
    }
    let mut lo = 0.0;
    let mut hi = q.pole().map_or(link.capacity, |p| p.min(link.capacity));
    // Outside the queue domain the balance is treated as -inf.
    let balance = |y: f64| rate_balance(link, d, q, y).unwrap_or(f64::NEG_INFINITY);
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick the bracket end with the smaller residual.
    let (blo, bhi) = (balance(lo).abs(), balance(hi).abs());
    if blo <= bhi {
        lo
    } else {
        hi
    }
}

/// Effective capacities for every link.
pub fn effective_capacities(network: &Network, queues: &[QueueFunction]) -> Result<Vec<f64>> {
    (0..network.num_links())
        .map(|l| Ok(effective_capacity(network.link(l), network.d(l)?, &queues[l])))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Equilibrium {
    /// `x̄_r` per route.
    pub rates: Vec<f64>,
    /// `R̄_l`: the largest `x̄_r` over routes through `l`.
    pub link_rates: Vec<f64>,
    /// `ȳ_l` per link.
    pub effective_capacity: Vec<f64>,
    /// Link (index) at which each route froze.
    pub bottleneck: Vec<usize>,
    /// Route froze at several links in the same filling round.
    pub tie: Vec<bool>,
    /// Link reached its effective capacity during filling.
    pub saturated: Vec<bool>,
    /// Filling levels in increasing order.
    pub levels: Vec<f64>,
}

impl Equilibrium {
    /// Route `r` is held at its rate by link `l`: `l` is saturated and
    /// `x̄_r = R̄_l`.
    pub fn is_bottleneck(&self, r: usize, l: usize) -> bool {
        self.saturated[l]
            && (self.rates[r] - self.link_rates[l]).abs() <= BOTTLENECK_TOLERANCE * self.link_rates[l].abs()
    }

    pub fn aggregate(&self, network: &Network, l: usize) -> f64 {
        network.routes_through(l).iter().map(|&r| self.rates[r]).sum()
    }
}

/// Progressive max-min filling of `network`'s routes against `capacity`.
pub fn water_fill(network: &Network, capacity: &[f64]) -> Equilibrium {
    let (nl, nr) = (network.num_links(), network.num_routes());
    let mut rates = vec![0.0; nr];
    let mut frozen = vec![false; nr];
    let mut bottleneck = vec![usize::MAX; nr];
    let mut tie = vec![false; nr];
    let mut saturated = vec![false; nl];
    let mut residual = capacity.to_vec();
    let mut levels = Vec::new();
    let mut remaining = nr;

    while remaining > 0 {
        let shares: Vec<Option<f64>> = (0..nl)
            .map(|l| {
                let open = network.routes_through(l).iter().filter(|&&r| !frozen[r]).count();
                (open > 0).then(|| residual[l].max(0.0) / open as f64)
            })
            .collect();
        let Some(level) = shares.iter().flatten().copied().reduce(f64::min) else {
            break;
        };
        let limit = level + LEVEL_TOLERANCE * level.abs();
        let minimizing: Vec<bool> = shares.iter().map(|s| s.is_some_and(|s| s <= limit)).collect();
        levels.push(level);

        let mut newly = Vec::new();
        for r in 0..nr {
            if frozen[r] {
                continue;
            }
            let mut at: Vec<usize> =
                network.route_links(r).iter().copied().filter(|&l| minimizing[l]).collect();
            if at.is_empty() {
                continue;
            }
            at.sort_by(|&a, &b| network.link(a).id.cmp(&network.link(b).id));
            bottleneck[r] = at[0];
            tie[r] = at.len() > 1;
            rates[r] = level;
            newly.push(r);
        }
        for (l, &m) in minimizing.iter().enumerate() {
            saturated[l] |= m;
        }
        for &r in &newly {
            frozen[r] = true;
            for &l in network.route_links(r) {
                residual[l] -= level;
            }
        }
        remaining -= newly.len();
    }

    let link_rates =
        (0..nl).map(|l| network.routes_through(l).iter().map(|&r| rates[r]).fold(0.0, f64::max)).collect();
    Equilibrium {
        rates,
        link_rates,
        effective_capacity: capacity.to_vec(),
        bottleneck,
        tie,
        saturated,
        levels,
    }
}

/// Effective capacities followed by water filling.
pub fn solve(network: &Network, queues: &[QueueFunction]) -> Result<Equilibrium> {
    if queues.len() != network.num_links() {
        return Err(Error::InvalidConfig(format!(
            "{} queue functions for {} links",
            queues.len(),
            network.num_links()
        )));
    }
    let report = network.validate();
    if !report.is_valid() {
        return Err(Error::InvalidNetwork(report.to_string()));
    }
    Ok(water_fill(network, &effective_capacities(network, queues)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteBottlenecks {
    /// Links `l ∈ r` with `x̄_r = R̄_l`.
    pub links: Vec<usize>,
    pub single: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BottleneckReport {
    pub routes: Vec<RouteBottlenecks>,
    pub violating: Vec<usize>,
    pub all_single: bool,
}

/// Whether every route has exactly one bottleneck link.
pub fn check_single_bottleneck(network: &Network, eq: &Equilibrium) -> BottleneckReport {
    let routes: Vec<RouteBottlenecks> = (0..network.num_routes())
        .map(|r| {
            let links: Vec<usize> =
                network.route_links(r).iter().copied().filter(|&l| eq.is_bottleneck(r, l)).collect();
            let single = links.len() == 1;
            RouteBottlenecks { links, single }
        })
        .collect();
    let violating: Vec<usize> =
        routes.iter().enumerate().filter(|(_, b)| !b.single).map(|(r, _)| r).collect();
    BottleneckReport { all_single: violating.is_empty(), routes, violating }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Route;
    use approx::assert_relative_eq;

    fn link(c: f64, alpha: f64, beta: f64) -> Link {
        Link::new("l", c, alpha, beta)
    }

    #[test]
    fn beta_zero_gives_raw_capacity() {
        let c = 1.2345678;
        assert_eq!(effective_capacity(&link(c, 0.7, 0.0), 1.0, &QueueFunction::Linear { k: 3.0 }), c);
    }

    #[test]
    fn linear_queue_closed_form() {
        // α d (C - y) = β k y  =>  y = α d C / (α d + β k)
        let q = QueueFunction::Linear { k: 1.0 };
        let y = effective_capacity(&link(1.0, 1.0, 1.0), 1.0, &q);
        assert_relative_eq!(y, 0.5, max_relative = 1e-14);
        let y = effective_capacity(&link(3.0, 1.0, 2.0), 1.0, &q);
        assert_relative_eq!(y, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn residual_is_tiny() {
        let cases = [
            (link(3.0, 0.4, 2.0), 1.7, QueueFunction::Power { k: 0.3, m: 2.5 }),
            (link(2.0, 1.0, 5.0), 0.5, QueueFunction::Mm1Scaled { k: 1.0, capacity: 2.0 }),
            (link(10.0, 0.1, 0.01), 2.0, QueueFunction::Linear { k: 7.0 }),
        ];
        for (l, d, q) in cases {
            let y = effective_capacity(&l, d, &q);
            assert!(y > 0.0 && y < l.capacity);
            let res = rate_balance(&l, d, &q, y).unwrap();
            assert!(res.abs() <= 1e-12 * l.alpha / d, "{res}");
        }
    }

    #[test]
    fn decreasing_in_beta() {
        let q = QueueFunction::Mm1Scaled { k: 0.5, capacity: 4.0 };
        let mut prev = f64::INFINITY;
        for beta in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let y = effective_capacity(&link(4.0, 0.8, beta), 1.3, &q);
            assert!(y < prev);
            prev = y;
        }
    }

    pub(crate) fn three_route() -> Network {
        Network::new(
            vec![Link::new("A", 1.0, 1.0, 0.0), Link::new("B", 3.0, 1.0, 0.0)],
            vec![
                Route::at_source("r1", ["A"], 1.0),
                Route::at_source("r2", ["A", "B"], 1.0),
                Route::at_source("r3", ["B"], 1.0),
            ],
        )
    }

    #[test]
    fn hand_water_fill() {
        let net = three_route();
        let eq = water_fill(&net, &[1.0, 3.0]);
        assert_eq!(eq.rates, vec![0.5, 0.5, 2.5]);
        assert_eq!(eq.bottleneck, vec![0, 0, 1]);
        assert_eq!(eq.link_rates, vec![0.5, 2.5]);
        assert_eq!(eq.levels, vec![0.5, 2.5]);
        assert!(eq.tie.iter().all(|t| !t));
        let report = check_single_bottleneck(&net, &eq);
        assert!(report.all_single);
    }

    #[test]
    fn symmetric_share() {
        let routes = (0..7).map(|i| Route::at_source(format!("r{i}"), ["l"], 1.0)).collect();
        let net = Network::new(vec![link(2.1, 1.0, 0.0)], routes);
        let eq = water_fill(&net, &[2.1]);
        for x in &eq.rates {
            assert_relative_eq!(*x, 0.3, max_relative = 1e-15);
        }
        assert!(check_single_bottleneck(&net, &eq).all_single);
    }

    #[test]
    fn identical_links_tie() {
        let net = Network::new(
            vec![Link::new("l", 1.0, 1.0, 0.0), Link::new("j", 1.0, 1.0, 0.0)],
            vec![Route::at_source("r", ["l", "j"], 1.0)],
        );
        let eq = solve(&net, &[QueueFunction::Zero; 2]).unwrap();
        assert_eq!(eq.rates, vec![1.0]);
        assert!(eq.tie[0]);
        // lowest id wins: "j" < "l"
        assert_eq!(eq.bottleneck[0], 1);
        let report = check_single_bottleneck(&net, &eq);
        assert!(!report.all_single);
        assert_eq!(report.violating, vec![0]);
        assert_eq!(report.routes[0].links, vec![0, 1]);
    }

    #[test]
    fn unsaturated_link_is_not_a_bottleneck() {
        let net = Network::new(
            vec![Link::new("A", 1.0, 1.0, 0.0), Link::new("B", 5.0, 1.0, 0.0)],
            vec![Route::at_source("r", ["A", "B"], 1.0)],
        );
        let eq = solve(&net, &[QueueFunction::Zero; 2]).unwrap();
        assert_eq!(eq.saturated, vec![true, false]);
        assert!(!eq.is_bottleneck(0, 1));
        assert!(check_single_bottleneck(&net, &eq).all_single);
    }

    #[test]
    fn solve_rejects_invalid_networks() {
        let net = Network::new(vec![link(1.0, 1.0, 0.0)], vec![Route::at_source("r", ["x"], 1.0)]);
        assert!(matches!(solve(&net, &[QueueFunction::Zero]), Err(Error::InvalidNetwork(_))));
    }
}
