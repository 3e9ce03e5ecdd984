//! Random small networks for property tests, acceptance runs and benches.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::network::{Link, Network, Route};
use crate::queue::QueueFunction;

#[derive(Clone, Debug, PartialEq)]
pub struct RandomNetworkOptions {
    pub max_links: usize,
    pub max_routes: usize,
    pub max_hops: usize,
    pub capacity: (f64, f64),
    pub alpha: (f64, f64),
    /// Chance that a link gets a linear queue with `β > 0`.
    pub queue_probability: f64,
    pub beta: (f64, f64),
    pub queue_slope: (f64, f64),
    /// `None` builds a delay-free network with `d` drawn from `d_range`.
    pub rtt: Option<(f64, f64)>,
    pub d_range: (f64, f64),
}

impl Default for RandomNetworkOptions {
    fn default() -> Self {
        RandomNetworkOptions {
            max_links: 5,
            max_routes: 6,
            max_hops: 3,
            capacity: (1.0, 4.0),
            alpha: (0.3, 1.0),
            queue_probability: 0.5,
            beta: (0.1, 1.0),
            queue_slope: (0.5, 2.0),
            rtt: Some((0.5, 2.0)),
            d_range: (0.5, 1.5),
        }
    }
}

impl RandomNetworkOptions {
    pub fn delay_free() -> Self {
        RandomNetworkOptions { rtt: None, ..Self::default() }
    }
}

/// Draws a valid network and its queue functions. Every link carries at
/// least one route; hops of a route are distinct.
pub fn random_network<R: Rng>(rng: &mut R, opts: &RandomNetworkOptions) -> (Network, Vec<QueueFunction>) {
    let nl = rng.gen_range(1..=opts.max_links);
    let nr = rng.gen_range(nl.min(opts.max_routes).max(1)..=opts.max_routes.max(1));
    let ids: Vec<String> = (0..nl).map(|l| format!("L{l}")).collect();

    let mut paths: Vec<Vec<usize>> = (0..nr)
        .map(|_| {
            let hops = rng.gen_range(1..=opts.max_hops.min(nl));
            let mut all: Vec<usize> = (0..nl).collect();
            all.shuffle(rng);
            all.truncate(hops);
            all
        })
        .collect();
    // Cover unused links by prepending them to a random route with room, or
    // by replacing a route's first hop.
    for l in 0..nl {
        if paths.iter().any(|p| p.contains(&l)) {
            continue;
        }
        let r = rng.gen_range(0..nr);
        if paths[r].len() < opts.max_hops {
            paths[r].insert(0, l);
        } else {
            paths[r][0] = l;
        }
    }
    // A replacement can orphan another link; fall back to one route per link.
    if (0..nl).any(|l| !paths.iter().any(|p| p.contains(&l))) {
        paths = (0..nl).map(|l| vec![l]).collect();
    }

    let mut links = Vec::with_capacity(nl);
    let mut queues = Vec::with_capacity(nl);
    for id in &ids {
        let mut link = Link::new(
            id.clone(),
            rng.gen_range(opts.capacity.0..=opts.capacity.1),
            rng.gen_range(opts.alpha.0..=opts.alpha.1),
            0.0,
        );
        if rng.gen_bool(opts.queue_probability) {
            link.beta = rng.gen_range(opts.beta.0..=opts.beta.1);
            queues.push(QueueFunction::Linear { k: rng.gen_range(opts.queue_slope.0..=opts.queue_slope.1) });
        } else {
            queues.push(QueueFunction::Zero);
        }
        if opts.rtt.is_none() {
            link.d = Some(rng.gen_range(opts.d_range.0..=opts.d_range.1));
        }
        links.push(link);
    }

    let routes = paths
        .iter()
        .enumerate()
        .map(|(r, path)| {
            let hop_ids: Vec<String> = path.iter().map(|&l| ids[l].clone()).collect();
            match opts.rtt {
                None => Route::at_source(format!("R{r}"), hop_ids, 0.0),
                Some((lo, hi)) => {
                    let rtt = rng.gen_range(lo..=hi);
                    // forward delays increase along the path and lie in [5%, 50%) of the rtt
                    let mut fwd: Vec<f64> = (0..path.len()).map(|_| rng.gen_range(0.05..0.5) * rtt).collect();
                    fwd.sort_by(f64::total_cmp);
                    Route::new(format!("R{r}"), hop_ids, fwd, rtt)
                }
            }
        })
        .collect();
    let network = Network::new(links, routes).delay_free(opts.rtt.is_none());
    (network, queues)
}
