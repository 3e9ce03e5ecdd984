//! Topology, per-hop propagation delays and per-link controller parameters.
//!
//! A [`Network`] is a set of links and a set of routes, each route being an
//! ordered list of links with a forward delay (source to link) and a return
//! delay (link back to the source) for every hop. The two delays of a hop
//! always add up to the route's round trip time.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for the per-hop round trip consistency check.
pub const DEFAULT_RTT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub capacity: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Round trip time estimate used in the rate update gains. `None` means
    /// the mean round trip time of the routes through the link.
    pub d: Option<f64>,
}

impl Link {
    pub fn new(id: impl Into<String>, capacity: f64, alpha: f64, beta: f64) -> Self {
        Link { id: id.into(), capacity, alpha, beta, d: None }
    }

    pub fn with_d(mut self, d: f64) -> Self {
        self.d = Some(d);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    pub links: Vec<String>,
    pub forward_delays: Vec<f64>,
    pub return_delays: Vec<f64>,
    pub rtt: f64,
}

impl Route {
    /// Builds a route from forward delays, deriving each return delay as
    /// `rtt - forward`.
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        links: impl IntoIterator<Item = S>,
        forward_delays: Vec<f64>,
        rtt: f64,
    ) -> Self {
        let return_delays = forward_delays.iter().map(|f| rtt - f).collect();
        Route {
            id: id.into(),
            links: links.into_iter().map(Into::into).collect(),
            forward_delays,
            return_delays,
            rtt,
        }
    }

    /// Route whose hops all sit at the source: zero forward delay, the whole
    /// round trip on the return path.
    pub fn at_source<S: Into<String>>(
        id: impl Into<String>,
        links: impl IntoIterator<Item = S>,
        rtt: f64,
    ) -> Self {
        let links: Vec<String> = links.into_iter().map(Into::into).collect();
        let forward = vec![0.0; links.len()];
        Route::new(id, links, forward, rtt)
    }

    pub fn with_return_delays(mut self, return_delays: Vec<f64>) -> Self {
        self.return_delays = return_delays;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositiveCapacity {
        link: String,
        value: f64,
    },
    NonPositiveAlpha {
        link: String,
        value: f64,
    },
    NegativeBeta {
        link: String,
        value: f64,
    },
    NonPositiveD {
        link: String,
        value: f64,
    },
    DuplicateLink {
        link: String,
    },
    DuplicateRoute {
        route: String,
    },
    EmptyRoute {
        route: String,
    },
    RepeatedHop {
        route: String,
        link: String,
    },
    UnknownLink {
        route: String,
        link: String,
    },
    DelayArity {
        route: String,
        links: usize,
        forward: usize,
        ret: usize,
    },
    NegativeDelay {
        route: String,
        link: String,
        value: f64,
    },
    NonPositiveRtt {
        route: String,
        value: f64,
    },
    RttMismatch {
        route: String,
        link: String,
        sum: f64,
        rtt: f64,
    },
    UnusedLink {
        link: String,
    },
    /// `d` is not overridden and no route with positive delay crosses the link.
    UndefinedD {
        link: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonPositiveCapacity { link, value } => write!(f, "capacity of `{link}` must be > 0, got {value}"),
            NonPositiveAlpha { link, value } => write!(f, "alpha of `{link}` must be > 0, got {value}"),
            NegativeBeta { link, value } => write!(f, "beta of `{link}` must be >= 0, got {value}"),
            NonPositiveD { link, value } => write!(f, "d of `{link}` must be > 0, got {value}"),
            DuplicateLink { link } => write!(f, "duplicate link id `{link}`"),
            DuplicateRoute { route } => write!(f, "duplicate route id `{route}`"),
            EmptyRoute { route } => write!(f, "route `{route}` has no links"),
            RepeatedHop { route, link } => write!(f, "route `{route}` crosses `{link}` twice"),
            UnknownLink { route, link } => write!(f, "unknown link `{link}` on route `{route}`"),
            DelayArity { route, links, forward, ret } => {
                write!(f, "route `{route}` has {links} links but {forward} forward and {ret} return delays")
            }
            NegativeDelay { route, link, value } => {
                write!(f, "negative delay {value} on ({route},{link})")
            }
            NonPositiveRtt { route, value } => write!(f, "rtt of `{route}` must be > 0, got {value}"),
            RttMismatch { route, link, sum, rtt } => {
                write!(f, "RTT mismatch on ({route},{link}): {sum} ≠ {rtt}")
            }
            UnusedLink { link } => write!(f, "link `{link}` carries no route"),
            UndefinedD { link } => {
                write!(f, "d of `{link}` cannot be derived from zero round trip times")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Immutable topology with resolved link indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    links: Vec<Link>,
    routes: Vec<Route>,
    link_index: HashMap<String, usize>,
    /// Per route, indices of its resolvable links (unknown ids skipped).
    route_links: Vec<Vec<usize>>,
    /// Per link, indices of routes crossing it.
    link_routes: Vec<Vec<usize>>,
    delay_free: bool,
    rtt_tolerance: f64,
}

impl Network {
    /// Builds a network without validating it; see [`Network::validate`].
    pub fn new(links: Vec<Link>, routes: Vec<Route>) -> Self {
        let mut link_index = HashMap::with_capacity(links.len());
        for (i, l) in links.iter().enumerate() {
            link_index.entry(l.id.clone()).or_insert(i);
        }
        let route_links: Vec<Vec<usize>> = routes
            .iter()
            .map(|r| r.links.iter().filter_map(|id| link_index.get(id).copied()).collect())
            .collect();
        let mut link_routes = vec![Vec::new(); links.len()];
        for (r, ls) in route_links.iter().enumerate() {
            for &l in ls {
                if link_routes[l].last() != Some(&r) {
                    link_routes[l].push(r);
                }
            }
        }
        Network {
            links,
            routes,
            link_index,
            route_links,
            link_routes,
            delay_free: false,
            rtt_tolerance: DEFAULT_RTT_TOLERANCE,
        }
    }

    /// Builds and validates in one go.
    pub fn checked(links: Vec<Link>, routes: Vec<Route>) -> Result<Self> {
        Network::new(links, routes).into_valid()
    }

    /// Allows zero round trip times (the delay-free model).
    pub fn delay_free(mut self, yes: bool) -> Self {
        self.delay_free = yes;
        self
    }

    pub fn with_rtt_tolerance(mut self, tol: f64) -> Self {
        self.rtt_tolerance = tol;
        self
    }

    pub fn into_valid(self) -> Result<Self> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidNetwork(report.to_string()))
        }
    }

    pub fn is_delay_free(&self) -> bool {
        self.delay_free
    }

    pub fn rtt_tolerance(&self) -> f64 {
        self.rtt_tolerance
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn link(&self, l: usize) -> &Link {
        &self.links[l]
    }

    pub fn route(&self, r: usize) -> &Route {
        &self.routes[r]
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn route_index(&self, id: &str) -> Option<usize> {
        self.routes.iter().position(|r| r.id == id)
    }

    pub fn require_link(&self, id: &str) -> Result<usize> {
        self.link_index(id).ok_or_else(|| Error::UnknownLink(id.to_owned()))
    }

    /// Link indices along route `r`, in path order.
    pub fn route_links(&self, r: usize) -> &[usize] {
        &self.route_links[r]
    }

    /// Route indices crossing link `l`.
    pub fn routes_through(&self, l: usize) -> &[usize] {
        &self.link_routes[l]
    }

    /// `(link index, forward delay, return delay)` for each hop of `r`.
    pub fn hops(&self, r: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let route = &self.routes[r];
        route
            .links
            .iter()
            .zip(&route.forward_delays)
            .zip(&route.return_delays)
            .filter_map(move |((id, &fwd), &ret)| self.link_index(id).map(|l| (l, fwd, ret)))
    }

    /// Forward delay from the source of `r` to link `l`.
    pub fn forward_delay(&self, r: usize, l: usize) -> Option<f64> {
        self.hops(r).find(|h| h.0 == l).map(|h| h.1)
    }

    /// Mean round trip time of the routes through `l`.
    pub fn mean_rtt(&self, l: usize) -> Result<f64> {
        let through = self.link_routes.get(l).ok_or_else(|| Error::UnknownLink(format!("#{l}")))?;
        if through.is_empty() {
            return Err(Error::InvalidNetwork(format!("link `{}` carries no route", self.links[l].id)));
        }
        let sum: f64 = through.iter().map(|&r| self.routes[r].rtt).sum();
        Ok(sum / through.len() as f64)
    }

    pub fn mean_rtt_by_id(&self, id: &str) -> Result<f64> {
        self.mean_rtt(self.require_link(id)?)
    }

    /// Round trip time estimate `d_l` used by link `l`'s controller.
    pub fn d(&self, l: usize) -> Result<f64> {
        match self.links[l].d {
            Some(d) => Ok(d),
            None => self.mean_rtt(l),
        }
    }

    /// Packet-weighted mean round trip time of link `l` for route rates `x`.
    pub fn per_packet_rtt(&self, l: usize, x: &[f64]) -> Result<f64> {
        let through = self.link_routes.get(l).ok_or_else(|| Error::UnknownLink(format!("#{l}")))?;
        let (mut flow, mut weighted) = (0.0, 0.0);
        for &r in through {
            flow += x[r];
            weighted += x[r] * self.routes[r].rtt;
        }
        if flow <= 0.0 {
            return Err(Error::ZeroAggregateFlow(self.links[l].id.clone()));
        }
        Ok(weighted / flow)
    }

    /// Largest round trip time over all routes.
    pub fn max_rtt(&self) -> f64 {
        self.routes.iter().map(|r| r.rtt).fold(0.0, f64::max)
    }

    /// Smallest strictly positive per-hop or round trip delay, if any.
    pub fn min_positive_delay(&self) -> Option<f64> {
        self.routes
            .iter()
            .flat_map(|r| {
                r.forward_delays.iter().chain(&r.return_delays).chain(std::iter::once(&r.rtt)).copied()
            })
            .filter(|&d| d > 0.0)
            .reduce(f64::min)
    }

    pub fn max_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let mut seen = HashMap::new();
        for l in &self.links {
            if seen.insert(l.id.as_str(), ()).is_some() {
                v.push(Violation::DuplicateLink { link: l.id.clone() });
            }
            if !(l.capacity > 0.0) {
                v.push(Violation::NonPositiveCapacity { link: l.id.clone(), value: l.capacity });
            }
            if !(l.alpha > 0.0) {
                v.push(Violation::NonPositiveAlpha { link: l.id.clone(), value: l.alpha });
            }
            if !(l.beta >= 0.0) {
                v.push(Violation::NegativeBeta { link: l.id.clone(), value: l.beta });
            }
            if let Some(d) = l.d {
                if !(d > 0.0) {
                    v.push(Violation::NonPositiveD { link: l.id.clone(), value: d });
                }
            }
        }

        let mut seen_routes = HashMap::new();
        for r in &self.routes {
            if seen_routes.insert(r.id.as_str(), ()).is_some() {
                v.push(Violation::DuplicateRoute { route: r.id.clone() });
            }
            if r.links.is_empty() {
                v.push(Violation::EmptyRoute { route: r.id.clone() });
            }
            let rtt_ok = if self.delay_free { r.rtt >= 0.0 } else { r.rtt > 0.0 };
            if !rtt_ok {
                v.push(Violation::NonPositiveRtt { route: r.id.clone(), value: r.rtt });
            }
            if r.forward_delays.len() != r.links.len() || r.return_delays.len() != r.links.len() {
                v.push(Violation::DelayArity {
                    route: r.id.clone(),
                    links: r.links.len(),
                    forward: r.forward_delays.len(),
                    ret: r.return_delays.len(),
                });
            }
            let mut hops_seen = HashMap::new();
            for (i, id) in r.links.iter().enumerate() {
                if self.link_index(id).is_none() {
                    v.push(Violation::UnknownLink { route: r.id.clone(), link: id.clone() });
                }
                if hops_seen.insert(id.as_str(), ()).is_some() {
                    v.push(Violation::RepeatedHop { route: r.id.clone(), link: id.clone() });
                }
                let (Some(&fwd), Some(&ret)) = (r.forward_delays.get(i), r.return_delays.get(i)) else {
                    continue;
                };
                for d in [fwd, ret] {
                    if !(d >= 0.0) {
                        v.push(Violation::NegativeDelay { route: r.id.clone(), link: id.clone(), value: d });
                    }
                }
                let sum = fwd + ret;
                if !((sum - r.rtt).abs() <= self.rtt_tolerance) {
                    v.push(Violation::RttMismatch { route: r.id.clone(), link: id.clone(), sum, rtt: r.rtt });
                }
            }
        }

        for (l, link) in self.links.iter().enumerate() {
            if self.link_routes[l].is_empty() {
                v.push(Violation::UnusedLink { link: link.id.clone() });
            } else if link.d.is_none() && !(self.mean_rtt(l).unwrap_or(0.0) > 0.0) {
                v.push(Violation::UndefinedD { link: link.id.clone() });
            }
        }
        ValidationReport { violations: v }
    }

    /// Copy with link `l`'s alpha replaced.
    pub fn with_alpha(&self, l: usize, alpha: f64) -> Network {
        let mut links = self.links.clone();
        links[l].alpha = alpha;
        self.rebuilt(links, self.routes.clone())
    }

    /// Copy with every link's `d` pinned to its current value, so later
    /// delay changes leave the gains untouched.
    pub fn with_pinned_d(&self) -> Result<Network> {
        let mut links = self.links.clone();
        for (l, link) in links.iter_mut().enumerate() {
            link.d = Some(self.d(l)?);
        }
        Ok(self.rebuilt(links, self.routes.clone()))
    }

    /// Copy with route `r`'s delays scaled by `factor`.
    pub fn with_scaled_rtt(&self, r: usize, factor: f64) -> Network {
        let mut routes = self.routes.clone();
        let route = &mut routes[r];
        route.rtt *= factor;
        route.forward_delays.iter_mut().for_each(|d| *d *= factor);
        route.return_delays.iter_mut().for_each(|d| *d *= factor);
        self.rebuilt(self.links.clone(), routes)
    }

    /// Copy with the given links and routes and this network's settings.
    pub fn rebuilt(&self, links: Vec<Link>, routes: Vec<Route>) -> Network {
        Network::new(links, routes).delay_free(self.delay_free).with_rtt_tolerance(self.rtt_tolerance)
    }
}
