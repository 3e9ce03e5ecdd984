//! JSON scenario documents.
//!
//! ```json
//! {
//!   "links":  [{"id": "l", "capacity": 1.0, "alpha": 0.5, "beta": 0.0, "d": null}],
//!   "routes": [{"id": "r", "links": ["l"], "forward_delays": [0.4], "rtt": 1.0}],
//!   "queue_models": {"l": {"family": "linear", "k": 1.0}},
//!   "sim":   {"step": 0.01, "horizon": 100.0, "eta": 1.0},
//!   "sweep": {"eta_factors": [0.9, 1.01, 1.02]}
//! }
//! ```
//!
//! Every field besides link and route ids, capacities, alphas and route
//! round trip times is optional; [`Scenario::resolved`] echoes the document
//! with all defaults filled in.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bifurcation::HopfSetup;
use crate::equilibrium;
use crate::network::{Link, Network, Route, DEFAULT_RTT_TOLERANCE};
use crate::queue::QueueFunction;
use crate::sim::{RunawayPolicy, SimConfig, SimMode, DEFAULT_DIVERGENCE_FACTOR, STEPS_PER_MIN_DELAY};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub capacity: f64,
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub d: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub id: String,
    pub links: Vec<String>,
    /// Defaults to zero for every hop.
    #[serde(default)]
    pub forward_delays: Option<Vec<f64>>,
    /// Defaults to `rtt - forward` per hop.
    #[serde(default)]
    pub return_delays: Option<Vec<f64>>,
    pub rtt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueFamily {
    Zero,
    Linear,
    Power,
    #[serde(rename = "mm1_scaled")]
    Mm1Scaled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpec {
    pub family: QueueFamily,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub m: Option<f64>,
    /// Pole of `mm1_scaled`; defaults to the link capacity.
    #[serde(default)]
    pub capacity: Option<f64>,
}

impl QueueSpec {
    fn resolve(&self, link_capacity: f64) -> Result<QueueFunction, String> {
        let need_k = || self.k.ok_or_else(|| format!("{:?} family needs `k`", self.family));
        let q = match self.family {
            QueueFamily::Zero => QueueFunction::Zero,
            QueueFamily::Linear => QueueFunction::Linear { k: need_k()? },
            QueueFamily::Power => {
                QueueFunction::Power { k: need_k()?, m: self.m.ok_or("power family needs `m`")? }
            }
            QueueFamily::Mm1Scaled => {
                QueueFunction::Mm1Scaled { k: need_k()?, capacity: self.capacity.unwrap_or(link_capacity) }
            }
        };
        match q.parameter_problems() {
            Some(p) => Err(p),
            None => Ok(q),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub eta: Option<f64>,
    /// Constant initial history per link id; defaults to the equilibrium
    /// link rates scaled by `1 + initial_perturbation`.
    pub initial_rates: Option<BTreeMap<String, f64>>,
    pub initial_perturbation: Option<f64>,
    pub record_stride: Option<usize>,
    pub mode: Option<SimMode>,
    pub divergence_factor: Option<f64>,
    pub runaway: Option<RunawayPolicy>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Absolute gains; takes precedence over `eta_factors`.
    pub etas: Option<Vec<f64>>,
    /// Gains relative to the estimated threshold.
    pub eta_factors: Option<Vec<f64>>,
    /// Bisection bracket relative to the predicted threshold.
    pub bracket: Option<(f64, f64)>,
    pub resolution: Option<f64>,
    pub steps_per_tau: Option<usize>,
    pub horizon_taus: Option<f64>,
    pub perturbation: Option<f64>,
    pub transient_fraction: Option<f64>,
    /// Small and large perturbations for the hysteresis probe; `null`
    /// entries skip it.
    pub hysteresis: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteSpec>,
    #[serde(default)]
    pub queue_models: BTreeMap<String, QueueSpec>,
    #[serde(default)]
    pub delay_free: bool,
    #[serde(default)]
    pub rtt_tolerance: Option<f64>,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

/// Parsed scenario: the network, one queue function per link, and the raw
/// simulation and sweep settings.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub network: Network,
    pub queues: Vec<QueueFunction>,
    pub sim: SimSpec,
    pub sweep: Option<SweepSpec>,
    problems: Vec<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Ok(Scenario::from_file(file))
    }

    pub fn from_file(file: ScenarioFile) -> Self {
        let mut problems = Vec::new();
        let links: Vec<Link> = file
            .links
            .iter()
            .map(|l| Link { id: l.id.clone(), capacity: l.capacity, alpha: l.alpha, beta: l.beta, d: l.d })
            .collect();
        let routes: Vec<Route> = file
            .routes
            .iter()
            .map(|r| {
                let fwd = r.forward_delays.clone().unwrap_or_else(|| vec![0.0; r.links.len()]);
                let route = Route::new(r.id.clone(), r.links.clone(), fwd, r.rtt);
                match &r.return_delays {
                    Some(ret) => route.with_return_delays(ret.clone()),
                    None => route,
                }
            })
            .collect();
        let network = Network::new(links, routes)
            .delay_free(file.delay_free)
            .with_rtt_tolerance(file.rtt_tolerance.unwrap_or(DEFAULT_RTT_TOLERANCE));

        for id in file.queue_models.keys() {
            if network.link_index(id).is_none() {
                problems.push(format!("queue model for unknown link `{id}`"));
            }
        }
        let queues = network
            .links()
            .iter()
            .map(|l| match file.queue_models.get(&l.id) {
                None => QueueFunction::Zero,
                Some(spec) => spec.resolve(l.capacity).unwrap_or_else(|e| {
                    problems.push(format!("queue model of `{}`: {e}", l.id));
                    QueueFunction::Zero
                }),
            })
            .collect();
        if let Some(rates) = &file.sim.initial_rates {
            for id in rates.keys() {
                if network.link_index(id).is_none() {
                    problems.push(format!("initial rate for unknown link `{id}`"));
                }
            }
        }
        Scenario { network, queues, sim: file.sim, sweep: file.sweep, problems }
    }

    /// Everything that makes the scenario unusable; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut all: Vec<String> =
            self.network.validate().violations.iter().map(ToString::to_string).collect();
        all.extend(self.problems.iter().cloned());
        all
    }

    pub fn is_valid(&self) -> bool {
        self.problems().is_empty()
    }

    pub fn ensure_valid(&self) -> Result<(), ScenarioError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(problems))
        }
    }

    /// Simulation settings with every default made explicit.
    pub fn sim_config(&self) -> crate::Result<SimConfig> {
        let net = &self.network;
        let spec = &self.sim;
        let step = spec.step.unwrap_or_else(|| match net.min_positive_delay() {
            Some(d) => (d / STEPS_PER_MIN_DELAY).min(0.01),
            None => 0.01,
        });
        let horizon = spec.horizon.unwrap_or_else(|| (100.0 * net.max_rtt()).max(100.0));
        let initial_rates = match &spec.initial_rates {
            Some(map) => net
                .links()
                .iter()
                .map(|l| {
                    map.get(&l.id)
                        .copied()
                        .ok_or_else(|| crate::Error::InvalidConfig(format!("no initial rate for `{}`", l.id)))
                })
                .collect::<crate::Result<Vec<_>>>()?,
            None => {
                let eq = equilibrium::solve(net, &self.queues)?;
                let p = spec.initial_perturbation.unwrap_or(0.05);
                eq.link_rates.iter().map(|r| r * (1.0 + p)).collect()
            }
        };
        let steps = (horizon / step).round().max(1.0) as usize;
        Ok(SimConfig {
            step,
            horizon,
            eta: spec.eta.unwrap_or(1.0),
            initial_rates,
            record_stride: spec.record_stride.unwrap_or_else(|| steps.div_ceil(5000).max(1)),
            mode: spec.mode.unwrap_or_default(),
            divergence_factor: spec.divergence_factor.unwrap_or(DEFAULT_DIVERGENCE_FACTOR),
            runaway: spec.runaway.unwrap_or_default(),
        })
    }

    /// Hopf sweep settings with defaults filled in.
    pub fn sweep_settings(&self) -> crate::Result<(HopfSetup, ResolvedSweep)> {
        let base = HopfSetup::from_network(&self.network)?;
        let spec = self.sweep.clone().unwrap_or_default();
        let setup = HopfSetup {
            steps_per_tau: spec.steps_per_tau.unwrap_or(base.steps_per_tau),
            horizon_taus: spec.horizon_taus.unwrap_or(base.horizon_taus),
            perturbation: spec.perturbation.unwrap_or(base.perturbation),
            transient_fraction: spec.transient_fraction.unwrap_or(base.transient_fraction),
            ..base
        };
        let resolved = ResolvedSweep {
            etas: spec.etas,
            eta_factors: spec.eta_factors,
            bracket: spec.bracket.unwrap_or((0.5, 1.5)),
            resolution: spec.resolution.unwrap_or(1e-3),
            hysteresis: spec.hysteresis.or(Some((1e-3, 0.5))),
        };
        Ok((setup, resolved))
    }

    /// The scenario echoed with every default explicit.
    pub fn resolved(&self) -> crate::Result<ResolvedScenario> {
        let net = &self.network;
        let links = net
            .links()
            .iter()
            .enumerate()
            .map(|(l, link)| {
                Ok(LinkSpec {
                    id: link.id.clone(),
                    capacity: link.capacity,
                    alpha: link.alpha,
                    beta: link.beta,
                    d: Some(net.d(l)?),
                })
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let routes = net
            .routes()
            .iter()
            .map(|r| RouteSpec {
                id: r.id.clone(),
                links: r.links.clone(),
                forward_delays: Some(r.forward_delays.clone()),
                return_delays: Some(r.return_delays.clone()),
                rtt: r.rtt,
            })
            .collect();
        let queue_models =
            net.links().iter().map(|l| l.id.clone()).zip(self.queues.iter().copied()).collect();
        let sim = self.sim_config()?;
        let sweep =
            if net.num_links() == 1 && self.sweep.is_some() { Some(self.sweep_settings()?) } else { None };
        Ok(ResolvedScenario {
            links,
            routes,
            queue_models,
            delay_free: net.is_delay_free(),
            rtt_tolerance: net.rtt_tolerance(),
            sim,
            sweep,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedSweep {
    pub etas: Option<Vec<f64>>,
    pub eta_factors: Option<Vec<f64>>,
    pub bracket: (f64, f64),
    pub resolution: f64,
    pub hysteresis: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedScenario {
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteSpec>,
    pub queue_models: BTreeMap<String, QueueFunction>,
    pub delay_free: bool,
    pub rtt_tolerance: f64,
    pub sim: SimConfig,
    pub sweep: Option<(HopfSetup, ResolvedSweep)>,
}
