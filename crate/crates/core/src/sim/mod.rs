//! Fixed-step integration of the delayed fluid dynamics.
//!
//! Link rates follow `Ṙ_l = η R_l (α_l/(d_l C_l)(C_l - y_l) - β_l p_l(y_l)/(d_l² C_l))`,
//! projected so a rate at zero cannot go negative. Sources send at the
//! smallest delayed link rate on their path, `x_r(t) = min_l R_l(t - τ_lr)`,
//! and links see the delayed sum `y_l(t) = Σ_r x_r(t - τ_rl)`.
//!
//! The integrator is classical RK4 on a uniform grid. Delayed lookups read
//! each link's [`History`]; a lag shorter than the current stage offset is
//! interpolated between the step's start and the stage state, which makes
//! the delay-free model plain RK4.

mod history;
mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use history::History;
pub use trace::{DivergenceInfo, LinkOscillation, SimSummary, SimTrace, SETTLED_TOLERANCE};

use crate::error::{Error, Result};
use crate::network::{Link, Network};
use crate::queue::QueueFunction;

/// Largest allowed step relative to the smallest positive delay.
pub const STEPS_PER_MIN_DELAY: f64 = 20.0;

/// Default runaway threshold, as a multiple of the largest capacity.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Network,
    /// One link, one common round trip time `τ`, `β = 0`, `d = τ`.
    SingleLinkBeta0,
}

/// What to do when a link rate exceeds the divergence threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunawayPolicy {
    /// Stop and return the partial trace.
    #[default]
    Abort,
    /// Freeze a link that sets no route's rate; abort otherwise.
    Hold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub eta: f64,
    /// Constant history `R_l(t)` for `t ≤ 0`, per link.
    pub initial_rates: Vec<f64>,
    pub record_stride: usize,
    pub mode: SimMode,
    pub divergence_factor: f64,
    pub runaway: RunawayPolicy,
}

impl SimConfig {
    pub fn new(step: f64, horizon: f64, initial_rates: Vec<f64>) -> Self {
        SimConfig {
            step,
            horizon,
            eta: 1.0,
            initial_rates,
            record_stride: 1,
            mode: SimMode::Network,
            divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
            runaway: RunawayPolicy::Abort,
        }
    }

    pub fn eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn mode(mut self, mode: SimMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn runaway(mut self, policy: RunawayPolicy) -> Self {
        self.runaway = policy;
        self
    }

    pub fn num_steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Hard errors, plus soft warnings in the returned list.
    pub fn check(&self, network: &Network) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad(format!("step must be > 0, got {}", self.step));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1".into());
        }
        if !(self.divergence_factor > 0.0) {
            return bad(format!("divergence_factor must be > 0, got {}", self.divergence_factor));
        }
        if self.initial_rates.len() != network.num_links() {
            return bad(format!(
                "{} initial rates for {} links",
                self.initial_rates.len(),
                network.num_links()
            ));
        }
        if let Some(r) = self.initial_rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return bad(format!("initial rates must be finite and >= 0, got {r}"));
        }
        if let Some(min_delay) = network.min_positive_delay() {
            if self.step > min_delay / STEPS_PER_MIN_DELAY * (1.0 + 1e-12) {
                return bad(format!(
                    "step {} exceeds min positive delay {} / {}",
                    self.step, min_delay, STEPS_PER_MIN_DELAY
                ));
            }
        }
        let mut warnings = Vec::new();
        if self.horizon < 10.0 * network.max_rtt() {
            warnings.push(format!(
                "horizon {} is shorter than 10 round trip times ({})",
                self.horizon,
                10.0 * network.max_rtt()
            ));
        }
        Ok(warnings)
    }
}

/// A run stopped early; carries everything recorded up to that point.
#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub time: f64,
    pub link: String,
    /// The growing link set no route's rate over the later half of the run.
    pub no_equilibrium: bool,
    pub reason: String,
    pub trace: SimTrace,
}

impl Divergence {
    pub fn info(&self) -> DivergenceInfo {
        DivergenceInfo {
            time: self.time,
            link: self.link.clone(),
            no_equilibrium: self.no_equilibrium,
            reason: self.reason.clone(),
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on link `{}` at t = {}", self.reason, self.link, self.time)?;
        if self.no_equilibrium {
            write!(f, " (link never sets a route rate: no equilibrium point exists)")?;
        }
        Ok(())
    }
}

/// `η R g` with `g` the rate update bracket, or 0 when `g < 0` and `R ≤ 0`.
pub fn rate_derivative(
    link: &Link,
    d: f64,
    q: &QueueFunction,
    flow: f64,
    rate: f64,
    eta: f64,
) -> Result<f64> {
    let c = link.capacity;
    let queue = if link.beta == 0.0 { 0.0 } else { q.eval(flow)? };
    let g = link.alpha / (d * c) * (c - flow) - link.beta * queue / (d * d * c);
    Ok(project(eta * rate * g, g, rate))
}

fn project(value: f64, bracket: f64, rate: f64) -> f64 {
    if bracket < 0.0 && rate <= 0.0 {
        0.0
    } else {
        value
    }
}

#[derive(Clone, Debug)]
struct Gains {
    /// α / (dC)
    a: f64,
    /// β / (d²C)
    b: f64,
    capacity: f64,
    queue: QueueFunction,
}

impl Gains {
    fn bracket(&self, flow: f64) -> Result<(f64, f64)> {
        let q = if self.b == 0.0 { 0.0 } else { self.queue.eval(flow)? };
        Ok((self.a * (self.capacity - flow) - self.b * q, q))
    }
}

/// Delayed-lookup term: link index and lag in steps.
type Lag = (usize, f64);

/// Integrator state for one run.
#[derive(Clone, Debug)]
pub struct Simulator {
    link_ids: Vec<String>,
    route_ids: Vec<String>,
    gains: Vec<Gains>,
    eta: f64,
    step: f64,
    /// Per route: `x_r(t) = min over terms of R_j(t - lag)`.
    source_terms: Vec<Vec<Lag>>,
    /// Per link, per route through it: `x_r(t - τ_rl)` as a min over terms.
    flow_terms: Vec<Vec<Vec<Lag>>>,
    histories: Vec<History>,
    held: Vec<bool>,
    divergence_limit: f64,
    runaway: RunawayPolicy,
    warnings: Vec<String>,
}

impl Simulator {
    pub fn new(network: &Network, queues: &[QueueFunction], config: &SimConfig) -> Result<Self> {
        let report = network.validate();
        if !report.is_valid() {
            return Err(Error::InvalidNetwork(report.to_string()));
        }
        if queues.len() != network.num_links() {
            return Err(Error::InvalidConfig(format!(
                "{} queue functions for {} links",
                queues.len(),
                network.num_links()
            )));
        }
        let warnings = config.check(network)?;
        let step = config.step;

        let gains = match config.mode {
            SimMode::Network => (0..network.num_links())
                .map(|l| {
                    let link = network.link(l);
                    let d = network.d(l)?;
                    let c = link.capacity;
                    Ok(Gains {
                        a: link.alpha / (d * c),
                        b: link.beta / (d * d * c),
                        capacity: c,
                        queue: queues[l],
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            SimMode::SingleLinkBeta0 => {
                if network.num_links() != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "single_link_beta0 mode needs exactly one link, got {}",
                        network.num_links()
                    )));
                }
                let tau = network.route(0).rtt;
                if network.routes().iter().any(|r| (r.rtt - tau).abs() > network.rtt_tolerance()) {
                    return Err(Error::InvalidConfig(
                        "single_link_beta0 mode needs a common round trip time".into(),
                    ));
                }
                let link = network.link(0);
                vec![Gains {
                    a: link.alpha / (tau * link.capacity),
                    b: 0.0,
                    capacity: link.capacity,
                    queue: QueueFunction::Zero,
                }]
            }
        };

        let lag = |t: f64| t / step;
        let source_terms: Vec<Vec<Lag>> = (0..network.num_routes())
            .map(|r| network.hops(r).map(|(j, _, ret)| (j, lag(ret))).collect())
            .collect();
        let flow_terms: Vec<Vec<Vec<Lag>>> = (0..network.num_links())
            .map(|l| {
                network
                    .routes_through(l)
                    .iter()
                    .map(|&r| {
                        let fwd = network.forward_delay(r, l).unwrap_or(0.0);
                        network.hops(r).map(|(j, _, ret)| (j, lag(fwd + ret))).collect()
                    })
                    .collect()
            })
            .collect();
        let max_lag = flow_terms
            .iter()
            .flatten()
            .flatten()
            .chain(source_terms.iter().flatten())
            .map(|&(_, lag)| lag)
            .fold(0.0, f64::max);
        let depth = max_lag.ceil() as usize + 3;
        let histories = config.initial_rates.iter().map(|&r0| History::new(r0, depth, step)).collect();

        Ok(Simulator {
            link_ids: network.links().iter().map(|l| l.id.clone()).collect(),
            route_ids: network.routes().iter().map(|r| r.id.clone()).collect(),
            gains,
            eta: config.eta,
            step,
            source_terms,
            flow_terms,
            histories,
            held: vec![false; network.num_links()],
            divergence_limit: config.divergence_factor * network.max_capacity(),
            runaway: config.runaway,
            warnings,
        })
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    /// Current grid time.
    pub fn time(&self) -> f64 {
        self.histories.first().map_or(0.0, |h| h.newest() as f64 * self.step)
    }

    /// `R_j` at grid position `pos`; positions past the stored grid are
    /// interpolated towards the stage state `(stage_pos, state)`.
    fn lookup(&self, j: usize, pos: f64, stage: Option<(f64, &[f64])>) -> Result<f64> {
        let h = &self.histories[j];
        let newest = h.newest() as f64;
        match stage {
            Some((stage_pos, state)) if pos > newest + 1e-9 => {
                if stage_pos <= newest {
                    return Err(Error::HistoryUnderrun { link: j, position: pos });
                }
                let theta = ((pos - newest) / (stage_pos - newest)).min(1.0);
                let r0 = h.newest_value();
                Ok(r0 + theta * (state[j] - r0))
            }
            _ => h.at(pos, j),
        }
    }

    fn min_term(&self, terms: &[Lag], pos: f64, stage: Option<(f64, &[f64])>) -> Result<f64> {
        terms.iter().try_fold(f64::INFINITY, |m, &(j, lag)| Ok(m.min(self.lookup(j, pos - lag, stage)?)))
    }

    /// `x_r(t)` from stored history.
    pub fn source_rate(&self, r: usize, t: f64) -> Result<f64> {
        self.min_term(&self.source_terms[r], t / self.step, None)
    }

    /// `y_l(t)` from stored history.
    pub fn aggregate_flow(&self, l: usize, t: f64) -> Result<f64> {
        let pos = t / self.step;
        self.flow_terms[l].iter().map(|terms| self.min_term(terms, pos, None)).sum()
    }

    /// Derivatives at stage offset `c` (fraction of a step) with stage state
    /// `state`. Fills `flows` and `queues` as a side product.
    fn derivatives(
        &self,
        c: f64,
        state: &[f64],
        out: &mut [f64],
        flows: &mut [f64],
        queues: &mut [f64],
    ) -> std::result::Result<(), StageError> {
        let base = self.histories[0].newest() as f64;
        let pos = base + c;
        let stage = Some((pos, state));
        for (l, g) in self.gains.iter().enumerate() {
            let mut y = 0.0;
            for terms in &self.flow_terms[l] {
                y += self.min_term(terms, pos, stage)?;
            }
            let (bracket, q) = g.bracket(y).map_err(|error| StageError { link: Some(l), error })?;
            flows[l] = y;
            queues[l] = q;
            out[l] =
                if self.held[l] { 0.0 } else { project(self.eta * state[l] * bracket, bracket, state[l]) };
        }
        Ok(())
    }

    /// Integrates for `steps` steps, recording every `stride` steps.
    pub fn run(mut self, steps: usize, stride: usize) -> Result<SimTrace> {
        let nl = self.gains.len();
        let nr = self.source_terms.len();
        let mut trace = SimTrace {
            link_ids: self.link_ids.clone(),
            route_ids: self.route_ids.clone(),
            rates: vec![Vec::new(); nl],
            route_rates: vec![Vec::new(); nr],
            flows: vec![Vec::new(); nl],
            queues: vec![Vec::new(); nl],
            last_binding: vec![None; nl],
            warnings: std::mem::take(&mut self.warnings),
            ..SimTrace::default()
        };

        let h = self.step;
        let mut state: Vec<f64> = self.histories.iter().map(History::initial).collect();
        let mut k1 = vec![0.0; nl];
        let mut k2 = vec![0.0; nl];
        let mut k3 = vec![0.0; nl];
        let mut k4 = vec![0.0; nl];
        let mut stage = vec![0.0; nl];
        let mut flows = vec![0.0; nl];
        let mut queues = vec![0.0; nl];
        let mut scratch_f = vec![0.0; nl];
        let mut scratch_q = vec![0.0; nl];

        for n in 0..=steps {
            let link_ids = &self.link_ids;
            let failed = |e: StageError, trace: SimTrace, time: f64| match e.error {
                Error::QueueDomain { .. } => Error::Diverged(Box::new(Divergence {
                    time,
                    link: e.link.map(|l| link_ids[l].clone()).unwrap_or_default(),
                    no_equilibrium: false,
                    reason: e.error.to_string(),
                    trace,
                })),
                other => other,
            };
            let t = n as f64 * h;

            if let Err(e) = self.derivatives(0.0, &state, &mut k1, &mut flows, &mut queues) {
                return Err(failed(e, trace, t));
            }
            for (hist, &slope) in self.histories.iter_mut().zip(&k1) {
                hist.set_newest_slope(slope);
            }
            if n % stride == 0 || n == steps {
                self.record(&mut trace, t, &state, &flows, &queues)?;
            }
            if n == steps {
                break;
            }

            for l in 0..nl {
                stage[l] = state[l] + 0.5 * h * k1[l];
            }
            self.derivatives(0.5, &stage, &mut k2, &mut scratch_f, &mut scratch_q)
                .map_err(|e| failed(e, trace.clone(), t))?;
            for l in 0..nl {
                stage[l] = state[l] + 0.5 * h * k2[l];
            }
            self.derivatives(0.5, &stage, &mut k3, &mut scratch_f, &mut scratch_q)
                .map_err(|e| failed(e, trace.clone(), t))?;
            for l in 0..nl {
                stage[l] = state[l] + h * k3[l];
            }
            self.derivatives(1.0, &stage, &mut k4, &mut scratch_f, &mut scratch_q)
                .map_err(|e| failed(e, trace.clone(), t))?;

            let t_next = t + h;
            let mut projected = false;
            for l in 0..nl {
                let mut next = state[l] + h / 6.0 * (k1[l] + 2.0 * k2[l] + 2.0 * k3[l] + k4[l]);
                if next < 0.0 {
                    next = 0.0;
                    projected = true;
                }
                state[l] = next;
            }
            trace.projections += usize::from(projected);
            for (hist, &r) in self.histories.iter_mut().zip(&state) {
                hist.push(r);
            }
            debug_assert!(state.iter().all(|&r| !(r < 0.0)));

            for l in 0..nl {
                let r = state[l];
                if !r.is_finite() {
                    return Err(self.diverged(trace, t_next, l, "non-finite link rate".into()));
                }
                if r > self.divergence_limit && !self.held[l] {
                    let binding = self.is_binding(l)?;
                    if self.runaway == RunawayPolicy::Hold && !binding {
                        self.held[l] = true;
                        trace.held_links.push(self.link_ids[l].clone());
                    } else {
                        let reason = format!("rate {r} exceeds {}", self.divergence_limit);
                        return Err(self.diverged(trace, t_next, l, reason));
                    }
                }
            }
        }
        Ok(trace)
    }

    /// Link `l` currently sets the rate of some route through it.
    fn is_binding(&self, l: usize) -> Result<bool> {
        let pos = self.histories[l].newest() as f64;
        for terms in &self.source_terms {
            let Some(&(_, lag)) = terms.iter().find(|(j, _)| *j == l) else {
                continue;
            };
            let mine = self.lookup(l, pos - lag, None)?;
            if mine <= self.min_term(terms, pos, None)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn diverged(&self, mut trace: SimTrace, time: f64, l: usize, reason: String) -> Error {
        let binding = self.is_binding(l).unwrap_or(true);
        // idle over the later half of the run
        let idle = trace.last_binding[l].is_none_or(|t| t < 0.5 * time);
        trace.warnings.push(reason.clone());
        Error::Diverged(Box::new(Divergence {
            time,
            link: self.link_ids[l].clone(),
            no_equilibrium: !binding && idle,
            reason,
            trace,
        }))
    }

    fn record(
        &self,
        trace: &mut SimTrace,
        t: f64,
        state: &[f64],
        flows: &[f64],
        queues: &[f64],
    ) -> Result<()> {
        trace.times.push(t);
        let pos = self.histories[0].newest() as f64;
        for l in 0..state.len() {
            trace.rates[l].push(state[l]);
            trace.flows[l].push(flows[l]);
            trace.queues[l].push(queues[l]);
        }
        for (r, terms) in self.source_terms.iter().enumerate() {
            let mut values = Vec::with_capacity(terms.len());
            for &(j, lag) in terms {
                values.push((j, self.lookup(j, pos - lag, None)?));
            }
            let x = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            trace.route_rates[r].push(x);
            for (j, v) in values {
                if v <= x * (1.0 + 1e-12) {
                    trace.last_binding[j] = Some(t);
                }
            }
        }
        Ok(())
    }
}

/// A failed right-hand side evaluation and the link whose update failed.
struct StageError {
    link: Option<usize>,
    error: Error,
}

impl From<Error> for StageError {
    fn from(error: Error) -> Self {
        StageError { link: None, error }
    }
}

/// Runs the fluid model under `config`.
pub fn run(network: &Network, queues: &[QueueFunction], config: &SimConfig) -> Result<SimTrace> {
    let sim = Simulator::new(network, queues, config)?;
    sim.run(config.num_steps(), config.record_stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve;
    use crate::network::Route;
    use approx::assert_relative_eq;

    fn single(n: usize, rtt: f64, alpha: f64, beta: f64) -> Network {
        let routes = (0..n).map(|i| Route::at_source(format!("r{i}"), ["l"], rtt)).collect();
        let mut link = Link::new("l", 2.0, alpha, beta);
        if rtt == 0.0 {
            link = link.with_d(1.0);
        }
        Network::new(vec![link], routes).delay_free(rtt == 0.0)
    }

    fn sim(net: &Network, initial: Vec<f64>) -> Simulator {
        let q = vec![QueueFunction::Zero; net.num_links()];
        Simulator::new(net, &q, &SimConfig::new(0.01, 1.0, initial)).unwrap()
    }

    #[test]
    fn source_rate_examples() {
        let s = sim(&single(1, 1.0, 1.0, 0.0), vec![0.8]);
        assert_eq!(s.source_rate(0, 0.0).unwrap(), 0.8);

        let net = Network::new(
            vec![Link::new("a", 5.0, 1.0, 0.0), Link::new("b", 5.0, 1.0, 0.0)],
            vec![Route::new("r", ["a", "b"], vec![0.2, 0.5], 1.0)],
        );
        assert_eq!(sim(&net, vec![3.0, 2.0]).source_rate(0, 0.0).unwrap(), 2.0);

        let net = net.rebuilt(
            vec![Link::new("a", 5.0, 1.0, 0.0).with_d(1.0), Link::new("b", 5.0, 1.0, 0.0).with_d(1.0)],
            vec![Route::at_source("r", ["a", "b"], 0.0)],
        );
        let net = net.delay_free(true);
        assert_eq!(sim(&net, vec![1.5, 4.0]).source_rate(0, 0.0).unwrap(), 1.5);
    }

    #[test]
    fn aggregate_flow_examples() {
        assert_eq!(sim(&single(4, 1.0, 1.0, 0.0), vec![0.25]).aggregate_flow(0, 0.0).unwrap(), 1.0);
        assert_eq!(sim(&single(1, 1.0, 1.0, 0.0), vec![0.3]).aggregate_flow(0, 0.0).unwrap(), 0.3);

        let net = Network::new(
            vec![
                Link::new("a", 5.0, 1.0, 0.0).with_d(1.0),
                Link::new("b", 5.0, 1.0, 0.0).with_d(1.0),
                Link::new("c", 5.0, 1.0, 0.0).with_d(1.0),
            ],
            vec![Route::at_source("r1", ["a", "c"], 0.0), Route::at_source("r2", ["b", "c"], 0.0)],
        )
        .delay_free(true);
        assert_eq!(sim(&net, vec![1.0, 2.0, 9.0]).aggregate_flow(2, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn rate_derivative_examples() {
        let link = Link::new("l", 2.0, 1.0, 0.0);
        assert_eq!(rate_derivative(&link, 1.0, &QueueFunction::Zero, 1.0, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(rate_derivative(&link, 1.0, &QueueFunction::Zero, 2.0, 1.0, 1.0).unwrap(), 0.0);
        // projection: g < 0 at R = 0
        assert_eq!(rate_derivative(&link, 1.0, &QueueFunction::Zero, 3.0, 0.0, 1.0).unwrap(), 0.0);

        let link = Link::new("l", 3.0, 1.0, 2.0);
        let q = QueueFunction::Linear { k: 1.0 };
        let ybar = crate::equilibrium::effective_capacity(&link, 1.0, &q);
        assert!(rate_derivative(&link, 1.0, &q, ybar, 0.7, 1.3).unwrap().abs() < 1e-14);

        let q = QueueFunction::Mm1Scaled { k: 1.0, capacity: 3.0 };
        assert!(matches!(rate_derivative(&link, 1.0, &q, 3.5, 1.0, 1.0), Err(Error::QueueDomain { .. })));
    }

    #[test]
    fn delay_free_single_link_converges_to_fair_share() {
        let net = single(4, 0.0, 1.0, 0.0);
        let cfg = SimConfig::new(0.01, 60.0, vec![2.0]).stride(100);
        let trace = run(&net, &[QueueFunction::Zero], &cfg).unwrap();
        for x in &trace.route_rates {
            assert_relative_eq!(*x.last().unwrap(), 0.5, max_relative = 1e-6);
        }
        assert!(trace.summary(0.5).converged);
    }

    #[test]
    fn stable_single_link_settles() {
        let net = single(1, 1.0, 1.0, 0.0);
        let cfg = SimConfig::new(0.05, 400.0, vec![2.1]).eta(0.5).mode(SimMode::SingleLinkBeta0);
        let trace = run(&net, &[QueueFunction::Zero], &cfg).unwrap();
        let s = trace.summary(0.5);
        assert!(s.converged);
        assert!(s.oscillation[0].amplitude < 1e-6 * 2.0);
    }

    #[test]
    fn config_checks() {
        let net = single(1, 1.0, 1.0, 0.0);
        let q = [QueueFunction::Zero];
        assert!(Simulator::new(&net, &q, &SimConfig::new(0.1, 10.0, vec![1.0])).is_err());
        assert!(Simulator::new(&net, &q, &SimConfig::new(0.05, 10.0, vec![1.0, 1.0])).is_err());
        assert!(Simulator::new(&net, &q, &SimConfig::new(0.05, 10.0, vec![-1.0])).is_err());
        let s = Simulator::new(&net, &q, &SimConfig::new(0.05, 5.0, vec![1.0])).unwrap();
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn queue_pole_aborts() {
        let net = Network::new(vec![Link::new("l", 1.0, 1.0, 1.0)], vec![Route::at_source("r", ["l"], 1.0)]);
        let q = [QueueFunction::Mm1Scaled { k: 0.01, capacity: 1.0 }];
        let err = run(&net, &q, &SimConfig::new(0.05, 10.0, vec![1.5])).unwrap_err();
        match err {
            Error::Diverged(d) => assert!(d.reason.contains("outside its domain")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let net = Network::new(
            vec![Link::new("A", 1.0, 0.6, 0.4), Link::new("B", 3.0, 0.3, 0.2)],
            vec![
                Route::new("r1", ["A"], vec![0.2], 1.0),
                Route::new("r2", ["A", "B"], vec![0.3, 0.9], 1.5),
                Route::new("r3", ["B"], vec![0.4], 0.7),
            ],
        );
        let q = [QueueFunction::Linear { k: 0.5 }, QueueFunction::Power { k: 0.1, m: 2.0 }];
        let eq = solve(&net, &q).unwrap();
        let cfg = SimConfig::new(0.01, 50.0, eq.link_rates.clone()).stride(10);
        let trace = run(&net, &q, &cfg).unwrap();
        for (l, series) in trace.rates.iter().enumerate() {
            let drift = series.iter().map(|r| (r - eq.link_rates[l]).abs()).fold(0.0, f64::max);
            assert!(drift < 1e-8 * eq.link_rates[l], "link {l}: {drift}");
        }
    }
}
