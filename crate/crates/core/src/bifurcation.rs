//! Limit cycles of the single-link, single-delay model with `β = 0`.
//!
//! The linearized model `u̇ = -ηα/τ · u(t-τ)` loses stability at `ηα = π/2`
//! with period `4τ`; past that point the bifurcating cycle is stable with an
//! amplitude growing like `sqrt(η - η_c)`. This module measures cycles from
//! simulated traces, locates the threshold by bisection and fits the
//! amplitude law over a gain sweep.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::network::{Link, Network, Route};
use crate::queue::QueueFunction;
use crate::signal::{cycle_stats, half_range, window_start};
use crate::sim::{self, SimConfig, SimMode, SimTrace};
use crate::stability::{hopf_amplitude_constant, hopf_prediction};

/// Amplitude below this fraction of `R̄` counts as a stable focus.
pub const CONVERGED_AMPLITUDE: f64 = 1e-6;

/// Envelope ratio (later half over earlier half of the window) below which
/// an oscillation counts as decaying.
pub const DECAY_RATIO: f64 = 0.99;

/// Crossings required to report a period for an oscillating trace.
pub const MIN_CROSSINGS: usize = 5;

/// Weakly nonlinear regime used for fits: `0 < η - η_c ≤ FIT_SPAN · η_c`.
pub const FIT_SPAN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleMeasurement {
    pub eta: f64,
    /// Half peak-to-peak of `R` over the post-transient window.
    pub amplitude: f64,
    pub period: Option<f64>,
    /// Amplitude below `CONVERGED_AMPLITUDE · R̄`.
    pub converged: bool,
    /// Envelope of the second half of the window over the first half.
    pub decay_ratio: Option<f64>,
}

impl CycleMeasurement {
    /// Converged, or visibly decaying towards the fixed point.
    pub fn stable(&self) -> bool {
        self.converged || self.decay_ratio.is_some_and(|r| r < DECAY_RATIO)
    }
}

/// Measures the cycle of `link`'s rate in `trace`, discarding the first
/// `transient_fraction` of the run.
pub fn measure_cycle(
    trace: &SimTrace,
    link: usize,
    transient_fraction: f64,
    rbar: f64,
) -> Result<CycleMeasurement> {
    if !(transient_fraction > 0.0 && transient_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "transient fraction must lie in (0, 1), got {transient_fraction}"
        )));
    }
    let start = window_start(&trace.times, transient_fraction);
    let times = &trace.times[start..];
    let values = &trace.rates[link][start..];
    let stats = cycle_stats(times, values);
    let converged = stats.amplitude < CONVERGED_AMPLITUDE * rbar;

    let mid = values.len() / 2;
    let (early, late) = (half_range(&values[..mid]), half_range(&values[mid..]));
    let decay_ratio = (early > 0.0).then(|| late / early);

    if !converged && stats.crossings < MIN_CROSSINGS {
        return Err(Error::WindowTooShort { found: stats.crossings, needed: MIN_CROSSINGS });
    }
    Ok(CycleMeasurement {
        eta: f64::NAN,
        amplitude: stats.amplitude,
        period: if converged { None } else { stats.period },
        converged,
        decay_ratio,
    })
}

/// Single link of capacity `C` shared by `flows` identical flows with round
/// trip time `τ`, simulated in the `β = 0` mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopfSetup {
    pub capacity: f64,
    pub alpha: f64,
    pub tau: f64,
    pub flows: usize,
    pub steps_per_tau: usize,
    /// Run length in units of `τ`.
    pub horizon_taus: f64,
    /// Initial history `R̄ (1 + perturbation)`.
    pub perturbation: f64,
    pub transient_fraction: f64,
}

impl HopfSetup {
    pub fn new(alpha: f64, tau: f64) -> Self {
        HopfSetup {
            capacity: 1.0,
            alpha,
            tau,
            flows: 1,
            steps_per_tau: 40,
            horizon_taus: 4000.0,
            perturbation: 0.01,
            transient_fraction: 0.5,
        }
    }

    /// Reads the parameters off a single-link, `β = 0` network whose routes
    /// share one round trip time.
    pub fn from_network(network: &Network) -> Result<Self> {
        if network.num_links() != 1 || network.num_routes() == 0 {
            return Err(Error::InvalidConfig("Hopf analysis needs a single-link network".into()));
        }
        let tau = network.route(0).rtt;
        if network.routes().iter().any(|r| (r.rtt - tau).abs() > network.rtt_tolerance()) {
            return Err(Error::InvalidConfig("Hopf analysis needs a common round trip time".into()));
        }
        let link = network.link(0);
        if link.beta != 0.0 {
            return Err(Error::InvalidConfig("Hopf analysis needs beta = 0".into()));
        }
        Ok(HopfSetup {
            capacity: link.capacity,
            flows: network.num_routes(),
            ..HopfSetup::new(link.alpha, tau)
        })
    }

    pub fn rbar(&self) -> f64 {
        self.capacity / self.flows as f64
    }

    pub fn predicted_eta_c(&self) -> f64 {
        hopf_prediction(self.alpha, self.tau, self.rbar()).eta_c
    }

    pub fn network(&self) -> Network {
        let routes = (0..self.flows).map(|i| Route::at_source(format!("r{i}"), ["l"], self.tau)).collect();
        Network::new(vec![Link::new("l", self.capacity, self.alpha, 0.0)], routes)
    }

    pub fn config(&self, eta: f64, perturbation: f64) -> SimConfig {
        let step = self.tau / self.steps_per_tau as f64;
        SimConfig::new(step, self.horizon_taus * self.tau, vec![self.rbar() * (1.0 + perturbation)])
            .eta(eta)
            .mode(SimMode::SingleLinkBeta0)
    }

    pub fn simulate(&self, eta: f64, perturbation: f64) -> Result<SimTrace> {
        sim::run(&self.network(), &[QueueFunction::Zero], &self.config(eta, perturbation))
    }

    pub fn measure_with(&self, eta: f64, perturbation: f64) -> Result<CycleMeasurement> {
        let trace = self.simulate(eta, perturbation)?;
        let m = measure_cycle(&trace, 0, self.transient_fraction, self.rbar())?;
        Ok(CycleMeasurement { eta, ..m })
    }

    pub fn measure(&self, eta: f64) -> Result<CycleMeasurement> {
        self.measure_with(eta, self.perturbation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EtaEstimate {
    pub eta_c: f64,
    pub lo: f64,
    pub hi: f64,
    pub evaluations: usize,
}

/// Bisection on `η` between a stable and an oscillating gain, down to
/// `resolution` relative bracket width.
pub fn estimate_eta_c(setup: &HopfSetup, bracket: (f64, f64), resolution: f64) -> Result<EtaEstimate> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Bracket { lo, hi });
    }
    let stable = |eta: f64| -> Result<bool> {
        match setup.measure(eta) {
            Ok(m) => Ok(m.stable()),
            Err(Error::Diverged(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let mut evaluations = 2;
    if !stable(lo)? || stable(hi)? {
        return Err(Error::Bracket { lo, hi });
    }
    while (hi - lo) > resolution * 0.5 * (hi + lo) {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EtaEstimate { eta_c: 0.5 * (lo + hi), lo, hi, evaluations })
}

/// Least-squares line `y = slope·x + intercept` with its `r²`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, intercept, r2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    /// Where the fitted `amplitude²` line crosses zero.
    pub eta_c_estimate: f64,
    /// `d(amplitude²)/dη`.
    pub slope: f64,
    pub r_squared: f64,
    /// Slope of `ln amplitude` against `ln(η - η_c)`.
    pub loglog_slope: f64,
    /// `sqrt(slope)` divided by `R̄ sqrt(20π/(3π-2))`; reported only.
    pub prefactor_ratio: f64,
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HysteresisCheck {
    pub eta: f64,
    pub small_perturbation: f64,
    pub large_perturbation: f64,
    pub small_amplitude: f64,
    pub large_amplitude: f64,
    pub relative_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub eta_reference: f64,
    pub measurements: Vec<CycleMeasurement>,
    pub fit: Option<ScalingFit>,
    /// All gains below the reference are stable and all gains in
    /// `(η_c, (1 + FIT_SPAN) η_c]` settle on a finite oscillation.
    pub supercritical: bool,
    /// Amplitude never decreases (within 2%) along the oscillating points.
    pub amplitude_monotone: bool,
    pub hysteresis: Option<HysteresisCheck>,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Threshold used to classify the grid; defaults to the prediction.
    pub eta_reference: Option<f64>,
    /// Perturbation sizes for the hysteresis probe at `1.02 η_c`.
    pub hysteresis: Option<(f64, f64)>,
    pub exec: Exec,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { eta_reference: None, hysteresis: Some((1e-3, 0.5)), exec: Exec::default() }
    }
}

/// Measures every gain in `etas` (concurrently under `Exec::Parallel`) and
/// fits `amplitude² = slope (η - η_c)` over the weakly supercritical points.
pub fn sweep_and_fit(setup: &HopfSetup, etas: &[f64], options: SweepOptions) -> Result<SweepResult> {
    let eta_ref = options.eta_reference.unwrap_or_else(|| setup.predicted_eta_c());
    let mut notes = Vec::new();

    let mut jobs: Vec<(f64, f64)> = etas.iter().map(|&e| (e, setup.perturbation)).collect();
    let probe_eta = 1.02 * eta_ref;
    if let Some((small, large)) = options.hysteresis {
        jobs.push((probe_eta, small));
        jobs.push((probe_eta, large));
    }
    let results = options.exec.map(&jobs, |&(eta, p)| setup.measure_with(eta, p));
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let hysteresis = options.hysteresis.map(|(small, large)| {
        let big = results.pop().expect("probe");
        let little = results.pop().expect("probe");
        HysteresisCheck {
            eta: probe_eta,
            small_perturbation: small,
            large_perturbation: large,
            small_amplitude: little.amplitude,
            large_amplitude: big.amplitude,
            relative_difference: (big.amplitude - little.amplitude).abs()
                / little.amplitude.max(big.amplitude).max(f64::MIN_POSITIVE),
        }
    });
    let mut measurements = results;
    measurements.sort_by(|a, b| a.eta.total_cmp(&b.eta));

    let below_stable = measurements.iter().filter(|m| m.eta < eta_ref).all(|m| m.stable());
    let near: Vec<&CycleMeasurement> =
        measurements.iter().filter(|m| m.eta > eta_ref && m.eta <= (1.0 + FIT_SPAN) * eta_ref).collect();
    let near_oscillate = near.iter().all(|m| !m.stable() && m.amplitude.is_finite());
    let supercritical = below_stable && near_oscillate;

    let oscillating: Vec<&CycleMeasurement> = measurements.iter().filter(|m| !m.stable()).collect();
    let amplitude_monotone = oscillating.windows(2).all(|w| w[1].amplitude >= w[0].amplitude * (1.0 - 0.02));
    if !amplitude_monotone {
        notes.push("amplitude is not monotone in η".to_owned());
    }

    let fit_points: Vec<&CycleMeasurement> = near.iter().copied().filter(|m| !m.stable()).collect();
    let fit = if fit_points.len() < 3 {
        notes.push(format!("fit declined: {} supercritical points", fit_points.len()));
        None
    } else {
        let xs: Vec<f64> = fit_points.iter().map(|m| m.eta).collect();
        let ys: Vec<f64> = fit_points.iter().map(|m| m.amplitude * m.amplitude).collect();
        linear_fit(&xs, &ys).map(|(slope, intercept, r_squared)| {
            let eta_c = -intercept / slope;
            let (lx, ly): (Vec<f64>, Vec<f64>) = fit_points
                .iter()
                .filter(|m| m.eta > eta_c)
                .map(|m| ((m.eta - eta_c).ln(), m.amplitude.ln()))
                .unzip();
            let loglog_slope = linear_fit(&lx, &ly).map_or(f64::NAN, |f| f.0);
            ScalingFit {
                eta_c_estimate: eta_c,
                slope,
                r_squared,
                loglog_slope,
                prefactor_ratio: slope.max(0.0).sqrt() / (setup.rbar() * hopf_amplitude_constant()),
                points: fit_points.len(),
            }
        })
    };

    Ok(SweepResult {
        eta_reference: eta_ref,
        measurements,
        fit,
        supercritical,
        amplitude_monotone,
        hysteresis,
        notes,
    })
}

/// Gains `factor · η_c` for the default sweep: a few subcritical points and
/// a dense weakly supercritical grid.
pub fn default_grid(eta_c: f64) -> Vec<f64> {
    [0.9, 0.95, 0.98, 1.005, 1.01, 1.015, 1.02, 1.025, 1.03, 1.035, 1.04, 1.045, 1.05]
        .iter()
        .map(|f| f * eta_c)
        .collect()
}
