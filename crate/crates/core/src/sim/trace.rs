use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::signal::{cycle_stats, half_range, window_start};

/// Relative half peak-to-peak below which a series counts as settled.
pub const SETTLED_TOLERANCE: f64 = 1e-6;

/// Sampled output of a simulation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimTrace {
    pub link_ids: Vec<String>,
    pub route_ids: Vec<String>,
    pub times: Vec<f64>,
    /// `R_l` per link.
    pub rates: Vec<Vec<f64>>,
    /// `x_r` per route.
    pub route_rates: Vec<Vec<f64>>,
    /// `y_l` per link.
    pub flows: Vec<Vec<f64>>,
    /// `q_l` per link.
    pub queues: Vec<Vec<f64>>,
    /// Last sample time at which each link set some route's rate.
    pub last_binding: Vec<Option<f64>>,
    /// Links frozen by the runaway guard.
    pub held_links: Vec<String>,
    /// Steps at which a negative rate was projected back to zero.
    pub projections: usize,
    pub warnings: Vec<String>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "time")?;
        for id in &self.link_ids {
            write!(w, ",R.{id}")?;
        }
        for id in &self.route_ids {
            write!(w, ",x.{id}")?;
        }
        for id in &self.link_ids {
            write!(w, ",y.{id}")?;
        }
        for id in &self.link_ids {
            write!(w, ",q.{id}")?;
        }
        writeln!(w)?;
        for (i, t) in self.times.iter().enumerate() {
            write!(w, "{t}")?;
            for series in self.rates.iter().chain(&self.route_rates).chain(&self.flows).chain(&self.queues) {
                write!(w, ",{}", series[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn summary(&self, transient_fraction: f64) -> SimSummary {
        let start = window_start(&self.times, transient_fraction);
        let window_t = &self.times[start..];
        let t_start = window_t.first().copied().unwrap_or(0.0);
        let last = |s: &Vec<f64>| s.last().copied().unwrap_or(f64::NAN);
        let named = |ids: &[String], series: &[Vec<f64>]| -> BTreeMap<String, f64> {
            ids.iter().cloned().zip(series.iter().map(last)).collect()
        };

        let settled = |s: &[f64]| {
            let mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
            half_range(s) <= SETTLED_TOLERANCE * mean.abs().max(f64::MIN_POSITIVE)
        };
        let converged = !window_t.is_empty() && self.route_rates.iter().all(|s| settled(&s[start..]));

        let oscillation = self
            .link_ids
            .iter()
            .zip(&self.rates)
            .map(|(id, s)| {
                let stats = cycle_stats(window_t, &s[start..]);
                LinkOscillation {
                    link: id.clone(),
                    mean: stats.mean,
                    amplitude: stats.amplitude,
                    period: stats.period,
                }
            })
            .collect();

        let monotone_growth = self
            .link_ids
            .iter()
            .enumerate()
            .filter(|&(l, _)| {
                let s = &self.rates[l][start..];
                let increasing = s.len() >= 2 && s.windows(2).all(|w| w[1] > w[0]);
                let never_binding = self.last_binding[l].is_none_or(|t| t < t_start);
                increasing && never_binding
            })
            .map(|(_, id)| id.clone())
            .collect();

        SimSummary {
            final_time: self.final_time(),
            final_rates: named(&self.link_ids, &self.rates),
            final_route_rates: named(&self.route_ids, &self.route_rates),
            final_flows: named(&self.link_ids, &self.flows),
            final_queues: named(&self.link_ids, &self.queues),
            converged,
            oscillation,
            monotone_growth,
            held_links: self.held_links.clone(),
            projections: self.projections,
            warnings: self.warnings.clone(),
            divergence: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkOscillation {
    pub link: String,
    pub mean: f64,
    pub amplitude: f64,
    pub period: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceInfo {
    pub time: f64,
    pub link: String,
    pub no_equilibrium: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimSummary {
    pub final_time: f64,
    pub final_rates: BTreeMap<String, f64>,
    pub final_route_rates: BTreeMap<String, f64>,
    pub final_flows: BTreeMap<String, f64>,
    pub final_queues: BTreeMap<String, f64>,
    /// Every route rate settled over the post-transient window.
    pub converged: bool,
    pub oscillation: Vec<LinkOscillation>,
    /// Links whose rate grows throughout the window without ever setting a
    /// route's rate: no equilibrium exists for them.
    pub monotone_growth: Vec<String>,
    pub held_links: Vec<String>,
    pub projections: usize,
    pub warnings: Vec<String>,
    pub divergence: Option<DivergenceInfo>,
}
