//! `rcp`: validate scenarios, compute equilibria and stability reports, and
//! run fluid-model simulations and Hopf sweeps from JSON scenario files.

mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rcp_fluid::bifurcation::{
    default_grid, estimate_eta_c, sweep_and_fit, EtaEstimate, SweepOptions, SweepResult,
};
use rcp_fluid::equilibrium::check_single_bottleneck;
use rcp_fluid::scenario::{Scenario, ScenarioError, SweepSpec};
use rcp_fluid::sim::{self, SimTrace};
use rcp_fluid::stability::{apply_recommended_alpha, hopf_prediction, HopfPrediction};
use rcp_fluid::{solve, stability_report, Equilibrium, Error, Exec, Network, StabilityReport};

const EXIT_STATUS: &str = "\
Exit status:
  0  success
  1  invalid scenario or settings; every problem is listed
  2  parse failure: malformed scenario document or command line
  3  simulation diverged; the partial trace and summary are still written
  4  any other failure, such as an unreadable input or unwritable output";

/// Fraction of a run discarded before summarizing it.
const TRANSIENT_FRACTION: f64 = 0.5;

#[derive(Parser)]
#[command(name = "rcp", version, about = "Fluid-model analysis of explicit rate congestion control", after_help = EXIT_STATUS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario.
    #[command(after_help = EXIT_STATUS)]
    Validate(Common),
    /// Max-min equilibrium with effective capacities and bottlenecks.
    #[command(after_help = EXIT_STATUS)]
    Equilibrium {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Per-link stability conditions as a table and a file.
    #[command(after_help = EXIT_STATUS)]
    StabilityCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// JSON bundle of equilibrium, stability and recommended gains.
    #[command(after_help = EXIT_STATUS)]
    Report {
        #[command(flatten)]
        common: Common,
        /// Replace every α with its recommendation, re-solve and report the
        /// result; the adjusted scenario is written as `recommended.json`.
        #[arg(long)]
        apply_recommended: bool,
    },
    /// Integrate the delayed fluid model.
    #[command(after_help = EXIT_STATUS)]
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Gain multiplier on every rate update.
        #[arg(long)]
        eta: Option<f64>,
        /// Integration step.
        #[arg(long)]
        step: Option<f64>,
        /// Simulated time.
        #[arg(long)]
        horizon: Option<f64>,
        /// Trace file format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write `trace.svg`.
        #[arg(long)]
        plot: bool,
    },
    /// Sweep η across the single-link Hopf threshold and fit the amplitude law.
    #[command(after_help = EXIT_STATUS)]
    HopfSweep {
        #[command(flatten)]
        common: Common,
        /// Per-η table format.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write `sweep.svg` (amplitude² against η).
        #[arg(long)]
        plot: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario document (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created when missing.
    #[arg(long, default_value = "rcp-out")]
    out: PathBuf,
    /// Reserved; the model has no random inputs and ignores it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Invalid(Vec<String>),
    Parse(String),
    Diverged(String),
    Other(anyhow::Error),
}

impl Failure {
    fn status(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Diverged(_) => 3,
            Failure::Other(_) => 4,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidNetwork(_)
            | Error::UnknownLink(_)
            | Error::ZeroQueueAtEquilibrium(_)
            | Error::ElasticityUndefined(_) => Failure::Invalid(vec![e.to_string()]),
            Error::Diverged(d) => Failure::Diverged(d.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Invalid(problems) => {
                    println!("invalid scenario:");
                    for p in problems {
                        println!("  {p}");
                    }
                }
                Failure::Parse(msg) | Failure::Diverged(msg) => eprintln!("error: {msg}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(failure.status())
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate(common) => validate(&common),
        Command::Equilibrium { common, format } => equilibrium(&common, format),
        Command::StabilityCheck { common, format } => stability_check(&common, format),
        Command::Report { common, apply_recommended } => report(&common, apply_recommended),
        Command::Simulate { common, eta, step, horizon, format, plot } => {
            let (_, mut scenario) = load(&common.scenario)?;
            scenario.sim.eta = eta.or(scenario.sim.eta);
            scenario.sim.step = step.or(scenario.sim.step);
            scenario.sim.horizon = horizon.or(scenario.sim.horizon);
            simulate(&common, scenario, format, plot)
        }
        Command::HopfSweep { common, format, plot } => hopf_sweep(&common, format, plot),
    }
}

/// Reads, parses and validates a scenario, returning the raw text as well.
fn load(path: &Path) -> Result<(String, Scenario), Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::from_json(&text).map_err(|e| match e {
        ScenarioError::Parse(e) => Failure::Parse(format!("{}: {e}", path.display())),
        ScenarioError::Invalid(p) => Failure::Invalid(p),
    })?;
    scenario.ensure_valid().map_err(|e| match e {
        ScenarioError::Invalid(p) => Failure::Invalid(p),
        ScenarioError::Parse(e) => Failure::Parse(e.to_string()),
    })?;
    Ok((text, scenario))
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(&common.out)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Outcome {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).context("serializing output")?;
    s.push('\n');
    Ok(s)
}

fn write_resolved(dir: &Path, scenario: &Scenario) -> Outcome {
    let resolved = scenario.resolved()?;
    write_file(dir, "resolved.json", to_json(&resolved)?.as_bytes())
}

fn validate(common: &Common) -> Outcome {
    let (_, scenario) = load(&common.scenario)?;
    write_resolved(out_dir(common)?, &scenario)?;
    let net = &scenario.network;
    println!("valid: {} links, {} routes", net.num_links(), net.num_routes());
    Ok(())
}

#[derive(Serialize)]
struct RouteView {
    id: String,
    rate: f64,
    bottleneck: String,
    tie: bool,
}

#[derive(Serialize)]
struct LinkView {
    id: String,
    rate: f64,
    effective_capacity: f64,
    load: f64,
    saturated: bool,
}

#[derive(Serialize)]
struct EquilibriumView {
    routes: Vec<RouteView>,
    links: Vec<LinkView>,
    levels: Vec<f64>,
}

impl EquilibriumView {
    fn new(net: &Network, eq: &Equilibrium) -> Self {
        let routes = net
            .routes()
            .iter()
            .enumerate()
            .map(|(r, route)| RouteView {
                id: route.id.clone(),
                rate: eq.rates[r],
                bottleneck: net.link(eq.bottleneck[r]).id.clone(),
                tie: eq.tie[r],
            })
            .collect();
        let links = net
            .links()
            .iter()
            .enumerate()
            .map(|(l, link)| LinkView {
                id: link.id.clone(),
                rate: eq.link_rates[l],
                effective_capacity: eq.effective_capacity[l],
                load: eq.aggregate(net, l),
                saturated: eq.saturated[l],
            })
            .collect();
        EquilibriumView { routes, links, levels: eq.levels.clone() }
    }

    fn routes_csv(&self) -> String {
        let mut s = String::from("route,rate,bottleneck,tie\n");
        for r in &self.routes {
            let _ = writeln!(s, "{},{},{},{}", r.id, r.rate, r.bottleneck, r.tie);
        }
        s
    }

    fn links_csv(&self) -> String {
        let mut s = String::from("link,rate,effective_capacity,load,saturated\n");
        for l in &self.links {
            let _ = writeln!(s, "{},{},{},{},{}", l.id, l.rate, l.effective_capacity, l.load, l.saturated);
        }
        s
    }
}

fn equilibrium(common: &Common, format: Format) -> Outcome {
    let (_, scenario) = load(&common.scenario)?;
    let dir = out_dir(common)?;
    write_resolved(dir, &scenario)?;
    let eq = solve(&scenario.network, &scenario.queues)?;
    let view = EquilibriumView::new(&scenario.network, &eq);
    match format {
        Format::Json => {
            let json = to_json(&view)?;
            write_file(dir, "equilibrium.json", json.as_bytes())?;
            print!("{json}");
        }
        Format::Csv => {
            let (routes, links) = (view.routes_csv(), view.links_csv());
            write_file(dir, "equilibrium_routes.csv", routes.as_bytes())?;
            write_file(dir, "equilibrium_links.csv", links.as_bytes())?;
            print!("{routes}\n{links}");
        }
    }
    Ok(())
}

fn stability_table(report: &StabilityReport) -> String {
    let mut s = format!(
        "{:<10} {:>14} {:>4} {:>17} {:>4} {:>12}  note\n",
        "link", "bottleneck_lhs", "ok", "decentralized_lhs", "ok", "recommended"
    );
    let yes = |b: bool| if b { "yes" } else { "no" };
    for l in &report.links {
        let alpha = l.recommended_alpha.map_or("-".to_owned(), |a| format!("{a:.6}"));
        let _ = writeln!(
            s,
            "{:<10} {:>14.6} {:>4} {:>17.6} {:>4} {:>12}  {}",
            l.link,
            l.bottleneck_lhs,
            yes(l.bottleneck_ok),
            l.decentralized_lhs,
            yes(l.decentralized_ok),
            alpha,
            l.alpha_note.as_deref().unwrap_or("")
        );
    }
    let _ = writeln!(s, "all links satisfy the bottleneck condition: {}", yes(report.all_ok));
    let _ = writeln!(s, "single bottleneck per route: {}", yes(report.assumption_ok));
    if let Some(note) = &report.note {
        let _ = writeln!(s, "{note}");
    }
    s
}

fn stability_csv(report: &StabilityReport) -> String {
    let mut s = String::from(
        "link,bottleneck_lhs,bottleneck_ok,decentralized_lhs,decentralized_ok,recommended_alpha\n",
    );
    for l in &report.links {
        let alpha = l.recommended_alpha.map_or(String::new(), |a| a.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            l.link, l.bottleneck_lhs, l.bottleneck_ok, l.decentralized_lhs, l.decentralized_ok, alpha
        );
    }
    s
}

fn stability_check(common: &Common, format: Format) -> Outcome {
    let (_, scenario) = load(&common.scenario)?;
    let dir = out_dir(common)?;
    write_resolved(dir, &scenario)?;
    let eq = solve(&scenario.network, &scenario.queues)?;
    let report = stability_report(&scenario.network, &eq, &scenario.queues)?;
    match format {
        Format::Json => write_file(dir, "stability.json", to_json(&report)?.as_bytes())?,
        Format::Csv => write_file(dir, "stability.csv", stability_csv(&report).as_bytes())?,
    }
    print!("{}", stability_table(&report));
    Ok(())
}

#[derive(Serialize)]
struct ReportBundle {
    applied_recommended_alpha: bool,
    equilibrium: EquilibriumView,
    stability: StabilityReport,
    recommended_alpha: BTreeMap<String, Option<f64>>,
    assumption_ok: bool,
    /// Routes with more than one bottleneck link.
    multi_bottleneck_routes: Vec<String>,
}

fn report(common: &Common, apply_recommended: bool) -> Outcome {
    let (text, mut scenario) = load(&common.scenario)?;
    let dir = out_dir(common)?;
    if apply_recommended {
        let eq = solve(&scenario.network, &scenario.queues)?;
        scenario.network = apply_recommended_alpha(&scenario.network, &eq, &scenario.queues)?;
        let adjusted = with_alphas(&text, &scenario.network)?;
        write_file(dir, "recommended.json", adjusted.as_bytes())?;
    }
    write_resolved(dir, &scenario)?;

    let net = &scenario.network;
    let eq = solve(net, &scenario.queues)?;
    let stability = stability_report(net, &eq, &scenario.queues)?;
    let bottlenecks = check_single_bottleneck(net, &eq);
    let bundle = ReportBundle {
        applied_recommended_alpha: apply_recommended,
        equilibrium: EquilibriumView::new(net, &eq),
        recommended_alpha: stability.links.iter().map(|l| (l.link.clone(), l.recommended_alpha)).collect(),
        assumption_ok: stability.assumption_ok,
        multi_bottleneck_routes: bottlenecks.violating.iter().map(|&r| net.route(r).id.clone()).collect(),
        stability,
    };
    let json = to_json(&bundle)?;
    write_file(dir, "report.json", json.as_bytes())?;
    print!("{json}");
    Ok(())
}

/// The original scenario document with each link's alpha taken from `net`.
fn with_alphas(text: &str, net: &Network) -> Result<String, Failure> {
    let mut doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Failure::Parse(e.to_string()))?;
    if let Some(links) = doc.get_mut("links").and_then(|l| l.as_array_mut()) {
        for link in links {
            let alpha = link
                .get("id")
                .and_then(|id| id.as_str())
                .and_then(|id| net.link_index(id))
                .map(|l| net.link(l).alpha);
            if let Some(alpha) = alpha {
                link["alpha"] = serde_json::json!(alpha);
            }
        }
    }
    to_json(&doc)
}

fn trace_columns(trace: &SimTrace) -> (Vec<String>, Vec<&[f64]>) {
    let mut names = vec!["time".to_owned()];
    let mut columns: Vec<&[f64]> = vec![&trace.times];
    let groups = [("R", &trace.link_ids, &trace.rates), ("x", &trace.route_ids, &trace.route_rates)];
    for (prefix, ids, series) in groups {
        for (id, s) in ids.iter().zip(series.iter()) {
            names.push(format!("{prefix}.{id}"));
            columns.push(s);
        }
    }
    for (prefix, series) in [("y", &trace.flows), ("q", &trace.queues)] {
        for (id, s) in trace.link_ids.iter().zip(series.iter()) {
            names.push(format!("{prefix}.{id}"));
            columns.push(s);
        }
    }
    (names, columns)
}

#[derive(Serialize)]
struct TraceJson {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn write_trace(dir: &Path, trace: &SimTrace, format: Format) -> Outcome {
    match format {
        Format::Csv => {
            let path = dir.join("trace.csv");
            let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            let mut w = std::io::BufWriter::new(file);
            trace
                .write_csv(&mut w)
                .and_then(|()| w.flush())
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Format::Json => {
            let (columns, series) = trace_columns(trace);
            let rows = (0..trace.len()).map(|i| series.iter().map(|s| s[i]).collect()).collect();
            let json = TraceJson { columns, rows };
            write_file(dir, "trace.json", to_json(&json)?.as_bytes())?;
        }
    }
    Ok(())
}

fn simulate(common: &Common, scenario: Scenario, format: Format, plot: bool) -> Outcome {
    let dir = out_dir(common)?;
    write_resolved(dir, &scenario)?;
    let config = scenario.sim_config()?;
    let (trace, divergence) = match sim::run(&scenario.network, &scenario.queues, &config) {
        Ok(trace) => (trace, None),
        Err(Error::Diverged(d)) => {
            let info = d.info();
            (d.trace, Some(info))
        }
        Err(e) => return Err(e.into()),
    };
    let mut summary = trace.summary(TRANSIENT_FRACTION);
    summary.divergence = divergence.clone();

    write_trace(dir, &trace, format)?;
    write_file(dir, "summary.json", to_json(&summary)?.as_bytes())?;
    if plot {
        let series = trace
            .link_ids
            .iter()
            .zip(&trace.rates)
            .map(|(id, s)| svg::Series {
                label: format!("R.{id}"),
                points: trace.times.iter().copied().zip(s.iter().copied()).collect(),
                mark: svg::Mark::Line,
            })
            .collect();
        let chart = svg::Plot {
            title: format!("link rates, eta = {}", config.eta),
            x_label: "time".into(),
            y_label: "R".into(),
            series,
        };
        write_file(dir, "trace.svg", chart.render().as_bytes())?;
    }

    println!("simulated to t = {} ({} samples)", summary.final_time, trace.len());
    println!("converged: {}", summary.converged);
    for (id, x) in &summary.final_route_rates {
        println!("  x.{id} = {x}");
    }
    if !summary.monotone_growth.is_empty() {
        println!("no equilibrium: monotone growth on {}", summary.monotone_growth.join(", "));
    }
    match divergence {
        Some(info) => Err(Failure::Diverged(format!(
            "diverged at t = {} on link {}: {}{}",
            info.time,
            info.link,
            info.reason,
            if info.no_equilibrium { " (no equilibrium)" } else { "" }
        ))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct SweepReport {
    prediction: HopfPrediction,
    bisection: EtaEstimate,
    #[serde(flatten)]
    sweep: SweepResult,
}

fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::from("eta,amplitude,period,converged\n");
    for m in &result.measurements {
        let period = m.period.map_or(String::new(), |p| p.to_string());
        let _ = writeln!(s, "{},{},{},{}", m.eta, m.amplitude, period, m.converged);
    }
    s
}

fn hopf_sweep(common: &Common, format: Format, plot: bool) -> Outcome {
    let (_, mut scenario) = load(&common.scenario)?;
    scenario.sweep.get_or_insert_with(SweepSpec::default);
    let dir = out_dir(common)?;
    let (setup, settings) = scenario.sweep_settings()?;
    write_resolved(dir, &scenario)?;

    let predicted = setup.predicted_eta_c();
    let etas = settings
        .etas
        .clone()
        .or_else(|| settings.eta_factors.as_ref().map(|f| f.iter().map(|f| f * predicted).collect()))
        .unwrap_or_else(|| default_grid(predicted));
    let options =
        SweepOptions { eta_reference: None, hysteresis: settings.hysteresis, exec: Exec::default() };
    let result = sweep_and_fit(&setup, &etas, options)?;
    let bracket = (settings.bracket.0 * predicted, settings.bracket.1 * predicted);
    let bisection = estimate_eta_c(&setup, bracket, settings.resolution)?;

    match format {
        Format::Csv => write_file(dir, "sweep.csv", sweep_csv(&result).as_bytes())?,
        Format::Json => write_file(dir, "sweep.json", to_json(&result.measurements)?.as_bytes())?,
    }
    if plot {
        let mut series = vec![svg::Series {
            label: "amplitude²".into(),
            points: result.measurements.iter().map(|m| (m.eta, m.amplitude * m.amplitude)).collect(),
            mark: svg::Mark::Dots,
        }];
        if let Some(fit) = &result.fit {
            let top = etas.iter().copied().fold(fit.eta_c_estimate, f64::max);
            series.push(svg::Series {
                label: "fit".into(),
                points: vec![(fit.eta_c_estimate, 0.0), (top, fit.slope * (top - fit.eta_c_estimate))],
                mark: svg::Mark::Line,
            });
        }
        let chart = svg::Plot {
            title: format!("alpha = {}, tau = {}", setup.alpha, setup.tau),
            x_label: "eta".into(),
            y_label: "amplitude²".into(),
            series,
        };
        write_file(dir, "sweep.svg", chart.render().as_bytes())?;
    }

    println!("predicted eta_c = {predicted}");
    println!("bisection eta_c = {} (bracket [{}, {}])", bisection.eta_c, bisection.lo, bisection.hi);
    match &result.fit {
        Some(fit) => println!(
            "fit eta_c = {}, r² = {}, log-log slope = {}, prefactor ratio = {}",
            fit.eta_c_estimate, fit.r_squared, fit.loglog_slope, fit.prefactor_ratio
        ),
        None => println!("no fit: {}", result.notes.join("; ")),
    }
    let report = SweepReport {
        prediction: hopf_prediction(setup.alpha, setup.tau, setup.rbar()),
        bisection,
        sweep: result,
    };
    write_file(dir, "fit.json", to_json(&report)?.as_bytes())
}
