//! Analysis reports, sweeps and the invariant suite behind the CLI.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{MamsSystem, SystemState};
use crate::error::{Error, Result};
use crate::relative::{drift_residuals, transient_oracle_all, MEAN_ZERO_TOLERANCE, POISSON_TOLERANCE};
use crate::simulator::{simulate, SimConfig, SimEstimate, SimReport};
use crate::spec::{Scenario, SystemSpec};
use crate::two_level::{analyze_two_level, e_q_bounds, TwoLevelAnalysis, TwoLevelQueueBounds};

/// CSV header written by [`write_csv`].
pub const CSV_HEADER: &str =
    "param,lambda,mu,rho,lower,upper_fast,upper_slow,upper,heavy_traffic_const,sim_mean,sim_ci,error";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub states: Vec<String>,
    pub pi: Vec<f64>,
    pub delta: Vec<f64>,
    pub event_rate: f64,
    /// E[Δ(Y)] with Y drawn from the state entered at an event.
    pub e_delta_event_weighted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoLevelSummary {
    pub delta_h: f64,
    pub delta_l: f64,
    pub e_delta_arrival: f64,
    pub p_h: f64,
    pub lower: f64,
    pub upper_fast: f64,
    pub upper_slow: Option<f64>,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub arrival: ChainSummary,
    pub completion: ChainSummary,
    pub explicit_term: f64,
    /// Generic sandwich from the extreme relative values.
    pub general_lower: f64,
    pub general_upper: f64,
    /// Best available bounds: the two-level ones when the spec has a
    /// two-level block, otherwise the generic ones.
    pub lower: f64,
    pub upper: f64,
    pub heavy_traffic_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_level: Option<TwoLevelSummary>,
}

impl AnalysisReport {
    pub fn upper_fast(&self) -> Option<f64> {
        self.two_level.map(|t| t.upper_fast)
    }

    pub fn upper_slow(&self) -> Option<f64> {
        self.two_level.and_then(|t| t.upper_slow)
    }
}

fn summarize(a: &crate::bounds::AnalyzedChain) -> ChainSummary {
    ChainSummary {
        states: a.chain.states().to_vec(),
        pi: a.analysis.pi.clone(),
        delta: a.relative.delta.clone(),
        event_rate: a.event_rate(),
        e_delta_event_weighted: a.event_weighted_delta(),
    }
}

/// Builds the system and all analytic quantities for a resolved spec.
pub fn analyze_scenario(scenario: &Scenario, name: Option<String>) -> Result<(MamsSystem, AnalysisReport)> {
    let system = MamsSystem::build(scenario.arrival.clone(), scenario.completion.clone())?;
    let b = system.bounds();
    let two_level = match &scenario.two_level {
        Some(params) => {
            let a: TwoLevelAnalysis = analyze_two_level(params)?;
            let q: TwoLevelQueueBounds = e_q_bounds(params, &a);
            Some(TwoLevelSummary {
                delta_h: a.delta_h,
                delta_l: a.delta_l,
                e_delta_arrival: a.e_delta_arrival,
                p_h: a.p_h,
                lower: q.lower,
                upper_fast: q.upper_fast,
                upper_slow: q.upper_slow,
                upper: q.upper,
            })
        }
        None => None,
    };
    let report = AnalysisReport {
        name,
        lambda: system.lambda,
        mu: system.mu,
        rho: system.rho,
        arrival: summarize(&system.arrival),
        completion: summarize(&system.completion),
        explicit_term: b.explicit_term,
        general_lower: b.lower,
        general_upper: b.upper,
        lower: two_level.map_or(b.lower, |t| t.lower),
        upper: two_level.map_or(b.upper, |t| t.upper),
        heavy_traffic_constant: b.heavy_traffic_constant,
        two_level,
    };
    Ok((system, report))
}

fn write_vector(f: &mut fmt::Formatter<'_>, name: &str, labels: &[String], values: &[f64]) -> fmt::Result {
    write!(f, "  {name}:")?;
    for (l, v) in labels.iter().zip(values) {
        write!(f, " {l}={}", fmt_g(*v))?;
    }
    writeln!(f)
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.name {
            writeln!(f, "system: {name}")?;
        }
        writeln!(f, "lambda = {}", fmt_g(self.lambda))?;
        writeln!(f, "mu     = {}", fmt_g(self.mu))?;
        writeln!(f, "rho    = {}", fmt_g(self.rho))?;
        for (title, c) in [("arrival chain", &self.arrival), ("completion chain", &self.completion)] {
            writeln!(f, "{title} (event rate {}):", fmt_g(c.event_rate))?;
            write_vector(f, "pi", &c.states, &c.pi)?;
            write_vector(f, "delta", &c.states, &c.delta)?;
            writeln!(f, "  event-weighted E[delta] = {}", fmt_g(c.e_delta_event_weighted))?;
        }
        writeln!(f, "explicit term          = {}", fmt_g(self.explicit_term))?;
        writeln!(f, "lower bound (general)  = {}", fmt_g(self.general_lower))?;
        writeln!(f, "upper bound (general)  = {}", fmt_g(self.general_upper))?;
        if let Some(t) = &self.two_level {
            writeln!(f, "two-level: delta(H) = {}, delta(L) = {}, P(H) = {}", fmt_g(t.delta_h), fmt_g(t.delta_l), fmt_g(t.p_h))?;
            writeln!(f, "lower bound (two-level)      = {}", fmt_g(t.lower))?;
            writeln!(f, "upper bound (fast switching) = {}", fmt_g(t.upper_fast))?;
            match t.upper_slow {
                Some(v) => writeln!(f, "upper bound (slow switching) = {}", fmt_g(v))?,
                None => writeln!(f, "upper bound (slow switching) = n/a (lambda_h <= mu)")?,
            }
        }
        writeln!(f, "E[Q] in [{}, {}]", fmt_g(self.lower), fmt_g(self.upper))?;
        write!(f, "heavy-traffic constant = {}", fmt_g(self.heavy_traffic_constant))
    }
}

/// Where a simulated mean falls relative to the analytic bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Inside,
    /// Outside [lower, upper] but within three CI half-widths of it.
    InsideWithinCi,
    Outside,
}

impl Verdict {
    pub fn classify(estimate: &SimEstimate, lower: f64, upper: f64) -> Self {
        let m = estimate.mean;
        let slack = 3.0 * estimate.ci_half_width;
        if m >= lower && m <= upper {
            Verdict::Inside
        } else if m >= lower - slack && m <= upper + slack {
            Verdict::InsideWithinCi
        } else {
            Verdict::Outside
        }
    }

    pub fn is_inside(self) -> bool {
        self != Verdict::Outside
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Inside => "inside",
            Verdict::InsideWithinCi => "inside (within 3 CI)",
            Verdict::Outside => "outside",
        })
    }
}

pub fn format_estimate(e: &SimEstimate) -> String {
    format!("{} ± {}", fmt_g(e.mean), fmt_g(e.ci_half_width))
}

/// Text rendering of a simulation report.
pub fn format_sim_report(r: &SimReport, arrival_states: &[String]) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        s.push_str(&format!("{k:<22}{v}\n"));
    };
    line("events", r.events.to_string());
    line("arrivals", r.arrivals.to_string());
    line("completions", r.completions.to_string());
    line("unused completions", r.unused_completions.to_string());
    line("simulated time", fmt_g(r.simulated_time));
    line("warmup time", fmt_g(r.warmup_time));
    line("final / max queue", format!("{} / {}", r.final_q, r.max_q));
    line("E[Q]", format_estimate(&r.e_q));
    line("P(Q=0)", format_estimate(&r.p_empty));
    for (label, e) in arrival_states.iter().zip(&r.p_joint_empty) {
        line(&format!("P(Q=0, Y_A={label})"), format_estimate(e));
    }
    line("unused service rate", format!("{} (mu - lambda = {})", format_estimate(&r.unused_rate), fmt_g(r.mu - r.lambda)));
    if let Some(e) = &r.e_u_term {
        line("E_U term", format_estimate(e));
    }
    line("mean drift", format_estimate(&r.drift));
    if !r.stable {
        s.push_str("warning: lambda >= mu, estimates do not converge\n");
    }
    s
}

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub lower: Option<f64>,
    pub upper_fast: Option<f64>,
    pub upper_slow: Option<f64>,
    pub upper: Option<f64>,
    pub heavy_traffic_const: Option<f64>,
    pub sim: Option<SimReport>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(param: f64, err: &Error) -> Self {
        SweepRow {
            param,
            lambda: None,
            mu: None,
            rho: None,
            lower: None,
            upper_fast: None,
            upper_slow: None,
            upper: None,
            heavy_traffic_const: None,
            sim: None,
            error: Some(err.to_string()),
        }
    }

    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map(fmt_g).unwrap_or_default();
        let fields = [
            fmt_g(self.param),
            num(self.lambda),
            num(self.mu),
            num(self.rho),
            num(self.lower),
            num(self.upper_fast),
            num(self.upper_slow),
            num(self.upper),
            num(self.heavy_traffic_const),
            num(self.sim.as_ref().map(|s| s.e_q.mean)),
            num(self.sim.as_ref().map(|s| s.e_q.ci_half_width)),
            self.error.as_deref().map(csv_quote).unwrap_or_default(),
        ];
        fields.join(",")
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Evaluates one sweep point. `sim` of `None` skips simulation.
pub fn evaluate_point(spec: &SystemSpec, param: f64, sim: Option<&SimConfig>) -> SweepRow {
    let run = || -> Result<SweepRow> {
        let scenario = spec.resolve()?;
        let (system, report) = analyze_scenario(&scenario, None)?;
        let sim = match sim {
            Some(cfg) => Some(simulate(&system, cfg)?),
            None => None,
        };
        Ok(SweepRow {
            param,
            lambda: Some(report.lambda),
            mu: Some(report.mu),
            rho: Some(report.rho),
            lower: Some(report.lower),
            upper_fast: report.upper_fast(),
            upper_slow: report.upper_slow(),
            upper: Some(report.upper),
            heavy_traffic_const: Some(report.heavy_traffic_constant),
            sim,
            error: None,
        })
    };
    run().unwrap_or_else(|e| SweepRow::failed(param, &e))
}

/// Runs every sweep value in parallel. Point `k` simulates on random stream
/// `k` of `sim.seed`, so rows do not depend on scheduling. Invalid points
/// produce a row with the error column set.
pub fn run_sweep(spec: &SystemSpec, parameter: &str, values: &[f64], sim: Option<&SimConfig>) -> Vec<SweepRow> {
    values
        .par_iter()
        .enumerate()
        .map(|(k, &v)| {
            let cfg = sim.map(|c| SimConfig { stream: k as u64, ..*c });
            match spec.with_parameter(parameter, v) {
                Ok(point) => evaluate_point(&point, v, cfg.as_ref()),
                Err(e) => SweepRow::failed(v, &e),
            }
        })
        .collect()
}

/// Formats with 12 significant digits, trailing zeros removed, switching to
/// exponent notation for very large or small magnitudes.
pub fn fmt_g(x: f64) -> String {
    const SIG: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..SIG).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let fixed = format!("{:.*}", (SIG - 1 - exp) as usize, x);
    trim_zeros(&fixed).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Outcome of one invariant in the validation suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Failure is numerical rather than a modelling problem.
    pub numerical: bool,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String, numerical: bool) -> Self {
        Check { name: name.into(), passed, detail, numerical }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

const DRIFT_TOLERANCE: f64 = 1e-9;
const ORACLE_AGREEMENT: f64 = 1e-6;
const ORACLE_BUDGET: usize = 5_000_000;

/// Runs the analytic invariant suite. Model errors that stop the analysis
/// (invalid or reducible chains, instability) are returned as checks too,
/// so the caller always gets a complete list.
pub fn validate_scenario(scenario: &Scenario) -> Vec<Check> {
    let mut checks = Vec::new();
    for (name, chain) in [("arrival chain", &scenario.arrival), ("completion chain", &scenario.completion)] {
        let report = chain.validate();
        let ok = report.is_valid();
        checks.push(Check::new(
            &format!("{name} well-formed"),
            ok,
            if ok { format!("{} states", chain.len()) } else { report.to_string() },
            false,
        ));
        if !ok {
            return checks;
        }
    }
    let system = match MamsSystem::build(scenario.arrival.clone(), scenario.completion.clone()) {
        Ok(s) => s,
        Err(e) => {
            let numerical = e.exit_code() == 3;
            checks.push(Check::new("system", false, e.to_string(), numerical));
            return checks;
        }
    };
    checks.push(Check::new(
        "stability",
        true,
        format!("rho = {}", fmt_g(system.rho)),
        false,
    ));
    for (name, a) in [("arrival", &system.arrival), ("completion", &system.completion)] {
        let an = &a.analysis;
        let scale = a.chain.max_rate().max(1.0);
        checks.push(Check::new(
            &format!("{name} balance"),
            an.balance_residual <= crate::chain::BALANCE_TOLERANCE * scale,
            format!("residual {:e}", an.balance_residual),
            true,
        ));
        let pi_sum: f64 = an.pi.iter().sum();
        checks.push(Check::new(
            &format!("{name} normalization"),
            (pi_sum - 1.0).abs() <= 1e-12 && an.pi.iter().all(|&p| p >= 0.0),
            format!("sum pi = {}", fmt_g(pi_sum)),
            true,
        ));
        let rel = &a.relative;
        checks.push(Check::new(
            &format!("{name} poisson equation"),
            rel.poisson_residual <= POISSON_TOLERANCE * a.chain.max_rate().max(f64::MIN_POSITIVE),
            format!("max residual {:e}", rel.poisson_residual),
            true,
        ));
        let dnorm = rel.delta.iter().fold(1.0f64, |m, d| m.max(d.abs()));
        checks.push(Check::new(
            &format!("{name} mean zero"),
            rel.stationary_mean_residual.abs() <= MEAN_ZERO_TOLERANCE * dnorm,
            format!("pi . delta = {:e}", rel.stationary_mean_residual),
            true,
        ));
        let drift = drift_residuals(&a.chain, &a.analysis, rel).iter().fold(0.0f64, |m, r| m.max(r.abs()));
        checks.push(Check::new(
            &format!("{name} relative-value drift"),
            drift <= POISSON_TOLERANCE * a.chain.max_rate().max(1.0),
            format!("max residual {drift:e}"),
            true,
        ));
        let min_out = a.chain.outflow_rates().iter().copied().fold(f64::INFINITY, f64::min);
        if a.chain.len() > 1 && min_out > 0.0 {
            let horizon = 50.0 / min_out;
            match transient_oracle_all(&a.chain, horizon, ORACLE_BUDGET) {
                Ok(oracle) => {
                    let err = oracle.iter().zip(&rel.delta).fold(0.0f64, |m, (o, d)| m.max((o - d).abs()));
                    checks.push(Check::new(
                        &format!("{name} transient oracle"),
                        err <= ORACLE_AGREEMENT,
                        format!("max |oracle - delta| = {err:e} at horizon {}", fmt_g(horizon)),
                        true,
                    ));
                }
                Err(e) => checks.push(Check::new(&format!("{name} transient oracle"), false, e.to_string(), true)),
            }
        }
    }
    let mut worst = 0.0f64;
    for ia in 0..system.arrival.chain.len() {
        for ic in 0..system.completion.chain.len() {
            for q in [0, 1, 2, 7] {
                let d = system.drift_self_check(SystemState::new(q, ia, ic));
                let scale = 1.0 + d.g_a.abs() + d.g_c.abs();
                worst = worst.max(d.discrepancy() / scale);
            }
        }
    }
    checks.push(Check::new(
        "drift closed form",
        worst <= DRIFT_TOLERANCE,
        format!("max relative discrepancy {worst:e}"),
        true,
    ));
    let b = system.bounds();
    checks.push(Check::new(
        "bounds ordered",
        b.lower <= b.upper,
        format!("[{}, {}]", fmt_g(b.lower), fmt_g(b.upper)),
        true,
    ));
    if let Some(params) = &scenario.two_level {
        match analyze_two_level(params) {
            Ok(t) => {
                let d = &system.arrival.relative.delta;
                let err = [
                    (t.delta_h - d[0]).abs(),
                    (t.delta_l - d[1]).abs(),
                    (t.e_delta_arrival - system.arrival.event_weighted_delta()).abs(),
                    (t.heavy_traffic_constant - b.heavy_traffic_constant).abs(),
                ]
                .into_iter()
                .fold(0.0, f64::max);
                checks.push(Check::new(
                    "two-level closed form",
                    err <= 1e-10,
                    format!("max deviation from generic pipeline {err:e}"),
                    true,
                ));
                let q = e_q_bounds(params, &t);
                checks.push(Check::new(
                    "two-level bounds ordered",
                    q.lower <= q.upper && q.upper <= b.upper + 1e-9 && q.lower >= b.lower - 1e-9,
                    format!("[{}, {}] within general [{}, {}]", fmt_g(q.lower), fmt_g(q.upper), fmt_g(b.lower), fmt_g(b.upper)),
                    true,
                ));
            }
            Err(e) => checks.push(Check::new("two-level closed form", false, e.to_string(), false)),
        }
    }
    checks
}
