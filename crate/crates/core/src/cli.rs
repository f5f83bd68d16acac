//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 domain error
//! (instability, reducibility, invalid chain), 3 numerical error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::report::{
    analyze_scenario, fmt_g, format_sim_report, run_sweep, validate_scenario, write_csv, SweepRow, Verdict,
};
use crate::simulator::{simulate, SimConfig};
use crate::spec::{preset, SystemSpec, PRESETS};

#[derive(Debug, Parser)]
#[command(name = "mams", version, about = "Queues with Markov-modulated arrivals and service")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Relative values, bounds on E[Q] and the heavy-traffic constant.
    Analyze {
        #[command(flatten)]
        source: SourceArgs,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Simulate the queue and compare E[Q] with the bounds.
    Simulate {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Also write the result as a one-row CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate bounds (and by default simulate) over a parameter sweep.
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Dotted path of the swept number; overrides the spec's sweep block.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        /// Skip simulation; the sim columns are left empty.
        #[arg(long)]
        no_sim: bool,
        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the analytic invariant suite on a spec.
    Validate {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Spec file (JSON).
    #[arg(required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// Built-in spec instead of a file: fig3, fig4, fig5 (fig5_a, fig5_b, fig5_c), fig6, fig6_b, mm1.
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
}

impl SourceArgs {
    fn load(&self) -> Result<SystemSpec> {
        match (&self.spec, &self.preset) {
            (_, Some(name)) => preset(name),
            (Some(path), None) => SystemSpec::load(path),
            (None, None) => Err(Error::Parse("no spec given".into())),
        }
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Approximate number of events to simulate.
    #[arg(long)]
    events: Option<u64>,
    /// Fraction of the horizon discarded as warmup.
    #[arg(long)]
    warmup: Option<f64>,
    /// Number of batches for the confidence intervals.
    #[arg(long)]
    batches: Option<usize>,
}

impl SimArgs {
    fn apply(&self, mut cfg: SimConfig) -> SimConfig {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.events {
            cfg.num_events = v;
        }
        if let Some(v) = self.warmup {
            cfg.warmup_fraction = v;
        }
        if let Some(v) = self.batches {
            cfg.num_batches = v;
        }
        cfg
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    match command {
        Command::Analyze { source, json } => {
            let spec = source.load()?;
            let (_, report) = analyze_scenario(&spec.resolve()?, spec.name.clone())?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
            } else {
                writeln!(out, "{report}")?;
            }
            Ok(0)
        }
        Command::Simulate { source, sim, out: csv_path } => {
            let spec = source.load()?;
            let scenario = spec.resolve()?;
            let cfg = sim.apply(scenario.sim);
            let (system, report) = analyze_scenario(&scenario, spec.name.clone())?;
            let sim_report = simulate(&system, &cfg)?;
            writeln!(
                out,
                "lambda = {}, mu = {}, rho = {}",
                fmt_g(report.lambda),
                fmt_g(report.mu),
                fmt_g(report.rho)
            )?;
            writeln!(out, "bounds: [{}, {}]", fmt_g(report.lower), fmt_g(report.upper))?;
            write!(out, "{}", format_sim_report(&sim_report, &report.arrival.states))?;
            let verdict = Verdict::classify(&sim_report.e_q, report.lower, report.upper);
            writeln!(out, "verdict: {verdict} [{}, {}]", fmt_g(report.lower), fmt_g(report.upper))?;
            if let Some(path) = csv_path {
                let row = SweepRow {
                    param: report.rho,
                    lambda: Some(report.lambda),
                    mu: Some(report.mu),
                    rho: Some(report.rho),
                    lower: Some(report.lower),
                    upper_fast: report.upper_fast(),
                    upper_slow: report.upper_slow(),
                    upper: Some(report.upper),
                    heavy_traffic_const: Some(report.heavy_traffic_constant),
                    sim: Some(sim_report),
                    error: None,
                };
                std::fs::write(&path, write_csv(&[row]))?;
            }
            Ok(0)
        }
        Command::Sweep { source, sim, param, values, no_sim, out: csv_path } => {
            let spec = source.load()?;
            let (parameter, values) = match (param, values, &spec.sweep) {
                (Some(p), Some(v), _) => (p, v),
                (p, v, Some(s)) => (p.unwrap_or_else(|| s.parameter.clone()), v.unwrap_or_else(|| s.values.clone())),
                (_, _, None) => {
                    return Err(Error::Parse(
                        "spec has no sweep block; pass both --param and --values".into(),
                    ))
                }
            };
            if values.is_empty() {
                return Err(Error::Parse("sweep has no values".into()));
            }
            let cfg = sim.apply(spec.sim_config());
            if !no_sim {
                cfg.validate()?;
            }
            let rows = run_sweep(&spec, &parameter, &values, (!no_sim).then_some(&cfg));
            let csv = write_csv(&rows);
            match csv_path {
                Some(path) => {
                    std::fs::write(&path, &csv)?;
                    writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
                }
                None => write!(out, "{csv}")?,
            }
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                writeln!(err, "warning: {failed} of {} sweep points failed (see error column)", rows.len())?;
            }
            Ok(0)
        }
        Command::Validate { source } => {
            let spec = source.load()?;
            let checks = validate_scenario(&spec.resolve()?);
            for c in &checks {
                writeln!(out, "{c}")?;
            }
            let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
            writeln!(out, "{} checks, {} failed", checks.len(), failed.len())?;
            Ok(match failed.iter().any(|c| !c.numerical) {
                true => 2,
                false if failed.is_empty() => 0,
                false => 3,
            })
        }
        Command::Presets => {
            for (name, text) in PRESETS {
                let description = SystemSpec::parse(text).ok().and_then(|s| s.description).unwrap_or_default();
                writeln!(out, "{name:<8} {description}")?;
            }
            Ok(0)
        }
    }
}
