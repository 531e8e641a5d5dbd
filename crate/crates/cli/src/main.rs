//! `uosl`: run scenarios, property suites and parameter sweeps.

mod overrides;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use overrides::{apply, parse_value, Override};
use rayon::prelude::*;
use uosl_core::analysis::MetricReport;
use uosl_core::simulator::{run_scenario, Scenario};
use uosl_core::verify::{run_verification, VerifyOptions};

#[derive(Parser)]
#[command(name = "uosl", version, about = "Quadrotor with an off-center slung load: simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a scenario entry, e.g. `params.offset[0]=-0.18`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    overrides: Vec<Override>,
    /// Seed for randomized property sampling.
    #[arg(long, default_value_t = VerifyOptions::default().seed)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory.csv and metrics.json.
    Simulate(Common),
    /// Run the model and controller property suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Reverse gravity in the plant (negative control for the suites).
        #[arg(long, hide = true)]
        corrupt_gravity: bool,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted key to vary, e.g. `params.thrust_limit`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Concurrent runs (defaults to the number of CPUs).
        #[arg(long)]
        workers: Option<usize>,
    },
}

enum Failure {
    /// Bad input: exit status 2.
    Config(String),
    /// A run or a property failed: exit status 1.
    Run(String),
}

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Config(format!("{}: {e}", path.display()))
    }
}

type Outcome = Result<(), Failure>;

fn base_document(common: &Common) -> Result<toml::Value, Failure> {
    let scenario = match &common.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            Scenario::from_toml_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => Scenario::default(),
    };
    toml::Value::try_from(&scenario).map_err(|e| Failure::Config(e.to_string()))
}

fn build(mut doc: toml::Value, overrides: &[Override]) -> Result<Scenario, Failure> {
    for ov in overrides {
        apply(&mut doc, ov).map_err(Failure::Config)?;
    }
    Scenario::from_toml_value(doc).map_err(|e| Failure::Config(format!("after overrides: {e}")))
}

fn out_dir(common: &Common) -> Result<PathBuf, Failure> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir, e))?;
    Ok(dir)
}

/// Runs a scenario and writes its outputs into `dir`. The trajectory and
/// metrics are written for failed runs too, up to the failure.
fn simulate_into(scenario: &Scenario, dir: &Path) -> Result<MetricReport, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let (log, failure) = match run_scenario(scenario) {
        Ok(log) => (log, None),
        Err(f) => (f.log, Some(f.error)),
    };
    let report = MetricReport::from_log(scenario, &log, failure.as_ref());
    let csv_path = dir.join("trajectory.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Failure::io(&csv_path, e))?;
    log.write_csv(std::io::BufWriter::new(file)).map_err(|e| Failure::io(&csv_path, e))?;
    let json_path = dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&json_path, json + "\n").map_err(|e| Failure::io(&json_path, e))?;
    Ok(report)
}

fn simulate(common: &Common) -> Outcome {
    let scenario = build(base_document(common)?, &common.overrides)?;
    let dir = out_dir(common)?;
    let report = simulate_into(&scenario, &dir)?;
    println!("{}: {} samples written to {}", scenario.name, report.samples, dir.display());
    match report.failure {
        Some(msg) => Err(Failure::Run(msg)),
        None => Ok(()),
    }
}

fn verify(common: &Common, corrupt_gravity: bool) -> Outcome {
    let scenario = build(base_document(common)?, &common.overrides)?;
    let opts = VerifyOptions { seed: common.seed, corrupt_gravity };
    let results = run_verification(&scenario.params, &scenario.gains, &opts);
    for r in &results {
        println!("{r}");
    }
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let path = dir.join("verify.json");
        let json = serde_json::to_string_pretty(&results).expect("results serialize");
        fs::write(&path, json + "\n").map_err(|e| Failure::io(&path, e))?;
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} properties, {failed} failed (seed {})", results.len(), common.seed);
    if failed > 0 {
        return Err(Failure::Run(format!("{failed} properties failed")));
    }
    Ok(())
}

struct SweepRow {
    value: String,
    outcome: Result<MetricReport, String>,
}

fn summary_header(reports: &[&MetricReport]) -> Vec<String> {
    let mut h: Vec<String> = ["value", "completed", "failure", "tension_mean", "max_swing_deg", "final_swing_deg"]
        .map(String::from)
        .into();
    h.extend(["rotor_saturation_rate", "thrust_saturation_rate"].map(String::from));
    if let Some(r) = reports.first() {
        for c in &r.channels {
            for m in ["rmse", "settling_time", "overshoot_pct"] {
                h.push(format!("{}_{m}", c.name));
            }
        }
    }
    h
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_row(row: &SweepRow, width: usize) -> Vec<String> {
    let mut out = vec![row.value.clone()];
    match &row.outcome {
        Ok(r) => {
            out.push(r.completed.to_string());
            out.push(r.failure.clone().unwrap_or_default());
            out.push(opt(r.tension_mean));
            for v in [r.max_swing_deg, r.final_swing_deg, r.rotor_saturation_rate, r.thrust_saturation_rate] {
                out.push(v.to_string());
            }
            for c in &r.channels {
                out.extend([opt(c.rmse), opt(c.settling_time), opt(c.overshoot_pct)]);
            }
        }
        Err(msg) => {
            out.push("false".into());
            out.push(msg.clone());
        }
    }
    out.resize(width, String::new());
    out
}

fn sweep(common: &Common, param: &str, values: &str, workers: Option<usize>) -> Outcome {
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Config("--values must list at least one value".into()));
    }
    let base = base_document(common)?;
    let scenarios = values
        .iter()
        .map(|v| {
            let mut ovs = common.overrides.clone();
            ovs.push(Override { key: param.into(), value: parse_value(v) });
            let mut s = build(base.clone(), &ovs)?;
            s.name = format!("{} [{param} = {v}]", s.name);
            Ok(s)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let dir = out_dir(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Config(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        scenarios
            .par_iter()
            .zip(values.par_iter())
            .enumerate()
            .map(|(i, (s, v))| {
                let sub = dir.join(format!("run_{i:03}"));
                let outcome = simulate_into(s, &sub).map_err(|f| match f {
                    Failure::Config(m) | Failure::Run(m) => m,
                });
                SweepRow { value: v.to_string(), outcome }
            })
            .collect()
    });
    let reports: Vec<&MetricReport> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let header = summary_header(&reports);
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::io(&path, e))?;
    w.write_record(&header).map_err(|e| Failure::io(&path, e))?;
    for row in &rows {
        w.write_record(summary_row(row, header.len())).map_err(|e| Failure::io(&path, e))?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !matches!(&r.outcome, Ok(rep) if rep.completed))
        .map(|r| r.value.as_str())
        .collect();
    println!("{} runs, summary in {}", rows.len(), path.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!("runs failed for {param} = {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(common) => simulate(common),
        Command::Verify { common, corrupt_gravity } => verify(common, *corrupt_gravity),
        Command::Sweep { common, param, values, workers } => sweep(common, param, values, *workers),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
