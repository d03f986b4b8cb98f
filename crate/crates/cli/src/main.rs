use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use mhdc::config::{FamilyName, RunConfig};
use mhdc::run::{self, RunDir, RunReport};
use mhdc::verify::DecayQuantity;

/// Decay exponents must land within this distance of the predicted rate.
const DECAY_SLACK: f64 = 0.15;

#[derive(Parser)]
#[command(name = "mhdc", version, about = "Comparison-principle checks for viscous MHD in strip domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and record H^N and energy.
    Simulate(Opts),
    /// Build the comparison functions rho1 at every sample time.
    Construct(Opts),
    /// Run every check along the trajectory.
    Verify(Opts),
    /// Verify and fit the decay exponents.
    Decay(Opts),
    /// Measure C0, C1, C_F and the smallness thresholds.
    EstimateConstants(Opts),
    /// Summarize an existing run directory.
    Report {
        /// Run directory written by another subcommand.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Opts {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<command>-<config hash>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    box_length: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "order-N")]
    order: Option<u32>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_parser = parse_family)]
    family: Option<FamilyName>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    big_r: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    auto_small: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution_check: bool,
}

fn parse_family(s: &str) -> Result<FamilyName, String> {
    match s {
        "gaussian_bump" => Ok(FamilyName::GaussianBump),
        "cl_power" => Ok(FamilyName::ClPower),
        "hxy_log" => Ok(FamilyName::HxyLog),
        "alfven_linear" => Ok(FamilyName::AlfvenLinear),
        _ => Err(format!("unknown family {s:?}: expected gaussian_bump, cl_power, hxy_log or alfven_linear")),
    }
}

impl Opts {
    fn config(&self) -> mhdc::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(d, k, n, box_length, mu, order, dt, t_end, family, delta, big_r, amplitude, auto_small, seed);
        cfg.resolution_check |= self.resolution_check;
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, command: &str, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(format!("{command}-{}", cfg.hash())))
    }
}

struct Outcome {
    passed: bool,
    failures: Vec<String>,
    summary: Value,
}

fn json_text<T: serde::Serialize>(v: &T) -> mhdc::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn simulate(opts: &Opts) -> mhdc::Result<Outcome> {
    let cfg = opts.config()?;
    let out = opts.out_dir("simulate", &cfg);
    let (report, state) = run::simulate(&cfg)?;
    let mut failures = Vec::new();
    if let Some(e) = report.alfven_error.filter(|_| !report.passed) {
        failures.push(format!("Alfvén exactness: relative L2 error {e:e}"));
    }
    let mut dir = RunDir::create(&out)?;
    dir.write_text("config.toml", &cfg.to_toml())?;
    dir.write_text("simulation.json", &json_text(&report)?)?;
    dir.write_array("state.mhdc", &run::state_container(&state)?)?;
    dir.finish("simulate", &report.config_hash, None, report.passed, &failures)?;
    Ok(Outcome {
        passed: report.passed,
        failures,
        summary: json!({
            "out": out,
            "t_end": report.times.last(),
            "hn_final": report.hn.last(),
            "alfven_error": report.alfven_error,
        }),
    })
}

fn construct(opts: &Opts) -> mhdc::Result<Outcome> {
    let cfg = opts.config()?;
    let out = opts.out_dir("construct", &cfg);
    let (constants, times, rho1) = run::construct(&cfg)?;
    let mut dir = RunDir::create(&out)?;
    dir.write_text("config.toml", &cfg.to_toml())?;
    dir.write_text("ledger.json", &constants.ledger.to_json()?)?;
    dir.write_text("constants.json", &json_text(&constants)?)?;
    dir.write_text("times.json", &json_text(&times)?)?;
    dir.write_array("rho1.mhdc", &rho1)?;
    dir.finish("construct", &cfg.hash(), Some(&constants.ledger), true, &[])?;
    Ok(Outcome {
        passed: true,
        failures: Vec::new(),
        summary: json!({ "out": out, "times": times.len(), "c0": constants.ledger.c0.value }),
    })
}

fn verify_summary(out: &Path, report: &RunReport) -> Value {
    json!({
        "out": out,
        "small": report.small,
        "rescale": report.rescale,
        "records": report.records.len(),
        "hn_sup_ratio": report.hn_sup_ratio,
        "hn_bound": report.hn_bound,
    })
}

fn verify(opts: &Opts) -> mhdc::Result<Outcome> {
    let cfg = opts.config()?;
    let out = opts.out_dir("verify", &cfg);
    let (report, state) = run::run_verify_full(&cfg)?;
    run::write_run(&out, "verify", &report, &state)?;
    Ok(Outcome {
        passed: report.passed,
        failures: report.failures.clone(),
        summary: verify_summary(&out, &report),
    })
}

fn decay(opts: &Opts) -> mhdc::Result<Outcome> {
    let cfg = opts.config()?;
    let out = opts.out_dir("decay", &cfg);
    let (mut report, state) = run::run_verify_full(&cfg)?;
    let mut fits = Vec::new();
    for d in &report.decay {
        let label = match d.quantity {
            DecayQuantity::W1inf => "W1inf",
            DecayQuantity::Hn => "HN",
        };
        match &d.fit {
            Some(f) => {
                if (f.alpha - f.target).abs() > DECAY_SLACK {
                    report
                        .failures
                        .push(format!("{label} decay exponent {:.3} off target {}", f.alpha, f.target));
                }
                fits.push(json!({ "quantity": label, "alpha": f.alpha, "target": f.target, "window": [f.t_lo, f.t_hi] }));
            }
            None => report.failures.push(format!(
                "{label} decay fit: {}",
                d.error.as_deref().unwrap_or("unavailable")
            )),
        }
    }
    report.passed = report.failures.is_empty();
    run::write_run(&out, "decay", &report, &state)?;
    let mut summary = verify_summary(&out, &report);
    summary["decay"] = Value::Array(fits);
    Ok(Outcome {
        passed: report.passed,
        failures: report.failures,
        summary,
    })
}

fn estimate_constants(opts: &Opts) -> mhdc::Result<Outcome> {
    let cfg = opts.config()?;
    let out = opts.out_dir("estimate-constants", &cfg);
    let domain = cfg.domain()?;
    let state0 = mhdc::data::generate(&domain, &cfg.data_spec(), cfg.mu, cfg.order)?;
    let constants = run::measure_constants(&domain, Some(&state0), cfg.order, cfg.norm, cfg.mu)?;
    let mut failures = Vec::new();
    let resolution = if cfg.resolution_check {
        let r = run::resolution_check(&cfg)?;
        if !r.stable {
            failures.push(format!("resolution check: constants not stable across n = {:?}", r.n));
        }
        Some(r)
    } else {
        None
    };
    let mut dir = RunDir::create(&out)?;
    dir.write_text("config.toml", &cfg.to_toml())?;
    dir.write_text("ledger.json", &constants.ledger.to_json()?)?;
    dir.write_text("constants.json", &json_text(&constants)?)?;
    if let Some(r) = &resolution {
        dir.write_text("resolution.json", &json_text(r)?)?;
    }
    let passed = failures.is_empty();
    dir.finish("estimate-constants", &cfg.hash(), Some(&constants.ledger), passed, &failures)?;
    Ok(Outcome {
        passed,
        failures,
        summary: json!({ "out": out, "ledger": constants.ledger }),
    })
}

fn report(out: &Path) -> mhdc::Result<Outcome> {
    let manifest: run::Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json"))?)?;
    let mut summary = json!({
        "out": out,
        "command": manifest.command,
        "config_hash": manifest.config_hash,
        "version": manifest.version,
        "wall_time_s": manifest.wall_time_s,
        "files": manifest.files,
    });
    let report_path = out.join("report.json");
    if report_path.exists() {
        let r = RunReport::from_json(&std::fs::read_to_string(report_path)?)?;
        let worst = r
            .records
            .iter()
            .filter_map(|x| Some(x.excess_comparison? / x.comparison_tol?.max(f64::MIN_POSITIVE)))
            .fold(f64::NEG_INFINITY, f64::max);
        summary["small"] = json!(r.small);
        summary["samples"] = json!(r.records.len());
        summary["worst_comparison_excess_over_tol"] = json!(worst.is_finite().then_some(worst));
        summary["hn_sup_ratio"] = json!(r.hn_sup_ratio);
        summary["decay"] = json!(r
            .decay
            .iter()
            .map(|d| json!({ "quantity": d.quantity, "alpha": d.fit.as_ref().map(|f| f.alpha) }))
            .collect::<Vec<_>>());
    }
    Ok(Outcome {
        passed: manifest.passed,
        failures: manifest.failures,
        summary,
    })
}

fn init_threads() {
    let Ok(v) = std::env::var("MHDC_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("MHDC_THREADS ignored: {e}");
            }
        }
        _ => log::warn!("MHDC_THREADS={v:?} is not a positive integer"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Simulate(o) => ("simulate", simulate(o)),
        Command::Construct(o) => ("construct", construct(o)),
        Command::Verify(o) => ("verify", verify(o)),
        Command::Decay(o) => ("decay", decay(o)),
        Command::EstimateConstants(o) => ("estimate-constants", estimate_constants(o)),
        Command::Report { out } => ("report", report(out)),
    };
    let (code, body) = match result {
        Ok(o) => {
            let mut body = o.summary;
            body["passed"] = json!(o.passed);
            body["failures"] = json!(o.failures);
            (if o.passed { 0 } else { 1 }, body)
        }
        Err(e) => (2, json!({ "passed": false, "failures": [format!("error: {e}")] })),
    };
    let mut body = body;
    body["command"] = json!(name);
    println!("{}", serde_json::to_string_pretty(&body).expect("json value serializes"));
    ExitCode::from(code)
}
