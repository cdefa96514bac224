//! `srmon` command implementations.

pub mod config;
pub mod pipeline;
pub mod synth;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use srmon_core::monitor::{CalibrationBundle, Store};
use srmon_core::transitions::IndexHistory;
use srmon_core::{Error, ErrorClass, Result};

use config::{Overrides, RunConfig};
use pipeline::{audit_header, ensure_dir, write_json, write_text, Context};

#[derive(Debug, Parser)]
#[command(name = "srmon", version, about = "Solvency ratio monitoring from NAV proxies")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Calibration bundle (JSON).
    #[arg(long, global = true)]
    pub bundle: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate central and shocked proxies, validate them and write a bundle.
    Calibrate,
    /// Re-run the out-of-sample validation of a bundle.
    Validate,
    /// Compare LSMC and CF proxies at equal budget.
    Compare,
    /// Evaluate every history date after the calibration date.
    Monitor {
        /// Market history CSV; defaults to the configured history.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Solvency snapshot for a hypothetical transition.
    Whatif {
        /// factor=value, repeatable; unset factors are zero.
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Serve the monitoring HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Store directory for ingested data and records.
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut c = RunConfig::load(path)?;
    c.apply(&Overrides { seed: cli.seed, out_dir: cli.out.clone() });
    Ok(c)
}

fn load_bundle(cli: &Cli) -> Result<CalibrationBundle> {
    let path = cli
        .bundle
        .as_ref()
        .ok_or_else(|| Error::Config("--bundle is required for this command".into()))?;
    CalibrationBundle::load(path)
}

fn read_history(path: &Path, config: &RunConfig) -> Result<IndexHistory> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    IndexHistory::read_csv(f, config.frequency)
}

/// Runs one command; the returned string is printed on stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Calibrate => {
            let cfg = load_config(cli)?;
            let out = ensure_dir(&cfg.out_dir())?;
            let ctx = Context::load(cfg)?;
            let res = pipeline::calibrate(&ctx)?;
            let r = &res.report;
            res.bundle.save(&out.join("bundle.json"))?;
            write_json(&out.join("calibration_report.json"), r)?;
            let header = audit_header(&r.config_hash, &r.bundle_version);
            let table = format!(
                "{header}\nRelative deviations, LSMC proxies vs full calculation (P = {})\n{}\nRelative deviations, CF proxies vs full calculation\n{}",
                r.validation.p_full,
                r.validation.render(srmon_core::proxy::ProxyMethod::Lsmc),
                r.validation.render(srmon_core::proxy::ProxyMethod::Cf)
            );
            write_text(&out.join("validation.txt"), &table)?;
            write_text(&out.join("validation.csv"), &format!("{header}{}", r.validation.to_csv()))?;
            Ok(format!("bundle {} written to {}\n{table}", r.bundle_version, out.display()))
        }
        Command::Validate => {
            let cfg = load_config(cli)?;
            let bundle = load_bundle(cli)?;
            let out = ensure_dir(&cfg.out_dir())?;
            let ctx = Context::load(cfg)?;
            let rep = pipeline::validate(&ctx, &bundle)?;
            write_json(&out.join("validation_check.json"), &rep)?;
            let worst = rep
                .rows
                .iter()
                .map(|r| format!("{}: max |deviation| {:.2}%", r.label, 100.0 * r.max_abs_deviation().unwrap_or(f64::NAN)))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(worst + "\n")
        }
        Command::Compare => {
            let cfg = load_config(cli)?;
            let out = ensure_dir(&cfg.out_dir())?;
            let ctx = Context::load(cfg)?;
            let rep = pipeline::compare(&ctx)?;
            write_json(&out.join("compare_report.json"), &rep)?;
            let text = format!("{}{}", audit_header(&rep.config_hash, "-"), rep.render());
            write_text(&out.join("compare.txt"), &text)?;
            Ok(text)
        }
        Command::Monitor { history } => {
            let cfg = load_config(cli)?;
            let bundle = load_bundle(cli)?;
            let out = ensure_dir(&cfg.out_dir())?;
            let h = match history {
                Some(p) => read_history(p, &cfg)?,
                None => cfg.load_history()?,
            };
            let res = pipeline::monitor(&cfg, &bundle, &h)?;
            let mut lines = String::new();
            for r in &res.records {
                lines.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
                lines.push('\n');
            }
            write_text(&out.join("records.jsonl"), &lines)?;
            let mut csv = audit_header(&res.summary.config_hash, &res.summary.bundle_version);
            csv.push_str("date,sr,smoothed_sr,validity\n");
            for r in &res.records {
                let f = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    r.date,
                    f(r.snapshot.sr),
                    f(r.smoothed_sr),
                    serde_json::to_value(r.validity).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
                ));
            }
            write_text(&out.join("smoothed_sr.csv"), &csv)?;
            write_json(&out.join("monitor_summary.json"), &res.summary)?;
            write_json(&out.join("diagram.json"), &res.summary.diagram)?;
            Ok(format!(
                "{} records, {} out of space, {} skipped\n",
                res.summary.records,
                res.summary.out_of_space_dates.len(),
                res.summary.skipped.len()
            ))
        }
        Command::Whatif { set } => {
            let bundle = load_bundle(cli)?;
            let eps = pipeline::parse_assignments(&bundle, set)?;
            let e = pipeline::run_whatif(&bundle, &eps)?;
            let doc = serde_json::json!({ "bundle_version": bundle.version_id, "evaluation": e });
            Ok(serde_json::to_string_pretty(&doc).map_err(|e| Error::Data(e.to_string()))? + "\n")
        }
        Command::Serve { addr, store } => {
            let bundle = load_bundle(cli)?;
            let (frequency, window) = match &cli.config {
                Some(_) => {
                    let c = load_config(cli)?;
                    (c.frequency, c.smoothing_window)
                }
                None => (Default::default(), srmon_core::monitor::DEFAULT_SMOOTHING_WINDOW),
            };
            let store = match store {
                Some(dir) => Store::open(dir, frequency, &bundle.version_id)?,
                None => Store::in_memory(IndexHistory::new(frequency), &bundle.version_id),
            };
            let state = srmon_server::AppState::new(bundle, store, window)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(async move {
                let listener = srmon_server::bind(*addr).await?;
                log::info!("listening on {}", listener.local_addr().map_err(|e| Error::io("listener", e))?);
                srmon_server::serve(listener, state, srmon_server::shutdown_signal()).await
            })?;
            Ok(String::new())
        }
    }
}
