//! Writes a synthetic daily history for a run configuration.
//!
//! cargo run -p srmon-cli --example synth_history -- desk/config.toml 2008-01-02 2013-12-31 > desk/history.csv

use std::path::Path;

use chrono::NaiveDate;
use srmon_cli::config::RunConfig;
use srmon_cli::synth::{synthetic_history, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [config, from, to] = args.as_slice() else {
        return Err("usage: synth_history <config.toml> <from> <to>".into());
    };
    let cfg = RunConfig::load(Path::new(config))?;
    let market = cfg.load_market()?;
    let from: NaiveDate = from.parse()?;
    let to: NaiveDate = to.parse()?;
    let params = SynthParams { stock_vol: market.stock_vol, rate_vol: market.rate_vol, ..SynthParams::default() };
    let h = synthetic_history(&market, &cfg.factor_set()?, cfg.calibration_date, from, to, &params, cfg.seed)?;
    h.write_csv(std::io::stdout().lock())?;
    Ok(())
}
