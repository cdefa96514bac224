//! Synthetic daily index histories anchored on a market state.
//!
//! Used for the desk example and for tests; real runs read market data files.
//! Every series is simulated over business days and then shifted (or, for the
//! stock index, rescaled) so that the calibration date reproduces `market`.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use srmon_core::esg::MarketState;
use srmon_core::transitions::{FactorKind, FactorSet, Field, Frequency, HistoryRow, IndexHistory};
use srmon_core::{Error, Result};

/// Maturities published for rate factors.
pub const CURVE_MATURITIES: [u32; 9] = [1, 2, 3, 5, 7, 10, 15, 20, 30];

const DT: f64 = 1.0 / 252.0;

/// Annual volatilities and mean reversion of the simulated series.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub stock_vol: f64,
    pub rate_vol: f64,
    pub spread_vol: f64,
    pub mean_reversion: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { stock_vol: 0.22, rate_vol: 0.009, spread_vol: 0.006, mean_reversion: 0.3 }
    }
}

pub fn business_days(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    from.iter_days()
        .take_while(|d| *d <= to)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

pub fn synthetic_history(
    market: &MarketState,
    factors: &FactorSet,
    calibration_date: NaiveDate,
    from: NaiveDate,
    to: NaiveDate,
    params: &SynthParams,
    seed: u64,
) -> Result<IndexHistory> {
    let days = business_days(from, to);
    let anchor = days
        .iter()
        .position(|d| *d == calibration_date)
        .ok_or_else(|| Error::Config(format!("calibration date {calibration_date} is not a business day in range")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for def in factors.defs() {
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        // raw path: cumulative log-return for stocks, OU deviation otherwise
        let mut x = vec![0.0; days.len()];
        for i in 1..days.len() {
            x[i] = match def.kind {
                FactorKind::StockLevel => x[i - 1] - 0.5 * params.stock_vol.powi(2) * DT + params.stock_vol * DT.sqrt() * z(),
                FactorKind::RateLevel => x[i - 1] * (1.0 - params.mean_reversion * DT) + params.rate_vol * DT.sqrt() * z(),
                _ => x[i - 1] * (1.0 - params.mean_reversion * DT) + params.spread_vol * DT.sqrt() * z(),
            };
        }
        let x0 = x[anchor];
        for (d, xi) in days.iter().zip(&x) {
            let dx = xi - x0;
            match def.kind {
                FactorKind::StockLevel => {
                    rows.push(HistoryRow::new(*d, def.id.clone(), Field::Level, market.stock_level * dx.exp()));
                }
                FactorKind::RateLevel => {
                    for m in CURVE_MATURITIES {
                        let Some(p0) = market.zero_curve.get(m as usize - 1) else { continue };
                        let p = p0 * (-dx * f64::from(m)).exp();
                        rows.push(HistoryRow::new(*d, def.id.clone(), Field::Maturity(f64::from(m)), p));
                    }
                }
                FactorKind::SpreadSovereign => {
                    rows.push(HistoryRow::new(*d, def.id.clone(), Field::Level, (market.sovereign_spread + dx).max(1e-4)));
                }
                FactorKind::SpreadCorporate => {
                    rows.push(HistoryRow::new(*d, def.id.clone(), Field::Level, (market.corporate_spread + dx).max(1e-4)));
                }
                FactorKind::StockVol => {
                    rows.push(HistoryRow::new(*d, def.id.clone(), Field::Level, (market.stock_vol + 5.0 * dx).max(0.01)));
                }
                FactorKind::Illiquidity => {
                    rows.push(HistoryRow::new(*d, def.id.clone(), Field::Level, market.illiquidity_premium + 0.5 * dx));
                }
            }
        }
    }
    IndexHistory::from_rows(Frequency::Daily, &rows)
}
