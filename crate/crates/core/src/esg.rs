//! Risk-neutral economic scenario generation.
//!
//! Short rate: one-factor Hull-White, r(t) = x(t) + phi(t) with
//! dx = -a x dt + sigma dW_r, phi fitted so that E[delta_t] reproduces the
//! initial zero-coupon curve. Stock: lognormal with drift r and a Brownian
//! driver correlated with W_r. Both are simulated exactly on an annual grid,
//! so the deflated stock is a martingale up to Monte Carlo error only.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_range, ExecMode};
use crate::stats::{mean, standard_error};
use crate::transitions::{FactorKind, FactorSet, RiskFactorVector};

/// Market levels at the valuation instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub stock_level: f64,
    /// Risk-free zero-coupon prices for maturities 1..=M years.
    pub zero_curve: Vec<f64>,
    pub sovereign_spread: f64,
    pub corporate_spread: f64,
    pub stock_vol: f64,
    pub rate_vol: f64,
    pub mean_reversion: f64,
    pub equity_rate_correlation: f64,
    /// Liability illiquidity premium, added to the projection curve.
    #[serde(default)]
    pub illiquidity_premium: f64,
}

impl MarketState {
    pub fn validate(&self) -> Result<()> {
        if !(self.stock_level > 0.0) || !self.stock_level.is_finite() {
            return Err(Error::Domain(format!("stock level must be positive, got {}", self.stock_level)));
        }
        if self.zero_curve.is_empty() || self.zero_curve.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::Domain("zero curve needs at least one positive price".into()));
        }
        if self.sovereign_spread < 0.0 || self.corporate_spread < 0.0 {
            return Err(Error::Domain("credit spreads must be non-negative".into()));
        }
        if !(self.stock_vol >= 0.0) || !(self.rate_vol >= 0.0) {
            return Err(Error::Domain("volatilities must be non-negative".into()));
        }
        if !(self.mean_reversion > 0.0) {
            return Err(Error::Domain(format!("mean reversion must be positive, got {}", self.mean_reversion)));
        }
        if !(self.equity_rate_correlation.abs() <= 1.0) {
            return Err(Error::Domain("equity/rate correlation must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    /// Curve used for projection and deflation: risk-free plus illiquidity premium.
    pub fn projection_curve(&self) -> Vec<f64> {
        self.zero_curve
            .iter()
            .enumerate()
            .map(|(i, p)| p * (-self.illiquidity_premium * (i + 1) as f64).exp())
            .collect()
    }

    pub fn spread(&self, kind: IssuerKind) -> f64 {
        match kind {
            IssuerKind::Sovereign => self.sovereign_spread,
            IssuerKind::Corporate => self.corporate_spread,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuerKind {
    Sovereign,
    Corporate,
}

/// Instant shock 0 -> 0+ induced by a transition.
pub fn apply_transition(base: &MarketState, factors: &FactorSet, eps: &RiskFactorVector) -> Result<MarketState> {
    eps.check_len(factors.len())?;
    let mut s = base.clone();
    for (def, &e) in factors.defs().iter().zip(eps.values()) {
        match def.kind {
            FactorKind::StockLevel => s.stock_level *= e.exp(),
            FactorKind::RateLevel => {
                for (i, p) in s.zero_curve.iter_mut().enumerate() {
                    *p *= (-e * (i + 1) as f64).exp();
                }
            }
            FactorKind::SpreadSovereign => s.sovereign_spread = (s.sovereign_spread + e).max(0.0),
            FactorKind::SpreadCorporate => s.corporate_spread = (s.corporate_spread + e).max(0.0),
            FactorKind::StockVol => {
                s.stock_vol += e;
                if !(s.stock_vol > 0.0) {
                    return Err(Error::Domain(format!("transition leaves stock volatility at {}", s.stock_vol)));
                }
            }
            FactorKind::Illiquidity => s.illiquidity_premium += e,
        }
    }
    if !(s.stock_level > 0.0) || !s.stock_level.is_finite() {
        return Err(Error::Domain(format!("transition leaves stock level at {}", s.stock_level)));
    }
    Ok(s)
}

/// Hull-White model fitted to an initial curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    curve: Vec<f64>,
    a: f64,
    sigma: f64,
}

impl RateModel {
    pub fn new(curve: Vec<f64>, mean_reversion: f64, rate_vol: f64) -> Result<Self> {
        if curve.is_empty() || curve.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Domain("rate model needs a non-empty positive curve".into()));
        }
        if !(mean_reversion > 0.0) || !(rate_vol >= 0.0) {
            return Err(Error::Domain("rate model needs a > 0 and sigma >= 0".into()));
        }
        Ok(RateModel { curve, a: mean_reversion, sigma: rate_vol })
    }

    pub fn mean_reversion(&self) -> f64 {
        self.a
    }

    pub fn vol(&self) -> f64 {
        self.sigma
    }

    /// Initial zero-coupon price P(0, t): log-linear between annual points,
    /// flat forward beyond the last maturity.
    pub fn initial_price(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let m = self.curve.len();
        let ln_at = |k: usize| if k == 0 { 0.0 } else { self.curve[k - 1].ln() };
        if t >= m as f64 {
            let last_fwd = ln_at(m) - ln_at(m - 1);
            return (ln_at(m) + last_fwd * (t - m as f64)).exp();
        }
        let k = t.floor() as usize;
        let w = t - k as f64;
        if w == 0.0 {
            return self.curve[k - 1];
        }
        ((1.0 - w) * ln_at(k) + w * ln_at(k + 1)).exp()
    }

    fn b(&self, tau: f64) -> f64 {
        (1.0 - (-self.a * tau).exp()) / self.a
    }

    /// Variance of the integral of x over an interval of length tau starting at x = 0.
    fn v(&self, tau: f64) -> f64 {
        let a = self.a;
        self.sigma * self.sigma / (a * a)
            * (tau + 2.0 / a * (-a * tau).exp() - 1.0 / (2.0 * a) * (-2.0 * a * tau).exp() - 1.5 / a)
    }

    /// Zero-coupon price at time t for maturity T >= t given the state x_t.
    pub fn zcb(&self, t: f64, maturity: f64, x: f64) -> f64 {
        if maturity <= t {
            return 1.0;
        }
        let p0t = self.initial_price(t);
        let p0m = self.initial_price(maturity);
        let adj = 0.5 * (self.v(maturity - t) - self.v(maturity) + self.v(t));
        p0m / p0t * (adj - self.b(maturity - t) * x).exp()
    }

    /// Continuously compounded zero yield at t for tenor `tenor`.
    pub fn zero_yield(&self, t: f64, tenor: f64, x: f64) -> f64 {
        -self.zcb(t, t + tenor, x).ln() / tenor
    }

    /// Lower-triangular Cholesky factor of the covariance of
    /// (x increment, integral of x, W_r increment) over one year.
    fn step_cholesky(&self) -> [[f64; 3]; 3] {
        let (a, s) = (self.a, self.sigma);
        let b = self.b(1.0);
        let e2 = (1.0 - (-2.0 * a).exp()) / (2.0 * a);
        let vxx = s * s * e2;
        let vii = s * s / (a * a) * (1.0 - 2.0 * b + e2);
        let vxi = s * s / (2.0 * a * a) * (1.0 - (-a).exp()).powi(2);
        let vxw = s * b;
        let viw = s / a * (1.0 - b);
        let cov = [[vxx, vxi, vxw], [vxi, vii, viw], [vxw, viw, 1.0]];
        let mut l = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut sum = cov[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    l[i][i] = if sum > 0.0 { sum.sqrt() } else { 0.0 };
                } else {
                    l[i][j] = if l[j][j] > 0.0 { sum / l[j][j] } else { 0.0 };
                }
            }
        }
        l
    }
}

/// One risk-neutral path over years 1..=H.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    pub initial_stock: f64,
    /// delta_t, t = 1..=H.
    pub discount: Vec<f64>,
    /// delta_t * S_t / S_0, t = 1..=H.
    pub deflated_stock: Vec<f64>,
    /// Hull-White state x_t, t = 1..=H.
    pub rate_state: Vec<f64>,
    pub sovereign_spread: f64,
    pub corporate_spread: f64,
    pub illiquidity_premium: f64,
    pub rates: Arc<RateModel>,
}

impl ScenarioPath {
    pub fn horizon(&self) -> usize {
        self.discount.len()
    }

    /// delta_t for t = 0..=H.
    pub fn discount_at(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.discount[t - 1]
        }
    }

    /// Stock level S_t for t = 0..=H.
    pub fn stock_at(&self, t: usize) -> f64 {
        if t == 0 {
            self.initial_stock
        } else {
            self.initial_stock * self.deflated_stock[t - 1] / self.discount[t - 1]
        }
    }

    /// Gross stock return S_t / S_{t-1}, t = 1..=H.
    pub fn stock_return(&self, t: usize) -> f64 {
        self.stock_at(t) / self.stock_at(t - 1)
    }

    /// Money-market accrual over (t-1, t]: ln(delta_{t-1} / delta_t).
    pub fn short_rate(&self, t: usize) -> f64 {
        (self.discount_at(t - 1) / self.discount_at(t)).ln()
    }

    pub fn state_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.rate_state[t - 1]
        }
    }

    /// Zero-coupon price P(t, T) on this path (projection curve).
    pub fn zcb(&self, t: usize, maturity: f64) -> f64 {
        self.rates.zcb(t as f64, maturity, self.state_at(t))
    }

    /// Risk-free zero-coupon price at t, i.e. the projection price with the
    /// illiquidity premium stripped out.
    pub fn market_zcb(&self, t: usize, maturity: f64) -> f64 {
        self.zcb(t, maturity) * (self.illiquidity_premium * (maturity - t as f64)).exp()
    }

    /// Risk-free zero yield at t for the given tenor.
    pub fn market_yield(&self, t: usize, tenor: f64) -> f64 {
        -self.market_zcb(t, t as f64 + tenor).ln() / tenor
    }
}

fn rng_for(seed: u64, block: usize, p: usize, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((block * p + path) as u64);
    rng
}

/// Simulates path `path` of block `block` from `state`. The RNG stream depends
/// only on (seed, block, path), so blocks are reproducible independently.
pub fn simulate_path(state: &MarketState, rates: &Arc<RateModel>, h: usize, seed: u64, block: usize, p: usize, path: usize) -> ScenarioPath {
    let mut rng = rng_for(seed, block, p, path);
    let l = rates.step_cholesky();
    let a = rates.a;
    let decay = (-a).exp();
    let b1 = rates.b(1.0);
    let (sv, rho) = (state.stock_vol, state.equity_rate_correlation);
    let orth = (1.0 - rho * rho).max(0.0).sqrt();

    let mut discount = Vec::with_capacity(h);
    let mut deflated = Vec::with_capacity(h);
    let mut states = Vec::with_capacity(h);
    let (mut x, mut int_x, mut log_m) = (0.0_f64, 0.0_f64, 0.0_f64);
    for t in 1..=h {
        let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let ex = l[0][0] * z[0];
        let ei = l[1][0] * z[0] + l[1][1] * z[1];
        let dw = l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2];
        // with sigma = 0 the factor's third row degenerates to (0, 0, 1)
        let dw_r = if rates.sigma > 0.0 { dw } else { z[2] };
        int_x += x * b1 + ei;
        x = x * decay + ex;
        let dw_s = rho * dw_r + orth * z[3];
        log_m += -0.5 * sv * sv + sv * dw_s;
        let tf = t as f64;
        discount.push(rates.initial_price(tf) * (-0.5 * rates.v(tf) - int_x).exp());
        deflated.push(log_m.exp());
        states.push(x);
    }
    ScenarioPath {
        initial_stock: state.stock_level,
        discount,
        deflated_stock: deflated,
        rate_state: states,
        sovereign_spread: state.sovereign_spread,
        corporate_spread: state.corporate_spread,
        illiquidity_premium: state.illiquidity_premium,
        rates: Arc::clone(rates),
    }
}

/// P paths from one market state.
pub fn simulate_block(state: &MarketState, p: usize, h: usize, seed: u64, block: usize, mode: ExecMode) -> Result<Vec<ScenarioPath>> {
    state.validate()?;
    if p == 0 || h == 0 {
        return Err(Error::Config("scenario generation needs p >= 1 and h >= 1".into()));
    }
    let rates = Arc::new(RateModel::new(state.projection_curve(), state.mean_reversion, state.rate_vol)?);
    Ok(map_range(p, mode, |path| simulate_path(state, &rates, h, seed, block, p, path)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBlock {
    pub state: MarketState,
    pub paths: Vec<ScenarioPath>,
}

/// N blocks of P paths, block n starting from the n-th transitioned state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    pub n: usize,
    pub p: usize,
    pub h: usize,
    pub seed: u64,
    pub blocks: Vec<ScenarioBlock>,
}

pub fn generate_table(
    base: &MarketState,
    factors: &FactorSet,
    transitions: &[RiskFactorVector],
    p: usize,
    h: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<ScenarioTable> {
    let states = transitions
        .iter()
        .map(|e| apply_transition(base, factors, e))
        .collect::<Result<Vec<_>>>()?;
    let blocks = states
        .into_iter()
        .enumerate()
        .map(|(n, state)| {
            let paths = simulate_block(&state, p, h, seed, n, mode)?;
            Ok(ScenarioBlock { state, paths })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioTable { n: transitions.len(), p, h, seed, blocks })
}

const TABLE_COLUMNS: &str = "block,path,t,stock,deflated_stock,discount,short_rate,rate_state,sovereign_spread,corporate_spread";

impl ScenarioTable {
    /// Columnar CSV with a `#` metadata header. Values use shortest
    /// round-trip formatting so a replay reads back identical numbers.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("scenario table", e);
        writeln!(w, "# n={} p={} h={} seed={}", self.n, self.p, self.h, self.seed).map_err(io)?;
        for (b, block) in self.blocks.iter().enumerate() {
            let s = &block.state;
            let curve: Vec<String> = s.zero_curve.iter().map(|p| p.to_string()).collect();
            writeln!(
                w,
                "# block={b} stock_level={} stock_vol={} rate_vol={} mean_reversion={} correlation={} illiquidity_premium={} sovereign_spread={} corporate_spread={} curve={}",
                s.stock_level,
                s.stock_vol,
                s.rate_vol,
                s.mean_reversion,
                s.equity_rate_correlation,
                s.illiquidity_premium,
                s.sovereign_spread,
                s.corporate_spread,
                curve.join(";")
            )
            .map_err(io)?;
        }
        writeln!(w, "{TABLE_COLUMNS}").map_err(io)?;
        for (b, block) in self.blocks.iter().enumerate() {
            for (p, path) in block.paths.iter().enumerate() {
                for t in 1..=path.horizon() {
                    writeln!(
                        w,
                        "{b},{p},{t},{},{},{},{},{},{},{}",
                        path.stock_at(t),
                        path.deflated_stock[t - 1],
                        path.discount[t - 1],
                        path.short_rate(t),
                        path.rate_state[t - 1],
                        path.sovereign_spread,
                        path.corporate_spread
                    )
                    .map_err(io)?;
                }
            }
        }
        Ok(())
    }

    /// Reads a table written by [`ScenarioTable::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<ScenarioTable> {
        let mut meta = std::collections::HashMap::new();
        let mut states: Vec<MarketState> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let bad = |msg: String| Error::Data(format!("scenario table: {msg}"));
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("scenario table", e))?;
            if let Some(rest) = line.strip_prefix("# ") {
                let kv: std::collections::HashMap<&str, &str> = rest.split(' ').filter_map(|p| p.split_once('=')).collect();
                if kv.contains_key("block") {
                    let num = |k: &str| -> Result<f64> {
                        kv.get(k).ok_or_else(|| bad(format!("missing {k}")))?.parse().map_err(|_| bad(format!("bad {k}")))
                    };
                    let curve = kv
                        .get("curve")
                        .ok_or_else(|| bad("missing curve".into()))?
                        .split(';')
                        .map(|v| v.parse::<f64>().map_err(|_| bad("bad curve".into())))
                        .collect::<Result<Vec<_>>>()?;
                    states.push(MarketState {
                        stock_level: num("stock_level")?,
                        zero_curve: curve,
                        sovereign_spread: num("sovereign_spread")?,
                        corporate_spread: num("corporate_spread")?,
                        stock_vol: num("stock_vol")?,
                        rate_vol: num("rate_vol")?,
                        mean_reversion: num("mean_reversion")?,
                        equity_rate_correlation: num("correlation")?,
                        illiquidity_premium: num("illiquidity_premium")?,
                    });
                } else {
                    for (k, v) in kv {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            if line == TABLE_COLUMNS || line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value in {line:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 10 {
                return Err(bad(format!("expected 10 columns in {line:?}")));
            }
            rows.push(vals);
        }
        let get = |k: &str| -> Result<usize> {
            meta.get(k).ok_or_else(|| bad(format!("missing {k}")))?.parse().map_err(|_| bad(format!("bad {k}")))
        };
        let (n, p, h) = (get("n")?, get("p")?, get("h")?);
        let seed: u64 = meta.get("seed").ok_or_else(|| bad("missing seed".into()))?.parse().map_err(|_| bad("bad seed".into()))?;
        if states.len() != n || rows.len() != n * p * h {
            return Err(bad("row count does not match metadata".into()));
        }
        let mut blocks = Vec::with_capacity(n);
        let mut it = rows.chunks(h);
        for state in states {
            let rates = Arc::new(RateModel::new(state.projection_curve(), state.mean_reversion, state.rate_vol)?);
            let paths = (0..p)
                .map(|_| {
                    let rows = it.next().expect("row count checked");
                    ScenarioPath {
                        initial_stock: state.stock_level,
                        discount: rows.iter().map(|r| r[5]).collect(),
                        deflated_stock: rows.iter().map(|r| r[4]).collect(),
                        rate_state: rows.iter().map(|r| r[7]).collect(),
                        sovereign_spread: rows[0][8],
                        corporate_spread: rows[0][9],
                        illiquidity_premium: state.illiquidity_premium,
                        rates: Arc::clone(&rates),
                    }
                })
                .collect();
            blocks.push(ScenarioBlock { state, paths });
        }
        Ok(ScenarioTable { n, p, h, seed, blocks })
    }
}

/// Leakage statistics for one (block, t) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageRow {
    pub block: usize,
    pub t: usize,
    /// mean(delta_t S_t) / S_0 - 1
    pub stock_deviation: f64,
    pub stock_se: f64,
    /// mean(delta_t) / P(0+, t) - 1
    pub deflator_deviation: f64,
    pub deflator_se: f64,
}

impl LeakageRow {
    /// True when either deviation exceeds `k` standard errors.
    pub fn flagged(&self, k: f64) -> bool {
        self.stock_deviation.abs() > k * self.stock_se || self.deflator_deviation.abs() > k * self.deflator_se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub rows: Vec<LeakageRow>,
}

impl LeakageReport {
    pub fn flagged_fraction(&self, k: f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.flagged(k)).count() as f64 / self.rows.len() as f64
    }
}

/// Martingale (leakage) test of each block of the table.
pub fn martingale_check(table: &ScenarioTable) -> Result<LeakageReport> {
    if table.blocks.is_empty() || table.blocks.iter().any(|b| b.paths.is_empty()) {
        return Err(Error::Data("martingale check needs a non-empty table".into()));
    }
    let mut rows = Vec::new();
    for (b, block) in table.blocks.iter().enumerate() {
        let rates = &block.paths[0].rates;
        for t in 1..=table.h {
            let m: Vec<f64> = block.paths.iter().map(|p| p.deflated_stock[t - 1]).collect();
            let p0t = rates.initial_price(t as f64);
            let d: Vec<f64> = block.paths.iter().map(|p| p.discount[t - 1] / p0t).collect();
            rows.push(LeakageRow {
                block: b,
                t,
                stock_deviation: mean(&m) - 1.0,
                stock_se: standard_error(&m),
                deflator_deviation: mean(&d) - 1.0,
                deflator_se: standard_error(&d),
            });
        }
    }
    Ok(LeakageReport { rows })
}
