//! Stylised participating savings business projected along scenario paths.
//!
//! Closed book of savings contracts backed by one stock pool, a bond pool and
//! cash. Each year the model earns book income, credits policyholders
//! max(guarantee, profit share of the book yield, market target capped at the
//! book yield), applies base plus dynamic lapses and pays the remaining margin
//! to shareholders. At the horizon the remaining assets are liquidated, account
//! values are paid out and the residual goes to shareholders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esg::{apply_transition, simulate_block, IssuerKind, MarketState, ScenarioPath};
use crate::par::{map_range, ExecMode};
use crate::stats::{mean, standard_error};
use crate::transitions::{FactorSet, RiskFactorVector};

pub const PORTFOLIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiabilityModelPoint {
    pub account_value: f64,
    pub guaranteed_rate: f64,
    pub base_lapse_rate: f64,
    #[serde(default)]
    pub age_bucket: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondLine {
    pub nominal: f64,
    pub coupon: f64,
    /// Years to maturity, at least 1.
    pub maturity: u32,
    pub issuer: IssuerKind,
    /// Defaults to the nominal.
    #[serde(default)]
    pub book_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetPortfolio {
    /// Market value of the stock pool exposed to the "global" equity shock.
    pub stock_global: f64,
    /// Market value of the stock pool exposed to the "other" equity shock.
    #[serde(default)]
    pub stock_other: f64,
    /// Book value of the whole stock pool; defaults to its market value.
    #[serde(default)]
    pub stock_book: Option<f64>,
    #[serde(default)]
    pub bonds: Vec<BondLine>,
    #[serde(default)]
    pub cash: f64,
}

impl AssetPortfolio {
    pub fn stock_value(&self) -> f64 {
        self.stock_global + self.stock_other
    }

    pub fn stock_book_value(&self) -> f64 {
        self.stock_book.unwrap_or_else(|| self.stock_value())
    }
}

/// Piecewise-linear S-curve of additional lapses against the gap between the
/// credited and the target rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicLapse {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub max_addon: f64,
    pub min_addon: f64,
}

impl Default for DynamicLapse {
    fn default() -> Self {
        DynamicLapse { alpha: -0.06, beta: -0.02, gamma: 0.01, delta: 0.02, max_addon: 0.30, min_addon: -0.05 }
    }
}

impl DynamicLapse {
    /// Zero add-on everywhere.
    pub fn none() -> Self {
        DynamicLapse { max_addon: 0.0, min_addon: 0.0, ..Default::default() }
    }

    pub fn addon(&self, gap: f64) -> f64 {
        if gap < self.alpha {
            self.max_addon
        } else if gap < self.beta {
            self.max_addon * (gap - self.beta) / (self.alpha - self.beta)
        } else if gap <= self.gamma {
            0.0
        } else if gap <= self.delta {
            self.min_addon * (gap - self.gamma) / (self.delta - self.gamma)
        } else {
            self.min_addon
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha < self.beta && self.beta <= self.gamma && self.gamma < self.delta) {
            return Err(Error::Config("dynamic lapse breakpoints must satisfy alpha < beta <= gamma < delta".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlmParams {
    /// Share of the book yield credited to policyholders.
    pub profit_share: f64,
    /// Target rate = target_share * market yield + target_margin.
    pub target_share: f64,
    pub target_margin: f64,
    /// Tenor of the market yield driving the target rate.
    pub target_tenor: f64,
    pub dividend_yield: f64,
    pub dynamic_lapse: DynamicLapse,
}

impl Default for AlmParams {
    fn default() -> Self {
        AlmParams {
            profit_share: 0.85,
            target_share: 1.0,
            target_margin: -0.005,
            target_tenor: 10.0,
            dividend_yield: 0.02,
            dynamic_lapse: DynamicLapse::default(),
        }
    }
}

/// Portfolio input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub schema_version: u32,
    #[serde(default)]
    pub params: AlmParams,
    pub liabilities: Vec<LiabilityModelPoint>,
    pub assets: AssetPortfolio,
}

impl Portfolio {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: Portfolio = toml::from_str(s).map_err(|e| Error::Config(format!("portfolio: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PORTFOLIO_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "portfolio schema_version {} is not supported (expected {PORTFOLIO_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        validate_inputs(&self.liabilities, &self.assets, &self.params)
    }
}

fn validate_inputs(liabs: &[LiabilityModelPoint], assets: &AssetPortfolio, params: &AlmParams) -> Result<()> {
    for (i, mp) in liabs.iter().enumerate() {
        if !(mp.account_value >= 0.0) || !(mp.guaranteed_rate >= 0.0) || !(0.0..=1.0).contains(&mp.base_lapse_rate) {
            return Err(Error::Config(format!("model point {i}: account value and guarantee must be >= 0, lapse in [0,1]")));
        }
    }
    if !(assets.stock_global >= 0.0) || !(assets.stock_other >= 0.0) || assets.stock_book_value() < 0.0 {
        return Err(Error::Config("stock pool values must be non-negative".into()));
    }
    for (i, b) in assets.bonds.iter().enumerate() {
        if !(b.nominal >= 0.0) || b.maturity < 1 || b.book_value.is_some_and(|v| v < 0.0) {
            return Err(Error::Config(format!("bond line {i}: nominal >= 0, maturity >= 1 required")));
        }
    }
    if !(0.0..=1.0).contains(&params.profit_share) || !(params.target_tenor > 0.0) {
        return Err(Error::Config("profit share must lie in [0,1] and target tenor be positive".into()));
    }
    params.dynamic_lapse.validate()
}

/// One projection year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionYear {
    pub t: usize,
    pub book_income: f64,
    pub book_yield: f64,
    pub target_rate: f64,
    pub credited: f64,
    pub surrenders: f64,
    /// Account values paid out at the horizon (zero before).
    pub maturity_benefit: f64,
    /// Shareholder profit R_t.
    pub profit: f64,
    pub account_value: f64,
    /// Market value of assets after the year's flows (zero at the horizon).
    pub asset_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub years: Vec<ProjectionYear>,
    /// Number of model-point account values clipped at zero.
    pub clipped_accounts: usize,
}

impl Projection {
    pub fn profits(&self) -> Vec<f64> {
        self.years.iter().map(|y| y.profit).collect()
    }
}

struct Holding {
    nominal: f64,
    book: f64,
    coupon: f64,
    maturity: usize,
    spread: f64,
}

impl Holding {
    /// Market value at t given risk-free prices `p[k] = P(t, t + k)`.
    fn value(&self, t: usize, p: &[f64]) -> f64 {
        if self.maturity <= t {
            return 0.0;
        }
        let mut v = 0.0;
        for k in 1..=self.maturity - t {
            let df = p[k] * (-self.spread * k as f64).exp();
            v += self.coupon * self.nominal * df;
        }
        v + self.nominal * p[self.maturity - t] * (-self.spread * (self.maturity - t) as f64).exp()
    }
}

fn market_prices(path: &ScenarioPath, t: usize, longest: usize) -> Vec<f64> {
    (0..=longest.saturating_sub(t)).map(|k| path.market_zcb(t, (t + k) as f64)).collect()
}

/// Market value of the bond pool at time 0 of `path` (risk-free curve plus spread).
pub fn bond_pool_value(assets: &AssetPortfolio, path: &ScenarioPath) -> f64 {
    let holdings = holdings(assets, path);
    let longest = holdings.iter().map(|h| h.maturity).max().unwrap_or(0);
    let p = market_prices(path, 0, longest);
    holdings.iter().map(|h| h.value(0, &p)).sum()
}

fn holdings(assets: &AssetPortfolio, path: &ScenarioPath) -> Vec<Holding> {
    assets
        .bonds
        .iter()
        .map(|b| Holding {
            nominal: b.nominal,
            book: b.book_value.unwrap_or(b.nominal),
            coupon: b.coupon,
            maturity: b.maturity as usize,
            spread: match b.issuer {
                IssuerKind::Sovereign => path.sovereign_spread,
                IssuerKind::Corporate => path.corporate_spread,
            },
        })
        .collect()
}

/// Yearly projection of the business along one path.
pub fn project(liabs: &[LiabilityModelPoint], assets: &AssetPortfolio, params: &AlmParams, path: &ScenarioPath) -> Result<Projection> {
    validate_inputs(liabs, assets, params)?;
    let h = path.horizon();
    if h == 0 {
        return Err(Error::Domain("projection needs a horizon of at least one year".into()));
    }
    let mut av: Vec<f64> = liabs.iter().map(|mp| mp.account_value).collect();
    let mut stock_mv = assets.stock_value();
    let mut stock_book = assets.stock_book_value();
    let mut bonds = holdings(assets, path);
    let longest = bonds.iter().map(|b| b.maturity).max().unwrap_or(0);
    let mut cash = assets.cash;
    let mut deferred_gains = 0.0;
    let mut clipped = 0;
    let mut years = Vec::with_capacity(h);

    for t in 1..=h {
        let book_start = stock_book + bonds.iter().map(|b| b.book).sum::<f64>() + cash;

        let interest = cash * (path.short_rate(t).exp() - 1.0);
        cash += interest;

        stock_mv *= path.stock_return(t);
        let dividend = params.dividend_yield * stock_mv;
        stock_mv -= dividend;
        cash += dividend;

        let (mut coupons, mut redemption_gains, mut default_losses) = (0.0, 0.0, 0.0);
        for b in bonds.iter_mut() {
            let survival = (-b.spread).exp();
            default_losses += b.book * (1.0 - survival);
            b.nominal *= survival;
            b.book *= survival;
            let c = b.coupon * b.nominal;
            coupons += c;
            cash += c;
            if b.maturity == t {
                cash += b.nominal;
                redemption_gains += b.nominal - b.book;
                b.nominal = 0.0;
                b.book = 0.0;
            }
        }
        bonds.retain(|b| b.maturity > t);

        let book_income = interest + dividend + coupons + redemption_gains + deferred_gains - default_losses;
        let book_yield = if book_start > 0.0 { book_income / book_start } else { 0.0 };
        let target = params.target_share * path.market_yield(t, params.target_tenor) + params.target_margin;

        let mut credited = 0.0;
        let mut surrenders = 0.0;
        let mut av_credited = 0.0;
        for (mp, value) in liabs.iter().zip(av.iter_mut()) {
            let rate = mp.guaranteed_rate.max(params.profit_share * book_yield).max(target.min(book_yield));
            let amount = *value * rate;
            credited += amount;
            *value += amount;
            if *value < 0.0 {
                log::warn!("account value of model point {:?} went negative at t={t}; clipped to 0", mp.age_bucket);
                clipped += 1;
                *value = 0.0;
            }
            av_credited += *value;
            let lapse = (mp.base_lapse_rate + params.dynamic_lapse.addon(rate - target)).clamp(0.0, 1.0);
            let s = *value * lapse;
            surrenders += s;
            *value -= s;
        }

        let mut profit = book_income - credited;
        cash -= surrenders + profit;

        // pro-rata sales funding the surrenders; realised gains enter next year's income
        let fraction = if av_credited > 0.0 { surrenders / av_credited } else { 0.0 };
        let prices = market_prices(path, t, longest);
        deferred_gains = 0.0;
        if fraction > 0.0 {
            let proceeds = fraction * stock_mv;
            deferred_gains += proceeds - fraction * stock_book;
            stock_mv -= proceeds;
            stock_book *= 1.0 - fraction;
            cash += proceeds;
            for b in bonds.iter_mut() {
                let proceeds = fraction * b.value(t, &prices);
                deferred_gains += proceeds - fraction * b.book;
                b.nominal *= 1.0 - fraction;
                b.book *= 1.0 - fraction;
                cash += proceeds;
            }
        }

        let remaining_av: f64 = av.iter().sum();
        let mut asset_value = stock_mv + bonds.iter().map(|b| b.value(t, &prices)).sum::<f64>() + cash;
        let mut maturity_benefit = 0.0;
        if t == h {
            maturity_benefit = remaining_av;
            profit += asset_value - remaining_av;
            asset_value = 0.0;
        }
        years.push(ProjectionYear {
            t,
            book_income,
            book_yield,
            target_rate: target,
            credited,
            surrenders,
            maturity_benefit,
            profit,
            account_value: if t == h { 0.0 } else { remaining_av },
            asset_value,
        });
    }
    Ok(Projection { years, clipped_accounts: clipped })
}

/// Sum of deflated profits, sum_t delta_t R_t.
pub fn npv(profits: &[f64], path: &ScenarioPath) -> f64 {
    profits.iter().enumerate().map(|(i, r)| path.discount_at(i + 1) * r).sum()
}

/// Standard-Formula style instantaneous shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockSpec {
    IrUp {
        #[serde(default = "one")]
        scale: f64,
    },
    IrDown {
        #[serde(default = "one")]
        scale: f64,
    },
    StockGlobal {
        #[serde(default = "global_drop")]
        drop: f64,
    },
    StockOther {
        #[serde(default = "other_drop")]
        drop: f64,
    },
    Spread {
        #[serde(default = "corporate_widening")]
        corporate: f64,
        #[serde(default)]
        sovereign: f64,
    },
    Illiquidity {
        #[serde(default = "illiquidity_cut")]
        cut: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn global_drop() -> f64 {
    0.39
}
fn other_drop() -> f64 {
    0.49
}
fn corporate_widening() -> f64 {
    0.014
}
fn illiquidity_cut() -> f64 {
    0.65
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockId {
    IrUp,
    IrDown,
    StockGlobal,
    StockOther,
    Spread,
    Illiquidity,
}

impl ShockId {
    pub fn as_str(self) -> &'static str {
        match self {
            ShockId::IrUp => "ir_up",
            ShockId::IrDown => "ir_down",
            ShockId::StockGlobal => "stock_global",
            ShockId::StockOther => "stock_other",
            ShockId::Spread => "spread",
            ShockId::Illiquidity => "illiquidity",
        }
    }
}

impl std::fmt::Display for ShockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ShockId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ir_up" => ShockId::IrUp,
            "ir_down" => ShockId::IrDown,
            "stock_global" => ShockId::StockGlobal,
            "stock_other" => ShockId::StockOther,
            "spread" => ShockId::Spread,
            "illiquidity" => ShockId::Illiquidity,
            other => return Err(Error::Config(format!("unknown shock id {other:?}"))),
        })
    }
}

impl ShockSpec {
    pub fn id(&self) -> ShockId {
        match self {
            ShockSpec::IrUp { .. } => ShockId::IrUp,
            ShockSpec::IrDown { .. } => ShockId::IrDown,
            ShockSpec::StockGlobal { .. } => ShockId::StockGlobal,
            ShockSpec::StockOther { .. } => ShockId::StockOther,
            ShockSpec::Spread { .. } => ShockId::Spread,
            ShockSpec::Illiquidity { .. } => ShockId::Illiquidity,
        }
    }

    /// Shock with default magnitudes.
    pub fn default_for(id: ShockId) -> Self {
        match id {
            ShockId::IrUp => ShockSpec::IrUp { scale: 1.0 },
            ShockId::IrDown => ShockSpec::IrDown { scale: 1.0 },
            ShockId::StockGlobal => ShockSpec::StockGlobal { drop: global_drop() },
            ShockId::StockOther => ShockSpec::StockOther { drop: other_drop() },
            ShockId::Spread => ShockSpec::Spread { corporate: corporate_widening(), sovereign: 0.0 },
            ShockId::Illiquidity => ShockSpec::Illiquidity { cut: illiquidity_cut() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ShockSpec::IrUp { scale } | ShockSpec::IrDown { scale } => (0.0..=3.0).contains(&scale),
            ShockSpec::StockGlobal { drop } | ShockSpec::StockOther { drop } => (0.0..1.0).contains(&drop),
            ShockSpec::Spread { corporate, sovereign } => (0.0..=0.2).contains(&corporate) && (0.0..=0.2).contains(&sovereign),
            ShockSpec::Illiquidity { cut } => (0.0..=1.0).contains(&cut),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("shock {} magnitude out of range: {self:?}", self.id())))
        }
    }
}

/// Relative interest-rate stresses (up, down) by maturity in years.
const IR_STRESS: [(f64, f64, f64); 21] = [
    (1.0, 0.70, -0.75),
    (2.0, 0.70, -0.65),
    (3.0, 0.64, -0.56),
    (4.0, 0.59, -0.50),
    (5.0, 0.55, -0.46),
    (6.0, 0.52, -0.42),
    (7.0, 0.49, -0.39),
    (8.0, 0.47, -0.36),
    (9.0, 0.44, -0.33),
    (10.0, 0.42, -0.31),
    (11.0, 0.39, -0.30),
    (12.0, 0.37, -0.29),
    (13.0, 0.35, -0.28),
    (14.0, 0.34, -0.28),
    (15.0, 0.33, -0.27),
    (16.0, 0.31, -0.28),
    (17.0, 0.30, -0.28),
    (18.0, 0.29, -0.28),
    (19.0, 0.27, -0.29),
    (20.0, 0.26, -0.29),
    (90.0, 0.20, -0.20),
];

/// Minimum absolute upward move of the up stress.
const IR_UP_FLOOR: f64 = 0.01;

/// Relative (up, down) stress at maturity m, linear between table points.
pub fn ir_stress(m: f64) -> (f64, f64) {
    if m <= IR_STRESS[0].0 {
        return (IR_STRESS[0].1, IR_STRESS[0].2);
    }
    for w in IR_STRESS.windows(2) {
        let (m0, u0, d0) = w[0];
        let (m1, u1, d1) = w[1];
        if m <= m1 {
            let f = (m - m0) / (m1 - m0);
            return (u0 + f * (u1 - u0), d0 + f * (d1 - d0));
        }
    }
    let last = IR_STRESS[IR_STRESS.len() - 1];
    (last.1, last.2)
}

/// Instantaneous revaluation under a shock.
pub fn apply_sf_shock(
    liabs: &[LiabilityModelPoint],
    assets: &AssetPortfolio,
    base: &MarketState,
    shock: &ShockSpec,
) -> Result<(Vec<LiabilityModelPoint>, AssetPortfolio, MarketState)> {
    shock.validate()?;
    let mut a = assets.clone();
    let mut s = base.clone();
    match *shock {
        ShockSpec::StockGlobal { drop } => a.stock_global *= 1.0 - drop,
        ShockSpec::StockOther { drop } => a.stock_other *= 1.0 - drop,
        ShockSpec::IrUp { scale } => {
            for (i, p) in s.zero_curve.iter_mut().enumerate() {
                let m = (i + 1) as f64;
                let y = -p.ln() / m;
                let shift = (y * ir_stress(m).0 * scale).max(IR_UP_FLOOR * scale);
                *p *= (-shift * m).exp();
            }
        }
        ShockSpec::IrDown { scale } => {
            for (i, p) in s.zero_curve.iter_mut().enumerate() {
                let m = (i + 1) as f64;
                let y = -p.ln() / m;
                if y > 0.0 {
                    *p *= (-y * ir_stress(m).1 * scale * m).exp();
                }
            }
        }
        ShockSpec::Spread { corporate, sovereign } => {
            s.corporate_spread += corporate;
            s.sovereign_spread += sovereign;
        }
        ShockSpec::Illiquidity { cut } => s.illiquidity_premium *= 1.0 - cut,
    }
    Ok((liabs.to_vec(), a, s))
}

/// NAV estimate from P secondary paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpvSample {
    pub transition: RiskFactorVector,
    pub outcomes: Vec<f64>,
    pub shock: Option<ShockId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NavEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub sample: NpvSample,
}

/// Business, base market and risk-factor configuration needed to value NAV
/// under any transition and shock.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmModel {
    pub portfolio: Portfolio,
    pub base: MarketState,
    pub factors: FactorSet,
    pub horizon: usize,
}

impl AlmModel {
    pub fn new(portfolio: Portfolio, base: MarketState, factors: FactorSet, horizon: usize) -> Result<Self> {
        portfolio.validate()?;
        base.validate()?;
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least one year".into()));
        }
        Ok(AlmModel { portfolio, base, factors, horizon })
    }

    /// Business and market right after the transition and the optional shock.
    /// The stock pool follows the index move; book values are unchanged.
    pub fn inputs(&self, eps: &RiskFactorVector, shock: Option<&ShockSpec>) -> Result<(Vec<LiabilityModelPoint>, AssetPortfolio, MarketState)> {
        let state = apply_transition(&self.base, &self.factors, eps)?;
        let mut assets = self.portfolio.assets.clone();
        let ratio = state.stock_level / self.base.stock_level;
        assets.stock_global *= ratio;
        assets.stock_other *= ratio;
        let liabs = self.portfolio.liabilities.clone();
        match shock {
            Some(s) => apply_sf_shock(&liabs, &assets, &state, s),
            None => Ok((liabs, assets, state)),
        }
    }

    /// Mean NPV over `p` paths of block `block` (common random numbers across
    /// shocks for a given seed and block).
    pub fn nav_estimate(
        &self,
        eps: &RiskFactorVector,
        shock: Option<&ShockSpec>,
        p: usize,
        seed: u64,
        block: usize,
        mode: ExecMode,
    ) -> Result<NavEstimate> {
        let (liabs, assets, state) = self.inputs(eps, shock)?;
        let paths = simulate_block(&state, p, self.horizon, seed, block, mode)?;
        let params = &self.portfolio.params;
        let outcomes = crate::par::map_slice(&paths, mode, |path| {
            project(&liabs, &assets, params, path).map(|pr| npv(&pr.profits(), path))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let (m, se) = if outcomes.len() > 1 { (mean(&outcomes), standard_error(&outcomes)) } else { (outcomes[0], 0.0) };
        Ok(NavEstimate {
            mean: m,
            standard_error: se,
            sample: NpvSample { transition: eps.clone(), outcomes, shock: shock.map(ShockSpec::id) },
        })
    }

    /// Mean NPVs for each transition, P paths each; transition n uses block n.
    pub fn nav_responses(&self, transitions: &[RiskFactorVector], shock: Option<&ShockSpec>, p: usize, seed: u64, mode: ExecMode) -> Result<Vec<f64>> {
        map_range(transitions.len(), mode, |n| {
            self.nav_estimate(&transitions[n], shock, p, seed, n, ExecMode::Sequential).map(|e| e.mean)
        })
        .into_iter()
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esg::RateModel;
    use crate::transitions::{FactorKind, RiskFactorDef};
    use std::sync::Arc;

    fn flat(r: f64, m: usize) -> Vec<f64> {
        (1..=m).map(|k| (-r * k as f64).exp()).collect()
    }

    fn market(stock_vol: f64, rate_vol: f64) -> MarketState {
        MarketState {
            stock_level: 100.0,
            zero_curve: flat(0.02, 30),
            sovereign_spread: 0.003,
            corporate_spread: 0.01,
            stock_vol,
            rate_vol,
            mean_reversion: 0.1,
            equity_rate_correlation: 0.2,
            illiquidity_premium: 0.0,
        }
    }

    fn one_path(state: &MarketState, h: usize, seed: u64) -> ScenarioPath {
        simulate_block(state, 1, h, seed, 0, ExecMode::Sequential).unwrap().remove(0)
    }

    fn zero_params() -> AlmParams {
        AlmParams {
            profit_share: 0.0,
            target_share: 0.0,
            target_margin: 0.0,
            target_tenor: 10.0,
            dividend_yield: 0.0,
            dynamic_lapse: DynamicLapse::none(),
        }
    }

    fn mp(av: f64, g: f64, lapse: f64) -> LiabilityModelPoint {
        LiabilityModelPoint { account_value: av, guaranteed_rate: g, base_lapse_rate: lapse, age_bucket: "40-50".into() }
    }

    fn balanced_assets() -> AssetPortfolio {
        AssetPortfolio {
            stock_global: 150.0,
            stock_other: 50.0,
            stock_book: None,
            bonds: vec![
                BondLine { nominal: 400.0, coupon: 0.03, maturity: 5, issuer: IssuerKind::Sovereign, book_value: None },
                BondLine { nominal: 300.0, coupon: 0.035, maturity: 12, issuer: IssuerKind::Corporate, book_value: Some(290.0) },
            ],
            cash: 80.0,
        }
    }

    #[test]
    fn lapse_curve_shape() {
        let d = DynamicLapse::default();
        assert_eq!(d.addon(-0.10), 0.30);
        assert!((d.addon(-0.04) - 0.15).abs() < 1e-15);
        assert_eq!(d.addon(0.0), 0.0);
        assert!((d.addon(0.015) + 0.025).abs() < 1e-15);
        assert_eq!(d.addon(0.05), -0.05);
    }

    #[test]
    fn degenerate_parameters_give_asset_income() {
        // cash only, zero vol, no crediting, no lapses: R_t is the cash interest
        let s = market(0.0, 0.0);
        let path = one_path(&s, 5, 1);
        let assets = AssetPortfolio { stock_global: 0.0, stock_other: 0.0, stock_book: None, bonds: vec![], cash: 1000.0 };
        let liabs = vec![mp(1000.0, 0.0, 0.0)];
        let pr = project(&liabs, &assets, &zero_params(), &path).unwrap();
        for y in &pr.years {
            let income = 1000.0 * (0.02_f64.exp() - 1.0);
            assert!((y.profit - income).abs() < 1e-9, "{y:?}");
            assert!((y.book_income - income).abs() < 1e-9);
        }
        let oracle: f64 = (1..=5).map(|t| (-0.02 * t as f64).exp() * 1000.0 * (0.02_f64.exp() - 1.0)).sum();
        assert!((npv(&pr.profits(), &path) - oracle).abs() < 1e-9);
    }

    #[test]
    fn guarantee_above_earnings_loses_every_year() {
        let s = market(0.0, 0.0);
        let path = one_path(&s, 10, 1);
        let assets = AssetPortfolio { stock_global: 0.0, stock_other: 0.0, stock_book: None, bonds: vec![], cash: 1000.0 };
        let liabs = vec![mp(1000.0, 0.05, 0.03)];
        let pr = project(&liabs, &assets, &AlmParams::default(), &path).unwrap();
        assert!(pr.profits().iter().all(|r| *r < 0.0));
    }

    #[test]
    fn npv_examples() {
        let s = market(0.0, 0.0);
        let path = one_path(&s, 3, 1);
        assert_eq!(npv(&[0.0, 0.0, 0.0], &path), 0.0);
        assert!((npv(&[100.0, 0.0, 0.0], &path) - 100.0 * path.discount_at(1)).abs() < 1e-12);
        let mut custom = path.clone();
        custom.discount = vec![0.98, 0.96, 0.94];
        assert!((npv(&[100.0, 0.0, 0.0], &custom) - 98.0).abs() < 1e-12);
    }

    #[test]
    fn three_year_ledger() {
        // hand-built path: deterministic rates 3% accrual, stock +10%, -20%, +5%
        let rates = Arc::new(RateModel::new(flat(0.03, 30), 0.1, 0.0).unwrap());
        let discount = vec![(-0.03_f64).exp(), (-0.06_f64).exp(), (-0.09_f64).exp()];
        let stock = [110.0, 88.0, 92.4];
        let path = ScenarioPath {
            initial_stock: 100.0,
            deflated_stock: stock.iter().zip(&discount).map(|(s, d)| s * d / 100.0).collect(),
            discount,
            rate_state: vec![0.0; 3],
            sovereign_spread: 0.0,
            corporate_spread: 0.0,
            illiquidity_premium: 0.0,
            rates,
        };
        let params = AlmParams {
            profit_share: 0.85,
            target_share: 1.0,
            target_margin: -0.005,
            target_tenor: 10.0,
            dividend_yield: 0.02,
            dynamic_lapse: DynamicLapse::default(),
        };
        let assets = AssetPortfolio { stock_global: 100.0, stock_other: 0.0, stock_book: None, bonds: vec![], cash: 900.0 };
        let liabs = vec![mp(950.0, 0.01, 0.05)];
        let pr = project(&liabs, &assets, &params, &path).unwrap();

        // spreadsheet replication
        let acc = 0.03_f64.exp() - 1.0;
        let target = 0.03 - 0.005;
        let (mut cash, mut smv, mut sbook, mut av, mut deferred) = (900.0, 100.0, 100.0, 950.0, 0.0);
        let returns = [1.1, 0.8, 1.05];
        let mut expected = Vec::new();
        for t in 0..3 {
            let book_start = sbook + cash;
            let interest = cash * acc;
            smv *= returns[t];
            let div = 0.02 * smv;
            smv -= div;
            cash += interest + div;
            let bi = interest + div + deferred;
            let y = bi / book_start;
            let c = f64::max(0.01, f64::max(0.85 * y, f64::min(target, y)));
            let credited = av * c;
            av += credited;
            let gap = c - target;
            let addon = if gap < -0.06 {
                0.30
            } else if gap < -0.02 {
                0.30 * (gap + 0.02) / (-0.04)
            } else if gap <= 0.01 {
                0.0
            } else if gap <= 0.02 {
                -0.05 * (gap - 0.01) / 0.01
            } else {
                -0.05
            };
            let lapse = (0.05 + addon).clamp(0.0, 1.0);
            let surr = av * lapse;
            let frac = surr / av;
            av -= surr;
            let mut r = bi - credited;
            cash -= surr + r;
            let sold = frac * smv;
            deferred = sold - frac * sbook;
            smv -= sold;
            sbook *= 1.0 - frac;
            cash += sold;
            if t == 2 {
                r += smv + cash - av;
            }
            expected.push(r);
        }
        for (a, b) in pr.profits().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn balance_sheet_closes_at_zero_vol() {
        // deflated outflows (surrenders, shareholder profits, maturity payout) equal initial assets at market
        let s = market(0.0, 0.0);
        let path = one_path(&s, 20, 3);
        let assets = balanced_assets();
        let liabs = vec![mp(700.0, 0.01, 0.04), mp(200.0, 0.0, 0.08)];
        let pr = project(&liabs, &assets, &AlmParams::default(), &path).unwrap();
        let outflows: f64 = pr
            .years
            .iter()
            .map(|y| path.discount_at(y.t) * (y.surrenders + y.profit + y.maturity_benefit))
            .sum();
        let a0 = assets.stock_value() + assets.cash + bond_pool_value(&assets, &path);
        assert!((outflows - a0).abs() < 1e-9 * a0, "{outflows} vs {a0}");
    }

    #[test]
    fn balance_sheet_closes_in_expectation() {
        let s = market(0.2, 0.01);
        let paths = simulate_block(&s, 4000, 20, 5, 0, ExecMode::Parallel).unwrap();
        let assets = balanced_assets();
        let liabs = vec![mp(700.0, 0.01, 0.04), mp(200.0, 0.0, 0.08)];
        let vals: Vec<f64> = paths
            .iter()
            .map(|path| {
                let pr = project(&liabs, &assets, &AlmParams::default(), path).unwrap();
                pr.years.iter().map(|y| path.discount_at(y.t) * (y.surrenders + y.profit + y.maturity_benefit)).sum()
            })
            .collect();
        let a0 = assets.stock_value() + assets.cash + bond_pool_value(&assets, &paths[0]);
        assert!((mean(&vals) - a0).abs() < 3.0 * standard_error(&vals) + 1e-9);
    }

    fn model(stock_vol: f64, rate_vol: f64) -> AlmModel {
        let portfolio = Portfolio {
            schema_version: 1,
            params: AlmParams::default(),
            liabilities: vec![mp(700.0, 0.01, 0.04), mp(200.0, 0.0, 0.08)],
            assets: balanced_assets(),
        };
        let factors = FactorSet::new(vec![
            RiskFactorDef::new("stock", FactorKind::StockLevel, ""),
            RiskFactorDef::new("rate", FactorKind::RateLevel, ""),
        ])
        .unwrap();
        AlmModel::new(portfolio, market(stock_vol, rate_vol), factors, 20).unwrap()
    }

    #[test]
    fn nav_estimate_examples() {
        let m = model(0.0, 0.0);
        let z = RiskFactorVector::zeros(2);
        let e = m.nav_estimate(&z, None, 5, 1, 0, ExecMode::Sequential).unwrap();
        assert_eq!(e.standard_error, 0.0);
        let (l, a, s) = m.inputs(&z, None).unwrap();
        let path = one_path(&s, 20, 99);
        let det = npv(&project(&l, &a, &m.portfolio.params, &path).unwrap().profits(), &path);
        assert!((e.mean - det).abs() < 1e-9);

        let m = model(0.2, 0.01);
        let single = m.nav_estimate(&z, None, 1, 4, 2, ExecMode::Sequential).unwrap();
        assert_eq!(single.mean, single.sample.outcomes[0]);
        let a = m.nav_estimate(&z, None, 500, 4, 0, ExecMode::Parallel).unwrap();
        let b = m.nav_estimate(&z, None, 5000, 5, 0, ExecMode::Parallel).unwrap();
        let combined = (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * combined);
    }

    #[test]
    fn nav_decreases_with_guarantee() {
        let m = model(0.2, 0.01);
        let mut hi = m.clone();
        for l in &mut hi.portfolio.liabilities {
            l.guaranteed_rate += 0.01;
        }
        let z = RiskFactorVector::zeros(2);
        let a = m.nav_estimate(&z, None, 300, 8, 0, ExecMode::Parallel).unwrap();
        let b = hi.nav_estimate(&z, None, 300, 8, 0, ExecMode::Parallel).unwrap();
        assert!(b.mean < a.mean);
    }

    #[test]
    fn adverse_shocks_lower_nav() {
        let m = model(0.2, 0.01);
        let z = RiskFactorVector::zeros(2);
        let central = m.nav_estimate(&z, None, 300, 8, 0, ExecMode::Parallel).unwrap().mean;
        for id in [ShockId::StockGlobal, ShockId::StockOther, ShockId::Spread] {
            let shocked = m.nav_estimate(&z, Some(&ShockSpec::default_for(id)), 300, 8, 0, ExecMode::Parallel).unwrap().mean;
            assert!(shocked <= central, "{id}: {shocked} > {central}");
        }
    }

    #[test]
    fn shock_examples() {
        let liabs = vec![mp(100.0, 0.0, 0.0)];
        let assets = AssetPortfolio { stock_global: 1000.0, stock_other: 0.0, stock_book: None, bonds: vec![], cash: 0.0 };
        let s = market(0.2, 0.01);
        let (_, a, _) = apply_sf_shock(&liabs, &assets, &s, &ShockSpec::default_for(ShockId::StockGlobal)).unwrap();
        assert!((a.stock_global - 610.0).abs() < 1e-12);

        let (_, _, up0) = apply_sf_shock(&liabs, &assets, &s, &ShockSpec::IrUp { scale: 0.0 }).unwrap();
        assert_eq!(up0, s);
        let (_, _, dn0) = apply_sf_shock(&liabs, &assets, &s, &ShockSpec::IrDown { scale: 0.0 }).unwrap();
        assert_eq!(dn0, s);

        // 2% flat, 1 year: up stress 70% -> 3.4%; 10 years: 42% of 2% is below the 1% floor -> 3%
        let (_, _, up) = apply_sf_shock(&liabs, &assets, &s, &ShockSpec::IrUp { scale: 1.0 }).unwrap();
        assert!((up.zero_curve[0] - (-0.034_f64).exp()).abs() < 1e-15);
        assert!((up.zero_curve[9] - (-0.03_f64 * 10.0).exp()).abs() < 1e-14);
        // 25y: interpolated 0.26 + 5/70 * (0.20 - 0.26); floor kicks in below
        let (u25, _) = ir_stress(25.0);
        assert!((u25 - (0.26 - 0.06 * 5.0 / 70.0)).abs() < 1e-15);
        let (_, _, dn) = apply_sf_shock(&liabs, &assets, &s, &ShockSpec::IrDown { scale: 1.0 }).unwrap();
        assert!((dn.zero_curve[0] - (-0.005_f64).exp()).abs() < 1e-15);

        // spread +100bp on a one-year zero-coupon corporate bond, nominal 100
        let bond = AssetPortfolio {
            stock_global: 0.0,
            stock_other: 0.0,
            stock_book: None,
            bonds: vec![BondLine { nominal: 100.0, coupon: 0.0, maturity: 1, issuer: IssuerKind::Corporate, book_value: None }],
            cash: 0.0,
        };
        let (_, _, wide) = apply_sf_shock(&liabs, &bond, &s, &ShockSpec::Spread { corporate: 0.01, sovereign: 0.0 }).unwrap();
        let before = bond_pool_value(&bond, &one_path(&s, 1, 1));
        let after = bond_pool_value(&bond, &one_path(&wide, 1, 1));
        assert!((before - 100.0 * (-0.02_f64 - 0.01).exp()).abs() < 1e-12);
        assert!((after - 100.0 * (-0.03_f64 - 0.01).exp()).abs() < 1e-12);

        let (_, _, ill) = apply_sf_shock(&liabs, &assets, &MarketState { illiquidity_premium: 0.004, ..s.clone() }, &ShockSpec::default_for(ShockId::Illiquidity)).unwrap();
        assert!((ill.illiquidity_premium - 0.0014).abs() < 1e-15);
    }

    #[test]
    fn unknown_shock_id_is_config_error() {
        let r: std::result::Result<ShockSpec, _> = toml::from_str("id = \"currency\"");
        assert!(r.is_err());
        assert!(matches!("currency".parse::<ShockId>(), Err(Error::Config(_))));
        let ok: ShockSpec = toml::from_str("id = \"stock_global\"").unwrap();
        assert_eq!(ok, ShockSpec::StockGlobal { drop: 0.39 });
    }

    #[test]
    fn npv_scales_linearly() {
        let s = market(0.2, 0.01);
        let path = one_path(&s, 10, 2);
        let r: Vec<f64> = (0..10).map(|i| (i as f64 - 4.0) * 13.0).collect();
        let scaled: Vec<f64> = r.iter().map(|x| 2.5 * x).collect();
        assert!((npv(&scaled, &path) - 2.5 * npv(&r, &path)).abs() < 1e-9);
    }

    #[test]
    fn portfolio_schema() {
        let src = r#"
schema_version = 1
[[liabilities]]
account_value = 100.0
guaranteed_rate = 0.01
base_lapse_rate = 0.05
[assets]
stock_global = 10.0
cash = 95.0
[[assets.bonds]]
nominal = 10.0
coupon = 0.02
maturity = 3
issuer = "sovereign"
"#;
        let p = Portfolio::from_toml_str(src).unwrap();
        assert_eq!(p.params, AlmParams::default());
        assert!(Portfolio::from_toml_str(&src.replace("schema_version = 1", "schema_version = 7")).is_err());
        assert!(Portfolio::from_toml_str(&src.replace("maturity = 3", "maturity = 0")).is_err());
    }
}
