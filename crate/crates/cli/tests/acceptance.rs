//! Acceptance run: one PASS/FAIL line per primary criterion.
//!
//! Exits non-zero on a failure only when ACCEPTANCE_STRICT is set, so that the
//! workspace test run reports the outcome without masking the other targets.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use srmon_cli::config::RunConfig;
use srmon_cli::pipeline::{self, Context};
use srmon_core::econometrics::{breusch_pagan, confidence_interval, CovarianceKind};
use srmon_core::esg::{generate_table, martingale_check};
use srmon_core::money::Money;
use srmon_core::monitor::{evaluate_date, marginal_attribution, smoothed_sr, whatif, CalibrationBundle};
use srmon_core::par::{map_range, ExecMode};
use srmon_core::proxy::{build_design, candidate_regressors, ols_fit, Monomial, ProxyMeta, ProxyMethod, ProxyModel};
use srmon_core::solvency::{
    default_market_matrix, quadratic_aggregate, solvency_chain, AggNode, CapitalBasis, MarginalScrSet,
};
use srmon_core::transitions::{Direction, RiskFactorVector};

type Outcome = Result<String, String>;

fn desk_config() -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../desk/config.toml");
    RunConfig::load(&path).expect("desk config loads")
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform_points(r: &mut ChaCha8Rng, n: usize, j: usize) -> Vec<RiskFactorVector> {
    (0..n)
        .map(|_| RiskFactorVector::new((0..j).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap())
        .collect()
}

fn meta(j: usize, p: usize) -> ProxyMeta {
    ProxyMeta {
        method: if p == 1 { ProxyMethod::Lsmc } else { ProxyMethod::Cf },
        factor_ids: (1..=j).map(|i| format!("x{i}")).collect(),
        p_secondary: p,
        shock: None,
        calibration_date: None,
        seed: 0,
    }
}

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

fn ols_exactness() -> Outcome {
    let mut r = rng(11, 0);
    let monomials = candidate_regressors(4, 3);
    let eps = uniform_points(&mut r, 5000, 4);
    let beta: Vec<f64> = (0..=monomials.len()).map(|_| r.random_range(-2.0..2.0)).collect();
    let start = Instant::now();
    let x = build_design(&eps, &monomials);
    let y: Vec<f64> = (0..eps.len()).map(|n| (0..beta.len()).map(|c| x[(n, c)] * beta[c]).sum()).collect();
    let fit = ols_fit(&x, &y, &names(beta.len())).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let scale = beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    let err = fit.beta.iter().zip(&beta).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    let detail = format!("K+1 = {}, max relative error {err:.2e}, {secs:.3}s", beta.len());
    if err <= 1e-10 && secs < 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// 1 + 2 x1 - x2 + 0.5 x1^2 + 0.3 x1 x2
fn truth_monomials() -> (Vec<Monomial>, Vec<f64>) {
    (
        vec![Monomial::new(vec![1, 0]), Monomial::new(vec![0, 1]), Monomial::new(vec![2, 0]), Monomial::new(vec![1, 1])],
        vec![1.0, 2.0, -1.0, 0.5, 0.3],
    )
}

fn truth(beta: &[f64], e: &[f64]) -> f64 {
    beta[0] + beta[1] * e[0] + beta[2] * e[1] + beta[3] * e[0] * e[0] + beta[4] * e[0] * e[1]
}

fn hetero_sd(e: &[f64]) -> f64 {
    0.5 * (1.0 + e[0] * e[0])
}

/// One replication: N primary points, each response the mean of P noisy draws.
fn replicate(seed: u64, rep: u64, n: usize, p: usize, sd: fn(&[f64]) -> f64) -> ProxyModel {
    let (monomials, beta) = truth_monomials();
    let mut r = rng(seed, rep);
    let eps = uniform_points(&mut r, n, 2);
    let y: Vec<f64> = eps
        .iter()
        .map(|e| {
            let v = e.values();
            let noise: f64 = (0..p).map(|_| -> f64 { StandardNormal.sample(&mut r) }).sum::<f64>() / p as f64;
            truth(&beta, v) + sd(v) * noise
        })
        .collect();
    ProxyModel::fit(&eps, &y, monomials, meta(2, p)).expect("fit")
}

fn unbiasedness() -> Outcome {
    let reps = 1000;
    let (_, beta) = truth_monomials();
    let mut worst = 0.0_f64;
    for (label, n, p) in [("LSMC 5000x1", 5000, 1), ("CF 50x100", 50, 100)] {
        let fits = map_range(reps, ExecMode::Parallel, |i| replicate(21 + p as u64, i as u64, n, p, hetero_sd).beta);
        for (c, b) in beta.iter().enumerate() {
            let xs: Vec<f64> = fits.iter().map(|f| f[c]).collect();
            let m = srmon_core::stats::mean(&xs);
            let se = srmon_core::stats::standard_error(&xs);
            let z = (m - b).abs() / se;
            worst = worst.max(z);
            if z > 3.0 {
                return Err(format!("{label} coefficient {c}: mean {m:.5} vs {b}, {z:.2} SE"));
            }
        }
    }
    Ok(format!("{reps} replications per design, worst |bias| {worst:.2} SE"))
}

fn homo_sd(_: &[f64]) -> f64 {
    0.7
}

fn ci_coverage() -> Outcome {
    let reps = 2000;
    let (_, beta) = truth_monomials();
    let point = RiskFactorVector::new(vec![0.5, -0.3]).unwrap();
    let target = truth(&beta, point.values());
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, kind, sd) in [
        ("homoskedastic", CovarianceKind::Homoskedastic, homo_sd as fn(&[f64]) -> f64),
        ("White", CovarianceKind::White, hetero_sd as fn(&[f64]) -> f64),
    ] {
        let hits = map_range(reps, ExecMode::Parallel, |i| {
            let m = replicate(31, i as u64, 1000, 1, sd);
            let (lo, hi) = confidence_interval(&m, &point, 0.95, kind).expect("interval");
            lo <= target && target <= hi
        });
        let cov = hits.iter().filter(|h| **h).count() as f64 / reps as f64;
        ok &= (0.93..=0.97).contains(&cov);
        parts.push(format!("{label} {:.1}%", 100.0 * cov));
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{}, {secs:.1}s", parts.join(", "));
    if ok && secs < 120.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn breusch_pagan_calibration() -> Outcome {
    let reps = 2000;
    let n = 2000;
    let (monomials, beta) = truth_monomials();
    let rate = |seed: u64, sd: fn(&[f64]) -> f64| {
        let rejected = map_range(reps, ExecMode::Parallel, |i| {
            let mut r = rng(seed, i as u64);
            let eps = uniform_points(&mut r, n, 2);
            let y: Vec<f64> = eps
                .iter()
                .map(|e| truth(&beta, e.values()) + sd(e.values()) * Distribution::<f64>::sample(&StandardNormal, &mut r))
                .collect();
            let x = build_design(&eps, &monomials);
            let fit = ols_fit(&x, &y, &names(x.ncols())).expect("fit");
            breusch_pagan(&x, &fit.residuals).expect("bp").p_value < 0.05
        });
        rejected.iter().filter(|v| **v).count() as f64 / reps as f64
    };
    let null = rate(41, |_| 1.0);
    let power = rate(42, |e| (1.0 + e[0] * e[0]).sqrt());
    let detail = format!("null rejection {:.2}%, power {:.1}%", 100.0 * null, 100.0 * power);
    if (0.035..=0.065).contains(&null) && power > 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn esg_leakage() -> Outcome {
    let cfg = desk_config();
    let market = cfg.load_market().map_err(|e| e.to_string())?;
    let factors = cfg.factor_set().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let zero = RiskFactorVector::new(vec![0.0; factors.len()]).unwrap();
    let table = generate_table(&market, &factors, &[zero], 10_000, 10, 51, ExecMode::Parallel).map_err(|e| e.to_string())?;
    let report = martingale_check(&table).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst_stock = report.rows.iter().map(|r| r.stock_deviation.abs() / r.stock_se).fold(0.0, f64::max);
    let worst_defl = report.rows.iter().map(|r| r.deflator_deviation.abs() / r.deflator_se).fold(0.0, f64::max);
    let detail = format!("worst stock {worst_stock:.2} SE, worst deflator {worst_defl:.2} SE, {secs:.1}s");
    if report.rows.len() == 10 && report.rows.iter().all(|r| !r.flagged(3.0)) && secs < 30.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn aggregation_oracle() -> Outcome {
    let identity = DMatrix::identity(2, 2);
    let five = quadratic_aggregate(&[3.0, 4.0], &identity).map_err(|e| e.to_string())?;
    if five != 5.0 {
        return Err(format!("identity (3,4) gave {five}"));
    }
    // published order: interest, equity, property, spread, illiquidity, concentration, currency
    let published = [("interest", 968.0), ("equity", 3930.0), ("property", 943.0), ("spread", 2658.0), ("illiquidity", 3928.0), ("concentration", 661.0), ("currency", 127.0)];
    let ours = ["interest", "equity", "property", "spread", "currency", "concentration", "illiquidity"];
    let value = |id: &str| published.iter().find(|(k, _)| *k == id).unwrap().1;
    let s: Vec<f64> = ours.iter().map(|id| value(id)).collect();
    let c = default_market_matrix();
    let mut q = 0.0;
    for i in 0..7 {
        for j in 0..7 {
            q += s[i] * c[i][j] * s[j];
        }
    }
    let direct = q.sqrt();
    let tree = AggNode::Correlated { id: "market".into(), children: ours.iter().map(|id| AggNode::leaf(*id)).collect(), matrix: c };
    let mut set = MarginalScrSet::default();
    for id in ours {
        set.monitored.insert(id.to_string(), value(id));
    }
    let agg = srmon_core::solvency::aggregate_bscr(&set, &tree).map_err(|e| e.to_string())?;
    let rel = (agg.bscr - direct).abs() / direct;
    let detail = format!("identity (3,4) = 5, market SCR {:.4} vs direct {direct:.4}, relative {rel:.1e}", agg.bscr);
    if rel <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Exact ledger: amounts as rationals, rounding to the cent half to even.
fn cents(x: Ratio<i128>) -> Ratio<i128> {
    let scaled = x * Ratio::from_integer(100);
    let floor = scaled.floor();
    let frac = scaled - floor;
    let half = Ratio::new(1, 2);
    let up = frac > half || (frac == half && floor.to_integer() % 2 != 0);
    (if up { floor + Ratio::from_integer(1) } else { floor }) / Ratio::from_integer(100)
}

fn money_ratio(m: Money) -> Ratio<i128> {
    Ratio::new(m.minor(), 10_i128.pow(u32::from(m.decimals())))
}

fn tax_chain() -> Outcome {
    let dtl = Money::from_f64(1000.0, 2).unwrap().mul_rate(0.3443);
    if dtl.to_string() != "344.30" {
        return Err(format!("DTL on VIF 1000 = {dtl}"));
    }
    let tax = Ratio::new(3443_i128, 10_000);
    let mut r = rng(61, 0);
    let cases = 500;
    for i in 0..cases {
        let amt = |r: &mut ChaCha8Rng, lo: i64, hi: i64| Money::from_minor(i128::from(r.random_range(lo..hi)), 2);
        let basis = CapitalBasis {
            tier_one_of: amt(&mut r, 100_000, 2_000_000),
            subordinated_debt: amt(&mut r, 0, 300_000),
            fin_mgmt_fees: amt(&mut r, 0, 100_000),
            itr_nb: amt(&mut r, 0, 50_000),
            scr_op_0: amt(&mut r, 0, 100_000),
            tax_rate: 0.3443,
        };
        let nav = amt(&mut r, 500_000, 3_000_000);
        let bscr = amt(&mut r, 100_000, 1_000_000);
        let s = solvency_chain(nav, &basis, bscr);
        let fixed = money_ratio(basis.tier_one_of) + money_ratio(basis.subordinated_debt) - money_ratio(basis.fin_mgmt_fees);
        let vif = money_ratio(nav) - fixed;
        let dtl = cents(vif * tax);
        let adj = money_ratio(basis.itr_nb) + dtl;
        let scr = money_ratio(bscr) + money_ratio(basis.scr_op_0) - adj;
        let of = fixed + vif - dtl;
        let got = [s.vif, s.dtl, s.adj, s.scr, s.own_funds].map(money_ratio);
        if got != [vif, dtl, adj, scr, of] {
            return Err(format!("case {i}: engine {got:?} vs ledger {:?}", [vif, dtl, adj, scr, of]));
        }
        let sr = (scr > Ratio::from_integer(0)).then(|| {
            let q = of / scr;
            *q.numer() as f64 / *q.denom() as f64
        });
        match (s.sr, sr) {
            (Some(a), Some(b)) if (a - b).abs() <= 4.0 * f64::EPSILON * b.abs() => {}
            (None, None) => {}
            (a, b) => return Err(format!("case {i}: SR {a:?} vs ledger {b:?}")),
        }
    }
    Ok(format!("DTL(1000) = 344.30; {cases} random chains match the rational ledger to the cent"))
}

struct DeskRun {
    ctx: Context,
    out: pipeline::CalibrationOutput,
    secs: f64,
}

fn desk_run() -> Result<DeskRun, String> {
    let cfg = desk_config();
    let start = Instant::now();
    let ctx = Context::load(cfg).map_err(|e| e.to_string())?;
    let out = pipeline::calibrate(&ctx).map_err(|e| e.to_string())?;
    Ok(DeskRun { ctx, out, secs: start.elapsed().as_secs_f64() })
}

fn validation_table(run: &DeskRun) -> Outcome {
    let c = &run.ctx.config;
    let shape = c.factors.len() == 4 && c.lsmc.n == 5000 && c.cf.n == 50 && c.cf.p == 100;
    if !shape {
        return Err("desk config is not at the stated scale (J = 4, LSMC 5000, CF 50 x 100)".into());
    }
    let v = &run.out.report.validation;
    if v.scenarios.len() != 10 || v.lsmc.len() != 6 || v.cf.len() != 6 {
        return Err(format!("table shape {} scenarios, {} / {} rows", v.scenarios.len(), v.lsmc.len(), v.cf.len()));
    }
    if v.lsmc.iter().chain(&v.cf).any(|r| r.deviations.len() != 10) {
        return Err("row with a missing scenario".into());
    }
    let last = v.scenarios[9].values();
    let worst = c.worst().map_err(|e| e.to_string())?;
    let corner_ok = last.iter().zip(&worst).zip(run.ctx.space.lo.iter().zip(&run.ctx.space.hi)).all(|((x, d), (lo, hi))| {
        *x == match d {
            Direction::Lo => *lo,
            Direction::Hi => *hi,
        }
    });
    let convex = v.scenarios.iter().enumerate().all(|(k, s)| {
        s.values().iter().zip(last).all(|(a, b)| (a - b * (k + 1) as f64 / 10.0).abs() <= 1e-12 * b.abs().max(1e-300))
    });
    if !corner_ok || !convex {
        return Err("validation scenarios do not follow the convex path to the worst corner".into());
    }
    let central = v.central(ProxyMethod::Lsmc).max_abs_deviation().unwrap_or(f64::INFINITY);
    let central_cf = v.central(ProxyMethod::Cf).max_abs_deviation().unwrap_or(f64::INFINITY);
    let detail = format!(
        "6 rows x 10 scenarios; central max |dev| LSMC {:.2}%, CF {:.2}% (limit 2.50%); {:.1}s",
        100.0 * central,
        100.0 * central_cf,
        run.secs
    );
    if central <= 0.025 && run.secs < 600.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn comparison_harness(run: &DeskRun) -> Outcome {
    let rep = pipeline::compare(&run.ctx).map_err(|e| e.to_string())?;
    let js: Vec<usize> = rep.rows.iter().map(|r| r.j).collect();
    if js != [1, 2, 3, 4] {
        return Err(format!("J values {js:?}"));
    }
    for r in &rep.rows {
        for t in [&r.homoskedastic, &r.white] {
            if t.total != rep.eval_n || t.a_smaller + t.b_smaller + t.ties != t.total {
                return Err(format!("J = {}: counts do not sum to {}", r.j, rep.eval_n));
            }
        }
        if r.bp_lsmc.is_none() || r.bp_cf.is_none() {
            return Err(format!("J = {}: missing Breusch-Pagan statistic", r.j));
        }
    }
    let counts: Vec<String> = rep.rows.iter().map(|r| r.regressor_count.to_string()).collect();
    Ok(format!("J = 1..4 tables sum to {}; stepwise regressor counts {}", rep.eval_n, counts.join("/")))
}

fn determinism_and_attribution(run: &DeskRun) -> Outcome {
    let bundle = &run.out.bundle;
    let reloaded = CalibrationBundle::from_json(&bundle.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let last = run.ctx.history.last_date().ok_or("empty history")?;
    let a = evaluate_date(bundle, &run.ctx.history, last).map_err(|e| e.to_string())?;
    let b = evaluate_date(&reloaded, &run.ctx.history, last).map_err(|e| e.to_string())?;
    let same_bits = a.snapshot.sr.map(f64::to_bits) == b.snapshot.sr.map(f64::to_bits);
    if !same_bits || serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() {
        return Err(format!("replay of {last} differs"));
    }
    let mut r = rng(71, 0);
    let space = &bundle.space;
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let eps = RiskFactorVector::new(space.lo.iter().zip(&space.hi).map(|(lo, hi)| r.random_range(*lo..=*hi)).collect()).unwrap();
        let att = marginal_attribution(bundle, &eps).map_err(|e| e.to_string())?;
        let total = att.total_delta.ok_or("undefined SR")?;
        let sum: f64 = att.steps.iter().map(|s| s.delta.expect("defined step")).sum();
        let direct = whatif(bundle, &eps).map_err(|e| e.to_string())?.snapshot.sr.ok_or("undefined SR")?;
        if att.sr_final != Some(direct) {
            return Err(format!("transition {i}: attribution end point differs from what-if"));
        }
        let rel = (sum - total).abs() / total.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if rel > 1e-12 {
            return Err(format!("transition {i}: deltas sum {sum} vs total {total}"));
        }
    }
    Ok(format!("replay of {last} bit-identical; 100 attributions telescope, worst relative gap {worst:.1e}"))
}

fn zero_transition(run: &DeskRun) -> Outcome {
    let bundle = &run.out.bundle;
    let z = whatif(bundle, &bundle.zero()).map_err(|e| e.to_string())?.snapshot;
    let cal = &run.out.report.calibration_snapshot;
    let same = z.nav_central == cal.nav_central
        && z.bscr == cal.bscr
        && z.scr == cal.scr
        && z.own_funds == cal.own_funds
        && z.sr.map(f64::to_bits) == cal.sr.map(f64::to_bits)
        && z.marginals == cal.marginals;
    if !same {
        return Err(format!("what-if(0) SR {:?} vs calibration snapshot {:?}", z.sr, cal.sr));
    }
    let constant = vec![z.sr; 40];
    let smooth = smoothed_sr(&constant, run.ctx.config.smoothing_window).map_err(|e| e.to_string())?;
    if smooth != constant {
        return Err("smoothing a constant SR series changed it".into());
    }
    Ok(format!("what-if(0) reproduces SR {:.6}; constant series smooths to itself", z.sr.unwrap_or(f64::NAN)))
}

fn main() {
    // libtest-style flags from cargo are ignored
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("OLS exactness", ols_exactness()),
        ("Estimator unbiasedness", unbiasedness()),
        ("CI coverage", ci_coverage()),
        ("Breusch-Pagan calibration and power", breusch_pagan_calibration()),
        ("ESG leakage", esg_leakage()),
        ("Aggregation oracle", aggregation_oracle()),
        ("Tax chain", tax_chain()),
    ];
    match desk_run() {
        Ok(run) => {
            results.push(("Validation-table reproduction", validation_table(&run)));
            results.push(("Comparison-harness reproduction", comparison_harness(&run)));
            results.push(("Monitoring determinism and attribution", determinism_and_attribution(&run)));
            results.push(("Zero-transition consistency", zero_transition(&run)));
        }
        Err(e) => {
            for name in ["Validation-table reproduction", "Comparison-harness reproduction", "Monitoring determinism and attribution", "Zero-transition consistency"] {
                results.push((name, Err(format!("desk calibration failed: {e}"))));
            }
        }
    }
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
