#![allow(dead_code)]

use bermuda_core::boosting::{fit_ensemble_traced, TrainingSet};
use bermuda_core::cmc::CmcBuildConfig;
use bermuda_core::lowdisc::{generate_glp, Interval};
use bermuda_core::pricer::PooledStats;
use bermuda_core::regression::{regress_boundary, Basis};
use bermuda_core::rng::{make_stream, NormalStream};
use bermuda_core::*;

/// Reference values of the three-asset max-call (binomial lattice).
pub const MAX_CALL_REFERENCE: [(f64, f64); 3] = [(90.0, 11.29), (100.0, 18.69), (110.0, 27.58)];

pub fn max_call(s0: f64) -> (MarketParams, BermudanSpec) {
    (
        MarketParams::symmetric(3, s0, 0.05, 0.2, 0.1).unwrap(),
        BermudanSpec::new(100.0, 3.0, 9, PayoffKind::MaxCall).unwrap(),
    )
}

pub fn call_1d(s0: f64) -> (MarketParams, BermudanSpec) {
    (
        MarketParams::symmetric(1, s0, 0.05, 0.2, 0.1).unwrap(),
        BermudanSpec::new(100.0, 3.0, 9, PayoffKind::Call1D).unwrap(),
    )
}

pub fn iz_settings(j: usize, n1: usize, n_paths: usize, seed: u64) -> RunSettings {
    RunSettings {
        method: Method::Iz,
        iz: IzConfig { j, n1, ..IzConfig::default() },
        cmc: CmcBuildConfig::default(),
        pricing: PricingConfig { n_paths, seed, nb_tasks: None },
    }
}

pub fn cmc_settings(n1: usize, n2: usize, rounds: usize, n_paths: usize, seed: u64) -> RunSettings {
    RunSettings {
        method: Method::Cmc,
        iz: IzConfig::default(),
        cmc: CmcBuildConfig { n1, n2, boost_rounds: rounds, nb: None },
        pricing: PricingConfig { n_paths, seed, nb_tasks: None },
    }
}

pub fn stream(seed: u64, task: u64) -> NormalStream {
    make_stream(StreamKey::new(seed, Phase::Pricing, task, 999))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Critical value of the two-sample statistic at the 1% level.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

/// Exact L∞ star discrepancy of a 2-D point set.
pub fn star_discrepancy_2d(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    xs.push(1.0);
    ys.push(1.0);
    let mut worst = 0.0f64;
    for &x in &xs {
        for &y in &ys {
            let open = points.iter().filter(|p| p[0] < x && p[1] < y).count() as f64;
            let closed = points.iter().filter(|p| p[0] <= x && p[1] <= y).count() as f64;
            let vol = x * y;
            worst = worst.max(vol - open / n).max(closed / n - vol);
        }
    }
    worst
}

pub type Check = std::result::Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `E[e^{-(r-δ)t} S_t] = S₀` over 10⁶ one-step draws.
pub fn check_martingale() -> Check {
    let p = MarketParams::symmetric(1, 100.0, 0.05, 0.2, 0.1).unwrap();
    let t = 3.0;
    let start = PathState::initial(&p);
    let mut s = stream(1, 0);
    let mut stats = PooledStats::default();
    for _ in 0..1_000_000 {
        let z = [s.next_normal()];
        let end = p.gbm_step(&start, t, &z).unwrap();
        stats.push((-(0.05 - 0.1) * t).exp() * end.values[0]);
    }
    let err = (stats.mean() - 100.0).abs();
    ensure(err <= 3.0 * stats.std_error(), || format!("discounted mean {} vs 100 (se {})", stats.mean(), stats.std_error()))
}

/// Sample variance of the bridge midpoint matches `σ²(t−a)(b−t)/(b−a)` within 5%.
pub fn check_bridge_variance() -> Check {
    let p = MarketParams::symmetric(1, 100.0, 0.05, 0.2, 0.1).unwrap();
    let a = PathState::new(vec![100.0], 0);
    let b = PathState::new(vec![110.0], 1);
    let mut s = stream(2, 0);
    let logs: Vec<f64> = (0..100_000)
        .map(|_| {
            let z = [s.next_normal()];
            p.bridge_sample(&a, 0.0, &b, 1.0, 0.5, &z).unwrap().values[0].ln()
        })
        .collect();
    let var = PooledStats::from_samples(&logs).variance();
    let expected = 0.04 * 0.25;
    ensure((var - expected).abs() <= 0.05 * expected, || format!("bridge variance {var} vs {expected}"))
}

/// Weights stay normalised and the exponential loss never increases.
pub fn check_boosting_invariants() -> Check {
    let mut s = stream(3, 0);
    let xs: Vec<Vec<f64>> = (0..400).map(|_| vec![s.next_normal(), s.next_normal()]).collect();
    let betas: Vec<f64> = xs.iter().map(|x| x[0] * x[0] + x[1] - 0.5 + 0.3 * s.next_normal()).collect();
    let ts = TrainingSet::from_betas(xs, betas).unwrap();
    let (_, trace) = fit_ensemble_traced(&ts, 60).map_err(|e| e.to_string())?;
    let drift = trace.weight_sum_drift.iter().fold(0.0f64, |a, b| a.max(*b));
    ensure(drift <= 1e-12, || format!("weight sum drift {drift}"))?;
    ensure(trace.exp_loss.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), || format!("exp loss {:?}", trace.exp_loss))?;
    ensure(trace.stump_errors.iter().all(|e| *e < 0.5), || "accepted stump with error >= 0.5".into())
}

/// Residual of a noisy quadratic fit is orthogonal to every design column.
pub fn check_regression_orthogonality() -> Check {
    let pts = generate_glp(128, &[Interval { lo: 50.0, hi: 150.0 }; 2]).unwrap().points;
    let mut s = stream(4, 0);
    let levels: Vec<f64> = pts.iter().map(|z| 110.0 + 0.2 * z[0] - 0.001 * z[0] * z[1] + 3.0 * s.next_normal()).collect();
    let fit = regress_boundary(&pts, &levels).map_err(|e| e.to_string())?;
    let p = Basis::Quadratic.size(2);
    let mut row = vec![0.0; p];
    let mut dot = vec![0.0; p];
    let mut norm = vec![0.0; p];
    for (z, y) in pts.iter().zip(&levels) {
        Basis::Quadratic.expand(z, &mut row);
        let r = y - fit.surface.eval(z);
        for c in 0..p {
            dot[c] += row[c] * r;
            norm[c] += row[c] * row[c];
        }
    }
    let ynorm = levels.iter().map(|y| y * y).sum::<f64>().sqrt();
    for c in 0..p {
        ensure(dot[c].abs() <= 1e-8 * norm[c].sqrt() * ynorm, || format!("column {c} residual dot {}", dot[c]))?;
    }
    Ok(())
}

/// Pooled statistics over uneven batches equal the single-batch statistics.
pub fn check_merge_exactness() -> Check {
    let mut s = stream(5, 0);
    let xs: Vec<f64> = (0..10_007).map(|_| (20.0 * s.next_normal()).max(0.0)).collect();
    let whole = PooledStats::from_samples(&xs);
    let mut merged = PooledStats::default();
    for chunk in xs.chunks(997) {
        merged.merge(&PooledStats::from_samples(chunk));
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    ensure(merged.n == whole.n, || "count mismatch".into())?;
    ensure(rel(merged.mean(), whole.mean()) <= 1e-10, || "mean mismatch".into())?;
    ensure(rel(merged.variance(), whole.variance()) <= 1e-10, || "variance mismatch".into())
}

/// European value of the max-call from the same pricing engine.
pub fn european_max_call(s0: f64, n_paths: usize, seed: u64) -> PriceEstimate {
    let (p, s) = max_call(s0);
    price(&p, &s, ExerciseRule::European, PricingConfig { n_paths, seed, nb_tasks: None }, &Engine::new(1)).unwrap()
}

/// `price ≥ european − 3·combined ci95`.
pub fn check_premium(rule: &PriceEstimate, european: &PriceEstimate) -> Check {
    let slack = 3.0 * (rule.ci95.powi(2) + european.ci95.powi(2)).sqrt();
    ensure(rule.price >= european.price - slack, || format!("{} below european {}", rule.price, european.price))
}

/// Prices nondecreasing in `S₀` up to the combined ci95 of neighbours.
pub fn check_monotone(prices: &[PriceEstimate]) -> Check {
    for w in prices.windows(2) {
        let slack = (w[0].ci95.powi(2) + w[1].ci95.powi(2)).sqrt();
        ensure(w[1].price >= w[0].price - slack, || format!("{} then {}", w[0].price, w[1].price))?;
    }
    Ok(())
}

/// A stopping-rule price cannot beat the optimal value beyond noise.
pub fn check_suboptimal(rule: &PriceEstimate, reference: f64) -> Check {
    ensure(rule.price <= reference + 3.0 * rule.ci95, || format!("{} above reference {reference}", rule.price))
}
