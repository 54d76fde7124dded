//! Single-asset reference prices: Cox–Ross–Rubinstein lattices and the
//! closed-form European value with a continuous dividend yield.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, PricingError, Result};
use crate::market::{BermudanSpec, MarketParams, PayoffKind};

/// Which lattice steps allow early exercise. Maturity always pays out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExerciseSchedule {
    European,
    American,
    /// Sorted step indices in `1..=steps`.
    Bermudan(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub steps: usize,
    pub schedule: ExerciseSchedule,
}

impl TreeSpec {
    pub fn european(steps: usize) -> Self {
        Self { steps, schedule: ExerciseSchedule::European }
    }

    pub fn american(steps: usize) -> Self {
        Self { steps, schedule: ExerciseSchedule::American }
    }

    /// Bermudan lattice whose step count is `min_steps` rounded up to a
    /// multiple of `dates`, so every exercise date falls on a step.
    pub fn bermudan(min_steps: usize, dates: usize) -> Self {
        let dates = dates.max(1);
        let per = min_steps.div_ceil(dates).max(1);
        let steps = per * dates;
        Self { steps, schedule: ExerciseSchedule::Bermudan((1..=dates).map(|m| m * per).collect()) }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps", "a lattice needs at least one step"));
        }
        if let ExerciseSchedule::Bermudan(dates) = &self.schedule {
            if dates.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("exercise_dates", "must be strictly increasing"));
            }
            if dates.iter().any(|&s| s == 0 || s > self.steps) {
                return Err(invalid("exercise_dates", format!("must lie in 1..={}", self.steps)));
            }
        }
        Ok(())
    }

    fn exercisable(&self, step: usize) -> bool {
        match &self.schedule {
            ExerciseSchedule::European => false,
            ExerciseSchedule::American => true,
            ExerciseSchedule::Bermudan(d) => d.binary_search(&step).is_ok(),
        }
    }
}

/// Node prices with intrinsic and continuation values at one exercise step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSlice {
    pub step: usize,
    pub time: f64,
    /// Ascending node prices.
    pub spots: Vec<f64>,
    pub intrinsic: Vec<f64>,
    pub continuation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeResult {
    pub price: f64,
    pub steps: usize,
    pub dt: f64,
    pub strike: f64,
    pub is_call: bool,
    /// One slice per early-exercise step (maturity excluded), ascending.
    pub slices: Vec<ExerciseSlice>,
}

fn single_asset(params: &MarketParams, spec: &BermudanSpec) -> Result<bool> {
    if params.dim() != 1 {
        return Err(invalid("d", format!("single-asset oracle, got {} assets", params.dim())));
    }
    match spec.payoff {
        PayoffKind::Call1D => Ok(true),
        PayoffKind::Put1D => Ok(false),
        PayoffKind::MaxCall => Ok(true),
    }
}

/// Cox–Ross–Rubinstein backward induction, exercising only where `tree` allows.
pub fn crr_price(params: &MarketParams, spec: &BermudanSpec, tree: &TreeSpec) -> Result<TreeResult> {
    let is_call = single_asset(params, spec)?;
    tree.validate()?;
    let n = tree.steps;
    let dt = spec.maturity / n as f64;
    let sigma = params.sigma()[0];
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let growth = ((params.rate() - params.delta()[0]) * dt).exp();
    let p = (growth - d) / (u - d);
    if !(p > 0.0 && p < 1.0) {
        return Err(PricingError::Argument(format!(
            "risk-neutral probability {p} outside (0, 1); use more steps"
        )));
    }
    let disc = (-params.rate() * dt).exp();
    let (pu, pd) = (disc * p, disc * (1.0 - p));
    let s0 = params.s0()[0];
    let k = spec.strike;
    let intrinsic = |s: f64| if is_call { (s - k).max(0.0) } else { (k - s).max(0.0) };
    let spot = |i: usize, j: usize| s0 * u.powi(2 * j as i32 - i as i32);

    let mut v: Vec<f64> = (0..=n).map(|j| intrinsic(spot(n, j))).collect();
    let mut slices = Vec::new();
    for i in (0..n).rev() {
        for j in 0..=i {
            v[j] = pu * v[j + 1] + pd * v[j];
        }
        if tree.exercisable(i) {
            let spots: Vec<f64> = (0..=i).map(|j| spot(i, j)).collect();
            let ex: Vec<f64> = spots.iter().map(|&s| intrinsic(s)).collect();
            slices.push(ExerciseSlice {
                step: i,
                time: i as f64 * dt,
                spots,
                intrinsic: ex.clone(),
                continuation: v[..=i].to_vec(),
            });
            for j in 0..=i {
                v[j] = v[j].max(ex[j]);
            }
        }
    }
    slices.reverse();
    Ok(TreeResult { price: v[0], steps: n, dt, strike: k, is_call, slices })
}

/// Price level where exercise becomes optimal at lattice step `step`.
///
/// Scans from the deep in-the-money end while exercise is optimal and
/// linearly interpolates `intrinsic − continuation` across the last switch.
/// `Ok(None)` means exercise is never optimal at that step. At maturity the
/// threshold is the strike.
pub fn extract_exercise_threshold(result: &TreeResult, step: usize) -> Result<Option<f64>> {
    if step == result.steps {
        return Ok(Some(result.strike));
    }
    let slice = result
        .slices
        .iter()
        .find(|s| s.step == step)
        .ok_or_else(|| PricingError::Argument(format!("step {step} is not an exercise step of this tree")))?;
    let n = slice.spots.len();
    let gain = |j: usize| slice.intrinsic[j] - slice.continuation[j];
    let optimal = |j: usize| slice.intrinsic[j] > 0.0 && gain(j) >= 0.0;
    // Deep in-the-money end first: top nodes for a call, bottom for a put.
    let order: Vec<usize> = if result.is_call { (0..n).rev().collect() } else { (0..n).collect() };
    if !optimal(order[0]) {
        return Ok(None);
    }
    let mut last = order[0];
    for &j in &order[1..] {
        if !optimal(j) {
            let (g_in, g_out) = (gain(last), gain(j));
            let w = if g_in - g_out > 0.0 { g_in / (g_in - g_out) } else { 0.0 };
            return Ok(Some(slice.spots[last] + w * (slice.spots[j] - slice.spots[last])));
        }
        last = j;
    }
    Ok(Some(slice.spots[last]))
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Black–Scholes–Merton European value with dividend yield.
pub fn bs_european(params: &MarketParams, spec: &BermudanSpec) -> Result<f64> {
    let is_call = single_asset(params, spec)?;
    if spec.payoff == PayoffKind::MaxCall {
        return Err(invalid("payoff", "closed form needs Call1D or Put1D"));
    }
    let (s, k, t) = (params.s0()[0], spec.strike, spec.maturity);
    let (r, q, sigma) = (params.rate(), params.delta()[0], params.sigma()[0]);
    let vol = sigma * t.sqrt();
    let d1 = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * t) / vol;
    let d2 = d1 - vol;
    let fwd = s * (-q * t).exp();
    let pv_k = k * (-r * t).exp();
    Ok(if is_call {
        fwd * norm_cdf(d1) - pv_k * norm_cdf(d2)
    } else {
        pv_k * norm_cdf(-d2) - fwd * norm_cdf(-d1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(s0: f64, delta: f64) -> MarketParams {
        MarketParams::symmetric(1, s0, 0.05, 0.2, delta).unwrap()
    }

    fn spec(kind: PayoffKind, t: f64, n: usize) -> BermudanSpec {
        BermudanSpec::new(100.0, t, n, kind).unwrap()
    }

    #[test]
    fn crr_european_matches_closed_form() {
        let p = market(100.0, 0.1);
        let s = spec(PayoffKind::Call1D, 3.0, 9);
        let tree = crr_price(&p, &s, &TreeSpec::european(5000)).unwrap();
        let bs = bs_european(&p, &s).unwrap();
        assert!((tree.price - bs).abs() < 0.01, "{} vs {}", tree.price, bs);
    }

    #[test]
    fn crr_convergence_error_shrinks() {
        let p = market(100.0, 0.1);
        let s = spec(PayoffKind::Call1D, 3.0, 9);
        let bs = bs_european(&p, &s).unwrap();
        // CRR error oscillates with step parity; compare even step counts.
        let errs: Vec<f64> = [500, 1000, 2000]
            .iter()
            .map(|&n| (crr_price(&p, &s, &TreeSpec::european(n)).unwrap().price - bs).abs())
            .collect();
        assert!(errs[1] < 0.7 * errs[0] && errs[2] < 0.7 * errs[1], "{errs:?}");
    }

    #[test]
    fn deep_itm_american_put_is_exercised_immediately() {
        let p = market(1.0, 0.0);
        let s = spec(PayoffKind::Put1D, 1.0, 1);
        let price = crr_price(&p, &s, &TreeSpec::american(2000)).unwrap().price;
        assert!((price - 99.0).abs() < 1e-9, "{price}");
    }

    #[test]
    fn more_exercise_dates_are_worth_more() {
        let p = market(100.0, 0.1);
        let s = spec(PayoffKind::Call1D, 3.0, 9);
        let eur = crr_price(&p, &s, &TreeSpec::european(1800)).unwrap().price;
        let b3 = crr_price(&p, &s, &TreeSpec::bermudan(1800, 3)).unwrap().price;
        let b9 = crr_price(&p, &s, &TreeSpec::bermudan(1800, 9)).unwrap().price;
        let am = crr_price(&p, &s, &TreeSpec::american(1800)).unwrap().price;
        assert!(eur <= b3 + 1e-12 && b3 <= b9 + 1e-12 && b9 <= am + 1e-12, "{eur} {b3} {b9} {am}");
    }

    #[test]
    fn rejects_large_steps() {
        let p = MarketParams::symmetric(1, 100.0, 0.9, 0.01, 0.0).unwrap();
        let s = spec(PayoffKind::Call1D, 10.0, 1);
        assert!(crr_price(&p, &s, &TreeSpec::european(2)).is_err());
    }

    #[test]
    fn closed_form_limits_and_parity() {
        let p = market(100.0, 0.1);
        let call = spec(PayoffKind::Call1D, 3.0, 1);
        let put = spec(PayoffKind::Put1D, 3.0, 1);
        let c = bs_european(&p, &call).unwrap();
        let q = bs_european(&p, &put).unwrap();
        let parity = 100.0 * (-0.3f64).exp() - 100.0 * (-0.15f64).exp();
        assert!((c - q - parity).abs() < 1e-12);

        let wild = MarketParams::symmetric(1, 100.0, 0.05, 50.0, 0.1).unwrap();
        assert!((bs_european(&wild, &call).unwrap() - 100.0 * (-0.3f64).exp()).abs() < 1e-6);

        let zero_strike = BermudanSpec { strike: 0.0, ..call };
        assert!((bs_european(&p, &zero_strike).unwrap() - 100.0 * (-0.3f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn no_dividend_call_never_exercises_early() {
        let p = market(100.0, 0.0);
        let s = spec(PayoffKind::Call1D, 3.0, 9);
        let tree = crr_price(&p, &s, &TreeSpec::bermudan(900, 9)).unwrap();
        for slice in &tree.slices {
            assert_eq!(extract_exercise_threshold(&tree, slice.step).unwrap(), None);
        }
        assert_eq!(extract_exercise_threshold(&tree, tree.steps).unwrap(), Some(100.0));
        assert!(extract_exercise_threshold(&tree, 1).is_err());
    }

    #[test]
    fn bermudan_call_thresholds_fall_toward_maturity() {
        let p = market(100.0, 0.1);
        let s = spec(PayoffKind::Call1D, 3.0, 9);
        let tree = crr_price(&p, &s, &TreeSpec::bermudan(5000, 9)).unwrap();
        let mut thresholds: Vec<f64> = tree
            .slices
            .iter()
            .map(|sl| extract_exercise_threshold(&tree, sl.step).unwrap().expect("finite threshold"))
            .collect();
        thresholds.push(extract_exercise_threshold(&tree, tree.steps).unwrap().unwrap());
        assert_eq!(thresholds.len(), 9);
        assert!(thresholds.windows(2).all(|w| w[1] <= w[0]), "{thresholds:?}");
        assert!(thresholds[7] > 100.0);
    }

    #[test]
    fn put_threshold_below_strike() {
        let p = market(100.0, 0.0);
        let s = spec(PayoffKind::Put1D, 1.0, 4);
        let tree = crr_price(&p, &s, &TreeSpec::bermudan(2000, 4)).unwrap();
        for sl in &tree.slices {
            let b = extract_exercise_threshold(&tree, sl.step).unwrap().unwrap();
            assert!(b < 100.0 && b > 50.0, "{b}");
        }
    }
}
