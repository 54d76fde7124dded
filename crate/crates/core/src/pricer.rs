//! Forward Monte Carlo pricing under a fixed exercise rule.
//!
//! Paths are generated in fixed blocks of [`PATH_BLOCK`] paths, each with its
//! own random stream, and block statistics are merged in block order. The
//! estimate is therefore a function of `(seed, n_paths)` alone, whatever the
//! task count or worker count.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cmc::CmcRule;
use crate::engine::{partition, Engine, TaskTiming};
use crate::error::{invalid, Result};
use crate::iz::IzBoundary;
use crate::market::{discount, BermudanSpec, MarketParams};
use crate::rng::{make_stream, Phase, StreamKey};

pub const PATH_BLOCK: usize = 4096;

/// Stopping rule applied along each simulated path.
#[derive(Debug, Clone, Copy)]
pub enum ExerciseRule<'a> {
    Iz(&'a IzBoundary),
    Cmc(&'a CmcRule),
    /// Exercise only at maturity.
    European,
    /// Exercise unconditionally at the given date.
    ImmediateAtDate(usize),
}

impl ExerciseRule<'_> {
    pub fn kind(&self) -> &'static str {
        match self {
            ExerciseRule::Iz(_) => "iz",
            ExerciseRule::Cmc(_) => "cmc",
            ExerciseRule::European => "european",
            ExerciseRule::ImmediateAtDate(_) => "immediate",
        }
    }

    fn validate(&self, params: &MarketParams, spec: &BermudanSpec) -> Result<()> {
        let (dim, dates) = match self {
            ExerciseRule::Iz(b) => (b.dim(), b.exercise_dates()),
            ExerciseRule::Cmc(r) => (r.dim(), r.exercise_dates()),
            ExerciseRule::European => return Ok(()),
            ExerciseRule::ImmediateAtDate(m) => {
                if *m == 0 || *m > spec.exercise_dates {
                    return Err(invalid("date", format!("exercise date {m} outside 1..={}", spec.exercise_dates)));
                }
                return Ok(());
            }
        };
        if dim != params.dim() || dates != spec.exercise_dates {
            return Err(invalid(
                "rule",
                format!("rule built for {dim} assets / {dates} dates, option has {} / {}", params.dim(), spec.exercise_dates),
            ));
        }
        Ok(())
    }

    /// Whether a path at `state` on date `m` stops now. `scratch` needs `d` slots.
    #[inline]
    pub fn exercise(&self, spec: &BermudanSpec, m: usize, state: &[f64], scratch: &mut [f64]) -> bool {
        match self {
            ExerciseRule::Iz(b) => iz_exercise_rule(b, spec, m, state, scratch),
            ExerciseRule::Cmc(r) => cmc_exercise_rule(r, spec, m, state),
            ExerciseRule::European => m == spec.exercise_dates && spec.payoff(state) > 0.0,
            ExerciseRule::ImmediateAtDate(d) => m == *d,
        }
    }
}

/// Exercise iff the payoff is positive and the leading asset (lowest index on
/// ties) is beyond its boundary given the other assets. At maturity a positive
/// payoff suffices.
#[inline]
pub fn iz_exercise_rule(boundary: &IzBoundary, spec: &BermudanSpec, m: usize, state: &[f64], scratch: &mut [f64]) -> bool {
    if spec.payoff(state) <= 0.0 {
        return false;
    }
    if m >= spec.exercise_dates {
        return true;
    }
    boundary.beyond(m, state, scratch)
}

/// Exercise iff the payoff is positive and the date's score is positive.
#[inline]
pub fn cmc_exercise_rule(rule: &CmcRule, spec: &BermudanSpec, m: usize, state: &[f64]) -> bool {
    if spec.payoff(state) <= 0.0 {
        return false;
    }
    m >= spec.exercise_dates || rule.score(m, state) > 0.0
}

/// Count, sum and sum of squares of path values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledStats {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl PooledStats {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &PooledStats) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let mut s = Self::default();
        xs.iter().for_each(|x| s.push(*x));
        s
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased per-sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Half-width of the 95% confidence interval.
    pub fn ci95(&self) -> f64 {
        1.96 * self.std_error()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub boundary_seconds: f64,
    pub pricing_seconds: f64,
}

/// Pooled Monte Carlo price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub price: f64,
    pub variance: f64,
    pub ci95: f64,
    pub n_paths: u64,
    pub timings: PhaseTimings,
    pub rule_kind: String,
    pub unconverged_points: usize,
}

impl PriceEstimate {
    pub fn std_error(&self) -> f64 {
        self.ci95 / 1.96
    }
}

/// Pricing run settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Task count for the path blocks; `None` means four tasks per worker.
    pub nb_tasks: Option<usize>,
}

/// Full output of [`price_detailed`].
#[derive(Debug, Clone)]
pub struct PricingRun {
    pub estimate: PriceEstimate,
    pub block_stats: Vec<PooledStats>,
    pub timings: Vec<TaskTiming>,
}

pub fn price(
    params: &MarketParams,
    spec: &BermudanSpec,
    rule: ExerciseRule<'_>,
    cfg: PricingConfig,
    engine: &Engine,
) -> Result<PriceEstimate> {
    price_detailed(params, spec, rule, cfg, engine).map(|r| r.estimate)
}

/// Simulates `cfg.n_paths` paths; each contributes `e^{-rτ} Φ(S_τ)`, or 0 if never exercised.
pub fn price_detailed(
    params: &MarketParams,
    spec: &BermudanSpec,
    rule: ExerciseRule<'_>,
    cfg: PricingConfig,
    engine: &Engine,
) -> Result<PricingRun> {
    spec.validate_for(params)?;
    rule.validate(params, spec)?;
    if cfg.n_paths == 0 {
        return Err(invalid("N", "at least one path is required"));
    }
    let start = Instant::now();
    let blocks = cfg.n_paths.div_ceil(PATH_BLOCK);
    let nb = cfg.nb_tasks.unwrap_or(4 * engine.workers()).clamp(1, blocks);
    let plan = partition(blocks, nb, Phase::Pricing.name())?;
    let sim = PathSimulator::new(params, spec);

    let out = engine.run(&plan, |_, range| {
        range
            .map(|b| {
                let lo = b * PATH_BLOCK;
                let hi = (lo + PATH_BLOCK).min(cfg.n_paths);
                sim.block(rule, StreamKey::new(cfg.seed, Phase::Pricing, b as u64, 0), hi - lo)
            })
            .collect::<Vec<_>>()
    })?;

    let block_stats: Vec<PooledStats> = out.results.into_iter().flatten().collect();
    let mut total = PooledStats::default();
    block_stats.iter().for_each(|s| total.merge(s));
    let estimate = PriceEstimate {
        price: total.mean(),
        variance: total.variance(),
        ci95: total.ci95(),
        n_paths: total.n,
        timings: PhaseTimings { boundary_seconds: 0.0, pricing_seconds: start.elapsed().as_secs_f64() },
        rule_kind: rule.kind().to_string(),
        unconverged_points: 0,
    };
    Ok(PricingRun { estimate, block_stats, timings: out.timings })
}

/// Date-to-date path stepping with precomputed step constants.
struct PathSimulator<'a> {
    params: &'a MarketParams,
    spec: &'a BermudanSpec,
    kernel: crate::market::StepKernel,
    discounts: Vec<f64>,
}

impl<'a> PathSimulator<'a> {
    fn new(params: &'a MarketParams, spec: &'a BermudanSpec) -> Self {
        let discounts = (0..=spec.exercise_dates).map(|m| discount(params.rate(), spec.date(m))).collect();
        Self { params, spec, kernel: params.step_kernel(spec.dt()), discounts }
    }

    fn block(&self, rule: ExerciseRule<'_>, key: StreamKey, paths: usize) -> PooledStats {
        let d = self.params.dim();
        let mut stream = make_stream(key);
        let mut s = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut scratch = vec![0.0; d.max(self.kernel.scratch_len())];
        let mut stats = PooledStats::default();
        for _ in 0..paths {
            s.copy_from_slice(self.params.s0());
            let mut value = 0.0;
            for m in 1..=self.spec.exercise_dates {
                stream.fill_normal(&mut z);
                self.kernel.advance(self.params, &mut s, &z, &mut scratch);
                if rule.exercise(self.spec, m, &s, &mut scratch) {
                    value = self.discounts[m] * self.spec.payoff(&s);
                    break;
                }
            }
            stats.push(value);
        }
        stats
    }
}
