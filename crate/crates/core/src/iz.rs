//! Optimal exercise boundary by backward induction over boundary points.
//!
//! At each date `t_m` and for each asset `i`, the boundary level `x` at a
//! seed point (the other assets' prices) solves `x − K = C(x)` for a call,
//! `C` being the continuation value under the boundaries already built for
//! later dates. The solve iterates `x ← K + C(x)` from `x = K`; all iterates
//! of one point reuse the same `N₁` simulated growth paths, so `C` is a
//! fixed function and the iteration has a well defined limit. The `J` levels
//! of a date are then regressed on a quadratic surface in the other
//! coordinates.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{partition, Engine, TaskTiming};
use crate::error::{invalid, Result};
use crate::lowdisc::{generate_glp, Interval};
use crate::market::{discount, BermudanSpec, MarketParams};
use crate::pricer::{iz_exercise_rule, PooledStats};
use crate::regression::{regress_with_basis, Basis, Surface};
use crate::rng::{make_stream, NormalStream, Phase, StreamKey};

/// Per-date, per-asset boundary surfaces. Date `nT` is the strike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IzBoundary {
    dim: usize,
    exercise_dates: usize,
    strike: f64,
    is_call: bool,
    /// `surfaces[m - 1][i]` for `m < nT`; `None` until built.
    surfaces: Vec<Option<Vec<Surface>>>,
}

impl IzBoundary {
    /// Boundary with only the maturity condition known.
    pub fn terminal(params: &MarketParams, spec: &BermudanSpec) -> Self {
        Self {
            dim: params.dim(),
            exercise_dates: spec.exercise_dates,
            strike: spec.strike,
            is_call: spec.payoff.is_call(),
            surfaces: vec![None; spec.exercise_dates.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exercise_dates(&self) -> usize {
        self.exercise_dates
    }

    pub fn is_built(&self, m: usize) -> bool {
        m >= self.exercise_dates || self.surfaces[m - 1].is_some()
    }

    pub fn is_complete(&self) -> bool {
        self.surfaces.iter().all(Option::is_some)
    }

    /// Installs the surfaces of date `m` (one per asset).
    pub fn set_date(&mut self, m: usize, surfaces: Vec<Surface>) -> Result<()> {
        if m == 0 || m >= self.exercise_dates {
            return Err(invalid("date", format!("boundary date {m} outside 1..{}", self.exercise_dates)));
        }
        if surfaces.len() != self.dim || surfaces.iter().any(|s| s.dim + 1 != self.dim) {
            return Err(invalid("surfaces", format!("need {} surfaces over {} coordinates", self.dim, self.dim - 1)));
        }
        self.surfaces[m - 1] = Some(surfaces);
        Ok(())
    }

    pub fn surface(&self, m: usize, asset: usize) -> Option<&Surface> {
        self.surfaces.get(m.checked_sub(1)?)?.as_ref().map(|s| &s[asset])
    }

    /// Boundary level of `asset` at date `m` given the other coordinates.
    ///
    /// Panics if date `m` has not been built.
    #[inline]
    pub fn level(&self, m: usize, asset: usize, others: &[f64]) -> f64 {
        if m >= self.exercise_dates {
            return self.strike;
        }
        let surfaces = self.surfaces[m - 1].as_ref().expect("boundary date not built yet");
        surfaces[asset].eval(others)
    }

    /// Whether the leading asset lies beyond its boundary. `scratch` needs `d − 1` slots.
    #[inline]
    pub fn beyond(&self, m: usize, state: &[f64], scratch: &mut [f64]) -> bool {
        if !self.is_call {
            return state[0] <= self.level(m, 0, &[]);
        }
        let mut lead = 0;
        for (i, v) in state.iter().enumerate().skip(1) {
            if *v > state[lead] {
                lead = i;
            }
        }
        let mut k = 0;
        for (i, v) in state.iter().enumerate() {
            if i != lead {
                scratch[k] = *v;
                k += 1;
            }
        }
        state[lead] >= self.level(m, lead, &scratch[..k])
    }
}

/// Boundary construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IzConfig {
    /// Boundary points per date and asset.
    pub j: usize,
    /// Inner paths per boundary point.
    pub n1: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Seed box per coordinate is `[lo_mult·K, hi_mult·K]`.
    pub lo_mult: f64,
    pub hi_mult: f64,
    pub basis: Basis,
    /// Report the mean of the last five iterates for unconverged points.
    pub average_tail: bool,
    /// Tasks per `[calc]` run; `None` means one task per boundary point.
    pub nb_tasks: Option<usize>,
}

impl Default for IzConfig {
    fn default() -> Self {
        Self {
            j: 128,
            n1: 5000,
            epsilon: 0.01,
            max_iter: 100,
            lo_mult: 0.5,
            hi_mult: 1.5,
            basis: Basis::Quadratic,
            average_tail: false,
            nb_tasks: None,
        }
    }
}

impl IzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 {
            return Err(invalid("J", "at least one boundary point is required"));
        }
        if self.n1 == 0 {
            return Err(invalid("n1", "at least one inner path is required"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be positive"));
        }
        if !(self.lo_mult > 0.0 && self.lo_mult < self.hi_mult) {
            return Err(invalid("glp.lo_mult", "need 0 < lo_mult < hi_mult"));
        }
        Ok(())
    }
}

/// One boundary-point solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPointJob {
    pub date_index: usize,
    pub asset: usize,
    /// Prices of the other assets.
    pub seed_point: Vec<f64>,
    pub n1: usize,
    pub epsilon: f64,
    pub max_iter: usize,
}

/// Continuation value estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl From<PooledStats> for ContinuationEstimate {
    fn from(s: PooledStats) -> Self {
        Self { mean: s.mean(), std_error: s.std_error() }
    }
}

/// `N₁` pre-drawn growth paths from `t_m` to maturity.
///
/// `growth[(p · steps + k) · d + a]` is `S_a(t_{m+1+k}) / S_a(t_m)` on path `p`.
pub struct ContinuationSampler<'a> {
    spec: &'a BermudanSpec,
    later: &'a IzBoundary,
    date: usize,
    dim: usize,
    steps: usize,
    growth: Vec<f64>,
    discounts: Vec<f64>,
}

impl<'a> ContinuationSampler<'a> {
    pub fn draw(
        params: &MarketParams,
        spec: &'a BermudanSpec,
        later: &'a IzBoundary,
        date: usize,
        n1: usize,
        stream: &mut NormalStream,
    ) -> Result<Self> {
        if date == 0 || date >= spec.exercise_dates {
            return Err(invalid("date", format!("continuation needs a date in 1..{}", spec.exercise_dates)));
        }
        if let Some(m) = (date + 1..spec.exercise_dates).find(|&m| !later.is_built(m)) {
            return Err(invalid("later", format!("boundary for date {m} is missing")));
        }
        let d = params.dim();
        let steps = spec.exercise_dates - date;
        let kernel = params.step_kernel(spec.dt());
        let mut growth = Vec::with_capacity(n1 * steps * d);
        let mut z = vec![0.0; d];
        let mut zc = vec![0.0; d];
        let mut acc = vec![0.0; d];
        for _ in 0..n1 {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for _ in 0..steps {
                stream.fill_normal(&mut z);
                params.correlate(&z, &mut zc);
                for a in 0..d {
                    acc[a] += kernel.log_increment(a, zc[a]);
                    growth.push(acc[a].exp());
                }
            }
        }
        let t0 = spec.date(date);
        let discounts = (date + 1..=spec.exercise_dates)
            .map(|k| discount(params.rate(), spec.date(k) - t0))
            .collect();
        Ok(Self { spec, later, date, dim: d, steps, growth, discounts })
    }

    pub fn paths(&self) -> usize {
        self.growth.len() / (self.steps * self.dim)
    }

    /// Mean discounted payoff from `start` at `t_m`, stopping under the later boundaries.
    pub fn estimate(&self, start: &[f64]) -> PooledStats {
        let d = self.dim;
        let mut vals = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let mut stats = PooledStats::default();
        for path in self.growth.chunks_exact(self.steps * d) {
            let mut value = 0.0;
            for (k, g) in path.chunks_exact(d).enumerate() {
                for a in 0..d {
                    vals[a] = start[a] * g[a];
                }
                if iz_exercise_rule(self.later, self.spec, self.date + 1 + k, &vals, &mut scratch) {
                    value = self.discounts[k] * self.spec.payoff(&vals);
                    break;
                }
            }
            stats.push(value);
        }
        stats
    }
}

/// Full state vector for a candidate level `x` of `asset`.
///
/// For a max-call the other coordinates are capped at `x − 0.01·K` so that
/// `asset` leads and the intrinsic value is `x − K`.
fn start_state(spec: &BermudanSpec, asset: usize, seed: &[f64], x: f64, out: &mut [f64]) {
    let cap = x - 0.01 * spec.strike;
    let mut k = 0;
    for (a, slot) in out.iter_mut().enumerate() {
        if a == asset {
            *slot = x;
        } else {
            *slot = if spec.payoff.is_call() && seed[k] > cap { cap.max(f64::MIN_POSITIVE) } else { seed[k] };
            k += 1;
        }
    }
}

/// Monte Carlo continuation value at level `x` for `job`.
pub fn continuation_value(
    x: f64,
    job: &BoundaryPointJob,
    later: &IzBoundary,
    params: &MarketParams,
    spec: &BermudanSpec,
    stream: &mut NormalStream,
) -> Result<ContinuationEstimate> {
    let sampler = ContinuationSampler::draw(params, spec, later, job.date_index, job.n1, stream)?;
    let mut start = vec![0.0; params.dim()];
    start_state(spec, job.asset, &job.seed_point, x, &mut start);
    Ok(sampler.estimate(&start).into())
}

/// Outcome of a boundary-point solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSolution {
    pub level: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Other-asset coordinates actually used (after capping).
    pub coords: Vec<f64>,
    /// Continuation estimate at the previous iterate.
    pub continuation: ContinuationEstimate,
}

/// Iterates `x ← K + C(x)` (call) or `x ← K − C(x)` (put) from `x = K`
/// until two iterates differ by less than `ε`, or `max_iter` is reached.
pub fn solve_boundary_point(
    job: &BoundaryPointJob,
    later: &IzBoundary,
    params: &MarketParams,
    spec: &BermudanSpec,
    stream: &mut NormalStream,
    average_tail: bool,
) -> Result<PointSolution> {
    let k = spec.strike;
    if job.date_index >= spec.exercise_dates {
        return Ok(PointSolution {
            level: k,
            iterations: 0,
            converged: true,
            coords: job.seed_point.clone(),
            continuation: ContinuationEstimate { mean: 0.0, std_error: 0.0 },
        });
    }
    if job.seed_point.len() + 1 != params.dim() {
        return Err(invalid("seed_point", format!("expected {} coordinates", params.dim() - 1)));
    }
    let sampler = ContinuationSampler::draw(params, spec, later, job.date_index, job.n1, stream)?;
    let sign = if spec.payoff.is_call() { 1.0 } else { -1.0 };
    let mut start = vec![0.0; params.dim()];
    let mut x = k;
    let mut tail = Vec::with_capacity(job.max_iter);
    let mut converged = false;
    let mut iterations = 0;
    let mut last = ContinuationEstimate { mean: 0.0, std_error: 0.0 };
    while iterations < job.max_iter {
        iterations += 1;
        start_state(spec, job.asset, &job.seed_point, x, &mut start);
        last = sampler.estimate(&start).into();
        let next = k + sign * last.mean;
        if !next.is_finite() {
            break;
        }
        let step = (next - x).abs();
        x = next;
        tail.push(x);
        if step < job.epsilon {
            converged = true;
            break;
        }
    }
    if !converged && average_tail && tail.len() >= 5 {
        x = tail[tail.len() - 5..].iter().sum::<f64>() / 5.0;
    }
    start_state(spec, job.asset, &job.seed_point, x, &mut start);
    let coords = start.iter().enumerate().filter(|(a, _)| *a != job.asset).map(|(_, v)| *v).collect();
    Ok(PointSolution { level: x, iterations, converged, coords, continuation: last })
}

/// Diagnostics for one (date, asset) boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IzAssetReport {
    pub date_index: usize,
    pub asset: usize,
    pub calc_seconds: f64,
    pub reg_seconds: f64,
    pub iterations: Vec<usize>,
    pub unconverged: usize,
    pub level_mean: f64,
    /// Standard error of the mean level across the `J` points.
    pub level_std_error: f64,
    pub basis: Basis,
    pub reduced_basis: bool,
    /// Regression inputs, one per lattice point.
    pub coords: Vec<Vec<f64>>,
    pub levels: Vec<f64>,
}

/// Build report of the whole boundary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IzBuildReport {
    pub glp_seconds: f64,
    pub calc_seconds: f64,
    pub reg_seconds: f64,
    pub unconverged_points: usize,
    pub total_points: usize,
    pub boundaries: Vec<IzAssetReport>,
    pub task_timings: Vec<TaskTiming>,
}

impl IzBuildReport {
    /// Iteration counts bucketed by tens: `(lower bound, count)`.
    pub fn iteration_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for n in self.boundaries.iter().flat_map(|b| &b.iterations) {
            *hist.entry(n / 10 * 10).or_insert(0) += 1;
        }
        hist.into_iter().collect()
    }
}

/// Builds the boundary for every date `nT − 1, …, 1`.
///
/// Boundary-point `j` of asset `i` at date `m` draws from stream
/// `(seed, calc, i·J + j, m)`, so the result does not depend on the worker
/// or task count.
pub fn build_iz_boundary(
    params: &MarketParams,
    spec: &BermudanSpec,
    cfg: &IzConfig,
    engine: &Engine,
    seed: u64,
) -> Result<(IzBoundary, IzBuildReport)> {
    spec.validate_for(params)?;
    cfg.validate()?;
    let d = params.dim();
    let mut boundary = IzBoundary::terminal(params, spec);
    let mut report = IzBuildReport::default();

    let t_glp = Instant::now();
    let seeds: Vec<Vec<f64>> = if d >= 2 {
        let b = Interval { lo: cfg.lo_mult * spec.strike, hi: cfg.hi_mult * spec.strike };
        generate_glp(cfg.j, &vec![b; d - 1])?.points
    } else {
        vec![Vec::new(); cfg.j]
    };
    report.glp_seconds = t_glp.elapsed().as_secs_f64();

    for m in (1..spec.exercise_dates).rev() {
        let mut surfaces = Vec::with_capacity(d);
        for asset in 0..d {
            let plan = partition(cfg.j, cfg.nb_tasks.unwrap_or(cfg.j), Phase::IzCalc.name())?;
            let later = &boundary;
            let seeds = &seeds;
            let out = engine.run(&plan, |_, range| {
                range
                    .map(|j| {
                        let job = BoundaryPointJob {
                            date_index: m,
                            asset,
                            seed_point: seeds[j].clone(),
                            n1: cfg.n1,
                            epsilon: cfg.epsilon,
                            max_iter: cfg.max_iter,
                        };
                        let key = StreamKey::new(seed, Phase::IzCalc, (asset * cfg.j + j) as u64, m as u32);
                        solve_boundary_point(&job, later, params, spec, &mut make_stream(key), cfg.average_tail)
                    })
                    .collect::<Vec<_>>()
            })?;
            let solutions = out.results.into_iter().flatten().collect::<Result<Vec<_>>>()?;

            let t_reg = Instant::now();
            let coords: Vec<Vec<f64>> = solutions.iter().map(|s| s.coords.clone()).collect();
            let levels: Vec<f64> = solutions.iter().map(|s| s.level).collect();
            let fit = regress_with_basis(&coords, &levels, cfg.basis)?;
            let reg_seconds = t_reg.elapsed().as_secs_f64();

            let unconverged = solutions.iter().filter(|s| !s.converged).count();
            if unconverged > 0 {
                log::warn!("date {m}, asset {asset}: {unconverged} of {} boundary points did not converge", cfg.j);
            }
            let level_stats = PooledStats::from_samples(&levels);
            report.calc_seconds += out.wall_seconds;
            report.reg_seconds += reg_seconds;
            report.unconverged_points += unconverged;
            report.total_points += solutions.len();
            report.task_timings.extend(out.timings);
            report.boundaries.push(IzAssetReport {
                date_index: m,
                asset,
                calc_seconds: out.wall_seconds,
                reg_seconds,
                iterations: solutions.iter().map(|s| s.iterations).collect(),
                unconverged,
                level_mean: level_stats.mean(),
                level_std_error: level_stats.std_error(),
                basis: fit.surface.basis,
                reduced_basis: fit.reduced_from.is_some(),
                coords,
                levels,
            });
            surfaces.push(fit.surface);
        }
        boundary.set_date(m, surfaces)?;
    }
    Ok((boundary, report))
}
