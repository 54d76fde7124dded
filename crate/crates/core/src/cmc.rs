//! Exercise-region classification by boosting.
//!
//! Going backward over dates, `N₁` training states at `t_m` are sampled
//! (terminal draw from `S₀`, then a Brownian bridge back to `t_m`) and
//! labelled with `β = Φ − P̂`, where `P̂` is estimated from `N₂` forward
//! paths that stop under the rules already fitted for later dates. A stump
//! ensemble fitted to `sign β` becomes the rule of date `m`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boosting::{fit_ensemble_traced, training_error, StumpEnsemble, TrainingSet};
use crate::engine::{partition, Engine, TaskTiming};
use crate::error::{invalid, PricingError, Result};
use crate::market::{discount, BermudanSpec, MarketParams, PathState};
use crate::pricer::{cmc_exercise_rule, PooledStats};
use crate::rng::{make_stream, NormalStream, Phase, StreamKey};

pub const RULE_FORMAT_VERSION: u32 = 1;

/// One ensemble per date `1..nT−1`; maturity exercises on a positive payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcRule {
    dim: usize,
    exercise_dates: usize,
    ensembles: Vec<Option<StumpEnsemble>>,
}

#[derive(Serialize, Deserialize)]
struct DatedEnsemble {
    date_index: usize,
    ensemble: StumpEnsemble,
}

#[derive(Serialize, Deserialize)]
struct RuleDoc {
    version: u32,
    dim: usize,
    exercise_dates: usize,
    dates: Vec<DatedEnsemble>,
}

impl Serialize for CmcRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let dates = self
            .ensembles
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.clone().map(|ensemble| DatedEnsemble { date_index: k + 1, ensemble }))
            .collect();
        RuleDoc { version: RULE_FORMAT_VERSION, dim: self.dim, exercise_dates: self.exercise_dates, dates }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CmcRule {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let doc = RuleDoc::deserialize(de)?;
        if doc.version != RULE_FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported rule version {}", doc.version)));
        }
        let mut rule = CmcRule::empty(doc.dim, doc.exercise_dates);
        for de in doc.dates {
            rule.set_date(de.date_index, de.ensemble).map_err(D::Error::custom)?;
        }
        Ok(rule)
    }
}

impl CmcRule {
    pub fn empty(dim: usize, exercise_dates: usize) -> Self {
        Self { dim, exercise_dates, ensembles: vec![None; exercise_dates.saturating_sub(1)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exercise_dates(&self) -> usize {
        self.exercise_dates
    }

    pub fn set_date(&mut self, m: usize, ensemble: StumpEnsemble) -> Result<()> {
        if m == 0 || m >= self.exercise_dates {
            return Err(invalid("date", format!("rule date {m} outside 1..{}", self.exercise_dates)));
        }
        if ensemble.dim() != self.dim {
            return Err(invalid("ensemble", format!("dimension {} != {}", ensemble.dim(), self.dim)));
        }
        self.ensembles[m - 1] = Some(ensemble);
        Ok(())
    }

    pub fn ensemble(&self, m: usize) -> Option<&StumpEnsemble> {
        self.ensembles.get(m.checked_sub(1)?)?.as_ref()
    }

    pub fn is_built(&self, m: usize) -> bool {
        m >= self.exercise_dates || self.ensembles[m - 1].is_some()
    }

    pub fn is_complete(&self) -> bool {
        self.ensembles.iter().all(Option::is_some)
    }

    /// `F_{t_m}(x)`. Panics if date `m < nT` has not been fitted.
    #[inline]
    pub fn score(&self, m: usize, x: &[f64]) -> f64 {
        self.ensembles[m - 1].as_ref().expect("rule date not built yet").score(x)
    }
}

/// Classification build settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmcBuildConfig {
    /// Training points per date.
    pub n1: usize,
    /// Inner paths per training point.
    pub n2: usize,
    pub boost_rounds: usize,
    /// `[calc]` task count; `None` means one task per worker.
    pub nb: Option<usize>,
}

impl Default for CmcBuildConfig {
    fn default() -> Self {
        Self { n1: 5000, n2: 500, boost_rounds: 100, nb: None }
    }
}

impl CmcBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(invalid("n1/n2", "training and inner path counts must be positive"));
        }
        if self.boost_rounds == 0 {
            return Err(invalid("cmc.boost_rounds", "must be positive"));
        }
        if let Some(nb) = self.nb {
            if nb == 0 || nb > self.n1 {
                return Err(invalid("nb", format!("need 1 <= nb <= n1, got {nb}")));
            }
        }
        Ok(())
    }
}

fn sample_into(params: &MarketParams, spec: &BermudanSpec, m: usize, stream: &mut NormalStream, out: &mut [f64]) {
    let d = params.dim();
    let mut z = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut terminal = params.s0().to_vec();
    stream.fill_normal(&mut z);
    params.step_kernel(spec.maturity).advance(params, &mut terminal, &z, &mut scratch);
    if m >= spec.exercise_dates {
        out.copy_from_slice(&terminal);
        return;
    }
    stream.fill_normal(&mut z);
    params.bridge_into(params.s0(), 0.0, &terminal, spec.maturity, spec.date(m), &z, out, &mut scratch);
}

/// Draws `n1` states at `t_m`: an unconditional terminal draw bridged back to `t_m`.
pub fn sample_training_points(
    m: usize,
    n1: usize,
    params: &MarketParams,
    spec: &BermudanSpec,
    stream: &mut NormalStream,
) -> Result<Vec<PathState>> {
    if m == 0 || m > spec.exercise_dates {
        return Err(invalid("date", format!("training date {m} outside 1..={}", spec.exercise_dates)));
    }
    Ok((0..n1)
        .map(|_| {
            let mut v = vec![0.0; params.dim()];
            sample_into(params, spec, m, stream, &mut v);
            PathState::new(v, m)
        })
        .collect())
}

/// `β` estimate with the standard error of its continuation part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub beta: f64,
    pub std_error: f64,
}

/// `Φ(x) − P̂(x)` from `n2` forward paths stopping at the first later date where
/// the payoff and the fitted score are positive, or at maturity.
pub fn label_point(
    x: &PathState,
    n2: usize,
    later: &CmcRule,
    params: &MarketParams,
    spec: &BermudanSpec,
    stream: &mut NormalStream,
) -> Result<Label> {
    let m = x.date_index;
    if m == 0 || m >= spec.exercise_dates {
        return Err(invalid("date", format!("labels need a date in 1..{}", spec.exercise_dates)));
    }
    if let Some(k) = (m + 1..spec.exercise_dates).find(|&k| !later.is_built(k)) {
        return Err(invalid("later", format!("rule for date {k} is missing")));
    }
    let labeler = Labeler::new(params, spec, later);
    Ok(labeler.label(&x.values, m, n2, stream))
}

struct Labeler<'a> {
    params: &'a MarketParams,
    spec: &'a BermudanSpec,
    later: &'a CmcRule,
    kernel: crate::market::StepKernel,
}

impl<'a> Labeler<'a> {
    fn new(params: &'a MarketParams, spec: &'a BermudanSpec, later: &'a CmcRule) -> Self {
        Self { params, spec, later, kernel: params.step_kernel(spec.dt()) }
    }

    fn label(&self, x: &[f64], m: usize, n2: usize, stream: &mut NormalStream) -> Label {
        let d = self.params.dim();
        let nt = self.spec.exercise_dates;
        let t0 = self.spec.date(m);
        let disc: Vec<f64> = (m + 1..=nt).map(|k| discount(self.params.rate(), self.spec.date(k) - t0)).collect();
        let mut s = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut scratch = vec![0.0; self.kernel.scratch_len()];
        let mut stats = PooledStats::default();
        for _ in 0..n2 {
            s.copy_from_slice(x);
            let mut value = 0.0;
            for k in m + 1..=nt {
                stream.fill_normal(&mut z);
                self.kernel.advance(self.params, &mut s, &z, &mut scratch);
                if cmc_exercise_rule(self.later, self.spec, k, &s) {
                    value = disc[k - m - 1] * self.spec.payoff(&s);
                    break;
                }
            }
            stats.push(value);
        }
        Label { beta: self.spec.payoff(x) - stats.mean(), std_error: stats.std_error() }
    }
}

/// Diagnostics of one date's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcDateReport {
    pub date_index: usize,
    pub calc_seconds: f64,
    pub class_seconds: f64,
    pub positive_fraction: f64,
    pub rounds: usize,
    pub training_accuracy: f64,
    /// Accuracy of always predicting the majority class.
    pub constant_accuracy: f64,
    pub one_class: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CmcBuildReport {
    pub calc_seconds: f64,
    pub class_seconds: f64,
    pub dates: Vec<CmcDateReport>,
    pub task_timings: Vec<TaskTiming>,
}

/// Fits the rule for dates `nT − 1, …, 1`.
///
/// Training point `p` of date `m` (its sample and its label) draws from stream
/// `(seed, calc, p, m)`, so the rule does not depend on `nb` or the worker count.
pub fn build_cmc_rule(
    params: &MarketParams,
    spec: &BermudanSpec,
    cfg: &CmcBuildConfig,
    engine: &Engine,
    seed: u64,
) -> Result<(CmcRule, CmcBuildReport)> {
    build_cmc_rule_from(params, spec, cfg, engine, seed, CmcRule::empty(params.dim(), spec.exercise_dates))
}

/// Continues a backward build from `partial`, whose later dates are already fitted.
pub fn build_cmc_rule_from(
    params: &MarketParams,
    spec: &BermudanSpec,
    cfg: &CmcBuildConfig,
    engine: &Engine,
    seed: u64,
    partial: CmcRule,
) -> Result<(CmcRule, CmcBuildReport)> {
    spec.validate_for(params)?;
    cfg.validate()?;
    if partial.dim() != params.dim() || partial.exercise_dates() != spec.exercise_dates {
        return Err(invalid("partial", "rule shape does not match the option"));
    }
    let mut rule = partial;
    let mut report = CmcBuildReport::default();
    let nb = cfg.nb.unwrap_or(engine.workers()).clamp(1, cfg.n1);
    let d = params.dim();

    for m in (1..spec.exercise_dates).rev() {
        if rule.is_built(m) {
            continue;
        }
        if let Some(k) = (m + 1..spec.exercise_dates).find(|&k| !rule.is_built(k)) {
            return Err(PricingError::Argument(format!("cannot fit date {m} before date {k}")));
        }
        let plan = partition(cfg.n1, nb, Phase::CmcCalc.name())?;
        let labeler = Labeler::new(params, spec, &rule);
        let out = engine.run(&plan, |_, range| {
            range
                .map(|p| {
                    let mut stream = make_stream(StreamKey::new(seed, Phase::CmcCalc, p as u64, m as u32));
                    let mut x = vec![0.0; d];
                    sample_into(params, spec, m, &mut stream, &mut x);
                    let label = labeler.label(&x, m, cfg.n2, &mut stream);
                    (x, label.beta)
                })
                .collect::<Vec<_>>()
        })?;
        let (xs, betas): (Vec<_>, Vec<_>) = out.results.into_iter().flatten().unzip();

        let t_class = Instant::now();
        let ts = TrainingSet::from_betas(xs, betas)?;
        let (ensemble, trace) = fit_ensemble_traced(&ts, cfg.boost_rounds)?;
        let class_seconds = t_class.elapsed().as_secs_f64();
        if trace.one_class {
            log::warn!("date {m}: training labels are all one class; using a constant rule");
        }
        let pos = ts.positives() as f64 / ts.len() as f64;
        report.dates.push(CmcDateReport {
            date_index: m,
            calc_seconds: out.wall_seconds,
            class_seconds,
            positive_fraction: pos,
            rounds: ensemble.rounds().len(),
            training_accuracy: 1.0 - training_error(&ensemble, &ts),
            constant_accuracy: pos.max(1.0 - pos),
            one_class: trace.one_class,
        });
        report.calc_seconds += out.wall_seconds;
        report.class_seconds += class_seconds;
        report.task_timings.extend(out.timings);
        rule.set_date(m, ensemble)?;
    }
    Ok((rule, report))
}
