//! AdaBoost over depth-one decision stumps.
//!
//! A stump votes `polarity · s(x[feature] − threshold)` with `s(v) = +1` for
//! `v ≥ 0` and `−1` otherwise. Stump search is exhaustive over features and
//! midpoints between consecutive distinct values, plus one threshold below
//! every sample (the constant vote). Ties go to the lowest feature index,
//! then the lowest threshold, then positive polarity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PricingError, Result};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

/// Threshold used by the constant (always-on) stump.
const BELOW_ALL: f64 = f64::MIN;

/// Labelled sample: `y = +1` iff `β > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub xs: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
    pub ys: Vec<i8>,
}

impl TrainingSet {
    pub fn from_betas(xs: Vec<Vec<f64>>, betas: Vec<f64>) -> Result<Self> {
        if xs.len() != betas.len() {
            return Err(invalid("betas", format!("{} points but {} labels", xs.len(), betas.len())));
        }
        let ys = betas.iter().map(|b| if *b > 0.0 { 1 } else { -1 }).collect();
        Ok(Self { xs, betas, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.ys.iter().filter(|y| **y > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl Stump {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> i8 {
        if x[self.feature] >= self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }
}

/// Presorted view of a sample for repeated weighted stump searches.
struct StumpSearch<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [i8],
    order: Vec<Vec<usize>>,
}

impl<'a> StumpSearch<'a> {
    fn new(xs: &'a [Vec<f64>], ys: &'a [i8]) -> Self {
        let dim = xs.first().map_or(0, |x| x.len());
        let order = (0..dim)
            .map(|f| {
                let mut idx: Vec<usize> = (0..xs.len()).collect();
                idx.sort_by(|&a, &b| xs[a][f].total_cmp(&xs[b][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { xs, ys, order }
    }

    /// Best stump under `weights`, with its exactly recomputed weighted error.
    fn best(&self, weights: &[f64]) -> (Stump, f64) {
        let (mut wp, mut wn) = (0.0, 0.0);
        for (y, w) in self.ys.iter().zip(weights) {
            if *y > 0 {
                wp += w;
            } else {
                wn += w;
            }
        }
        // Constant vote for the heavier class.
        let mut best = if wn <= wp {
            (Stump { feature: 0, threshold: BELOW_ALL, polarity: 1 }, wn)
        } else {
            (Stump { feature: 0, threshold: BELOW_ALL, polarity: -1 }, wp)
        };
        for (f, idx) in self.order.iter().enumerate() {
            let (mut p_below, mut n_below) = (0.0, 0.0);
            for k in 0..idx.len().saturating_sub(1) {
                let i = idx[k];
                if self.ys[i] > 0 {
                    p_below += weights[i];
                } else {
                    n_below += weights[i];
                }
                let (lo, hi) = (self.xs[i][f], self.xs[idx[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let threshold = 0.5 * (lo + hi);
                let err_pos = p_below + (wn - n_below);
                let err_neg = n_below + (wp - p_below);
                if err_pos < best.1 {
                    best = (Stump { feature: f, threshold, polarity: 1 }, err_pos);
                }
                if err_neg < best.1 {
                    best = (Stump { feature: f, threshold, polarity: -1 }, err_neg);
                }
            }
        }
        let stump = best.0;
        let err = self
            .xs
            .iter()
            .zip(self.ys)
            .zip(weights)
            .filter(|((x, y), _)| stump.predict(x) != **y)
            .map(|(_, w)| w)
            .sum::<f64>();
        (stump, err)
    }
}

fn check_sample(xs: &[Vec<f64>], ys: &[i8]) -> Result<usize> {
    if xs.is_empty() {
        return Err(invalid("xs", "empty training set"));
    }
    if xs.len() != ys.len() {
        return Err(invalid("ys", format!("{} points but {} labels", xs.len(), ys.len())));
    }
    let dim = xs[0].len();
    if dim == 0 || xs.iter().any(|x| x.len() != dim) {
        return Err(invalid("xs", "points must share one positive dimension"));
    }
    if ys.iter().any(|y| *y != 1 && *y != -1) {
        return Err(invalid("ys", "labels must be +1 or -1"));
    }
    Ok(dim)
}

/// Exhaustive weighted stump search. Returns the stump and its weighted error.
pub fn fit_stump(xs: &[Vec<f64>], ys: &[i8], weights: &[f64]) -> Result<(Stump, f64)> {
    check_sample(xs, ys)?;
    if weights.len() != xs.len() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(invalid("weights", "need one nonnegative weight per point"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid("weights", format!("must sum to 1, got {total}")));
    }
    Ok(StumpSearch::new(xs, ys).best(weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub weight: f64,
}

/// Per-feature step function: `value(x) = base + prefix[#{thresholds ≤ x}]`.
#[derive(Debug, Clone, Default, PartialEq)]
struct FeatureSteps {
    thresholds: Vec<f64>,
    prefix: Vec<f64>,
}

/// Weighted stump vote `F(x) = intercept + Σ α · polarity · s(x_f − threshold)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleDoc", into = "EnsembleDoc")]
pub struct StumpEnsemble {
    dim: usize,
    intercept: f64,
    rounds: Vec<Round>,
    base: f64,
    steps: Vec<FeatureSteps>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleDoc {
    version: u32,
    dim: usize,
    intercept: f64,
    rounds: Vec<Round>,
}

impl TryFrom<EnsembleDoc> for StumpEnsemble {
    type Error = PricingError;

    fn try_from(doc: EnsembleDoc) -> Result<Self> {
        if doc.version != ENSEMBLE_FORMAT_VERSION {
            return Err(PricingError::Format(format!("unsupported ensemble version {}", doc.version)));
        }
        StumpEnsemble::from_rounds(doc.dim, doc.intercept, doc.rounds)
    }
}

impl From<StumpEnsemble> for EnsembleDoc {
    fn from(e: StumpEnsemble) -> Self {
        EnsembleDoc { version: ENSEMBLE_FORMAT_VERSION, dim: e.dim, intercept: e.intercept, rounds: e.rounds }
    }
}

impl StumpEnsemble {
    pub fn from_rounds(dim: usize, intercept: f64, rounds: Vec<Round>) -> Result<Self> {
        if !intercept.is_finite() {
            return Err(PricingError::Format("intercept must be finite".into()));
        }
        for r in &rounds {
            if r.feature >= dim || !r.weight.is_finite() || !(r.polarity == 1 || r.polarity == -1) || r.threshold.is_nan() {
                return Err(PricingError::Format(format!("invalid round {r:?} for dimension {dim}")));
            }
        }
        let mut base = intercept;
        let mut steps = vec![FeatureSteps::default(); dim];
        for (f, fs) in steps.iter_mut().enumerate() {
            let mut own: Vec<(f64, f64)> = rounds
                .iter()
                .filter(|r| r.feature == f)
                .map(|r| (r.threshold, r.weight * r.polarity as f64))
                .collect();
            own.sort_by(|a, b| a.0.total_cmp(&b.0));
            fs.prefix.push(0.0);
            for (t, v) in own {
                base -= v;
                fs.thresholds.push(t);
                let last = *fs.prefix.last().unwrap();
                fs.prefix.push(last + 2.0 * v);
            }
        }
        Ok(Self { dim, intercept, rounds, base, steps })
    }

    /// Ensemble voting the constant sign `sign` everywhere.
    pub fn constant(dim: usize, sign: f64) -> Self {
        Self::from_rounds(dim, sign.signum(), Vec::new()).expect("constant ensemble is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Real-valued margin; its sign is the class decision.
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut acc = self.base;
        for (fs, v) in self.steps.iter().zip(x) {
            if !fs.thresholds.is_empty() {
                acc += fs.prefix[fs.thresholds.partition_point(|t| *t <= *v)];
            }
        }
        acc
    }

    pub fn classify(&self, x: &[f64]) -> i8 {
        if self.score(x) > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Diagnostics of a boosting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostTrace {
    /// Weighted error of each accepted stump.
    pub stump_errors: Vec<f64>,
    /// Mean exponential loss `mean(exp(−y F(x)))` after each accepted round.
    pub exp_loss: Vec<f64>,
    /// `|Σ w − 1|` after each reweighting.
    pub weight_sum_drift: Vec<f64>,
    pub one_class: bool,
}

/// AdaBoost with `α = ½ ln((1 − err)/err)`, `err` floored at 1e-10.
/// Stops early when a stump is no better than chance or classifies perfectly.
pub fn fit_ensemble(ts: &TrainingSet, rounds: usize) -> Result<StumpEnsemble> {
    fit_ensemble_traced(ts, rounds).map(|(e, _)| e)
}

pub fn fit_ensemble_traced(ts: &TrainingSet, rounds: usize) -> Result<(StumpEnsemble, BoostTrace)> {
    if rounds == 0 {
        return Err(invalid("rounds", "at least one boosting round is required"));
    }
    let dim = check_sample(&ts.xs, &ts.ys)?;
    let mut trace = BoostTrace { stump_errors: vec![], exp_loss: vec![], weight_sum_drift: vec![], one_class: false };
    let pos = ts.positives();
    if pos == 0 || pos == ts.len() {
        trace.one_class = true;
        let sign = if pos == 0 { -1.0 } else { 1.0 };
        return Ok((StumpEnsemble::constant(dim, sign), trace));
    }

    let n = ts.len();
    let search = StumpSearch::new(&ts.xs, &ts.ys);
    let mut w = vec![1.0 / n as f64; n];
    let mut margin = vec![0.0; n];
    let mut accepted = Vec::new();
    for _ in 0..rounds {
        let (stump, err) = search.best(&w);
        if err >= 0.5 {
            break;
        }
        let e = err.max(1e-10);
        let alpha = 0.5 * ((1.0 - e) / e).ln();
        accepted.push(Round { feature: stump.feature, threshold: stump.threshold, polarity: stump.polarity, weight: alpha });
        trace.stump_errors.push(err);
        let mut total = 0.0;
        for i in 0..n {
            let hy = (stump.predict(&ts.xs[i]) * ts.ys[i]) as f64;
            margin[i] += alpha * hy;
            w[i] *= (-alpha * hy).exp();
            total += w[i];
        }
        for wi in &mut w {
            *wi /= total;
        }
        trace.weight_sum_drift.push((w.iter().sum::<f64>() - 1.0).abs());
        trace.exp_loss.push(margin.iter().map(|m| (-m).exp()).sum::<f64>() / n as f64);
        if err == 0.0 {
            break;
        }
    }
    Ok((StumpEnsemble::from_rounds(dim, 0.0, accepted)?, trace))
}

/// Fraction of the sample misclassified by `ens`.
pub fn training_error(ens: &StumpEnsemble, ts: &TrainingSet) -> f64 {
    let wrong = ts.xs.iter().zip(&ts.ys).filter(|(x, y)| ens.classify(x) != **y).count();
    wrong as f64 / ts.len() as f64
}
