//! Correlated multi-asset geometric Brownian motion.
//!
//! Assets follow `dS_i = S_i ((r - δ_i) dt + σ_i dW_i)` with `d<W_i, W_j> = ρ_ij dt`.
//! Every step is the exact log-normal transition, so the only dates that
//! matter (the exercise dates) can be reached in one step each. Random
//! draws are always supplied by the caller; nothing here owns RNG state.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PricingError, Result};

/// Market description shared by every simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarketParamsRaw", into = "MarketParamsRaw")]
pub struct MarketParams {
    s0: Vec<f64>,
    r: f64,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    rho: Vec<Vec<f64>>,
    /// Lower-triangular factor with `chol · cholᵀ = rho`, row-major.
    chol: Vec<f64>,
    independent: bool,
}

#[derive(Serialize, Deserialize)]
struct MarketParamsRaw {
    s0: Vec<f64>,
    r: f64,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    rho: Vec<Vec<f64>>,
}

impl TryFrom<MarketParamsRaw> for MarketParams {
    type Error = PricingError;

    fn try_from(raw: MarketParamsRaw) -> Result<Self> {
        MarketParams::new(raw.s0, raw.r, raw.sigma, raw.delta, Some(raw.rho))
    }
}

impl From<MarketParams> for MarketParamsRaw {
    fn from(p: MarketParams) -> Self {
        MarketParamsRaw { s0: p.s0, r: p.r, sigma: p.sigma, delta: p.delta, rho: p.rho }
    }
}

fn broadcast(name: &'static str, v: Vec<f64>, d: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v),
        n => Err(invalid(name, format!("expected 1 or {d} entries, got {n}"))),
    }
}

impl MarketParams {
    /// Builds and validates market parameters.
    ///
    /// `sigma` and `delta` may hold a single value that is broadcast to all
    /// assets. `rho = None` means uncorrelated assets.
    pub fn new(
        s0: Vec<f64>,
        r: f64,
        sigma: Vec<f64>,
        delta: Vec<f64>,
        rho: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let d = s0.len();
        if d == 0 {
            return Err(invalid("s0", "at least one asset is required"));
        }
        if let Some(bad) = s0.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid("s0", format!("spot prices must be positive, got {bad}")));
        }
        if !r.is_finite() {
            return Err(invalid("r", "must be finite"));
        }
        let sigma = broadcast("sigma", sigma, d)?;
        if let Some(bad) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid("sigma", format!("volatilities must be positive, got {bad}")));
        }
        let delta = broadcast("delta", delta, d)?;
        if delta.iter().any(|q| !q.is_finite()) {
            return Err(invalid("delta", "dividend yields must be finite"));
        }
        let rho = rho.unwrap_or_else(|| identity(d));
        validate_correlation(&rho, d)?;
        let chol = psd_cholesky(&rho)?;
        let independent = (0..d).all(|i| (0..d).all(|j| (i == j) || rho[i][j] == 0.0));
        Ok(Self { s0, r, sigma, delta, rho, chol, independent })
    }

    /// `d` uncorrelated assets sharing spot, volatility and dividend yield.
    pub fn symmetric(d: usize, s0: f64, r: f64, sigma: f64, delta: f64) -> Result<Self> {
        Self::new(vec![s0; d], r, vec![sigma], vec![delta], None)
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    pub fn rate(&self) -> f64 {
        self.r
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn rho(&self) -> &[Vec<f64>] {
        &self.rho
    }

    /// Returns a copy with a different spot vector.
    pub fn with_spot(&self, s0: Vec<f64>) -> Result<Self> {
        let s0 = broadcast("s0", s0, self.dim())?;
        Self::new(s0, self.r, self.sigma.clone(), self.delta.clone(), Some(self.rho.clone()))
    }

    /// Risk-neutral log drift `r - δ_i - σ_i²/2`.
    pub fn log_drift(&self, i: usize) -> f64 {
        self.r - self.delta[i] - 0.5 * self.sigma[i] * self.sigma[i]
    }

    /// Writes `L · z` into `out`.
    pub fn correlate(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        if self.independent {
            out[..d].copy_from_slice(&z[..d]);
            return;
        }
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            out[i] = row.iter().zip(z).map(|(l, z)| l * z).sum();
        }
    }

    /// Precomputes the per-asset constants of an exact step of length `dt`.
    pub fn step_kernel(&self, dt: f64) -> StepKernel {
        let d = self.dim();
        let sq = dt.sqrt();
        StepKernel {
            drift: (0..d).map(|i| self.log_drift(i) * dt).collect(),
            vol: self.sigma.iter().map(|s| s * sq).collect(),
            scratch_len: if self.independent { 0 } else { d },
        }
    }

    /// Exact GBM transition over `dt` driven by `normals` (independent N(0,1)).
    pub fn gbm_step(&self, state: &PathState, dt: f64, normals: &[f64]) -> Result<PathState> {
        if !(dt > 0.0) {
            return Err(PricingError::Argument(format!("dt must be positive, got {dt}")));
        }
        if normals.len() != self.dim() {
            return Err(PricingError::Argument(format!(
                "expected {} normal draws, got {}",
                self.dim(),
                normals.len()
            )));
        }
        let mut values = state.values.clone();
        let mut scratch = vec![0.0; self.dim()];
        self.step_kernel(dt).advance(self, &mut values, normals, &mut scratch);
        Ok(PathState { values, date_index: state.date_index + 1 })
    }

    /// Draws `S_t` conditional on `S_{t_a} = start` and `S_{t_b} = end`.
    ///
    /// In log space with the drift removed each coordinate is a correlated
    /// Brownian motion, so the conditional law is the Brownian bridge with
    /// mean the linear interpolation of the endpoints and covariance
    /// `(t - t_a)(t_b - t)/(t_b - t_a) · ρ`. The result carries `start`'s date index.
    pub fn bridge_sample(
        &self,
        start: &PathState,
        t_a: f64,
        end: &PathState,
        t_b: f64,
        t: f64,
        normals: &[f64],
    ) -> Result<PathState> {
        if !(t_a < t && t < t_b) {
            return Err(PricingError::Argument(format!(
                "bridge date {t} must lie strictly inside ({t_a}, {t_b})"
            )));
        }
        if normals.len() != self.dim() || start.values.len() != self.dim() || end.values.len() != self.dim() {
            return Err(PricingError::Argument("bridge dimension mismatch".into()));
        }
        if start.values.iter().chain(&end.values).any(|s| !(*s > 0.0)) {
            return Err(PricingError::Argument("bridge endpoints must be positive".into()));
        }
        let mut values = vec![0.0; self.dim()];
        let mut scratch = vec![0.0; self.dim()];
        self.bridge_into(&start.values, t_a, &end.values, t_b, t, normals, &mut values, &mut scratch);
        Ok(PathState { values, date_index: start.date_index })
    }

    /// Unchecked bridge used by hot loops. `t_a < t < t_b` is assumed.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn bridge_into(
        &self,
        start: &[f64],
        t_a: f64,
        end: &[f64],
        t_b: f64,
        t: f64,
        normals: &[f64],
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        let w = (t - t_a) / (t_b - t_a);
        let sd = ((t - t_a) * (t_b - t) / (t_b - t_a)).sqrt();
        self.correlate(normals, scratch);
        for i in 0..self.dim() {
            let mu = self.log_drift(i);
            let sig = self.sigma[i];
            let ya = (start[i].ln() - mu * t_a) / sig;
            let yb = (end[i].ln() - mu * t_b) / sig;
            let y = ya + w * (yb - ya) + sd * scratch[i];
            out[i] = (mu * t + sig * y).exp();
        }
    }
}

/// Per-asset constants of one exact step; built once per step length.
#[derive(Debug, Clone)]
pub struct StepKernel {
    drift: Vec<f64>,
    vol: Vec<f64>,
    scratch_len: usize,
}

impl StepKernel {
    /// Length of the scratch buffer [`StepKernel::advance`] needs.
    pub fn scratch_len(&self) -> usize {
        self.scratch_len
    }

    /// Advances `values` in place. `scratch` must hold `scratch_len()` slots.
    #[inline]
    pub fn advance(&self, params: &MarketParams, values: &mut [f64], normals: &[f64], scratch: &mut [f64]) {
        let z: &[f64] = if params.independent {
            normals
        } else {
            params.correlate(normals, scratch);
            scratch
        };
        for (i, v) in values.iter_mut().enumerate() {
            *v *= (self.drift[i] + self.vol[i] * z[i]).exp();
        }
    }

    /// Log-increment of asset `i` for a correlated shock `z_i`.
    #[inline]
    pub fn log_increment(&self, i: usize, z: f64) -> f64 {
        self.drift[i] + self.vol[i] * z
    }
}

/// Payoff family of the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayoffKind {
    /// `(max_i S_i - K)^+` on any number of assets.
    MaxCall,
    /// `(K - S)^+`, single asset.
    Put1D,
    /// `(S - K)^+`, single asset.
    Call1D,
}

impl PayoffKind {
    pub fn is_call(self) -> bool {
        !matches!(self, PayoffKind::Put1D)
    }
}

/// Bermudan contract with `exercise_dates` equally spaced dates ending at maturity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BermudanSpec {
    pub strike: f64,
    pub maturity: f64,
    pub exercise_dates: usize,
    pub payoff: PayoffKind,
}

impl BermudanSpec {
    pub fn new(strike: f64, maturity: f64, exercise_dates: usize, payoff: PayoffKind) -> Result<Self> {
        let spec = Self { strike, maturity, exercise_dates, payoff };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(invalid("strike", format!("must be positive, got {}", self.strike)));
        }
        if !(self.maturity.is_finite() && self.maturity > 0.0) {
            return Err(invalid("maturity", format!("must be positive, got {}", self.maturity)));
        }
        if self.exercise_dates == 0 {
            return Err(invalid("exercise_dates", "at least one exercise date is required"));
        }
        Ok(())
    }

    /// Checks the contract against a market.
    pub fn validate_for(&self, params: &MarketParams) -> Result<()> {
        self.validate()?;
        if matches!(self.payoff, PayoffKind::Put1D | PayoffKind::Call1D) && params.dim() != 1 {
            return Err(invalid("payoff", format!("{:?} requires one asset, market has {}", self.payoff, params.dim())));
        }
        Ok(())
    }

    /// Spacing between consecutive exercise dates.
    pub fn dt(&self) -> f64 {
        self.maturity / self.exercise_dates as f64
    }

    /// `t_m = m·T/nT`; `t_0 = 0`.
    pub fn date(&self, m: usize) -> f64 {
        if m == self.exercise_dates {
            self.maturity
        } else {
            m as f64 * self.dt()
        }
    }

    /// Immediate exercise value. `values` must match the payoff dimension.
    #[inline]
    pub fn payoff(&self, values: &[f64]) -> f64 {
        match self.payoff {
            PayoffKind::MaxCall => {
                let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (m - self.strike).max(0.0)
            }
            PayoffKind::Put1D => (self.strike - values[0]).max(0.0),
            PayoffKind::Call1D => (values[0] - self.strike).max(0.0),
        }
    }
}

/// Asset prices at an exercise date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub values: Vec<f64>,
    pub date_index: usize,
}

impl PathState {
    pub fn new(values: Vec<f64>, date_index: usize) -> Self {
        Self { values, date_index }
    }

    pub fn initial(params: &MarketParams) -> Self {
        Self { values: params.s0().to_vec(), date_index: 0 }
    }
}

/// `e^{-rt}`.
#[inline]
pub fn discount(r: f64, t: f64) -> f64 {
    (-r * t).exp()
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn validate_correlation(rho: &[Vec<f64>], d: usize) -> Result<()> {
    if rho.len() != d || rho.iter().any(|row| row.len() != d) {
        return Err(invalid("rho", format!("correlation matrix must be {d}x{d}")));
    }
    for i in 0..d {
        if (rho[i][i] - 1.0).abs() > 1e-12 {
            return Err(invalid("rho", format!("diagonal entry {i} is {}, expected 1", rho[i][i])));
        }
        for j in 0..i {
            if !rho[i][j].is_finite() || (rho[i][j] - rho[j][i]).abs() > 1e-12 {
                return Err(invalid("rho", format!("entries ({i},{j}) and ({j},{i}) differ")));
            }
            if rho[i][j].abs() > 1.0 {
                return Err(invalid("rho", format!("entry ({i},{j}) outside [-1, 1]")));
            }
        }
    }
    Ok(())
}

/// Cholesky factorization that tolerates zero pivots (semidefinite input).
fn psd_cholesky(a: &[Vec<f64>]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-12;
    let d = a.len();
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let pivot = a[j][j] - (0..j).map(|k| l[j * d + k] * l[j * d + k]).sum::<f64>();
        if pivot < -TOL {
            return Err(PricingError::NotPositiveSemidefinite { row: j, pivot: j, value: pivot });
        }
        let ljj = pivot.max(0.0).sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let s = a[i][j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            if ljj > TOL.sqrt() {
                l[i * d + j] = s / ljj;
            } else if s.abs() > 1e-9 {
                return Err(PricingError::NotPositiveSemidefinite { row: i, pivot: j, value: pivot });
            }
        }
    }
    Ok(l)
}
