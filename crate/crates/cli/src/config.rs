//! Run configuration: a flat JSON document, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use bermuda_core::cmc::CmcBuildConfig;
use bermuda_core::{BermudanSpec, Engine, IzConfig, MarketParams, Method, PayoffKind, PricingConfig, RunSettings};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    pub dividend: f64,
    /// Constant pairwise correlation.
    pub rho: f64,
    pub d: usize,
    pub s0: f64,
    pub maturity: f64,
    pub exercise_dates: usize,
    pub payoff: PayoffKind,
    pub method: Method,
    pub j: usize,
    pub n1: usize,
    pub n2: usize,
    pub n_paths: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub boost_rounds: usize,
    pub glp_lo_mult: f64,
    pub glp_hi_mult: f64,
    /// Lattice steps of the `oracle` subcommand.
    pub tree_steps: usize,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub nb_tasks: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let iz = IzConfig::default();
        let cmc = CmcBuildConfig::default();
        Self {
            strike: 100.0,
            rate: 0.05,
            sigma: 0.2,
            dividend: 0.1,
            rho: 0.0,
            d: 3,
            s0: 90.0,
            maturity: 3.0,
            exercise_dates: 9,
            payoff: PayoffKind::MaxCall,
            method: Method::Iz,
            j: iz.j,
            n1: iz.n1,
            n2: cmc.n2,
            n_paths: 1_000_000,
            epsilon: iz.epsilon,
            max_iter: iz.max_iter,
            boost_rounds: cmc.boost_rounds,
            glp_lo_mult: iz.lo_mult,
            glp_hi_mult: iz.hi_mult,
            tree_steps: 5000,
            seed: None,
            workers: None,
            nb_tasks: None,
            out: None,
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub s0: Option<f64>,
    pub d: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub nb_tasks: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
    pub params: MarketParams,
    pub spec: BermudanSpec,
    pub settings: RunSettings,
    pub engine: Engine,
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("config: {e}")).into())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(s) = o.s0 {
            self.s0 = s;
        }
        if let Some(d) = o.d {
            self.d = d;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if o.nb_tasks.is_some() {
            self.nb_tasks = o.nb_tasks;
        }
        if o.out.is_some() {
            self.out.clone_from(&o.out);
        }
    }

    pub fn market(&self) -> anyhow::Result<MarketParams> {
        if self.d == 0 {
            return Err(ConfigError("d must be at least 1".into()).into());
        }
        let rho = (self.rho != 0.0).then(|| {
            (0..self.d).map(|i| (0..self.d).map(|j| if i == j { 1.0 } else { self.rho }).collect()).collect()
        });
        MarketParams::new(vec![self.s0; self.d], self.rate, vec![self.sigma], vec![self.dividend], rho)
            .map_err(|e| ConfigError(e.to_string()).into())
    }

    pub fn contract(&self) -> anyhow::Result<BermudanSpec> {
        BermudanSpec::new(self.strike, self.maturity, self.exercise_dates, self.payoff)
            .map_err(|e| ConfigError(e.to_string()).into())
    }

    pub fn settings(&self, seed: u64) -> RunSettings {
        RunSettings {
            method: self.method,
            iz: IzConfig {
                j: self.j,
                n1: self.n1,
                epsilon: self.epsilon,
                max_iter: self.max_iter,
                lo_mult: self.glp_lo_mult,
                hi_mult: self.glp_hi_mult,
                nb_tasks: self.nb_tasks,
                ..IzConfig::default()
            },
            cmc: CmcBuildConfig { n1: self.n1, n2: self.n2, boost_rounds: self.boost_rounds, nb: self.nb_tasks },
            pricing: PricingConfig { n_paths: self.n_paths, seed, nb_tasks: self.nb_tasks },
        }
    }

    /// Validates every parameter and fixes the seed. A missing seed is drawn from the clock.
    pub fn resolve(mut self) -> anyhow::Result<Resolved> {
        let seed = match self.seed {
            Some(s) => s,
            None => {
                let s = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or(0);
                eprintln!("seed: {s} (time-based)");
                s
            }
        };
        self.seed = Some(seed);
        let params = self.market()?;
        let spec = self.contract()?;
        spec.validate_for(&params).map_err(|e| ConfigError(e.to_string()))?;
        let settings = self.settings(seed);
        let check = |r: bermuda_core::Result<()>| r.map_err(|e| ConfigError(e.to_string()));
        match self.method {
            Method::Iz => check(settings.iz.validate())?,
            Method::Cmc => check(settings.cmc.validate())?,
            Method::European => {}
        }
        if self.n_paths == 0 {
            return Err(ConfigError("n_paths must be positive".into()).into());
        }
        if self.nb_tasks == Some(0) {
            return Err(ConfigError("nb_tasks must be positive".into()).into());
        }
        let engine = match self.workers {
            Some(0) => return Err(ConfigError("workers must be positive".into()).into()),
            Some(w) => Engine::new(w),
            None => Engine::available(),
        };
        Ok(Resolved { config: self, seed, params, spec, settings, engine })
    }
}
