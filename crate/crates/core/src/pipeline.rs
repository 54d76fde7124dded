//! End-to-end run: build a boundary or rule, then price under it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cmc::{build_cmc_rule, CmcBuildConfig, CmcBuildReport, CmcRule};
use crate::engine::{Engine, TaskTiming};
use crate::error::Result;
use crate::iz::{build_iz_boundary, IzBoundary, IzBuildReport, IzConfig};
use crate::market::{BermudanSpec, MarketParams};
use crate::pricer::{price_detailed, ExerciseRule, PriceEstimate, PricingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Iz,
    Cmc,
    European,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "iz" => Ok(Method::Iz),
            "cmc" => Ok(Method::Cmc),
            "european" => Ok(Method::European),
            other => Err(format!("unknown method {other:?} (expected iz, cmc or european)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub method: Method,
    pub iz: IzConfig,
    pub cmc: CmcBuildConfig,
    pub pricing: PricingConfig,
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Iz(IzBoundary),
    Cmc(CmcRule),
    European,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BuildReport {
    pub iz: Option<IzBuildReport>,
    pub cmc: Option<CmcBuildReport>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub estimate: PriceEstimate,
    pub fitted: Fitted,
    pub build: BuildReport,
    pub pricing_timings: Vec<TaskTiming>,
}

/// Builds the exercise rule with `settings.pricing.seed` and prices with the same seed.
/// Build and pricing draw from disjoint stream families.
pub fn run(params: &MarketParams, spec: &BermudanSpec, settings: &RunSettings, engine: &Engine) -> Result<RunResult> {
    spec.validate_for(params)?;
    let seed = settings.pricing.seed;
    let start = Instant::now();
    let (fitted, build, unconverged) = match settings.method {
        Method::Iz => {
            let (b, rep) = build_iz_boundary(params, spec, &settings.iz, engine, seed)?;
            if rep.unconverged_points > 0 {
                log::warn!("{} of {} boundary points did not converge", rep.unconverged_points, rep.total_points);
            }
            let n = rep.unconverged_points;
            (Fitted::Iz(b), BuildReport { iz: Some(rep), cmc: None }, n)
        }
        Method::Cmc => {
            let (r, rep) = build_cmc_rule(params, spec, &settings.cmc, engine, seed)?;
            (Fitted::Cmc(r), BuildReport { iz: None, cmc: Some(rep) }, 0)
        }
        Method::European => (Fitted::European, BuildReport::default(), 0),
    };
    let boundary_seconds = start.elapsed().as_secs_f64();
    let rule = match &fitted {
        Fitted::Iz(b) => ExerciseRule::Iz(b),
        Fitted::Cmc(r) => ExerciseRule::Cmc(r),
        Fitted::European => ExerciseRule::European,
    };
    let pr = price_detailed(params, spec, rule, settings.pricing, engine)?;
    let mut estimate = pr.estimate;
    estimate.timings.boundary_seconds = boundary_seconds;
    estimate.unconverged_points = unconverged;
    Ok(RunResult { estimate, fitted, build, pricing_timings: pr.timings })
}
