//! Monte Carlo pricing of Bermudan options on the maximum of several assets.
//!
//! Two ways to obtain the exercise rule are provided: a per-asset boundary
//! surface found by fixed-point iteration at lattice points and fitted by
//! regression ([`iz`]), and a boosted classifier of the exercise region
//! ([`cmc`]). Both run on a deterministic parallel [`engine`], and prices do
//! not depend on the number of workers.

pub mod boosting;
pub mod cmc;
pub mod engine;
pub mod error;
pub mod iz;
pub mod lowdisc;
pub mod market;
pub mod oracle;
pub mod pipeline;
pub mod pricer;
pub mod regression;
pub mod rng;

pub use boosting::{fit_ensemble, StumpEnsemble, TrainingSet};
pub use cmc::{build_cmc_rule, CmcBuildConfig, CmcBuildReport, CmcRule};
pub use engine::{Engine, TaskTiming};
pub use error::{PricingError, Result};
pub use iz::{build_iz_boundary, IzBoundary, IzBuildReport, IzConfig};
pub use market::{BermudanSpec, MarketParams, PathState, PayoffKind};
pub use pipeline::{run, Fitted, Method, RunResult, RunSettings};
pub use pricer::{price, ExerciseRule, PriceEstimate, PricingConfig};
pub use regression::Basis;
pub use rng::{Phase, StreamKey};
