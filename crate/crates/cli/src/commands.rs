use std::path::Path;

use anyhow::Context;
use bermuda_core::oracle::{bs_european, crr_price, extract_exercise_threshold, TreeSpec};
use bermuda_core::pipeline::BuildReport;
use bermuda_core::{run, BermudanSpec, Engine, Method, PayoffKind, PriceEstimate, RunResult, TaskTiming};
use serde::Serialize;

use crate::config::{Resolved, RunConfig};
use crate::output::{timing_rows, write_csv, write_json, Header, TimingRow};
use crate::{ConfigError, DeterminismError};

/// Three-asset max-call reference values by spot.
const BINOMIAL: [(f64, f64); 3] = [(90.0, 11.29), (100.0, 18.69), (110.0, 27.58)];

fn numerical(e: bermuda_core::PricingError) -> anyhow::Error {
    anyhow::Error::new(e).context("numerical failure")
}

fn execute(r: &Resolved, engine: &Engine) -> anyhow::Result<RunResult> {
    let result = run(&r.params, &r.spec, &r.settings, engine).map_err(numerical)?;
    if !result.estimate.price.is_finite() {
        return Err(numerical(bermuda_core::PricingError::Argument(format!(
            "non-finite price {}",
            result.estimate.price
        ))));
    }
    Ok(result)
}

fn summarize(label: &str, e: &PriceEstimate) {
    eprintln!(
        "{label}: price {:.4} +/- {:.4} (variance {:.3}, N {}), boundary {:.2}s, pricing {:.2}s",
        e.price, e.ci95, e.variance, e.n_paths, e.timings.boundary_seconds, e.timings.pricing_seconds
    );
}

fn build_timings(build: &BuildReport) -> &[TaskTiming] {
    match (&build.iz, &build.cmc) {
        (Some(iz), _) => &iz.task_timings,
        (_, Some(cmc)) => &cmc.task_timings,
        _ => &[],
    }
}

#[derive(Serialize)]
struct PriceDoc<'a> {
    estimate: &'a PriceEstimate,
    build: &'a BuildReport,
    warnings: Vec<String>,
}

pub fn price(r: Resolved, timings: Option<&Path>) -> anyhow::Result<()> {
    let result = execute(&r, &r.engine)?;
    let e = &result.estimate;
    let mut warnings = Vec::new();
    if e.unconverged_points > 0 {
        let total = result.build.iz.as_ref().map_or(0, |b| b.total_points);
        warnings.push(format!("{} of {total} boundary points did not converge", e.unconverged_points));
    }
    if let Some(cmc) = &result.build.cmc {
        for d in cmc.dates.iter().filter(|d| d.one_class) {
            warnings.push(format!("date {}: training labels are one-class", d.date_index));
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    summarize(&format!("{} S0={}", e.rule_kind, r.config.s0), e);
    let header = Header::new("price", r.seed, &r.config);
    write_json(r.config.out.as_deref(), &header, &PriceDoc { estimate: e, build: &result.build, warnings })?;
    if let Some(path) = timings {
        let workers = r.engine.workers();
        let mut rows = timing_rows(workers, build_timings(&result.build));
        rows.extend(timing_rows(workers, &result.pricing_timings));
        write_csv(Some(path), &header, &rows)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum TableId {
    IzPrices,
    CmcPrices,
    ImpactJ,
    ImpactN1,
}

#[derive(Serialize)]
struct SpotRow {
    s0: f64,
    price: f64,
    variance: f64,
    ci95: f64,
    binomial: f64,
    error: f64,
    seconds: f64,
}

#[derive(Serialize)]
struct JRow {
    j: usize,
    price: f64,
    seconds: f64,
    error: f64,
    variance: f64,
    ci95: f64,
}

#[derive(Serialize)]
struct N1Row {
    n1: usize,
    price: f64,
    seconds: f64,
    error: f64,
    variance: f64,
    ci95: f64,
}

fn total_seconds(e: &PriceEstimate) -> f64 {
    e.timings.boundary_seconds + e.timings.pricing_seconds
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

/// Reruns one of the reference experiments with `N`, `N1`, `N2` multiplied by `scale`.
/// The binomial column refers to the default three-asset contract.
pub fn table(base: RunConfig, id: TableId, scale: f64) -> anyhow::Result<()> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(ConfigError(format!("scale must lie in (0, 1], got {scale}")).into());
    }
    let mut cfg = base;
    cfg.n_paths = scaled(cfg.n_paths, scale);
    cfg.n1 = scaled(cfg.n1, scale);
    cfg.n2 = scaled(cfg.n2, scale);
    let out = cfg.out.clone();
    let header_cfg = cfg.clone().resolve()?;
    let seed = header_cfg.seed;
    cfg.seed = Some(seed);
    let header = Header::new("table", seed, &header_cfg.config);
    let one = |c: RunConfig, label: String| -> anyhow::Result<PriceEstimate> {
        let r = c.resolve()?;
        let e = execute(&r, &r.engine)?.estimate;
        summarize(&label, &e);
        Ok(e)
    };
    match id {
        TableId::IzPrices | TableId::CmcPrices => {
            let method = if id == TableId::IzPrices { Method::Iz } else { Method::Cmc };
            let mut rows = Vec::new();
            for (s0, binomial) in BINOMIAL {
                let e = one(RunConfig { method, s0, ..cfg.clone() }, format!("S0={s0}"))?;
                rows.push(SpotRow {
                    s0,
                    price: e.price,
                    variance: e.variance,
                    ci95: e.ci95,
                    binomial,
                    error: (e.price - binomial).abs(),
                    seconds: total_seconds(&e),
                });
            }
            write_csv(out.as_deref(), &header, &rows)
        }
        TableId::ImpactJ => {
            let mut rows = Vec::new();
            for j in [128, 256, 1024] {
                let e = one(RunConfig { method: Method::Iz, s0: 90.0, j, ..cfg.clone() }, format!("J={j}"))?;
                rows.push(JRow {
                    j,
                    price: e.price,
                    seconds: total_seconds(&e),
                    error: (e.price - BINOMIAL[0].1).abs(),
                    variance: e.variance,
                    ci95: e.ci95,
                });
            }
            write_csv(out.as_deref(), &header, &rows)
        }
        TableId::ImpactN1 => {
            let mut rows = Vec::new();
            for n1 in [5000, 10_000, 100_000].map(|n| scaled(n, scale)) {
                let e = one(RunConfig { method: Method::Iz, s0: 90.0, n1, ..cfg.clone() }, format!("N1={n1}"))?;
                rows.push(N1Row {
                    n1,
                    price: e.price,
                    seconds: total_seconds(&e),
                    error: (e.price - BINOMIAL[0].1).abs(),
                    variance: e.variance,
                    ci95: e.ci95,
                });
            }
            write_csv(out.as_deref(), &header, &rows)
        }
    }
}

#[derive(Serialize)]
struct BenchRow {
    method: Method,
    workers: usize,
    phase: &'static str,
    seconds: f64,
    speedup: f64,
    price: f64,
}

fn phases(result: &RunResult) -> Vec<(&'static str, f64)> {
    let mc = ("mc", result.estimate.timings.pricing_seconds);
    match (&result.build.iz, &result.build.cmc) {
        (Some(iz), _) => vec![("glp", iz.glp_seconds), ("calc", iz.calc_seconds), ("reg", iz.reg_seconds), mc],
        (_, Some(cmc)) => vec![("calc", cmc.calc_seconds), ("class", cmc.class_seconds), mc],
        _ => vec![mc],
    }
}

/// Runs every phase at each worker count; prices must agree bit for bit.
pub fn bench(r: Resolved, workers: &[usize], timings: Option<&Path>) -> anyhow::Result<()> {
    if workers.is_empty() || workers.contains(&0) {
        return Err(ConfigError("workers list must be nonempty and positive".into()).into());
    }
    let mut runs = Vec::new();
    for &w in workers {
        let result = execute(&r, &Engine::new(w))?;
        summarize(&format!("{} workers={w}", result.estimate.rule_kind), &result.estimate);
        if let Some(iz) = &result.build.iz {
            let its = iz.boundaries.iter().flat_map(|b| b.iterations.iter().copied());
            let (lo, hi) = its.fold((usize::MAX, 0), |(lo, hi), n| (lo.min(n), hi.max(n)));
            eprintln!("  iterations per point: {lo}..{hi}, histogram {:?}", iz.iteration_histogram());
        }
        runs.push((w, result));
    }
    let base = phases(&runs[0].1);
    let mut rows = Vec::new();
    for (w, result) in &runs {
        for ((phase, secs), (_, base_secs)) in phases(result).into_iter().zip(&base) {
            rows.push(BenchRow {
                method: r.config.method,
                workers: *w,
                phase,
                seconds: secs,
                speedup: base_secs / secs,
                price: result.estimate.price,
            });
        }
    }
    let header = Header::new("bench", r.seed, &r.config);
    write_csv(r.config.out.as_deref(), &header, &rows)?;
    if let Some(path) = timings {
        let mut all: Vec<TimingRow> = Vec::new();
        for (w, result) in &runs {
            all.extend(timing_rows(*w, build_timings(&result.build)));
            all.extend(timing_rows(*w, &result.pricing_timings));
        }
        write_csv(Some(path), &header, &all)?;
    }
    let reference = runs[0].1.estimate.price;
    if let Some((w, bad)) = runs.iter().find(|(_, x)| x.estimate.price.to_bits() != reference.to_bits()) {
        return Err(DeterminismError(format!(
            "price with {w} workers is {} but {} with {} workers",
            bad.estimate.price, reference, runs[0].0
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct Threshold {
    date_index: usize,
    time: f64,
    threshold: Option<f64>,
}

#[derive(Serialize)]
struct OracleDoc {
    tree_steps: usize,
    bermudan_tree: f64,
    european_tree: f64,
    american_tree: f64,
    bs_european: f64,
    thresholds: Vec<Threshold>,
}

/// Single-asset lattice references for the configured contract.
pub fn oracle(r: Resolved) -> anyhow::Result<()> {
    if r.params.dim() != 1 {
        return Err(ConfigError(format!("oracle needs d = 1, got d = {} (pass --d 1)", r.params.dim())).into());
    }
    let spec = match r.spec.payoff {
        PayoffKind::MaxCall => BermudanSpec { payoff: PayoffKind::Call1D, ..r.spec },
        _ => r.spec,
    };
    let n = r.config.tree_steps;
    let tree = TreeSpec::bermudan(n, spec.exercise_dates);
    let berm = crr_price(&r.params, &spec, &tree).map_err(|e| ConfigError(e.to_string()))?;
    let eur = crr_price(&r.params, &spec, &TreeSpec::european(berm.steps)).map_err(numerical)?;
    let amer = crr_price(&r.params, &spec, &TreeSpec::american(berm.steps)).map_err(numerical)?;
    let per = berm.steps / spec.exercise_dates;
    let thresholds = (1..=spec.exercise_dates)
        .map(|m| {
            Ok(Threshold {
                date_index: m,
                time: spec.date(m),
                threshold: extract_exercise_threshold(&berm, m * per).map_err(numerical)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let doc = OracleDoc {
        tree_steps: berm.steps,
        bermudan_tree: berm.price,
        european_tree: eur.price,
        american_tree: amer.price,
        bs_european: bs_european(&r.params, &spec).map_err(numerical)?,
        thresholds,
    };
    eprintln!(
        "oracle S0={}: bermudan {:.4}, european {:.4} (closed form {:.4}), american {:.4}, {} steps",
        r.config.s0, doc.bermudan_tree, doc.european_tree, doc.bs_european, doc.american_tree, doc.tree_steps
    );
    write_json(r.config.out.as_deref(), &Header::new("oracle", r.seed, &r.config), &doc).context("writing oracle output")
}
