//! Result writers. Every file starts with the resolved config and master seed.

use std::io::Write;
use std::path::Path;

use bermuda_core::TaskTiming;
use serde::Serialize;

use crate::config::RunConfig;
use crate::ConfigError;

#[derive(Debug, Serialize)]
pub struct Header<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
}

impl<'a> Header<'a> {
    pub fn new(command: &'a str, seed: u64, config: &'a RunConfig) -> Self {
        Self { tool: "bermuda", version: env!("CARGO_PKG_VERSION"), command, seed, config }
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(
            std::fs::File::create(p).map_err(|e| ConfigError(format!("cannot create {}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    })
}

/// Writes `{"header": ..., <body fields>}` as pretty JSON.
pub fn write_json<T: Serialize>(path: Option<&Path>, header: &Header, body: &T) -> anyhow::Result<()> {
    let mut doc = serde_json::to_value(body)?;
    let obj = doc.as_object_mut().expect("JSON body is an object");
    obj.insert("header".into(), serde_json::to_value(header)?);
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

/// CSV preceded by `#` comment lines carrying the header.
pub fn write_csv<T: Serialize>(path: Option<&Path>, header: &Header, rows: &[T]) -> anyhow::Result<()> {
    let mut out = sink(path)?;
    writeln!(out, "# {} {} {}", header.tool, header.version, header.command)?;
    writeln!(out, "# seed: {}", header.seed)?;
    writeln!(out, "# config: {}", serde_json::to_string(header.config)?)?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TimingRow<'a> {
    pub phase: &'a str,
    pub task_id: usize,
    pub seconds: f64,
    pub workers: usize,
}

pub fn timing_rows(workers: usize, timings: &[TaskTiming]) -> Vec<TimingRow<'_>> {
    timings
        .iter()
        .map(|t| TimingRow { workers, phase: &t.phase, task_id: t.task_id, seconds: t.seconds })
        .collect()
}
