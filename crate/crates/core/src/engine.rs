//! Master–worker execution with static, deterministic partitioning.
//!
//! Work is cut into contiguous task ranges up front. Workers pull task ids
//! from a shared counter, but each task's output is stored by id, and
//! callers bind random streams to task ids, so merged results never depend
//! on the worker count or on scheduling.

use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PricingError, Result};

/// Balanced split of `total_items` into contiguous task ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub total_items: usize,
    pub ranges: Vec<Range<usize>>,
    pub phase: String,
}

impl TaskPlan {
    pub fn nb_tasks(&self) -> usize {
        self.ranges.len()
    }
}

/// Splits `total` items into `nb` ranges whose sizes differ by at most one.
///
/// Larger ranges come first. `nb > total` is clamped to `total`.
pub fn partition(total: usize, nb: usize, phase: impl Into<String>) -> Result<TaskPlan> {
    if total == 0 {
        return Err(invalid("total_items", "nothing to partition"));
    }
    if nb == 0 {
        return Err(invalid("nb_tasks", "at least one task is required"));
    }
    let nb = if nb > total {
        log::warn!("{nb} tasks requested for {total} items; using {total} tasks");
        total
    } else {
        nb
    };
    let (base, extra) = (total / nb, total % nb);
    let mut ranges = Vec::with_capacity(nb);
    let mut start = 0;
    for t in 0..nb {
        let len = base + usize::from(t < extra);
        ranges.push(start..start + len);
        start += len;
    }
    Ok(TaskPlan { total_items: total, ranges, phase: phase.into() })
}

/// Wall time of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub phase: String,
    pub task_id: usize,
    pub items: usize,
    pub seconds: f64,
}

/// Outputs of a run, in task-id order.
#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub results: Vec<T>,
    pub timings: Vec<TaskTiming>,
    pub wall_seconds: f64,
}

/// Summary of per-task durations, used to expose stragglers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadStats {
    pub tasks: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub total: f64,
    pub max_over_median: f64,
}

pub fn spread(timings: &[TaskTiming]) -> Option<SpreadStats> {
    if timings.is_empty() {
        return None;
    }
    let mut s: Vec<f64> = timings.iter().map(|t| t.seconds).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    Some(SpreadStats {
        tasks: n,
        min: s[0],
        median,
        max: s[n - 1],
        total: s.iter().sum(),
        max_over_median: if median > 0.0 { s[n - 1] / median } else { f64::NAN },
    })
}

/// Thread pool front end; one instance per configured worker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Engine {
    workers: usize,
}

impl Engine {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }

    /// One worker per available core.
    pub fn available() -> Self {
        Self::new(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `task(task_id, range)` for every range of `plan`.
    ///
    /// A panicking task aborts the run; remaining tasks are not started and
    /// the failing task id is reported.
    pub fn run<T, F>(&self, plan: &TaskPlan, task: F) -> Result<RunOutput<T>>
    where
        T: Send,
        F: Fn(usize, Range<usize>) -> T + Sync,
    {
        let n = plan.nb_tasks();
        let start = Instant::now();
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);

        let work = || -> std::result::Result<Vec<(usize, T, f64)>, (usize, String)> {
            let mut done = Vec::new();
            loop {
                if abort.load(Ordering::Relaxed) {
                    return Ok(done);
                }
                let id = next.fetch_add(1, Ordering::Relaxed);
                if id >= n {
                    return Ok(done);
                }
                let t0 = Instant::now();
                match catch_unwind(AssertUnwindSafe(|| task(id, plan.ranges[id].clone()))) {
                    Ok(out) => done.push((id, out, t0.elapsed().as_secs_f64())),
                    Err(payload) => {
                        abort.store(true, Ordering::Relaxed);
                        return Err((id, panic_message(payload.as_ref())));
                    }
                }
            }
        };

        let threads = self.workers.min(n);
        let per_worker: Vec<_> = if threads <= 1 {
            vec![work()]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..threads).map(|_| s.spawn(work)).collect();
                handles.into_iter().map(|h| h.join().expect("worker thread died")).collect()
            })
        };

        let mut slots: Vec<Option<(T, f64)>> = (0..n).map(|_| None).collect();
        let mut failure: Option<(usize, String)> = None;
        for outcome in per_worker {
            match outcome {
                Ok(done) => {
                    for (id, out, secs) in done {
                        slots[id] = Some((out, secs));
                    }
                }
                Err((id, msg)) => {
                    if failure.as_ref().is_none_or(|(f, _)| id < *f) {
                        failure = Some((id, msg));
                    }
                }
            }
        }
        if let Some((task_id, message)) = failure {
            return Err(PricingError::TaskFailed { task_id, phase: plan.phase.clone(), message });
        }

        let mut results = Vec::with_capacity(n);
        let mut timings = Vec::with_capacity(n);
        for (id, slot) in slots.into_iter().enumerate() {
            let (out, seconds) = slot.expect("every task ran");
            results.push(out);
            timings.push(TaskTiming { phase: plan.phase.clone(), task_id: id, items: plan.ranges[id].len(), seconds });
        }
        Ok(RunOutput { results, timings, wall_seconds: start.elapsed().as_secs_f64() })
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "task panicked".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(p: &TaskPlan) -> Vec<usize> {
        p.ranges.iter().map(|r| r.len()).collect()
    }

    #[test]
    fn partition_examples() {
        let p = partition(10, 2, "calc").unwrap();
        assert_eq!(p.ranges, vec![0..5, 5..10]);
        assert_eq!(sizes(&partition(10, 3, "calc").unwrap()), vec![4, 3, 3]);
        let clamped = partition(5, 8, "calc").unwrap();
        assert_eq!(clamped.nb_tasks(), 5);
        assert!(sizes(&clamped).iter().all(|&s| s == 1));
        assert!(partition(0, 1, "x").is_err());
        assert!(partition(1, 0, "x").is_err());
    }

    #[test]
    fn results_are_ordered_by_task_for_any_worker_count() {
        let plan = partition(1000, 37, "mc").unwrap();
        let reference = Engine::new(1).run(&plan, |id, r| (id, r.map(|i| i as u64 * 3).sum::<u64>())).unwrap();
        for w in [2, 3, 8] {
            let out = Engine::new(w).run(&plan, |id, r| (id, r.map(|i| i as u64 * 3).sum::<u64>())).unwrap();
            assert_eq!(out.results, reference.results);
            assert_eq!(out.timings.len(), 37);
            assert_eq!(out.timings.iter().map(|t| t.items).sum::<usize>(), 1000);
        }
    }

    #[test]
    fn panicking_task_aborts_with_its_id() {
        let plan = partition(10, 10, "calc").unwrap();
        for w in [1, 4] {
            let err = Engine::new(w)
                .run(&plan, |id, _| {
                    if id == 6 {
                        panic!("boom");
                    }
                    id
                })
                .unwrap_err();
            match err {
                PricingError::TaskFailed { task_id, message, .. } => {
                    assert_eq!(task_id, 6);
                    assert_eq!(message, "boom");
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn spread_reports_straggler_ratio() {
        let t = |s| TaskTiming { phase: "calc".into(), task_id: 0, items: 1, seconds: s };
        let s = spread(&[t(1.0), t(2.0), t(8.0)]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.max_over_median, 4.0);
        assert_eq!(s.total, 11.0);
        assert!(spread(&[]).is_none());
    }
}
