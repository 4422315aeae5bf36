//! Scenario execution: fans (sweep point, seed) jobs out across worker
//! threads, aggregates per-run reports, and writes the output tree.
//!
//! Runs are fully independent and deterministic per (point, seed); thread
//! scheduling cannot change any result, only the order work happens in.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::engine::{self, EngineParams};
use crate::report::{self, AveragedReport, RunMeta, RunReport};
use crate::scenario::{RunPoint, Scenario, ScenarioError};
use crate::types::TypeSet;
use crate::workload::Generator;

/// Results of one sweep point: all seed runs plus their average.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub label: String,
    pub qps_factor: f64,
    pub runs: Vec<RunReport>,
    pub averaged: AveragedReport,
}

#[derive(Clone, Debug)]
pub struct ScenarioResults {
    pub scenario_name: String,
    pub policy: String,
    pub strategy: String,
    pub points: Vec<PointResult>,
}

impl ScenarioResults {
    /// (label, factor, averaged) triples in axis order, as the report
    /// emitters consume them.
    pub fn summary_points(&self) -> Vec<(String, f64, AveragedReport)> {
        self.points
            .iter()
            .map(|p| (p.label.clone(), p.qps_factor, p.averaged.clone()))
            .collect()
    }
}

/// Worker thread count: `ADMISSIM_THREADS` if set, else available
/// parallelism.
pub fn worker_threads() -> usize {
    if let Ok(v) = std::env::var("ADMISSIM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Executes one (point, seed) run of a scenario.
pub fn run_point(
    scenario: &Scenario,
    types: &TypeSet,
    point: &RunPoint,
    seed: u64,
) -> Result<RunReport, ScenarioError> {
    let generator = Generator::new(&point.workload, types, scenario.query_count, seed)
        .map_err(|e| ScenarioError::Validation(e.to_string()))?;
    let policy = point
        .policy
        .build(types, scenario.p, seed)
        .map_err(|e| ScenarioError::Validation(e.to_string()))?;
    let params = EngineParams {
        p: scenario.p,
        queue_cap: scenario.queue_cap,
        warmup_queries: scenario.warmup.queries,
        warmup_min_time: scenario.warmup.min_time,
    };
    let raw = engine::run(generator, policy, params, types.len());
    let meta = RunMeta {
        scenario_id: format!("{}[{}]", scenario.name, point.label),
        seed,
        policy: point.policy.policy_name().into(),
        strategy: point.policy.strategy_name().into(),
        qps_factor: point.qps_factor,
    };
    Ok(report::aggregate(&raw, types, meta))
}

/// Runs every (point, seed) combination, in parallel up to the worker
/// thread budget, and assembles per-point averages in axis order.
pub fn execute(scenario: &Scenario, seeds: &[u64]) -> Result<ScenarioResults, ScenarioError> {
    scenario.validate()?;
    let types = scenario.type_set()?;
    let points = scenario.run_points()?;

    let jobs: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();

    let slots: Vec<Mutex<Option<Result<RunReport, ScenarioError>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next_job = AtomicUsize::new(0);
    let threads = worker_threads().min(jobs.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next_job.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (point_idx, seed) = jobs[i];
                let result = run_point(scenario, &types, &points[point_idx], seed);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut by_point: Vec<Vec<RunReport>> = vec![Vec::new(); points.len()];
    for (slot, (point_idx, _)) in slots.into_iter().zip(&jobs) {
        let report = slot.into_inner().unwrap().expect("worker finished")?;
        by_point[*point_idx].push(report);
    }

    let mut results = Vec::with_capacity(points.len());
    for (point, runs) in points.iter().zip(by_point) {
        let averaged = report::average_reports(&runs);
        results.push(PointResult {
            label: point.label.clone(),
            qps_factor: point.qps_factor,
            runs,
            averaged,
        });
    }
    Ok(ScenarioResults {
        scenario_name: scenario.name.clone(),
        policy: scenario.policy.policy_name().into(),
        strategy: scenario.policy.strategy_name().into(),
        points: results,
    })
}

/// Writes the output tree:
/// `<out>/<scenario>/<point>/run-<seed>.csv`, `<out>/<scenario>/summary.csv`
/// and `summary.txt`.
pub fn write_outputs(out_dir: &Path, results: &ScenarioResults) -> io::Result<()> {
    let scenario_dir = out_dir.join(&results.scenario_name);
    fs::create_dir_all(&scenario_dir)?;
    for point in &results.points {
        let point_dir = scenario_dir.join(&point.label);
        fs::create_dir_all(&point_dir)?;
        for run in &point.runs {
            let path = point_dir.join(format!("run-{}.csv", run.meta.seed));
            fs::write(path, report::run_csv(run))?;
        }
    }
    let summary = results.summary_points();
    fs::write(
        scenario_dir.join("summary.csv"),
        report::summary_csv(
            &results.scenario_name,
            &results.policy,
            &results.strategy,
            &summary,
        ),
    )?;
    let title = format!(
        "{} — policy {}{}{} (mean of {} run(s) per point)",
        results.scenario_name,
        results.policy,
        if results.strategy.is_empty() { "" } else { " / " },
        results.strategy,
        results.points.first().map(|p| p.runs.len()).unwrap_or(0),
    );
    fs::write(
        scenario_dir.join("summary.txt"),
        report::summary_table(&title, &summary),
    )?;
    Ok(())
}
