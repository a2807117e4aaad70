use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_scenario, RunOptions, RunReport};
use super::scenario::{Scenario, ScenarioError};
use crate::interaction::Mode;

/// Aggregate over all seeds of one scenario and mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub scenario: String,
    pub mode: Mode,
    pub runs: usize,
    pub success_rate: f64,
    pub jsi_median: f64,
    pub guide_mean: f64,
    pub guide_min: f64,
    pub guide_max: f64,
    pub border_mean: f64,
    pub border_min: f64,
    pub border_max: f64,
    pub seed_mean: f64,
    pub seed_min: f64,
    pub seed_max: f64,
    pub total_mean: f64,
    pub total_min: f64,
    pub total_max: f64,
    /// RobotOnly mean total over NRS mean total for the scenario (same on both rows).
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub runs: Vec<RunReport>,
    pub rows: Vec<BatchRow>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn stats(values: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

fn aggregate(scenario: &str, mode: Mode, runs: &[&RunReport]) -> BatchRow {
    let (guide_mean, guide_min, guide_max) = stats(runs.iter().map(|r| r.timing.guide));
    let (border_mean, border_min, border_max) = stats(runs.iter().map(|r| r.timing.border));
    let (seed_mean, seed_min, seed_max) = stats(runs.iter().map(|r| r.timing.seed));
    let (total_mean, total_min, total_max) = stats(runs.iter().map(|r| r.timing.total));
    let mut jsis: Vec<f64> = runs.iter().map(|r| r.jsi.unwrap_or(0.0)).collect();
    BatchRow {
        scenario: scenario.to_string(),
        mode,
        runs: runs.len(),
        success_rate: runs.iter().filter(|r| r.success).count() as f64 / runs.len().max(1) as f64,
        jsi_median: median(&mut jsis),
        guide_mean,
        guide_min,
        guide_max,
        border_mean,
        border_min,
        border_max,
        seed_mean,
        seed_min,
        seed_max,
        total_mean,
        total_min,
        total_max,
        speedup: None,
    }
}

/// Runs every scenario × mode × seed combination in parallel and aggregates the results.
/// Seeds are `0..seeds`.
pub fn batch_report(
    scenarios: &[Scenario],
    modes: &[Mode],
    seeds: u64,
    noise_scale: f64,
) -> Result<BatchResult, ScenarioError> {
    for sc in scenarios {
        sc.validate()?;
    }
    let jobs: Vec<(usize, Mode, u64)> = (0..scenarios.len())
        .flat_map(|i| modes.iter().flat_map(move |&m| (0..seeds).map(move |s| (i, m, s))))
        .collect();
    let runs: Vec<RunReport> = jobs
        .par_iter()
        .map(|&(i, mode, seed)| {
            let opts = RunOptions {
                mode,
                seed,
                noise_scale,
            };
            run_scenario(&scenarios[i], opts).map(|a| a.report)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for sc in scenarios {
        let start = rows.len();
        for &mode in modes {
            let subset: Vec<&RunReport> = runs
                .iter()
                .filter(|r| r.scenario == sc.name && r.mode == mode)
                .collect();
            rows.push(aggregate(&sc.name, mode, &subset));
        }
        let mean_of = |m: Mode| {
            rows[start..]
                .iter()
                .find(|r: &&BatchRow| r.mode == m)
                .map(|r| r.total_mean)
        };
        if let (Some(ro), Some(nrs)) = (mean_of(Mode::RobotOnly), mean_of(Mode::Nrs)) {
            let speedup = ro / nrs;
            for row in &mut rows[start..] {
                row.speedup = Some(speedup);
            }
        }
    }
    Ok(BatchResult { runs, rows })
}
