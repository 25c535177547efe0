use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_experiment, RunOutput};
use super::{Algorithm, Instance, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    /// `(seed, cumulative regret after the last episode)`, sorted by seed.
    pub final_regrets: Vec<(u64, f64)>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub summaries: Vec<AlgorithmSummary>,
    pub relex_median: Option<f64>,
    /// Best single-map baseline by median.
    pub best_baseline: Option<Algorithm>,
    pub best_baseline_median: Option<f64>,
    /// `relex_median / best_baseline_median`; 1 when both are zero.
    pub ratio: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ComparisonTable {
    pub fn from_runs(runs: &[RunOutput]) -> Self {
        let finals: Vec<(Algorithm, u64, f64)> = runs
            .iter()
            .map(|r| (r.config.algorithm, r.config.seed, r.final_cum_regret()))
            .collect();
        Self::from_finals(&finals)
    }

    /// Builds the table from `(algorithm, seed, final cumulative regret)`.
    pub fn from_finals(finals: &[(Algorithm, u64, f64)]) -> Self {
        let mut algorithms: Vec<Algorithm> = finals.iter().map(|f| f.0).collect();
        algorithms.sort();
        algorithms.dedup();
        let summaries: Vec<AlgorithmSummary> = algorithms
            .into_iter()
            .map(|alg| {
                let mut final_regrets: Vec<(u64, f64)> = finals
                    .iter()
                    .filter(|f| f.0 == alg)
                    .map(|f| (f.1, f.2))
                    .collect();
                final_regrets.sort_by_key(|p| p.0);
                let values: Vec<f64> = final_regrets.iter().map(|p| p.1).collect();
                AlgorithmSummary {
                    algorithm: alg,
                    median: median(&values),
                    final_regrets,
                }
            })
            .collect();
        let relex_median = summaries
            .iter()
            .find(|s| s.algorithm == Algorithm::Relex)
            .map(|s| s.median);
        let best = summaries
            .iter()
            .filter(|s| matches!(s.algorithm, Algorithm::Single(_)))
            .min_by(|a, b| a.median.total_cmp(&b.median));
        let ratio = match (relex_median, best) {
            (Some(r), Some(b)) if b.median > 0.0 => Some(r / b.median),
            (Some(r), Some(_)) => Some(if r == 0.0 { 1.0 } else { f64::INFINITY }),
            _ => None,
        };
        Self {
            relex_median,
            best_baseline: best.map(|b| b.algorithm),
            best_baseline_median: best.map(|b| b.median),
            ratio,
            summaries,
        }
    }

    pub fn summary(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.summaries.iter().find(|s| s.algorithm == algorithm)
    }
}

/// Runs ReLEX and each single-map learner on every seed, in parallel.
/// Runs are returned ordered by `(algorithm, seed)`.
pub fn compare_baselines(
    instance: &Instance,
    base: &RunConfig,
    seeds: &[u64],
) -> Result<(ComparisonTable, Vec<RunOutput>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let mut algorithms = vec![Algorithm::Relex];
    algorithms.extend((0..instance.class.len()).map(Algorithm::Single));
    let jobs: Vec<RunConfig> = algorithms
        .iter()
        .flat_map(|&algorithm| {
            seeds.iter().map(move |&seed| RunConfig {
                algorithm,
                seed,
                ..base.clone()
            })
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|config| run_experiment(instance, config))
        .collect::<Result<Vec<_>>>()?;
    Ok((ComparisonTable::from_runs(&runs), runs))
}
