//! Stratified bootstrap confidence intervals over a dataset collection.

use rand::Rng;
use rayon::prelude::*;

use super::metrics::{iqm, mean};
use crate::error::{contract, Result};
use crate::rng::derive_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Iqm,
    Mean,
}

impl Statistic {
    pub fn compute(&self, values: &[f64]) -> f64 {
        match self {
            Statistic::Iqm => iqm(values),
            Statistic::Mean => mean(values),
        }
    }
}

/// 95% (or `1 - alpha`) confidence interval via stratified bootstrapping:
/// each resample draws fold scores with replacement independently per
/// dataset, the statistic is computed on the pooled resample, and the
/// interval is the empirical `alpha/2` / `1 - alpha/2` quantile pair.
pub fn stratified_bootstrap_ci(
    per_dataset_scores: &[Vec<f64>],
    statistic: Statistic,
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if per_dataset_scores.is_empty() || per_dataset_scores.iter().any(Vec::is_empty) {
        return Err(contract("bootstrap needs at least one score per dataset"));
    }
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(contract("alpha must lie in (0, 1)"));
    }
    if n_resamples == 0 {
        return Err(contract("n_resamples must be positive"));
    }
    let total: usize = per_dataset_scores.iter().map(Vec::len).sum();
    let mut stats: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_rng(seed, "bootstrap-resample", r as u64);
            let mut pooled = Vec::with_capacity(total);
            for scores in per_dataset_scores {
                for _ in 0..scores.len() {
                    pooled.push(scores[rng.random_range(0..scores.len())]);
                }
            }
            statistic.compute(&pooled)
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((quantile_sorted(&stats, alpha / 2.0), quantile_sorted(&stats, 1.0 - alpha / 2.0)))
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
