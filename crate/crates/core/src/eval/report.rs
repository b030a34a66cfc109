//! Per-fold metric records and aggregate statistics.

use serde::{Deserialize, Serialize};

use super::bootstrap::{stratified_bootstrap_ci, Statistic};
use super::metrics::{iqm, mean};
use crate::error::Result;

/// One measured value: dataset x fold x method x metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub dataset: String,
    pub fold: u32,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// Aggregate over datasets for one (method, metric): IQM and mean of the
/// pooled fold scores, with a stratified-bootstrap confidence interval on
/// the IQM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub metric: String,
    pub iqm: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    pub fn push(&mut self, dataset: &str, fold: u32, method: &str, metric: &str, value: f64) {
        self.records.push(MetricRecord {
            dataset: dataset.into(),
            fold,
            method: method.into(),
            metric: metric.into(),
            value,
        });
    }

    /// Compute aggregates for every (method, metric) pair present, with the
    /// bootstrap stratified over datasets.
    pub fn aggregate(&mut self, n_resamples: usize, alpha: f64, seed: u64) -> Result<()> {
        let mut pairs: Vec<(String, String)> = self
            .records
            .iter()
            .map(|r| (r.method.clone(), r.metric.clone()))
            .collect();
        pairs.sort();
        pairs.dedup();
        self.aggregates.clear();
        for (method, metric) in pairs {
            let mut datasets: Vec<String> = self
                .records
                .iter()
                .filter(|r| r.method == method && r.metric == metric)
                .map(|r| r.dataset.clone())
                .collect();
            datasets.sort();
            datasets.dedup();
            let per_dataset: Vec<Vec<f64>> = datasets
                .iter()
                .map(|d| {
                    self.records
                        .iter()
                        .filter(|r| r.method == method && r.metric == metric && &r.dataset == d)
                        .map(|r| r.value)
                        .collect()
                })
                .collect();
            let pooled: Vec<f64> = per_dataset.iter().flatten().copied().collect();
            let (ci_low, ci_high) =
                stratified_bootstrap_ci(&per_dataset, Statistic::Iqm, n_resamples, alpha, seed)?;
            self.aggregates.push(Aggregate {
                method,
                metric,
                iqm: iqm(&pooled),
                mean: mean(&pooled),
                ci_low,
                ci_high,
            });
        }
        Ok(())
    }

    /// Records as CSV with the documented column set.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("dataset,fold,method,metric,value\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.dataset),
                r.fold,
                csv_field(&r.method),
                csv_field(&r.metric),
                r.value
            ));
        }
        out
    }

    pub fn aggregates_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.aggregates)
            .map_err(|e| crate::error::CoreError::Checkpoint(e.to_string()))
    }
}

/// Quote a CSV field only when it needs it.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
