//! Scaling analyses: datasets binned by a complexity proxy or by size, with
//! per-bin mean AUC reported relative to a reference method.

use crate::error::{contract, Result};

/// Mean AUC per (dataset, method) plus dataset sizes.
#[derive(Clone, Debug, Default)]
pub struct ScoreTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    pub sizes: Vec<usize>,
    /// `scores[dataset][method]`, no missing cells.
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.len() != self.scores.len() || self.datasets.len() != self.sizes.len() {
            return Err(contract("score table rows misaligned"));
        }
        if self.scores.iter().any(|row| row.len() != self.methods.len()) {
            return Err(contract("score table has missing cells"));
        }
        Ok(())
    }

    fn method_index(&self, name: &str) -> Result<usize> {
        self.methods
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| contract(format!("unknown reference method '{name}'")))
    }
}

/// One bin of the analysis: which datasets fell in it and the mean AUC of
/// each method minus the mean AUC of the reference method.
#[derive(Clone, Debug)]
pub struct BinSummary {
    pub label: String,
    pub dataset_indices: Vec<usize>,
    pub relative_mean_auc: Vec<f64>,
}

fn summarize_bins(
    table: &ScoreTable,
    assignment: Vec<Vec<usize>>,
    labels: Vec<String>,
    reference: usize,
) -> Vec<BinSummary> {
    assignment
        .into_iter()
        .zip(labels)
        .map(|(ids, label)| {
            let mut rel = vec![0.0; table.methods.len()];
            if !ids.is_empty() {
                for (m, slot) in rel.iter_mut().enumerate() {
                    let mean_m: f64 =
                        ids.iter().map(|&d| table.scores[d][m]).sum::<f64>() / ids.len() as f64;
                    let mean_ref: f64 = ids.iter().map(|&d| table.scores[d][reference]).sum::<f64>()
                        / ids.len() as f64;
                    *slot = mean_m - mean_ref;
                }
            }
            BinSummary { label, dataset_indices: ids, relative_mean_auc: rel }
        })
        .collect()
}

/// Complexity proxy per dataset: best minus worst AUC across methods.
pub fn complexity_of(table: &ScoreTable, dataset: usize) -> f64 {
    let row = &table.scores[dataset];
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Assign datasets to `n_bins` quantile bins of the complexity proxy
/// (ascending), then report per-bin mean AUC relative to `reference`.
pub fn complexity_bins(table: &ScoreTable, n_bins: usize, reference: &str) -> Result<Vec<BinSummary>> {
    table.validate()?;
    let n = table.datasets.len();
    if n_bins == 0 || n < n_bins {
        return Err(contract(format!("need at least {n_bins} datasets for {n_bins} bins")));
    }
    let reference = table.method_index(reference)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        complexity_of(table, a)
            .partial_cmp(&complexity_of(table, b))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut assignment = vec![Vec::new(); n_bins];
    for (rank, &d) in order.iter().enumerate() {
        assignment[rank * n_bins / n].push(d);
    }
    let labels = (0..n_bins).map(|b| format!("complexity-q{}", b + 1)).collect();
    Ok(summarize_bins(table, assignment, labels, reference))
}

/// Bin datasets by size thresholds: bin `i` holds sizes in
/// `[edges[i-1], edges[i])`, the last bin is unbounded above.
pub fn size_bins(table: &ScoreTable, edges: &[usize], reference: &str) -> Result<Vec<BinSummary>> {
    table.validate()?;
    let reference = table.method_index(reference)?;
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(contract("size edges must be strictly increasing"));
    }
    let n_bins = edges.len() + 1;
    let mut assignment = vec![Vec::new(); n_bins];
    for (d, &size) in table.sizes.iter().enumerate() {
        let bin = edges.iter().position(|&e| size < e).unwrap_or(edges.len());
        assignment[bin].push(d);
    }
    let mut labels = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let lo = if b == 0 { 0 } else { edges[b - 1] };
        let hi = edges.get(b).map(|e| e.to_string()).unwrap_or_else(|| "inf".into());
        labels.push(format!("size-[{lo},{hi})"));
    }
    Ok(summarize_bins(table, assignment, labels, reference))
}
