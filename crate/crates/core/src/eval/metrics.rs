//! Classification metrics: AUC (Mann-Whitney), accuracy, macro F1, and the
//! interquartile mean.

use crate::error::{contract, Result};
use crate::numerics::Tensor;

/// Binary ROC AUC via the Mann-Whitney rank statistic:
/// `(#concordant + 0.5 * #tied) / (n_pos * n_neg)`, computed with midranks.
pub fn auc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(contract("scores/labels length mismatch"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(contract("auc_binary needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));

    // midranks over tie groups, rank sum of positives
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos as f64) * (n_pos as f64 + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Macro-averaged one-vs-rest AUC over the classes present in `labels`,
/// scoring class `c` with `probs[:, c]`.
pub fn auc_multiclass(probs: &Tensor, labels: &[u32]) -> Result<f64> {
    let (n, c) = probs.dims2();
    if labels.len() != n {
        return Err(contract("probs/labels length mismatch"));
    }
    let mut present: Vec<u32> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(contract("auc_multiclass needs at least two classes present"));
    }
    if present.iter().any(|&y| y as usize >= c) {
        return Err(contract("label outside probability matrix width"));
    }
    let mut total = 0.0;
    for &cls in &present {
        let scores: Vec<f64> = (0..n).map(|i| probs.at2(i, cls as usize)).collect();
        let mask: Vec<bool> = labels.iter().map(|&y| y == cls).collect();
        total += auc_binary(&scores, &mask)?;
    }
    Ok(total / present.len() as f64)
}

/// Argmax with ties broken toward the smaller class index.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn accuracy(probs: &Tensor, labels: &[u32]) -> Result<f64> {
    let (n, _) = probs.dims2();
    if labels.len() != n || n == 0 {
        return Err(contract("probs/labels mismatch or empty"));
    }
    let correct = (0..n)
        .filter(|&i| argmax_row(probs.row(i)) == labels[i] as usize)
        .count();
    Ok(correct as f64 / n as f64)
}

/// Macro F1 over all `C` classes; a class that is never predicted and never
/// appears contributes 0.
pub fn f1_macro(probs: &Tensor, labels: &[u32]) -> Result<f64> {
    let (n, c) = probs.dims2();
    if labels.len() != n || n == 0 {
        return Err(contract("probs/labels mismatch or empty"));
    }
    let preds: Vec<usize> = (0..n).map(|i| argmax_row(probs.row(i))).collect();
    let mut total = 0.0;
    for cls in 0..c {
        let tp = (0..n).filter(|&i| preds[i] == cls && labels[i] as usize == cls).count();
        let fp = (0..n).filter(|&i| preds[i] == cls && labels[i] as usize != cls).count();
        let fne = (0..n).filter(|&i| preds[i] != cls && labels[i] as usize == cls).count();
        let denom = 2 * tp + fp + fne;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / c as f64)
}

/// Interquartile mean: drop `floor(n/4)` lowest and highest values, mean the
/// rest.
pub fn iqm(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "iqm of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let trim = sorted.len() / 4;
    let kept = &sorted[trim..sorted.len() - trim];
    kept.iter().sum::<f64>() / kept.len() as f64
}

pub fn mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "mean of an empty slice");
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n^2) pairwise oracle, including ties.
    fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            if !labels[i] {
                continue;
            }
            for j in 0..scores.len() {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    concordant += 1.0;
                } else if scores[i] == scores[j] {
                    concordant += 0.5;
                }
            }
        }
        concordant / pairs
    }

    #[test]
    fn auc_hand_case() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        assert_eq!(auc_binary(&scores, &labels).unwrap(), 0.75);
    }

    #[test]
    fn auc_perfect_and_all_ties() {
        let labels = [false, false, true, true];
        assert_eq!(auc_binary(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auc_binary(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
    }

    #[test]
    fn auc_single_class_is_error() {
        assert!(auc_binary(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            rng_state >> 33
        };
        for case in 0..200 {
            let n = 2 + (next() % 49) as usize;
            // quantized scores force plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| (next() % 8) as f64 / 8.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| next() % 2 == 0).collect();
            labels[0] = true;
            if n > 1 {
                labels[1] = false;
            }
            let got = auc_binary(&scores, &labels).unwrap();
            let want = auc_pairwise(&scores, &labels);
            assert_eq!(got, want, "case {case}: {got} vs {want}");
        }
    }

    #[test]
    fn multiclass_binary_reduction() {
        let probs = Tensor::from_rows(&[
            vec![0.9, 0.1],
            vec![0.6, 0.4],
            vec![0.2, 0.8],
            vec![0.3, 0.7],
        ]);
        let labels = [0u32, 1, 1, 0];
        let scores: Vec<f64> = (0..4).map(|i| probs.at2(i, 1)).collect();
        let mask: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        assert_eq!(
            auc_multiclass(&probs, &labels).unwrap(),
            auc_binary(&scores, &mask).unwrap()
        );
    }

    #[test]
    fn multiclass_perfect_and_uniform() {
        let probs = Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        assert_eq!(auc_multiclass(&probs, &[0, 1, 2]).unwrap(), 1.0);
        let uniform = Tensor::from_rows(&vec![vec![0.25; 4]; 6]);
        assert_eq!(auc_multiclass(&uniform, &[0, 1, 2, 3, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_and_f1_golden() {
        let all_zero = Tensor::from_rows(&vec![vec![0.8, 0.2]; 4]);
        let labels = [0u32, 0, 1, 1];
        assert_eq!(accuracy(&all_zero, &labels).unwrap(), 0.5);
        let f1 = f1_macro(&all_zero, &labels).unwrap();
        assert!((f1 - 1.0 / 3.0).abs() < 1e-15, "{f1}");

        let perfect = Tensor::from_rows(&[
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.1, 0.9],
            vec![0.2, 0.8],
        ]);
        assert_eq!(accuracy(&perfect, &labels).unwrap(), 1.0);
        assert_eq!(f1_macro(&perfect, &labels).unwrap(), 1.0);
    }

    #[test]
    fn argmax_tie_breaks_to_smaller_index() {
        assert_eq!(argmax_row(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax_row(&[0.1, 0.45, 0.45]), 1);
        let probs = Tensor::from_rows(&[vec![0.5, 0.5]]);
        assert_eq!(accuracy(&probs, &[0]).unwrap(), 1.0);
        assert_eq!(accuracy(&probs, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn iqm_golden_cases() {
        let v: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        assert_eq!(iqm(&v), 4.5);
        assert_eq!(iqm(&[0.25; 5]), 0.25);
        // floor rule: n=3 trims nothing, n=5 trims one per side
        assert!((iqm(&[0.0, 1.0, 100.0]) - 101.0 / 3.0).abs() < 1e-12);
        assert_eq!(iqm(&[0.0, 1.0, 2.0, 3.0, 100.0]), 2.0);
    }

    #[test]
    fn iqm_matches_trimmed_mean_oracle() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            ((state >> 33) as f64) / (1u64 << 31) as f64
        };
        for n in 1..=64 {
            let values: Vec<f64> = (0..n).map(|_| next()).collect();
            let got = iqm(&values);
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let t = n / 4;
            let oracle: f64 =
                sorted[t..n - t].iter().sum::<f64>() / (n - 2 * t) as f64;
            assert_eq!(got, oracle, "n={n}");
        }
    }
}
