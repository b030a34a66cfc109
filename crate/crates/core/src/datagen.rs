//! Synthetic task generation and dataset splitting.
//!
//! Two generators: random-MLP tasks that the prior-fitting stream draws
//! from, and the concentric-circles family whose ring count dials task
//! complexity. Both are pure functions of (config, seed).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Splits};
use crate::error::{contract, CoreError, Result};
use crate::numerics::{linalg, Tensor};
use crate::rng::derive_rng;

/// Inclusive sampling ranges for the random-network prior.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub dims: (usize, usize),
    pub depth: (usize, usize),
    pub width: (usize, usize),
    pub classes: (usize, usize),
    pub size: (usize, usize),
    pub noise_scale: f64,
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("dims", self.dims),
            ("depth", self.depth),
            ("width", self.width),
            ("classes", self.classes),
            ("size", self.size),
        ] {
            if lo == 0 || lo > hi {
                return Err(contract(format!("prior range {name} = [{lo},{hi}] is empty")));
            }
        }
        if self.classes.0 < 2 {
            return Err(contract("prior class count must be at least 2"));
        }
        Ok(())
    }

    /// Pin the dataset size, leaving the other ranges untouched.
    pub fn with_size(&self, n: usize) -> PriorConfig {
        let mut c = self.clone();
        c.size = (n, n);
        c
    }
}

fn sample_range(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// One task from the random-network prior.
///
/// Features are standard normal; labels come from pushing the features
/// through a randomly initialized tanh MLP, adding Gaussian noise to one
/// output unit, and binning the values into balanced classes by empirical
/// quantiles. Degenerate draws (all outputs identical) resample with the
/// next seed.
pub fn gen_prior_task(config: &PriorConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut attempt = seed;
    loop {
        if let Some(ds) = try_prior_task(config, attempt)? {
            return Ok(ds);
        }
        attempt = attempt.wrapping_add(1);
    }
}

fn try_prior_task(config: &PriorConfig, seed: u64) -> Result<Option<Dataset>> {
    let mut rng = derive_rng(seed, "prior-task", 0);
    let d = sample_range(&mut rng, config.dims);
    let depth = sample_range(&mut rng, config.depth);
    let width = sample_range(&mut rng, config.width);
    let c = sample_range(&mut rng, config.classes);
    let n = sample_range(&mut rng, config.size);
    if n < c {
        return Err(contract(format!("task size {n} smaller than class count {c}")));
    }

    let x = Tensor::new(
        vec![n, d],
        (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
    );

    // Random tanh MLP, weights N(0, 1/fan_in), final linear layer to one unit.
    let mut h = x.clone();
    let mut fan_in = d;
    for _ in 0..depth {
        h = mlp_layer(&mut rng, &h, fan_in, width, true);
        fan_in = width;
    }
    let out = mlp_layer(&mut rng, &h, fan_in, 1, false);
    let mut y: Vec<f64> = out.data().to_vec();

    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo < 1e-12 {
        return Ok(None); // degenerate binning; caller resamples
    }

    let mean = y.iter().sum::<f64>() / n as f64;
    let std = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    for v in y.iter_mut() {
        *v += config.noise_scale * std * rng.sample::<f64, _>(StandardNormal);
    }

    // Quantile binning by rank, ties broken by row index: class counts stay
    // within one of n/C.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap().then(a.cmp(&b)));
    let mut labels = vec![0u32; n];
    for (rank, &row) in order.iter().enumerate() {
        labels[row] = ((rank * c) / n) as u32;
    }

    let ds = Dataset::new(
        format!("prior-{seed}"),
        x,
        labels,
        vec![false; d],
        c,
    )?;
    Ok(Some(ds))
}

fn mlp_layer(rng: &mut impl Rng, x: &Tensor, fan_in: usize, fan_out: usize, tanh: bool) -> Tensor {
    let std = (1.0 / fan_in as f64).sqrt();
    let w = Tensor::new(
        vec![fan_in, fan_out],
        (0..fan_in * fan_out).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
    );
    let b: Vec<f64> = (0..fan_out).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut out = linalg::matmul(x, &w);
    let (n, _) = out.dims2();
    for i in 0..n {
        for (slot, bv) in out.row_mut(i).iter_mut().zip(&b) {
            *slot += bv;
            if tanh {
                *slot = slot.tanh();
            }
        }
    }
    out
}

/// Concentric circles: `2*pairs` rings with radii `(j+1)/(2*pairs)`, ring
/// `j` labelled `j mod 2`, uniform angles, radius perturbed by
/// `N(0, noise_std^2)`. Points split equally across rings, remainder to the
/// inner rings.
pub fn gen_circles(n: usize, pairs: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if pairs < 1 {
        return Err(contract("pairs must be at least 1"));
    }
    if n < 4 * pairs {
        return Err(contract(format!("n={n} too small for {pairs} pairs (need >= {})", 4 * pairs)));
    }
    let rings = 2 * pairs;
    let base = n / rings;
    let rem = n % rings;
    let mut rng = derive_rng(seed, "circles", 0);
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for j in 0..rings {
        let r_j = (j as f64 + 1.0) / (2.0 * pairs as f64);
        let count = base + usize::from(j < rem);
        for _ in 0..count {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let r = r_j + noise_std * rng.sample::<f64, _>(StandardNormal);
            data.push(r * theta.cos());
            data.push(r * theta.sin());
            labels.push((j % 2) as u32);
        }
    }
    Dataset::new(
        format!("circles-p{pairs}-{seed}"),
        Tensor::new(vec![n, 2], data),
        labels,
        vec![false, false],
        2,
    )
}

/// Stratified 80:10:10 split.
pub fn split_dataset(ds: &Dataset, seed: u64) -> Result<Splits> {
    split_dataset_with(ds, 0.1, 0.1, seed)
}

/// Stratified split with the given validation/test fractions. Every class
/// appears in every split or the split fails, naming the offending class.
pub fn split_dataset_with(ds: &Dataset, val_frac: f64, test_frac: f64, seed: u64) -> Result<Splits> {
    let n = ds.len();
    let k = ds.n_classes;
    let n_val = (n as f64 * val_frac).round() as usize;
    let n_test = (n as f64 * test_frac).round() as usize;
    if n_val < k || n_test < k || n - n_val - n_test < k {
        return Err(CoreError::DataRejected(format!(
            "dataset {} too small to cover {k} classes in every split (n={n})",
            ds.name
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    for (c, rows) in by_class.iter().enumerate() {
        if rows.len() < 3 {
            return Err(CoreError::DataRejected(format!(
                "class {c} has only {} rows; it cannot appear in train, validation and test",
                rows.len()
            )));
        }
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();

    let val_caps: Vec<usize> = counts.iter().map(|&c| c - 2).collect();
    let val_alloc = allocate_proportional(&counts, n_val, &val_caps)?;
    let test_caps: Vec<usize> = counts
        .iter()
        .zip(&val_alloc)
        .map(|(&c, &v)| c - v - 1)
        .collect();
    let test_alloc = allocate_proportional(&counts, n_test, &test_caps)?;

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for c in 0..k {
        let mut rows = by_class[c].clone();
        let mut rng = derive_rng(seed, "split", c as u64);
        rows.shuffle(&mut rng);
        let (v, rest) = rows.split_at(val_alloc[c]);
        let (t, tr) = rest.split_at(test_alloc[c]);
        val.extend_from_slice(v);
        test.extend_from_slice(t);
        train.extend_from_slice(tr);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits { train, val, test })
}

/// Distribute `total` slots across classes proportionally to `counts`, at
/// least one per class, at most `caps[c]` per class. Deterministic: residual
/// slots go to the largest fractional remainders, ties to the smaller class
/// index.
fn allocate_proportional(counts: &[usize], total: usize, caps: &[usize]) -> Result<Vec<usize>> {
    let k = counts.len();
    let n: usize = counts.iter().sum();
    if total < k {
        return Err(CoreError::DataRejected(format!(
            "cannot place {k} classes into a split of {total} rows"
        )));
    }
    if caps.iter().sum::<usize>() < total {
        return Err(CoreError::DataRejected("split fractions exceed class capacities".into()));
    }
    let quota: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quota
        .iter()
        .zip(caps)
        .map(|(&q, &cap)| (q.floor() as usize).clamp(1, cap))
        .collect();
    loop {
        let s: usize = alloc.iter().sum();
        match s.cmp(&total) {
            std::cmp::Ordering::Equal => break,
            std::cmp::Ordering::Less => {
                // most underfilled class that still has capacity
                let c = (0..k)
                    .filter(|&c| alloc[c] < caps[c])
                    .max_by(|&a, &b| {
                        (quota[a] - alloc[a] as f64)
                            .partial_cmp(&(quota[b] - alloc[b] as f64))
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .ok_or_else(|| CoreError::DataRejected("no split capacity left".into()))?;
                alloc[c] += 1;
            }
            std::cmp::Ordering::Greater => {
                // most overfilled class that can still give one up
                let c = (0..k)
                    .filter(|&c| alloc[c] > 1)
                    .min_by(|&a, &b| {
                        (quota[a] - alloc[a] as f64)
                            .partial_cmp(&(quota[b] - alloc[b] as f64))
                            .unwrap()
                            .then(b.cmp(&a))
                    })
                    .ok_or_else(|| CoreError::DataRejected("split minimums exceed total".into()))?;
                alloc[c] -= 1;
            }
        }
    }
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_prior() -> PriorConfig {
        PriorConfig {
            dims: (2, 20),
            depth: (1, 4),
            width: (4, 64),
            classes: (2, 10),
            size: (64, 576),
            noise_scale: 0.1,
        }
    }

    #[test]
    fn prior_task_deterministic_and_balanced() {
        let cfg = default_prior();
        let a = gen_prior_task(&cfg, 42).unwrap();
        let b = gen_prior_task(&cfg, 42).unwrap();
        assert_eq!(a.features.data(), b.features.data());
        assert_eq!(a.labels, b.labels);

        for seed in 0..30 {
            let ds = gen_prior_task(&cfg, seed).unwrap();
            let c = ds.n_classes;
            assert!((2..=10).contains(&c));
            let mut counts = vec![0usize; c];
            for &y in &ds.labels {
                counts[y as usize] += 1;
            }
            let n = ds.len();
            let target = n as f64 / c as f64;
            for (cls, &cnt) in counts.iter().enumerate() {
                assert!(cnt > 0, "class {cls} empty");
                assert!(
                    (cnt as f64 - target).abs() <= 1.0,
                    "class {cls} count {cnt} vs target {target}"
                );
                // near-uniform share
                assert!(cnt as f64 / n as f64 <= 1.0 / c as f64 + 2.0 / n as f64);
            }
        }
    }

    #[test]
    fn circles_clean_pair_geometry() {
        let ds = gen_circles(8, 1, 0.0, 1).unwrap();
        assert_eq!(ds.n_classes, 2);
        for (i, &y) in ds.labels.iter().enumerate() {
            let (x0, x1) = (ds.features.at2(i, 0), ds.features.at2(i, 1));
            let r = (x0 * x0 + x1 * x1).sqrt();
            let expect = if y == 0 { 0.5 } else { 1.0 };
            assert!((r - expect).abs() < 1e-12, "ring radius {r} label {y}");
        }
    }

    #[test]
    fn circles_fig_configuration_and_counts() {
        let pairs = 3;
        let ds = gen_circles(1000, pairs, 0.01, 7).unwrap();
        let mut counts = [0usize; 2];
        for &y in &ds.labels {
            counts[y as usize] += 1;
        }
        // rings alternate labels; per-class counts differ by at most `pairs`
        assert!(counts[0].abs_diff(counts[1]) <= pairs);
        // 6 distinct rings
        let mut radii: Vec<f64> = (0..ds.len())
            .map(|i| {
                let (a, b) = (ds.features.at2(i, 0), ds.features.at2(i, 1));
                (a * a + b * b).sqrt()
            })
            .collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(radii[0] > 0.1 && *radii.last().unwrap() < 1.1);
    }

    #[test]
    fn circles_noiseless_rings_are_nn_separable() {
        // 1-NN train->test accuracy is exact when rings are clean.
        for pairs in [1, 3] {
            let train = gen_circles(1000, pairs, 0.0, 11).unwrap();
            let test = gen_circles(1000, pairs, 0.0, 13).unwrap();
            let mut correct = 0;
            for i in 0..test.len() {
                let q = test.features.row(i);
                let mut best = (f64::INFINITY, 0u32);
                for j in 0..train.len() {
                    let t = train.features.row(j);
                    let d = (q[0] - t[0]).powi(2) + (q[1] - t[1]).powi(2);
                    if d < best.0 {
                        best = (d, train.labels[j]);
                    }
                }
                if best.1 == test.labels[i] {
                    correct += 1;
                }
            }
            assert_eq!(correct, test.len(), "pairs={pairs}");
        }
    }

    #[test]
    fn split_sizes_and_coverage() {
        let ds = gen_prior_task(&default_prior().with_size(100), 5).unwrap();
        let s = split_dataset(&ds, 3).unwrap();
        assert_eq!(s.train.len(), 80);
        assert_eq!(s.val.len(), 10);
        assert_eq!(s.test.len(), 10);
        for part in [&s.train, &s.val, &s.test] {
            let mut seen = vec![false; ds.n_classes];
            for &i in part.iter() {
                seen[ds.labels[i] as usize] = true;
            }
            assert!(seen.iter().all(|&b| b), "class missing from a split");
        }
        // disjoint and exhaustive
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let s2 = split_dataset(&ds, 3).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn split_rejects_uncoverable_class() {
        let features = Tensor::new(vec![30, 1], (0..30).map(|i| i as f64).collect());
        let mut labels = vec![0u32; 30];
        labels[0] = 1;
        labels[1] = 1; // class 1 has two rows: cannot appear in all three splits
        let ds = Dataset::new("tiny", features, labels, vec![false], 2).unwrap();
        let err = split_dataset(&ds, 0).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }
}
