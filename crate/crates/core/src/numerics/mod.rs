//! Dense tensors, the autodiff tape, AdamW, and gradient checking.

pub mod adamw;
pub mod gradcheck;
pub mod linalg;
pub mod tape;
pub mod tensor;

pub use adamw::{AdamWConfig, AdamWState};
pub use gradcheck::grad_check;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{BitMatrix, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
        Tensor::new(
            shape.to_vec(),
            (0..shape.iter().product()).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
        )
    }

    #[test]
    fn affine_identity_weights() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let w = t.leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let b = t.leaf(Tensor::new(vec![2], vec![0.0, 0.0]));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_zero_weights_pass_bias() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let w = t.leaf(Tensor::zeros(&[2, 2]));
        let b = t.leaf(Tensor::new(vec![2], vec![3.0, 4.0]));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_hand_product() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let w = t.leaf(Tensor::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]));
        let b = t.leaf(Tensor::zeros(&[2]));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 3.0]);
    }

    #[test]
    fn affine_shape_mismatch_is_contract_violation() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[1, 3]));
        let w = t.leaf(Tensor::zeros(&[2, 2]));
        let b = t.leaf(Tensor::zeros(&[2]));
        assert!(t.affine(x, w, b).is_err());
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_rows(&[vec![0.0, 0.0]]));
        let sa = t.softmax_rows(a).unwrap();
        assert_eq!(t.value(sa).data(), &[0.5, 0.5]);

        let b = t.leaf(Tensor::from_rows(&[vec![1000.0, 1000.0]]));
        let sb = t.softmax_rows(b).unwrap();
        assert_eq!(t.value(sb).data(), &[0.5, 0.5]);

        let c = t.leaf(Tensor::from_rows(&[vec![2.0f64.ln(), 0.0]]));
        let sc = t.softmax_rows(c).unwrap();
        assert!((t.value(sc).data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.value(sc).data()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one_up_to_1e3_magnitude() {
        for seed in 0..20 {
            let mut rng = derive_rng(seed, "softmax-prop", 0);
            let n = rng.random_range(1..6);
            let c = rng.random_range(2..9);
            let x = Tensor::new(
                vec![n, c],
                (0..n * c).map(|_| rng.random_range(-1e3..1e3)).collect(),
            );
            let mut t = Tape::new();
            let v = t.leaf(x);
            let s = t.softmax_rows(v).unwrap();
            for i in 0..n {
                let sum: f64 = t.value(s).row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "row sum {sum}");
                assert!(t.value(s).row(i).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![5.0, 5.0, 5.0, 5.0]]));
        let g = t.leaf(Tensor::new(vec![4], vec![1.0; 4]));
        let s = t.leaf(Tensor::zeros(&[4]));
        let y = t.layer_norm(x, g, s).unwrap();
        assert!(t.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_unit_variance_row_passes_through() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1.0, -1.0]]));
        let g = t.leaf(Tensor::new(vec![2], vec![1.0, 1.0]));
        let s = t.leaf(Tensor::zeros(&[2]));
        let y = t.layer_norm(x, g, s).unwrap();
        // epsilon 1e-5 inside the sqrt, so the row comes out a hair under unit.
        assert!((t.value(y).data()[0] - 1.0).abs() < 1e-4);
        assert!((t.value(y).data()[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_zero_gain_gives_constant_shift() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![0.3, 9.0, -4.0]]));
        let g = t.leaf(Tensor::zeros(&[3]));
        let s = t.leaf(Tensor::new(vec![3], vec![7.5; 3]));
        let y = t.layer_norm(x, g, s).unwrap();
        assert!(t.value(y).data().iter().all(|&v| v == 7.5));
    }

    #[test]
    fn layer_norm_row_stats_normalized() {
        let mut rng = derive_rng(3, "ln-stats", 0);
        let x = randn(&mut rng, &[4, 32], 3.0);
        let mut t = Tape::new();
        let xv = t.leaf(x);
        let g = t.leaf(Tensor::new(vec![32], vec![1.0; 32]));
        let s = t.leaf(Tensor::zeros(&[32]));
        let y = t.layer_norm(xv, g, s).unwrap();
        for i in 0..4 {
            let row = t.value(y).row(i);
            let mean: f64 = row.iter().sum::<f64>() / 32.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-10, "mean {mean}");
            // variance is var/(var+eps) with eps=1e-5
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn attention_identity_mask_returns_value_rows() {
        let mut rng = derive_rng(11, "attn-id", 0);
        let l = 5;
        let d = 8;
        let q = randn(&mut rng, &[l, d], 1.0);
        let k = randn(&mut rng, &[l, d], 1.0);
        let v = randn(&mut rng, &[l, d], 1.0);
        let mut t = Tape::new();
        let (qv, kv, vv) = (t.leaf(q), t.leaf(k), t.leaf(v.clone()));
        let out = t.masked_attention(qv, kv, vv, &BitMatrix::identity(l), 2).unwrap();
        assert_eq!(t.value(out).data(), v.data());
    }

    #[test]
    fn attention_single_target_copies_value_row() {
        let mut rng = derive_rng(12, "attn-single", 0);
        let q = randn(&mut rng, &[2, 4], 1.0);
        let k = randn(&mut rng, &[2, 4], 1.0);
        let v = randn(&mut rng, &[2, 4], 1.0);
        let mut mask = BitMatrix::new(2, 2);
        mask.set(0, 0, true); // row 0 attends to itself
        mask.set(1, 0, true); // row 1 attends only to row 0
        let mut t = Tape::new();
        let (qv, kv, vv) = (t.leaf(q), t.leaf(k), t.leaf(v.clone()));
        let out = t.masked_attention(qv, kv, vv, &mask, 1).unwrap();
        assert_eq!(t.value(out).row(1), v.row(0));
    }

    #[test]
    fn attention_masked_rows_cannot_influence_output_bitwise() {
        let mut rng = derive_rng(13, "attn-mask", 0);
        let l = 6;
        let d = 8;
        let q = randn(&mut rng, &[l, d], 1.0);
        let k = randn(&mut rng, &[l, d], 1.0);
        let v = randn(&mut rng, &[l, d], 1.0);
        let mask = BitMatrix::context_block(l, 4); // rows 4,5 are masked out as targets

        let run = |q: &Tensor, k: &Tensor, v: &Tensor| {
            let mut t = Tape::new();
            let (qv, kv, vv) = (t.leaf(q.clone()), t.leaf(k.clone()), t.leaf(v.clone()));
            let out = t.masked_attention(qv, kv, vv, &mask, 2).unwrap();
            t.value(out).clone()
        };
        let base = run(&q, &k, &v);
        let mut k2 = k.clone();
        let mut v2 = v.clone();
        for j in 0..d {
            k2.row_mut(5)[j] = 1e6 * (j as f64 + 1.0);
            v2.row_mut(5)[j] = -3e5;
        }
        let changed = run(&q, &k2, &v2);
        assert_eq!(base.data(), changed.data());
    }

    #[test]
    fn attention_all_zero_mask_row_rejected() {
        let mut t = Tape::new();
        let q = t.leaf(Tensor::zeros(&[2, 4]));
        let k = t.leaf(Tensor::zeros(&[2, 4]));
        let v = t.leaf(Tensor::zeros(&[2, 4]));
        let mut mask = BitMatrix::new(2, 2);
        mask.set(0, 0, true);
        assert!(t.masked_attention(q, k, v, &mask, 1).is_err());
    }

    #[test]
    fn cross_entropy_golden_values() {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::from_rows(&[vec![1.0, 0.0]]));
        let l = t.cross_entropy(p, &[0]).unwrap();
        assert!(t.value(l).item() <= 1e-11);

        let p2 = t.leaf(Tensor::from_rows(&[vec![0.5, 0.5]]));
        let l2 = t.cross_entropy(p2, &[1]).unwrap();
        assert!((t.value(l2).item() - 2.0f64.ln()).abs() < 1e-15);

        let p3 = t.leaf(Tensor::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]));
        let l3 = t.cross_entropy(p3, &[0, 1]).unwrap();
        assert!((t.value(l3).item() - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::from_rows(&[vec![0.5, 0.5]]));
        assert!(t.cross_entropy(p, &[2]).is_err());
    }

    /// Gradient check through a tape expression with respect to one leaf.
    fn check_tape_grad<F>(build: F, x: &Tensor, h: f64) -> f64
    where
        F: Fn(&mut Tape, Var) -> Var,
    {
        grad_check(
            |t: &Tensor| {
                let mut tape = Tape::new();
                let xv = tape.leaf(t.clone());
                let out = build(&mut tape, xv);
                let val = tape.value(out).item();
                let grad = tape
                    .backward(out)
                    .take(xv)
                    .unwrap_or_else(|| Tensor::zeros(t.shape()));
                Ok((val, grad))
            },
            x,
            h,
        )
        .unwrap()
    }

    #[test]
    fn kernel_gradients_match_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = derive_rng(seed, "kernel-gc", 0);
            let n = rng.random_range(2..5);
            let c = rng.random_range(2..6);
            let d = 8;

            // affine wrt x, w, b through a fixed functional
            let x = randn(&mut rng, &[n, c], 1.0);
            let w = randn(&mut rng, &[c, d], 0.5);
            let b = randn(&mut rng, &[d], 0.5);
            let probe = randn(&mut rng, &[n, d], 1.0);
            let err = check_tape_grad(
                |t, xv| {
                    let wv = t.leaf(w.clone());
                    let bv = t.leaf(b.clone());
                    let y = t.affine(xv, wv, bv).unwrap();
                    t.dot_const(y, probe.clone()).unwrap()
                },
                &x,
                1e-5,
            );
            assert!(err < 1e-4, "affine x grad err {err} seed {seed}");

            let err = check_tape_grad(
                |t, wv| {
                    let xv = t.leaf(x.clone());
                    let bv = t.leaf(b.clone());
                    let y = t.affine(xv, wv, bv).unwrap();
                    t.dot_const(y, probe.clone()).unwrap()
                },
                &w,
                1e-5,
            );
            assert!(err < 1e-4, "affine w grad err {err} seed {seed}");

            // layer_norm + gelu chain
            let gain = randn(&mut rng, &[c], 0.3);
            let shift = randn(&mut rng, &[c], 0.3);
            let probe2 = randn(&mut rng, &[n, c], 1.0);
            let err = check_tape_grad(
                |t, xv| {
                    let g = t.leaf(gain.clone());
                    let s = t.leaf(shift.clone());
                    let y = t.layer_norm(xv, g, s).unwrap();
                    let z = t.gelu(y).unwrap();
                    t.dot_const(z, probe2.clone()).unwrap()
                },
                &x,
                1e-5,
            );
            assert!(err < 1e-4, "layer_norm/gelu grad err {err} seed {seed}");

            // softmax + cross-entropy
            let logits = randn(&mut rng, &[n, c], 2.0);
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..c) as u32).collect();
            let err = check_tape_grad(
                |t, xv| {
                    let p = t.softmax_rows(xv).unwrap();
                    t.cross_entropy(p, &labels).unwrap()
                },
                &logits,
                1e-5,
            );
            assert!(err < 1e-6, "softmax∘xent grad err {err} seed {seed}");

            // masked attention wrt q, k, v under a random mask
            let l = rng.random_range(3..7);
            let q = randn(&mut rng, &[l, d], 1.0);
            let k = randn(&mut rng, &[l, d], 1.0);
            let v = randn(&mut rng, &[l, d], 1.0);
            let mut mask = BitMatrix::from_fn(l, l, |_, _| rng.random::<f64>() < 0.6);
            for i in 0..l {
                mask.set(i, i % 2, true); // no empty rows
            }
            let probe3 = randn(&mut rng, &[l, d], 1.0);
            for which in 0..3 {
                let target = [&q, &k, &v][which].clone();
                let err = check_tape_grad(
                    |t, tv| {
                        let qv = if which == 0 { tv } else { t.leaf(q.clone()) };
                        let kv = if which == 1 { tv } else { t.leaf(k.clone()) };
                        let vv = if which == 2 { tv } else { t.leaf(v.clone()) };
                        let y = t.masked_attention(qv, kv, vv, &mask, 2).unwrap();
                        t.dot_const(y, probe3.clone()).unwrap()
                    },
                    &target,
                    1e-5,
                );
                assert!(err < 1e-4, "attention grad err {err} input {which} seed {seed}");
            }

            // embedding + slice
            let table = randn(&mut rng, &[4, c], 1.0);
            let ids: Vec<u32> = (0..n).map(|_| rng.random_range(0..4) as u32).collect();
            let probe4 = randn(&mut rng, &[n, c - 1], 1.0);
            let err = check_tape_grad(
                |t, tv| {
                    let e = t.embed_rows(tv, &ids).unwrap();
                    let s = t.slice_cols(e, 0, c - 1).unwrap();
                    t.dot_const(s, probe4.clone()).unwrap()
                },
                &table,
                1e-5,
            );
            assert!(err < 1e-4, "embed/slice grad err {err} seed {seed}");
        }
    }

    #[test]
    fn gradient_accumulates_across_consumers() {
        // y = x + x doubles the gradient.
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let y = t.add(x, x).unwrap();
        let loss = t.dot_const(y, Tensor::from_rows(&[vec![1.0, 1.0]])).unwrap();
        let mut g = t.backward(loss);
        assert_eq!(g.take(x).unwrap().data(), &[2.0, 2.0]);
    }
}
