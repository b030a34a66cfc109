//! Manual throughput probes; run with
//! `cargo test -p localicl-core --release --test perf_probe -- --ignored --nocapture`

use std::time::Instant;

use localicl_core::datagen::PriorConfig;
use localicl_core::model::{predict_local, ModelConfig, ModelParams};
use localicl_core::retrieval::{EmbeddingKind, RetrievalIndex};
use localicl_core::training::{prior_fit, TrainConfig, TrainMode};
use localicl_core::Tensor;

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
#[ignore]
fn time_prior_fit_steps() {
    let model = ModelConfig::default();
    let cfg = TrainConfig {
        mode: TrainMode::PriorFit,
        lr: 5e-4,
        weight_decay: 0.0,
        batch: 8,
        n_qy: 0,
        l_ctx: None,
        eval_every: 10,
        patience: usize::MAX,
        max_steps: 20,
        seed: 1,
        k_max: 256,
        eval_batch: 512,
    };
    let t0 = Instant::now();
    let run = prior_fit(&model, &default_prior(), &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "prior_fit: {} steps in {:.2}s = {:.3}s/step; first loss {:.4}, last {:.4}",
        cfg.max_steps,
        dt,
        dt / cfg.max_steps as f64,
        run.step_losses.first().unwrap(),
        run.step_losses.last().unwrap()
    );
}

#[test]
#[ignore]
fn time_predict_local() {
    let model = ModelConfig::default();
    let params = ModelParams::init(&model, 1).unwrap();
    let n = 3200;
    let nq = 100;
    let d_eff = 10;
    let mut vals = Vec::new();
    let mut state = 123u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        ((state >> 33) as f64) / (1u64 << 31) as f64 - 0.5
    };
    for _ in 0..n * d_eff {
        vals.push(next());
    }
    let emb = Tensor::new(vec![n, d_eff], vals);
    let scale = model.d_max as f64 / d_eff as f64;
    let mut padded = Tensor::zeros(&[n, model.d_max]);
    for i in 0..n {
        for j in 0..d_eff {
            padded.row_mut(i)[j] = emb.at2(i, j) * scale;
        }
    }
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let index = RetrievalIndex::build(emb.clone(), EmbeddingKind::Raw).unwrap();

    let qe = emb.gather_rows(&(0..nq).collect::<Vec<_>>());
    let qx = padded.gather_rows(&(0..nq).collect::<Vec<_>>());
    for k in [100usize, 256, 512] {
        let t0 = Instant::now();
        let _ = predict_local(&params, &padded, &labels, 2, &index, &qe, &qx, k, 512, None).unwrap();
        println!("predict_local k={k}: {nq} queries in {:.2}s", t0.elapsed().as_secs_f64());
    }
}
