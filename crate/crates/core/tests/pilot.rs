//! Manual pilot: prior-fit with candidate defaults, then probe circles
//! behaviour and prior-task accuracy. Run with
//! `cargo test -p localicl-core --release --test pilot -- --ignored --nocapture`

use std::time::Instant;

use localicl_core::datagen::{gen_circles, gen_prior_task, split_dataset, PriorConfig};
use localicl_core::eval::auc_multiclass;
use localicl_core::model::{predict_batched, save_checkpoint, ModelConfig};
use localicl_core::pipeline::{knn_probs, prepare_task, run_method, Method, RetrievalSettings};
use localicl_core::retrieval::EmbeddingKind;
use localicl_core::training::{prior_fit, TrainConfig, TrainMode};

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
fn pilot_prior_fit() {
    let model = ModelConfig::default();
    let steps: usize = std::env::var("PILOT_STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(2500);
    let lr: f64 = std::env::var("PILOT_LR").ok().and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let cfg = TrainConfig {
        mode: TrainMode::PriorFit,
        lr,
        weight_decay: 0.0,
        batch: 8,
        n_qy: 0,
        l_ctx: None,
        eval_every: 30,
        patience: usize::MAX,
        max_steps: steps,
        seed: 0,
        k_max: 256,
        eval_batch: 512,
    };
    let t0 = Instant::now();
    let run = prior_fit(&model, &default_prior(), &cfg).unwrap();
    println!(
        "pilot: {} steps in {:.1}s; loss first {:.4} last {:.4}",
        steps,
        t0.elapsed().as_secs_f64(),
        run.log.first().unwrap().loss.unwrap(),
        run.log.last().unwrap().loss.unwrap()
    );
    let path = std::env::temp_dir().join("localicl-pilot.lcpf");
    save_checkpoint(&run.params, &path).unwrap();
    println!("checkpoint: {}", path.display());

    // circles probe
    let settings = RetrievalSettings { embedding: EmbeddingKind::Raw, ..Default::default() };
    for pairs in [1usize, 3] {
        let ds = gen_circles(1000, pairs, 0.01, 42).unwrap();
        let splits = split_dataset(&ds, 42).unwrap();
        let task = prepare_task(&ds, &splits, EmbeddingKind::Raw, &model).unwrap();
        let full = run_method(&run.params, &task, Method::IclFull, &settings, 1).unwrap();
        let full_auc = auc_multiclass(&full, &task.test_y).unwrap();
        for k in [10usize, 100] {
            let local = knn_probs(&run.params, &task, k, 512).unwrap();
            let auc = auc_multiclass(&local, &task.test_y).unwrap();
            println!("pairs={pairs} k={k}: auc={auc:.4} (full={full_auc:.4})");
        }
    }

    // prior-task accuracy vs majority-class rate
    let mut acc_sum = 0.0;
    let mut maj_sum = 0.0;
    let n_tasks = 30;
    for seed in 0..n_tasks {
        let task = gen_prior_task(&default_prior().with_size(256), 900_000 + seed).unwrap();
        let splits = split_dataset(&task, seed).unwrap();
        let p = prepare_task(&task, &splits, EmbeddingKind::Raw, &model).unwrap();
        let probs = predict_batched(&run.params, &p.train_x, &p.train_y, &p.test_x, p.n_classes, 512).unwrap();
        let mut correct = 0usize;
        for i in 0..p.test_y.len() {
            let pred = localicl_core::eval::argmax_row(probs.row(i));
            if pred == p.test_y[i] as usize {
                correct += 1;
            }
        }
        acc_sum += correct as f64 / p.test_y.len() as f64;
        let mut counts = vec![0usize; p.n_classes];
        for &y in &p.train_y {
            counts[y as usize] += 1;
        }
        maj_sum += *counts.iter().max().unwrap() as f64 / p.train_y.len() as f64;
    }
    println!(
        "prior probe: mean acc {:.4}, majority rate {:.4}, margin {:.4}",
        acc_sum / n_tasks as f64,
        maj_sum / n_tasks as f64,
        (acc_sum - maj_sum) / n_tasks as f64
    );
}
