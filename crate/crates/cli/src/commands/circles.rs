//! `localicl circles-sweep`: the complexity benchmark. For each
//! (pairs, seed) cell a fresh concentric-circles dataset is generated and
//! split; local-context prediction runs at every requested k alongside
//! full-context prediction, and the test AUCs land in one long-format CSV.

use std::path::PathBuf;
use std::time::Instant;

use localicl_core::datagen::{gen_circles, split_dataset};
use localicl_core::eval::auc_multiclass;
use localicl_core::model::load_checkpoint;
use localicl_core::pipeline::{knn_probs, prepare_task, run_method, Method};
use localicl_core::rng::derive_seed;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, RunManifest};

pub struct CirclesSweepArgs {
    pub checkpoint: PathBuf,
    pub pairs: Vec<usize>,
    pub k: Vec<usize>,
    pub seeds: usize,
    pub n: usize,
    pub noise: f64,
    pub config: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for CirclesSweepArgs {
    fn default() -> Self {
        CirclesSweepArgs {
            checkpoint: PathBuf::new(),
            pairs: vec![1, 2, 3, 4],
            k: vec![10, 30, 100, 300],
            seeds: 25,
            n: 1000,
            noise: 0.01,
            config: None,
            out_dir: None,
        }
    }
}

pub struct CirclesSweepOutputs {
    pub sweep_csv: PathBuf,
    pub manifest: PathBuf,
}

pub fn cmd_circles_sweep(args: &CirclesSweepArgs) -> Result<CirclesSweepOutputs> {
    super::init_threads();
    let config = ExperimentConfig::load_or_default(args.config.as_deref())?;
    if args.pairs.is_empty() || args.seeds == 0 {
        return Err(CliError::config("circles-sweep needs at least one pairs value and one seed"));
    }
    let dir = super::resolve_out_dir(&config, args.out_dir.as_deref());
    std::fs::create_dir_all(&dir)?;
    let params = load_checkpoint(&args.checkpoint)?;

    let mut manifest = RunManifest::new("circles-sweep", &config);
    let t0 = Instant::now();
    let mut csv = String::from("pairs,k,seed,auc\n");

    for &pairs in &args.pairs {
        for seed_idx in 0..args.seeds {
            let cell = (pairs * 100_000 + seed_idx) as u64;
            let ds = gen_circles(
                args.n,
                pairs,
                args.noise,
                derive_seed(config.seed, "sweep-data", cell),
            )?;
            let splits = split_dataset(&ds, derive_seed(config.seed, "sweep-split", cell))?;
            let task = prepare_task(&ds, &splits, config.retrieval.embedding, &params.config)?;

            let full = run_method(
                &params,
                &task,
                Method::IclFull,
                &config.retrieval,
                derive_seed(config.seed, "sweep-full", cell),
            )?;
            let full_auc = auc_multiclass(&full, &task.test_y)?;
            csv.push_str(&format!("{pairs},full,{seed_idx},{full_auc}\n"));

            for &k in &args.k {
                let k_eff = k.min(task.n_train()).min(params.config.l_ctx_max);
                let probs = knn_probs(&params, &task, k_eff, config.eval.eval_batch)?;
                let auc = auc_multiclass(&probs, &task.test_y)?;
                csv.push_str(&format!("{pairs},{k},{seed_idx},{auc}\n"));
            }
        }
    }
    manifest.phase("sweep", t0.elapsed().as_millis());

    let sweep_csv = dir.join("sweep.csv");
    write_atomic(&sweep_csv, csv.as_bytes())?;
    manifest.phase("total", t0.elapsed().as_millis());
    manifest.record_output(&sweep_csv)?;
    let manifest_path = manifest.write(&dir)?;
    Ok(CirclesSweepOutputs { sweep_csv, manifest: manifest_path })
}
