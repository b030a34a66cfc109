//! Dataset sources for evaluate/finetune: CSV files or generator specs.
//!
//! Generator spec grammar: `circles:pairs=3,n=1000[,noise=0.01][,seed=7]`
//! or `prior:n=4000[,seed=3]`. When no explicit seed is given, one is
//! derived from the master seed and the dataset's position on the command
//! line.

use std::path::PathBuf;

use localicl_core::datagen::{gen_circles, gen_prior_task, PriorConfig};
use localicl_core::rng::derive_seed;
use localicl_core::Dataset;

use crate::error::{CliError, Result};
use crate::ingest::ingest_csv;

#[derive(Clone, Debug)]
pub enum DatasetSpec {
    Csv(PathBuf),
    Gen(GenSpec),
}

#[derive(Clone, Debug)]
pub enum GenSpec {
    Circles { pairs: usize, n: usize, noise: f64, seed: Option<u64> },
    Prior { n: usize, seed: Option<u64> },
}

pub fn parse_gen_spec(s: &str) -> Result<GenSpec> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| CliError::config(format!("generator spec '{s}' needs a 'kind:' prefix")))?;
    let mut pairs = None;
    let mut n = None;
    let mut noise = None;
    let mut seed = None;
    if !rest.is_empty() {
        for item in rest.split(',') {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("bad generator parameter '{item}'")))?;
            let parse_usize = || {
                value
                    .parse::<usize>()
                    .map_err(|_| CliError::config(format!("'{key}' expects an integer, got '{value}'")))
            };
            match key {
                "pairs" => pairs = Some(parse_usize()?),
                "n" => n = Some(parse_usize()?),
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        CliError::config(format!("'seed' expects an integer, got '{value}'"))
                    })?)
                }
                "noise" => {
                    noise = Some(value.parse::<f64>().map_err(|_| {
                        CliError::config(format!("'noise' expects a number, got '{value}'"))
                    })?)
                }
                _ => return Err(CliError::config(format!("unknown generator parameter '{key}'"))),
            }
        }
    }
    match kind {
        "circles" => Ok(GenSpec::Circles {
            pairs: pairs.ok_or_else(|| CliError::config("circles spec needs pairs="))?,
            n: n.ok_or_else(|| CliError::config("circles spec needs n="))?,
            noise: noise.unwrap_or(0.01),
            seed,
        }),
        "prior" => Ok(GenSpec::Prior {
            n: n.ok_or_else(|| CliError::config("prior spec needs n="))?,
            seed,
        }),
        other => Err(CliError::config(format!("unknown generator kind '{other}'"))),
    }
}

/// Materialize one dataset source.
pub fn load_dataset(
    spec: &DatasetSpec,
    position: usize,
    master_seed: u64,
    label_col: Option<&str>,
    cat_cols: &[String],
    c_max: usize,
    prior: &PriorConfig,
) -> Result<Dataset> {
    match spec {
        DatasetSpec::Csv(path) => {
            let label = label_col.ok_or_else(|| {
                CliError::config("--label-col is required when loading CSV datasets")
            })?;
            ingest_csv(path, label, cat_cols, c_max)
        }
        DatasetSpec::Gen(GenSpec::Circles { pairs, n, noise, seed }) => {
            let s = seed.unwrap_or_else(|| derive_seed(master_seed, "dataset", position as u64));
            Ok(gen_circles(*n, *pairs, *noise, s)?)
        }
        DatasetSpec::Gen(GenSpec::Prior { n, seed }) => {
            let s = seed.unwrap_or_else(|| derive_seed(master_seed, "dataset", position as u64));
            Ok(gen_prior_task(&prior.with_size(*n), s)?)
        }
    }
}
