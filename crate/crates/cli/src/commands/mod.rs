pub mod circles;
pub mod evaluate;
pub mod finetune;
pub mod priorfit;

use std::path::{Path, PathBuf};
use std::sync::Once;

use localicl_core::training::LogRecord;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::manifest::write_atomic;

/// Honor LOCALICL_THREADS (default: logical cores). Safe to call from every
/// command entry point; only the first call configures the pool.
pub fn init_threads() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("LOCALICL_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

pub fn resolve_out_dir(config: &ExperimentConfig, cli_out: Option<&Path>) -> PathBuf {
    cli_out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&config.io.out_dir))
}

pub fn write_train_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    let mut text = String::from(LogRecord::CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}
