//! Experiment orchestration: configuration, the end-to-end pipeline,
//! parameter sweeps and plots.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod sweep;

pub use config::{
    apply_override, Baselines, CsvSource, DataSource, ExperimentConfig, NormalizeOn, Splits,
};
pub use pipeline::{
    run_pipeline, MethodRun, Prepared, Robustness, RunOutput, ScoredSplits, SplitRanges,
};
pub use plot::{read_trace, threshold_trace_svg, write_trace, TraceRow};
pub use sweep::{run_sweep, write_sweep, SweepParam, SweepRow};

use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
