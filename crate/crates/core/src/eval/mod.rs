//! Point-adjusted detection metrics, the 10-subset robustness protocol and
//! the exact two-sided Wilcoxon signed-rank test.

mod metrics;
mod robustness;
mod wilcoxon;

pub use metrics::{evaluate_run, metrics, ConfusionCounts, DetectionResult, Metrics};
pub use robustness::{subset_bounds, subset_robustness, RobustnessReport, Summary};
pub use wilcoxon::{wilcoxon_two_tailed, WilcoxonResult};
