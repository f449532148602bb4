//! Reference thresholders: the best single static threshold (chosen in
//! hindsight by exhaustive search) and DSPOT, a streaming extreme-value
//! thresholder with drift correction.

mod gpd;
mod spot;
mod static_threshold;

pub use gpd::{fit_gpd, gpd_log_likelihood, gpd_quantile, GpdFit};
pub use spot::{DspotConfig, SpotState, SpotStep};
pub use static_threshold::{optimal_static_threshold, StaticThresholdResult};
