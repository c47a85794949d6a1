//! Rate fits, regularity monitors and the constants they rely on.

pub mod fit;
pub mod korn;
pub mod monitors;
pub mod muckenhoupt;
pub mod smoothing;

pub use fit::{trend_slope, MonitorEntry, MonitorReport, RateSample, RateStudy};
pub use korn::{estimate_korn_constant, korn_constant_dense, korn_constant_on, KornEstimate};
pub use muckenhoupt::{muckenhoupt_constant, muckenhoupt_levels};
pub use smoothing::{smoothing_row, SmoothingRow};
