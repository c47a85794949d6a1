//! Configuration, cell cache and study orchestration behind the `perfhom`
//! binary.

pub mod cache;
pub mod config;
pub mod study;

pub use cache::{cache_key, CacheStatus, CellCache};
pub use config::{Functional, Study, StudyConfig};
pub use study::{run_studies, write_outputs, Gate, RunSummary};
