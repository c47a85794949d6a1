//! Smoothing, the first-order corrector, extension into holes and the
//! error functionals of the two-scale expansion.

pub mod corrector;
pub mod extension;
pub mod kernel;
pub mod quenched;
pub mod report;

pub use corrector::{FirstOrderCorrector, HomogenizedField};
pub use extension::{ExtensionEnergy, ExtensionMode, HoleExtension};
pub use kernel::SmoothingKernel;
pub use quenched::QuenchedSampler;
pub use report::{error_report, lp_exponent, ErrorReport};
