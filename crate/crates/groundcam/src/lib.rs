//! File formats, evaluation pipeline, reports and overlays built on
//! [`groundcam_core`].

pub mod annotations;
pub mod bundle;
mod error;
pub mod overlay;
pub mod pipeline;
pub mod report;

pub use error::{AnnotationError, BundleError, EvalError};
