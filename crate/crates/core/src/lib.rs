//! Heatmap reconstruction and spatial grounding metrics for
//! vision-language model predictions.
//!
//! The crate is `no_std` (it needs `alloc`). It has no notion of files or
//! model runtimes: callers hand it activation/attention tensors and
//! annotations, and get back normalized heatmaps, pixel regions and
//! metric values.
//!
//! * [`cam`] rebuilds heatmaps from conv activations (Grad-CAM) or from
//!   transformer attention stacks (gradient-weighted rollout).
//! * [`region`] turns heatmaps and boxes into pixel sets.
//! * [`metrics`] scores the overlap between attention and annotations.
//! * [`prompts`] builds prompt pools and picks predictions.

#![no_std]

extern crate alloc;

pub mod annotation;
pub mod cam;
mod error;
pub mod grid;
pub mod metrics;
pub mod prompts;
pub mod region;
#[cfg(feature = "serde")]
mod serde_float;

pub use annotation::{FrameAnnotation, PixelBox, TripletLabel};
pub use cam::{gradcam_conv, normalize, rollout_transformer, upsample_bilinear, Heatmap};
pub use error::CoreError;
pub use grid::{Grid, ImageSize};
pub use region::{Comparison, PixelRegion};

/// Threshold used for attention regions unless a caller overrides it.
pub const DEFAULT_TAU: f64 = 0.3;
