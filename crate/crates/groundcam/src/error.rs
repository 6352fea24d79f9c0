use std::io;
use std::path::PathBuf;

use groundcam_core::CoreError;

/// Failures while reading or writing a run bundle.
#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("shape mismatch in {record}: {detail}")]
    ShapeMismatch { record: String, detail: String },
    #[error("non-finite value in {record} at index {index}")]
    NonFiniteValue { record: String, index: usize },
    #[error("schema violation in {context}: {detail}")]
    SchemaViolation { context: String, detail: String },
    #[error("io failure on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl BundleError {
    pub(crate) fn schema(context: impl Into<String>, detail: impl std::fmt::Display) -> Self {
        BundleError::SchemaViolation {
            context: context.into(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            BundleError::MissingFile(path)
        } else {
            BundleError::Io { path, source }
        }
    }
}

/// Failures while reading an annotation document.
#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("missing annotation file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("io failure on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("annotation schema violation: {0}")]
    SchemaViolation(String),
    #[error("box out of bounds in frame {frame_id}: {source}")]
    BoxOutOfBounds { frame_id: String, source: CoreError },
}

/// Failures of the evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("task mismatch: expected a {expected} bundle, found {found}")]
    TaskMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("worklist mismatch: {0}")]
    WorklistMismatch(String),
    #[error("frame {frame_id}: {source}")]
    Frame { frame_id: String, source: CoreError },
    #[error("missing image for frame {frame_id}: {detail}")]
    MissingImage { frame_id: String, detail: String },
    #[error("image error for frame {frame_id}: {detail}")]
    Image { frame_id: String, detail: String },
    #[error("report error: {0}")]
    Report(String),
    #[error("io failure on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl EvalError {
    pub(crate) fn frame(frame_id: &str, source: CoreError) -> Self {
        EvalError::Frame {
            frame_id: frame_id.to_owned(),
            source,
        }
    }
}
