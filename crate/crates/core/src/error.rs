use alloc::string::String;
use core::fmt;

/// Errors raised by the core operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    GridMismatch {
        rows: usize,
        cols: usize,
        tokens: usize,
    },
    BoxOutOfBounds {
        x_max: u32,
        y_max: u32,
        height: u32,
        width: u32,
    },
    InvalidBox {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
    },
    EmptyVocabulary(&'static str),
    DuplicateLabel(String),
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    UnknownVerb(String),
    EmptyInput,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { what, expected, found } => {
                write!(f, "shape mismatch in {what}: expected {expected}, found {found}")
            }
            CoreError::GridMismatch { rows, cols, tokens } => write!(
                f,
                "patch grid {rows}x{cols} does not cover {tokens} tokens (need rows*cols = tokens - 1)"
            ),
            CoreError::BoxOutOfBounds { x_max, y_max, height, width } => write!(
                f,
                "box with x_max={x_max}, y_max={y_max} lies outside a {height}x{width} image"
            ),
            CoreError::InvalidBox { x_min, y_min, x_max, y_max } => write!(
                f,
                "box [{x_min}, {y_min}, {x_max}, {y_max}] has min coordinate above max"
            ),
            CoreError::EmptyVocabulary(which) => write!(f, "empty {which} vocabulary"),
            CoreError::DuplicateLabel(label) => write!(f, "duplicate label {label:?}"),
            CoreError::LengthMismatch { expected, found } => {
                write!(f, "expected {expected} scores, found {found}")
            }
            CoreError::UnknownVerb(verb) => write!(f, "verb {verb:?} is not in the vocabulary"),
            CoreError::EmptyInput => f.write_str("no rows to aggregate"),
        }
    }
}

impl core::error::Error for CoreError {}
