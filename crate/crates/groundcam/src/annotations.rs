//! Annotation document.
//!
//! ```json
//! {
//!   "image_size": [480, 854],
//!   "frames": [
//!     {
//!       "frame_id": "video01/000120",
//!       "classes": ["grasper"],
//!       "boxes": [{"class": "grasper", "x_min": 10, "y_min": 10, "x_max": 50, "y_max": 50}],
//!       "triplet": {"instrument": "grasper", "verb": "retract", "target": "gallbladder"}
//!     }
//!   ]
//! }
//! ```
//!
//! Coordinates are inclusive pixel indices. `image_size` (document-wide or
//! per frame) enables bounds checking at load time; `classes` lists classes
//! present without a box.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use groundcam_core::{FrameAnnotation, ImageSize, PixelBox, TripletLabel};
use serde::{Deserialize, Serialize};

use crate::error::AnnotationError;

pub type Annotations = BTreeMap<String, FrameAnnotation>;

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[usize; 2]>,
    pub frames: Vec<FrameDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDoc {
    pub frame_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    #[serde(default)]
    pub boxes: Vec<BoxDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet: Option<TripletLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    pub class: String,
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl AnnotationDoc {
    /// Converts the document into per-frame annotations, checking boxes
    /// against the declared image size when one is given.
    pub fn into_annotations(self) -> Result<Annotations, AnnotationError> {
        let mut out = Annotations::new();
        for frame in self.frames {
            let size = frame
                .image_size
                .or(self.image_size)
                .map(|[h, w]| ImageSize::new(h, w));
            let mut ann = FrameAnnotation::new();
            for class in frame.classes {
                ann.add_class(class);
            }
            for b in frame.boxes {
                let bbox = PixelBox::new(b.x_min, b.y_min, b.x_max, b.y_max);
                if let Some(size) = size {
                    bbox.check_bounds(size)
                        .map_err(|source| AnnotationError::BoxOutOfBounds {
                            frame_id: frame.frame_id.clone(),
                            source,
                        })?;
                }
                ann.add_box(b.class, bbox);
            }
            ann.triplet = frame.triplet;
            if out.insert(frame.frame_id.clone(), ann).is_some() {
                return Err(AnnotationError::SchemaViolation(format!(
                    "duplicate frame_id {:?}",
                    frame.frame_id
                )));
            }
        }
        Ok(out)
    }
}

pub fn parse_annotations(text: &str) -> Result<Annotations, AnnotationError> {
    let doc: AnnotationDoc =
        serde_json::from_str(text).map_err(|e| AnnotationError::SchemaViolation(e.to_string()))?;
    doc.into_annotations()
}

pub fn load_annotations(path: &Path) -> Result<Annotations, AnnotationError> {
    let text = fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            AnnotationError::MissingFile(path.to_owned())
        } else {
            AnnotationError::Io {
                path: path.to_owned(),
                source,
            }
        }
    })?;
    parse_annotations(&text)
}
