//! Ground-truth annotation types.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::grid::ImageSize;
use crate::region::{rasterize_boxes, PixelRegion};

/// Axis-aligned box with inclusive integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    pub const fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Checks `0 <= x_min <= x_max < width` and the same for `y`.
    pub fn check_bounds(&self, size: ImageSize) -> Result<(), CoreError> {
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(CoreError::InvalidBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            });
        }
        if self.x_max as usize >= size.width || self.y_max as usize >= size.height {
            return Err(CoreError::BoxOutOfBounds {
                x_max: self.x_max,
                y_max: self.y_max,
                height: size.height as u32,
                width: size.width as u32,
            });
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        u64::from(self.x_max - self.x_min + 1) * u64::from(self.y_max - self.y_min + 1)
    }
}

/// `(instrument, verb, target)` action label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripletLabel {
    pub instrument: String,
    pub verb: String,
    pub target: String,
}

impl TripletLabel {
    pub fn new(
        instrument: impl Into<String>,
        verb: impl Into<String>,
        target: impl Into<String>,
    ) -> Self {
        Self {
            instrument: instrument.into(),
            verb: verb.into(),
            target: target.into(),
        }
    }
}

/// Ground truth for one frame: the classes present, their boxes, and an
/// optional action triplet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameAnnotation {
    classes_present: BTreeSet<String>,
    regions: BTreeMap<String, Vec<PixelBox>>,
    pub triplet: Option<TripletLabel>,
}

impl FrameAnnotation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a box; its class becomes present.
    pub fn add_box(&mut self, class: impl Into<String>, bbox: PixelBox) {
        let class = class.into();
        self.classes_present.insert(class.clone());
        self.regions.entry(class).or_default().push(bbox);
    }

    /// Marks a class as present without a box.
    pub fn add_class(&mut self, class: impl Into<String>) {
        self.classes_present.insert(class.into());
    }

    pub fn with_triplet(mut self, triplet: TripletLabel) -> Self {
        self.triplet = Some(triplet);
        self
    }

    pub fn classes_present(&self) -> &BTreeSet<String> {
        &self.classes_present
    }

    pub fn contains_class(&self, class: &str) -> bool {
        self.classes_present.contains(class)
    }

    pub fn boxes(&self, class: &str) -> &[PixelBox] {
        self.regions.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn regions(&self) -> impl Iterator<Item = (&str, &[PixelBox])> {
        self.regions.iter().map(|(c, b)| (c.as_str(), b.as_slice()))
    }

    pub fn has_boxes(&self) -> bool {
        self.regions.values().any(|b| !b.is_empty())
    }

    pub fn check_bounds(&self, size: ImageSize) -> Result<(), CoreError> {
        self.regions
            .values()
            .flatten()
            .try_for_each(|b| b.check_bounds(size))
    }

    /// Union of every annotated box regardless of class.
    pub fn all_region(&self, size: ImageSize) -> Result<PixelRegion, CoreError> {
        let boxes: Vec<PixelBox> = self.regions.values().flatten().copied().collect();
        rasterize_boxes(&boxes, size)
    }

    /// Union of the boxes of `class` (empty if the class has none).
    pub fn class_region(&self, class: &str, size: ImageSize) -> Result<PixelRegion, CoreError> {
        rasterize_boxes(self.boxes(class), size)
    }
}
