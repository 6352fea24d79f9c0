//! Pixel sets on an image grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::annotation::PixelBox;
use crate::error::CoreError;
use crate::grid::{Grid, ImageSize};

/// How heatmap values are compared against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `value >= tau` (instrument attention region)
    Geq,
    /// `value > tau` (verb attention region)
    Gt,
}

impl Comparison {
    #[inline]
    pub fn holds(self, value: f64, tau: f64) -> bool {
        match self {
            Comparison::Geq => value >= tau,
            Comparison::Gt => value > tau,
        }
    }
}

/// A set of `(row, col)` pixels inside a fixed image grid, stored as a bitmask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelRegion {
    size: ImageSize,
    bits: Vec<u64>,
}

impl PixelRegion {
    pub fn empty(size: ImageSize) -> Self {
        Self {
            size,
            bits: vec![0; size.pixels().div_ceil(64)],
        }
    }

    pub fn full(size: ImageSize) -> Self {
        let mut region = Self::empty(size);
        for idx in 0..size.pixels() {
            region.insert_index(idx);
        }
        region
    }

    pub fn size(&self) -> ImageSize {
        self.size
    }

    #[inline]
    fn insert_index(&mut self, idx: usize) {
        self.bits[idx / 64] |= 1 << (idx % 64);
    }

    /// Adds `(row, col)`. Panics if the pixel is outside the grid.
    pub fn insert(&mut self, row: usize, col: usize) {
        assert!(
            row < self.size.height && col < self.size.width,
            "pixel ({row}, {col}) outside grid"
        );
        self.insert_index(row * self.size.width + col);
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        if row >= self.size.height || col >= self.size.width {
            return false;
        }
        let idx = row * self.size.width + col;
        self.bits[idx / 64] & (1 << (idx % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn is_subset(&self, other: &PixelRegion) -> bool {
        self.size == other.size && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn union_with(&mut self, other: &PixelRegion) {
        assert_eq!(self.size, other.size, "regions on different grids");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// Pixels in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.size.width;
        (0..self.size.pixels())
            .filter(move |&idx| self.bits[idx / 64] & (1 << (idx % 64)) != 0)
            .map(move |idx| (idx / width, idx % width))
    }
}

/// Exact cardinalities used by the ratio metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlap {
    pub intersection: usize,
    pub a_size: usize,
}

/// `{(i, j) | heatmap(i, j) ⋈ tau}`.
pub fn threshold_region(heatmap: &Grid, tau: f64, comparison: Comparison) -> PixelRegion {
    let size = heatmap.size();
    let mut region = PixelRegion::empty(size);
    for (idx, &v) in heatmap.values().iter().enumerate() {
        if comparison.holds(v, tau) {
            region.insert_index(idx);
        }
    }
    region
}

/// Union of the pixels covered by `boxes` (inclusive coordinates).
pub fn rasterize_boxes(boxes: &[PixelBox], size: ImageSize) -> Result<PixelRegion, CoreError> {
    let mut region = PixelRegion::empty(size);
    for b in boxes {
        b.check_bounds(size)?;
        for row in b.y_min as usize..=b.y_max as usize {
            let base = row * size.width;
            for col in b.x_min as usize..=b.x_max as usize {
                region.insert_index(base + col);
            }
        }
    }
    Ok(region)
}

/// `(|a ∩ b|, |a|)`.
///
/// Panics if the regions live on different grids.
pub fn overlap_count(a: &PixelRegion, b: &PixelRegion) -> Overlap {
    assert_eq!(a.size, b.size, "regions on different grids");
    let intersection = a
        .bits
        .iter()
        .zip(&b.bits)
        .map(|(x, y)| (x & y).count_ones() as usize)
        .sum();
    Overlap {
        intersection,
        a_size: a.len(),
    }
}
