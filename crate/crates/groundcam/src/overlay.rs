//! Heatmap overlays: color-mapped relevance blended over the frame with the
//! ground-truth boxes drawn on top.

use std::fs;
use std::path::{Path, PathBuf};

use groundcam_core::prompts::select_prediction;
use groundcam_core::{Grid, PixelBox};
use image::{Rgb, RgbImage};

use crate::annotations::Annotations;
use crate::bundle::RunBundle;
use crate::error::EvalError;
use crate::pipeline::frame_heatmap;

/// Jet-style colormap anchors, low to high.
const COLORMAP: [[u8; 3]; 9] = [
    [0, 0, 143],
    [0, 0, 255],
    [0, 127, 255],
    [0, 255, 255],
    [127, 255, 127],
    [255, 255, 0],
    [255, 127, 0],
    [255, 0, 0],
    [127, 0, 0],
];

/// Heatmap opacity at value 1; opacity scales linearly with the value.
pub const MAX_ALPHA: f64 = 0.6;

pub const BOX_COLOR: Rgb<u8> = Rgb([0, 255, 0]);

/// Color for a value in `[0, 1]`, interpolated between the anchors.
pub fn colormap(value: f64) -> [f64; 3] {
    let v = value.clamp(0.0, 1.0) * (COLORMAP.len() - 1) as f64;
    let lo = v as usize;
    let hi = (lo + 1).min(COLORMAP.len() - 1);
    let t = v - lo as f64;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (1.0 - t) * f64::from(COLORMAP[lo][c]) + t * f64::from(COLORMAP[hi][c]);
    }
    out
}

/// Blends `heatmap` over `base` and outlines `boxes`. The heatmap must match
/// the image dimensions.
pub fn compose_overlay(
    base: &RgbImage,
    heatmap: &Grid,
    boxes: &[PixelBox],
) -> Result<RgbImage, String> {
    let (w, h) = base.dimensions();
    if heatmap.rows() != h as usize || heatmap.cols() != w as usize {
        return Err(format!(
            "image is {h}x{w} but heatmap is {}x{}",
            heatmap.rows(),
            heatmap.cols()
        ));
    }
    let mut out = base.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let v = heatmap.get(y as usize, x as usize);
        let alpha = MAX_ALPHA * v;
        let color = colormap(v);
        for c in 0..3 {
            let blended = (1.0 - alpha) * f64::from(px[c]) + alpha * color[c];
            px[c] = blended.round().clamp(0.0, 255.0) as u8;
        }
    }
    for b in boxes {
        if b.x_max >= w || b.y_max >= h {
            return Err(format!("box {b:?} outside a {h}x{w} image"));
        }
        for x in b.x_min..=b.x_max {
            out.put_pixel(x, b.y_min, BOX_COLOR);
            out.put_pixel(x, b.y_max, BOX_COLOR);
        }
        for y in b.y_min..=b.y_max {
            out.put_pixel(b.x_min, y, BOX_COLOR);
            out.put_pixel(b.x_max, y, BOX_COLOR);
        }
    }
    Ok(out)
}

/// Renders one overlay and writes it as PNG.
pub fn render_overlay(
    frame_id: &str,
    image_path: &Path,
    heatmap: &Grid,
    boxes: &[PixelBox],
    out: &Path,
) -> Result<(), EvalError> {
    if !image_path.is_file() {
        return Err(EvalError::MissingImage {
            frame_id: frame_id.into(),
            detail: image_path.display().to_string(),
        });
    }
    let base = image::open(image_path)
        .map_err(|e| EvalError::Image {
            frame_id: frame_id.into(),
            detail: e.to_string(),
        })?
        .to_rgb8();
    let overlay = compose_overlay(&base, heatmap, boxes).map_err(|detail| EvalError::Image {
        frame_id: frame_id.into(),
        detail,
    })?;
    overlay
        .save_with_format(out, image::ImageFormat::Png)
        .map_err(|e| EvalError::Image {
            frame_id: frame_id.into(),
            detail: e.to_string(),
        })
}

fn file_stem(frame_id: &str) -> String {
    frame_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Renders the predicted-prompt heatmap of every frame in `bundle`. Image
/// paths are resolved against `bundle_dir`.
pub fn render_bundle(
    bundle: &RunBundle,
    bundle_dir: &Path,
    annotations: &Annotations,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(out_dir).map_err(|source| EvalError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut written = Vec::new();
    for frame in &bundle.frames {
        let image_path = frame
            .image_path
            .as_deref()
            .ok_or_else(|| EvalError::MissingImage {
                frame_id: frame.frame_id.clone(),
                detail: "manifest has no image_path".into(),
            })?;
        let index =
            select_prediction(&frame.similarity_scores, bundle.prompt_pool.len()).map_err(|e| {
                EvalError::Frame {
                    frame_id: frame.frame_id.clone(),
                    source: e,
                }
            })?;
        let heatmap = frame_heatmap(frame, index)?;
        let boxes: Vec<PixelBox> = annotations
            .get(&frame.frame_id)
            .map(|a| a.regions().flat_map(|(_, b)| b.iter().copied()).collect())
            .unwrap_or_default();
        let out = out_dir.join(format!("{}.png", file_stem(&frame.frame_id)));
        render_overlay(
            &frame.frame_id,
            &bundle_dir.join(image_path),
            heatmap.values(),
            &boxes,
            &out,
        )?;
        written.push(out);
    }
    Ok(written)
}
