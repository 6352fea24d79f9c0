//! Heatmap reconstruction from captured activations and attention.
//!
//! Inputs arrive as `f32` (the capture format); every sum and product is
//! carried out in `f64`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::grid::{Grid, ImageSize};

/// Normalized relevance map for one frame and prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub frame_id: String,
    pub prompt_index: usize,
    values: Grid,
}

impl Heatmap {
    /// Wraps a normalized grid. Returns `None` if any value lies outside `[0, 1]`.
    pub fn new(frame_id: impl Into<String>, prompt_index: usize, values: Grid) -> Option<Self> {
        values
            .values()
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
            .then(|| Self {
                frame_id: frame_id.into(),
                prompt_index,
                values,
            })
    }

    pub fn values(&self) -> &Grid {
        &self.values
    }

    pub fn size(&self) -> ImageSize {
        self.values.size()
    }
}

/// A `K x H x W` channel stack borrowed from a capture.
#[derive(Debug, Clone, Copy)]
pub struct FeatureMaps<'a> {
    data: &'a [f32],
    channels: usize,
    height: usize,
    width: usize,
}

impl<'a> FeatureMaps<'a> {
    pub fn new(data: &'a [f32], shape: [usize; 3]) -> Result<Self, CoreError> {
        let [channels, height, width] = shape;
        if channels == 0 || height == 0 || width == 0 || data.len() != channels * height * width {
            return Err(CoreError::ShapeMismatch {
                what: "feature maps",
                expected: format!("{channels}x{height}x{width} non-empty"),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            data,
            channels,
            height,
            width,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    fn channel(&self, k: usize) -> &'a [f32] {
        let plane = self.height * self.width;
        &self.data[k * plane..(k + 1) * plane]
    }
}

/// Per-channel Grad-CAM weights: the spatial mean of each gradient channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights {
    pub alpha: Vec<f64>,
}

pub fn channel_weights(gradients: &FeatureMaps<'_>) -> ChannelWeights {
    let plane = (gradients.height * gradients.width) as f64;
    let alpha = (0..gradients.channels)
        .map(|k| {
            gradients
                .channel(k)
                .iter()
                .map(|&g| f64::from(g))
                .sum::<f64>()
                / plane
        })
        .collect();
    ChannelWeights { alpha }
}

/// `sum_k alpha_k * A_k` at the activation resolution (no ReLU).
pub fn weighted_channel_sum(
    activations: &FeatureMaps<'_>,
    gradients: &FeatureMaps<'_>,
) -> Result<Grid, CoreError> {
    if activations.shape() != gradients.shape() {
        let [ka, ha, wa] = activations.shape();
        let [kg, hg, wg] = gradients.shape();
        return Err(CoreError::ShapeMismatch {
            what: "conv activations vs gradients",
            expected: format!("{ka}x{ha}x{wa}"),
            found: format!("{kg}x{hg}x{wg}"),
        });
    }
    let weights = channel_weights(gradients);
    let mut acc = vec![0.0f64; activations.height * activations.width];
    for (k, &alpha) in weights.alpha.iter().enumerate() {
        for (dst, &a) in acc.iter_mut().zip(activations.channel(k)) {
            *dst += alpha * f64::from(a);
        }
    }
    Ok(Grid::from_vec(activations.height, activations.width, acc).expect("sized above"))
}

/// `ReLU(sum_k alpha_k * A_k)` at the activation resolution, before
/// upsampling and normalization.
pub fn gradcam_raw(
    activations: &FeatureMaps<'_>,
    gradients: &FeatureMaps<'_>,
) -> Result<Grid, CoreError> {
    let mut map = weighted_channel_sum(activations, gradients)?;
    map.map_in_place(|v| v.max(0.0));
    Ok(map)
}

/// Conv Grad-CAM heatmap: weighted channel sum, ReLU, bilinear upsample to
/// `target`, then min-max normalization.
pub fn gradcam_conv(
    activations: &FeatureMaps<'_>,
    gradients: &FeatureMaps<'_>,
    target: ImageSize,
) -> Result<Grid, CoreError> {
    check_target(target)?;
    let raw = gradcam_raw(activations, gradients)?;
    Ok(normalize(&upsample_bilinear(&raw, target)))
}

/// One transformer block's post-softmax attention and its gradient, both
/// `N x N` row-major.
#[derive(Debug, Clone, Copy)]
pub struct AttentionLayer<'a> {
    attention: &'a [f32],
    gradient: &'a [f32],
    tokens: usize,
}

impl<'a> AttentionLayer<'a> {
    pub fn new(
        attention: &'a [f32],
        gradient: &'a [f32],
        tokens: usize,
    ) -> Result<Self, CoreError> {
        let want = tokens * tokens;
        for (what, data) in [
            ("attention matrix", attention),
            ("attention gradient", gradient),
        ] {
            if tokens < 2 || data.len() != want {
                return Err(CoreError::ShapeMismatch {
                    what,
                    expected: format!("{tokens}x{tokens} with at least 2 tokens"),
                    found: format!("{} values", data.len()),
                });
            }
        }
        Ok(Self {
            attention,
            gradient,
            tokens,
        })
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    /// `ReLU(grad ⊙ attention)`, row-major.
    pub fn gradient_weighted(&self) -> Vec<f64> {
        self.attention
            .iter()
            .zip(self.gradient)
            .map(|(&a, &g)| (f64::from(g) * f64::from(a)).max(0.0))
            .collect()
    }
}

/// Accumulated token-to-token relevance, `N x N` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMatrix {
    tokens: usize,
    r: Vec<f64>,
}

impl RelevanceMatrix {
    pub fn identity(tokens: usize) -> Self {
        let mut r = vec![0.0; tokens * tokens];
        for i in 0..tokens {
            r[i * tokens + i] = 1.0;
        }
        Self { tokens, r }
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.r[row * self.tokens + col]
    }

    /// `R <- R + T̃ R`.
    fn accumulate(&mut self, weighted: &[f64]) {
        let n = self.tokens;
        let mut next = self.r.clone();
        for i in 0..n {
            let t_row = &weighted[i * n..(i + 1) * n];
            let out = &mut next[i * n..(i + 1) * n];
            for (k, &t) in t_row.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                let r_row = &self.r[k * n..(k + 1) * n];
                for (o, &rv) in out.iter_mut().zip(r_row) {
                    *o += t * rv;
                }
            }
        }
        self.r = next;
    }

    /// Relevance of each patch token (columns `1..N`) for the CLS token (row 0).
    pub fn cls_patch_relevance(&self) -> Vec<f64> {
        self.r[1..self.tokens].to_vec()
    }
}

/// Runs the relevance recursion over `layers` (ordered first to last block):
/// starting from the identity, `R <- R + T̃⁽ˡ⁾ R` is applied from the last
/// layer down to the first.
pub fn propagate_relevance(layers: &[AttentionLayer<'_>]) -> Result<RelevanceMatrix, CoreError> {
    let tokens = layers
        .first()
        .map(AttentionLayer::tokens)
        .ok_or(CoreError::ShapeMismatch {
            what: "attention stack",
            expected: "at least one layer".into(),
            found: "0 layers".into(),
        })?;
    if let Some(bad) = layers.iter().find(|l| l.tokens != tokens) {
        return Err(CoreError::ShapeMismatch {
            what: "attention stack",
            expected: format!("{tokens} tokens in every layer"),
            found: format!("a layer with {} tokens", bad.tokens),
        });
    }
    let mut relevance = RelevanceMatrix::identity(tokens);
    for layer in layers.iter().rev() {
        relevance.accumulate(&layer.gradient_weighted());
    }
    Ok(relevance)
}

/// Transformer heatmap: relevance recursion, CLS-row patch scores reshaped to
/// `grid = (rows, cols)`, bilinear upsample to `target`, normalization.
pub fn rollout_transformer(
    layers: &[AttentionLayer<'_>],
    grid: (usize, usize),
    target: ImageSize,
) -> Result<Grid, CoreError> {
    check_target(target)?;
    let relevance = propagate_relevance(layers)?;
    let (rows, cols) = grid;
    let tokens = relevance.tokens();
    if rows == 0 || cols == 0 || rows * cols != tokens - 1 {
        return Err(CoreError::GridMismatch { rows, cols, tokens });
    }
    let patches = Grid::from_vec(rows, cols, relevance.cls_patch_relevance()).expect("checked");
    Ok(normalize(&upsample_bilinear(&patches, target)))
}

/// Min-max normalization to `[0, 1]`. A constant map (including all zeros)
/// becomes all zeros.
pub fn normalize(raw: &Grid) -> Grid {
    let mut out = raw.clone();
    match raw.min_max() {
        Some((lo, hi)) if hi > lo => {
            let span = hi - lo;
            out.map_in_place(|v| (v - lo) / span);
        }
        _ => out.map_in_place(|_| 0.0),
    }
    out
}

/// Bilinear resize with the half-pixel convention.
///
/// For output row `i`, the source coordinate is `(i + 0.5) * h / H - 0.5`
/// clamped to `[0, h - 1]` (columns likewise). With `y0 = floor(sy)`,
/// `y1 = min(y0 + 1, h - 1)`, `wy = sy - y0` the output is
/// `(1 - wy) * ((1 - wx) * s[y0][x0] + wx * s[y0][x1]) + wy * ((1 - wx) * s[y1][x0] + wx * s[y1][x1])`.
pub fn upsample_bilinear(src: &Grid, target: ImageSize) -> Grid {
    let (h, w) = (src.rows(), src.cols());
    assert!(
        h >= 1 && w >= 1,
        "upsample_bilinear needs a non-empty source"
    );
    let ys: Vec<(usize, usize, f64)> = (0..target.height)
        .map(|i| source_coord(i, h, target.height))
        .collect();
    let xs: Vec<(usize, usize, f64)> = (0..target.width)
        .map(|j| source_coord(j, w, target.width))
        .collect();
    let mut out = Grid::zeros(target.height, target.width);
    for (i, &(y0, y1, wy)) in ys.iter().enumerate() {
        let top = src.row(y0);
        let bottom = src.row(y1);
        for (j, &(x0, x1, wx)) in xs.iter().enumerate() {
            let upper = (1.0 - wx) * top[x0] + wx * top[x1];
            let lower = (1.0 - wx) * bottom[x0] + wx * bottom[x1];
            out.set(i, j, (1.0 - wy) * upper + wy * lower);
        }
    }
    out
}

fn source_coord(out_index: usize, src_len: usize, out_len: usize) -> (usize, usize, f64) {
    let s = (out_index as f64 + 0.5) * src_len as f64 / out_len as f64 - 0.5;
    let s = s.clamp(0.0, (src_len - 1) as f64);
    // s >= 0, so truncation is floor
    let lo = s as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, s - lo as f64)
}

fn check_target(target: ImageSize) -> Result<(), CoreError> {
    if target.height == 0 || target.width == 0 {
        return Err(CoreError::ShapeMismatch {
            what: "target size",
            expected: "positive height and width".into(),
            found: format!("{}x{}", target.height, target.width),
        });
    }
    Ok(())
}
