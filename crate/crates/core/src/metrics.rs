//! Grounding and classification metrics.
//!
//! Ratio metrics are quotients of exact pixel counts. Frames whose attention
//! region is empty score 0 and carry a `degenerate` flag instead of dividing
//! by zero.

use alloc::string::String;
use alloc::vec::Vec;

use crate::annotation::{FrameAnnotation, TripletLabel};
use crate::error::CoreError;
use crate::region::{overlap_count, Overlap, PixelRegion};

/// A ratio metric and whether its denominator (the attention region) was empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionScore {
    pub value: f64,
    pub degenerate: bool,
}

impl RegionScore {
    fn from_overlap(o: Overlap) -> Self {
        if o.a_size == 0 {
            Self {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Self {
                value: o.intersection as f64 / o.a_size as f64,
                degenerate: false,
            }
        }
    }
}

/// Fraction of the attention region inside any annotated box.
pub fn tau_ac(attention: &PixelRegion, g_all: &PixelRegion) -> RegionScore {
    RegionScore::from_overlap(overlap_count(attention, g_all))
}

/// Fraction of the attention region inside the boxes of the predicted class;
/// exactly 0 when that class is not present in the frame.
pub fn tau_aa(
    attention: &PixelRegion,
    predicted_class: &str,
    annotation: &FrameAnnotation,
) -> Result<RegionScore, CoreError> {
    if !annotation.contains_class(predicted_class) {
        return Ok(RegionScore {
            value: 0.0,
            degenerate: attention.is_empty(),
        });
    }
    let g_pred = annotation.class_region(predicted_class, attention.size())?;
    Ok(RegionScore::from_overlap(overlap_count(attention, &g_pred)))
}

/// Componentwise match flags between a predicted and a true triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripletMatch {
    pub ivt: bool,
    pub iv: bool,
    pub it: bool,
}

pub fn triplet_match(pred: &TripletLabel, truth: &TripletLabel) -> TripletMatch {
    let s = pred.instrument == truth.instrument;
    let v = pred.verb == truth.verb;
    let o = pred.target == truth.target;
    TripletMatch {
        ivt: s && v && o,
        iv: s && v,
        it: s && o,
    }
}

/// Action reasoning score.
///
/// * `iv == false`: 0.
/// * `iv == true` with instrument boxes: `|A ∩ B| / |A|` (0 and degenerate when `A` is empty).
/// * `iv == true` without boxes: `None`, the frame is left out of ARS aggregation.
pub fn ars(
    verb_attention: &PixelRegion,
    instrument_boxes: Option<&PixelRegion>,
    iv: bool,
) -> Option<RegionScore> {
    if !iv {
        return Some(RegionScore {
            value: 0.0,
            degenerate: false,
        });
    }
    instrument_boxes.map(|b| RegionScore::from_overlap(overlap_count(verb_attention, b)))
}

/// Best F1 found by sweeping a decision threshold over one class's scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Sweep {
    /// Frames with `score > threshold` are predicted positive. May be `-inf`.
    pub threshold: f64,
    pub f1: f64,
    /// Labels were all positive, all negative, or empty.
    pub single_class: bool,
}

/// Evaluates F1 at `-inf`, every midpoint between consecutive distinct
/// scores, and `+inf`; returns the best (lowest threshold on ties).
///
/// When there are no positive labels the result is `(0, 0)`, flagged.
/// All-positive inputs are still swept (and flagged).
pub fn f1_threshold_sweep(scores: &[f64], labels: &[bool]) -> Result<F1Sweep, CoreError> {
    if scores.len() != labels.len() {
        return Err(CoreError::LengthMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Ok(F1Sweep {
            threshold: 0.0,
            f1: 0.0,
            single_class: true,
        });
    }

    let mut order: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    // predicted-positive counts shrink as the threshold rises
    let mut tp = positives;
    let mut fp = negatives;
    let f1_of = |tp: usize, fp: usize| {
        if tp == 0 {
            0.0
        } else {
            let fn_ = positives - tp;
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        }
    };

    let mut best = F1Sweep {
        threshold: f64::NEG_INFINITY,
        f1: f1_of(tp, fp),
        single_class: negatives == 0,
    };
    let mut i = 0;
    while i < order.len() {
        let score = order[i].0;
        while i < order.len() && order[i].0 == score {
            if order[i].1 {
                tp -= 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
        let threshold = match order.get(i) {
            Some(&(next, _)) => 0.5 * score + 0.5 * next,
            None => f64::INFINITY,
        };
        let f1 = f1_of(tp, fp);
        if f1 > best.f1 {
            best.threshold = threshold;
            best.f1 = f1;
        }
    }
    Ok(best)
}

/// What the model predicted for a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Prediction {
    Class(String),
    Triplet(TripletLabel),
}

/// Per-frame metric outputs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRow {
    pub frame_id: String,
    pub prediction: Prediction,
    pub tau_ac: Option<f64>,
    pub tau_aa: Option<f64>,
    pub triplet: Option<TripletMatch>,
    pub ars: Option<f64>,
    pub degenerate_attention: bool,
    /// `iv == 1` and ARS was computed against instrument boxes.
    pub valid_for_ars: bool,
    /// `iv == 1` but the frame has no boxes for the instrument.
    pub ars_excluded: bool,
}

impl MetricRow {
    pub fn new(frame_id: impl Into<String>, prediction: Prediction) -> Self {
        Self {
            frame_id: frame_id.into(),
            prediction,
            tau_ac: None,
            tau_aa: None,
            triplet: None,
            ars: None,
            degenerate_attention: false,
            valid_for_ars: false,
            ars_excluded: false,
        }
    }
}

/// Best threshold and F1 for one class.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassF1 {
    pub class: String,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_float"))]
    pub threshold: f64,
    pub f1: f64,
    pub single_class: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameCounts {
    pub total: usize,
    pub evaluated: usize,
    pub degenerate: usize,
    pub ars_valid: usize,
    pub ars_excluded: usize,
}

/// Aggregated metrics for one video (or a merged dataset).
///
/// Means are fractions in `[0, 1]`; the `*_percent` fields are in `[0, 100]`.
/// Fields that do not apply to the run's task are `None`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoReport {
    pub video_id: String,
    pub tau: f64,
    pub mean_tau_ac: Option<f64>,
    pub mean_tau_aa: Option<f64>,
    pub ivt_percent: Option<f64>,
    pub iv_percent: Option<f64>,
    pub it_percent: Option<f64>,
    pub v_over_t_percent: Option<f64>,
    /// Mean ARS over ARS-valid frames.
    pub mean_ars_valid: Option<f64>,
    /// Mean ARS over every frame with an ARS value, the zeros of `iv == 0` frames included.
    pub mean_ars_all: Option<f64>,
    pub z_over_v_percent: Option<f64>,
    pub class_f1: Vec<ClassF1>,
    pub counts: FrameCounts,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn percent(count: usize, of: usize) -> Option<f64> {
    (of > 0).then(|| 100.0 * count as f64 / of as f64)
}

/// Folds per-frame rows (in order) into a report. `total_frames` is the
/// number of frames in the video, evaluated or not.
pub fn aggregate_video(
    video_id: impl Into<String>,
    tau: f64,
    rows: &[MetricRow],
    total_frames: usize,
) -> Result<VideoReport, CoreError> {
    if rows.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    if rows.len() > total_frames {
        return Err(CoreError::LengthMismatch {
            expected: total_frames,
            found: rows.len(),
        });
    }

    let triplets: Vec<TripletMatch> = rows.iter().filter_map(|r| r.triplet).collect();
    let count = |f: fn(&TripletMatch) -> bool| triplets.iter().filter(|m| f(m)).count();
    let (ivt, iv, it) = (count(|m| m.ivt), count(|m| m.iv), count(|m| m.it));
    let has_triplets = !triplets.is_empty();

    let valid: Vec<f64> = rows
        .iter()
        .filter(|r| r.valid_for_ars)
        .filter_map(|r| r.ars)
        .collect();
    let zeros = valid.iter().filter(|&&a| a == 0.0).count();

    Ok(VideoReport {
        video_id: video_id.into(),
        tau,
        mean_tau_ac: mean(rows.iter().filter_map(|r| r.tau_ac)),
        mean_tau_aa: mean(rows.iter().filter_map(|r| r.tau_aa)),
        ivt_percent: percent(ivt, triplets.len()),
        iv_percent: percent(iv, triplets.len()),
        it_percent: percent(it, triplets.len()),
        v_over_t_percent: if has_triplets {
            percent(iv, total_frames)
        } else {
            None
        },
        mean_ars_valid: mean(valid.iter().copied()),
        mean_ars_all: mean(rows.iter().filter_map(|r| r.ars)),
        z_over_v_percent: percent(zeros, valid.len()),
        class_f1: Vec::new(),
        counts: FrameCounts {
            total: total_frames,
            evaluated: rows.len(),
            degenerate: rows.iter().filter(|r| r.degenerate_attention).count(),
            ars_valid: valid.len(),
            ars_excluded: rows.iter().filter(|r| r.ars_excluded).count(),
        },
    })
}
