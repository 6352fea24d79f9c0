//! End-to-end evaluation of run bundles.
//!
//! Frames are scored in parallel and reduced in manifest order. Every
//! ratio metric is a quotient of pixel counts and means are summed in a
//! fixed order, so the worker count never changes the output.

use std::collections::{BTreeMap, BTreeSet};

use groundcam_core::cam::{gradcam_conv, rollout_transformer, AttentionLayer, FeatureMaps};
use groundcam_core::metrics::{
    aggregate_video, ars, f1_threshold_sweep, tau_aa, tau_ac, triplet_match, ClassF1, MetricRow,
    Prediction, VideoReport,
};
use groundcam_core::prompts::{select_prediction, verb_reprompt, PromptLabel};
use groundcam_core::region::threshold_region;
use groundcam_core::{Comparison, FrameAnnotation, Heatmap, TripletLabel, DEFAULT_TAU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::Annotations;
use crate::bundle::{Capture, FrameCapture, RunBundle, Task};
use crate::error::EvalError;

/// Video id of the merged, dataset-level report.
pub const MERGED_VIDEO: &str = "ALL";

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// One report set per threshold.
    pub taus: Vec<f64>,
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
    /// Also emit a report over all frames of the bundle.
    pub merge: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            taus: vec![DEFAULT_TAU],
            jobs: None,
            merge: false,
        }
    }
}

/// Per-frame rows for one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRows {
    pub tau: f64,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub reports: Vec<VideoReport>,
    pub frames: Vec<FrameRows>,
    /// Second-pass requests (triplet runs only).
    pub worklist: Vec<WorklistEntry>,
}

/// One request for a verb-prompt capture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorklistEntry {
    pub frame_id: String,
    pub verb_prompt: String,
    pub predicted_triplet: TripletLabel,
}

/// Rebuilds the heatmap of `frame` for the prompt at `prompt_index`.
pub fn frame_heatmap(frame: &FrameCapture, prompt_index: usize) -> Result<Heatmap, EvalError> {
    let err = |e| EvalError::frame(&frame.frame_id, e);
    let grid = match &frame.capture {
        Capture::Conv {
            activations,
            gradients,
        } => {
            let shape = |s: &[usize]| [s[0], s[1], s[2]];
            let a = FeatureMaps::new(&activations.data, shape(&activations.shape)).map_err(err)?;
            let g = FeatureMaps::new(&gradients.data, shape(&gradients.shape)).map_err(err)?;
            gradcam_conv(&a, &g, frame.image_size).map_err(err)?
        }
        Capture::Transformer { layers, patch_grid } => {
            let tokens = frame.capture.tokens().unwrap_or(0);
            let layers = layers
                .iter()
                .map(|l| AttentionLayer::new(&l.attention.data, &l.gradient.data, tokens))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            let grid = patch_grid.unwrap_or_else(|| square_grid(tokens - 1));
            rollout_transformer(&layers, grid, frame.image_size).map_err(err)?
        }
    };
    Ok(Heatmap::new(frame.frame_id.clone(), prompt_index, grid)
        .expect("normalized maps lie in [0, 1]"))
}

/// `(s, s)` when `patches` is a perfect square, otherwise `(1, patches)`,
/// which the rollout rejects unless it happens to fit.
fn square_grid(patches: usize) -> (usize, usize) {
    let side = (patches as f64).sqrt().round() as usize;
    if side * side == patches {
        (side, side)
    } else {
        (0, patches)
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, EvalError> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| EvalError::Report(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn expect_task(bundle: &RunBundle, expected: Task) -> Result<(), EvalError> {
    if bundle.task == expected {
        Ok(())
    } else {
        Err(EvalError::TaskMismatch {
            expected: expected.name(),
            found: bundle.task.name(),
        })
    }
}

/// Frames grouped by video, in order of first appearance.
fn videos(bundle: &RunBundle) -> Vec<(&str, Vec<usize>)> {
    let mut order: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, f) in bundle.frames.iter().enumerate() {
        match order.iter_mut().find(|(v, _)| *v == f.video()) {
            Some((_, idx)) => idx.push(i),
            None => order.push((f.video(), vec![i])),
        }
    }
    order
}

/// Builds reports for every `(video, tau)` pair (plus merged ones) from
/// per-frame rows, which are `None` for excluded frames.
fn build_reports(
    bundle: &RunBundle,
    rows_by_tau: &[(f64, Vec<Option<MetricRow>>)],
    merge: bool,
    class_f1: impl Fn(&[usize]) -> Result<Vec<ClassF1>, EvalError>,
) -> Result<Vec<VideoReport>, EvalError> {
    let mut groups = videos(bundle);
    if merge {
        groups.push((MERGED_VIDEO, (0..bundle.frames.len()).collect()));
    }
    let mut reports = Vec::new();
    for (video, idx) in &groups {
        let f1 = class_f1(idx)?;
        for (tau, rows) in rows_by_tau {
            let evaluated: Vec<MetricRow> = idx.iter().filter_map(|&i| rows[i].clone()).collect();
            if evaluated.is_empty() {
                continue;
            }
            let mut report = aggregate_video(*video, *tau, &evaluated, idx.len())
                .map_err(|e| EvalError::Report(format!("video {video}: {e}")))?;
            report.class_f1 = f1.clone();
            reports.push(report);
        }
    }
    reports.sort_by(|a, b| a.video_id.cmp(&b.video_id).then(a.tau.total_cmp(&b.tau)));
    Ok(reports)
}

fn frame_rows(rows_by_tau: Vec<(f64, Vec<Option<MetricRow>>)>) -> Vec<FrameRows> {
    rows_by_tau
        .into_iter()
        .map(|(tau, rows)| FrameRows {
            tau,
            rows: rows.into_iter().flatten().collect(),
        })
        .collect()
}

fn annotation_of<'a>(
    annotations: &'a Annotations,
    frame: &FrameCapture,
) -> Option<&'a FrameAnnotation> {
    annotations.get(&frame.frame_id)
}

/// Scores one instrument-classification frame at each threshold. Frames
/// without annotated classes are excluded (`None`).
pub fn evaluate_instrument_frame(
    bundle: &RunBundle,
    frame: &FrameCapture,
    annotation: Option<&FrameAnnotation>,
    taus: &[f64],
) -> Result<Vec<Option<MetricRow>>, EvalError> {
    let Some(annotation) = annotation.filter(|a| !a.classes_present().is_empty()) else {
        return Ok(vec![None; taus.len()]);
    };
    let err = |e| EvalError::frame(&frame.frame_id, e);
    annotation.check_bounds(frame.image_size).map_err(err)?;
    let index =
        select_prediction(&frame.similarity_scores, bundle.prompt_pool.len()).map_err(err)?;
    let PromptLabel::Instrument(predicted) = &bundle.prompt_pool.entries()[index].label else {
        unreachable!("validated bundle")
    };
    let heatmap = frame_heatmap(frame, index)?;
    let g_all = annotation.all_region(frame.image_size).map_err(err)?;
    taus.iter()
        .map(|&tau| {
            let attention = threshold_region(heatmap.values(), tau, Comparison::Geq);
            let ac = tau_ac(&attention, &g_all);
            let aa = tau_aa(&attention, predicted, annotation).map_err(err)?;
            let mut row =
                MetricRow::new(frame.frame_id.clone(), Prediction::Class(predicted.clone()));
            row.tau_ac = Some(ac.value);
            row.tau_aa = Some(aa.value);
            row.degenerate_attention = ac.degenerate;
            Ok(Some(row))
        })
        .collect()
}

/// Instrument classification run: heatmap of the predicted prompt, `A_τ`
/// with `>=`, τ-AC and τ-AA per frame, per-video aggregation and per-class F1.
pub fn run_instrument_eval(
    bundle: &RunBundle,
    annotations: &Annotations,
    opts: &EvalOptions,
) -> Result<EvalOutput, EvalError> {
    expect_task(bundle, Task::Instrument)?;
    let per_frame: Vec<Vec<Option<MetricRow>>> = with_pool(opts.jobs, || {
        bundle
            .frames
            .par_iter()
            .map(|f| {
                evaluate_instrument_frame(bundle, f, annotation_of(annotations, f), &opts.taus)
            })
            .collect::<Result<Vec<_>, EvalError>>()
    })??;
    let rows_by_tau: Vec<(f64, Vec<Option<MetricRow>>)> = opts
        .taus
        .iter()
        .enumerate()
        .map(|(t, &tau)| (tau, per_frame.iter().map(|r| r[t].clone()).collect()))
        .collect();

    let class_f1 = |idx: &[usize]| -> Result<Vec<ClassF1>, EvalError> {
        let scored: Vec<(&FrameCapture, &FrameAnnotation)> = idx
            .iter()
            .map(|&i| &bundle.frames[i])
            .filter_map(|f| {
                annotation_of(annotations, f)
                    .filter(|a| !a.classes_present().is_empty())
                    .map(|a| (f, a))
            })
            .collect();
        bundle
            .prompt_pool
            .entries()
            .iter()
            .enumerate()
            .map(|(p, entry)| {
                let PromptLabel::Instrument(class) = &entry.label else {
                    unreachable!("validated bundle")
                };
                let scores: Vec<f64> = scored.iter().map(|(f, _)| f.similarity_scores[p]).collect();
                let labels: Vec<bool> = scored
                    .iter()
                    .map(|(_, a)| a.contains_class(class))
                    .collect();
                let sweep = f1_threshold_sweep(&scores, &labels)
                    .map_err(|e| EvalError::Report(e.to_string()))?;
                Ok(ClassF1 {
                    class: class.clone(),
                    threshold: sweep.threshold,
                    f1: sweep.f1,
                    single_class: sweep.single_class,
                })
            })
            .collect()
    };
    let reports = build_reports(bundle, &rows_by_tau, opts.merge, class_f1)?;
    Ok(EvalOutput {
        reports,
        frames: frame_rows(rows_by_tau),
        worklist: Vec::new(),
    })
}

/// Verbs appearing in a triplet pool, in first-appearance order.
fn pool_verbs(bundle: &RunBundle) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    bundle
        .prompt_pool
        .entries()
        .iter()
        .filter_map(|e| match &e.label {
            PromptLabel::Triplet(t) => Some(t.verb.as_str()),
            _ => None,
        })
        .filter(|v| seen.insert(*v))
        .collect()
}

struct TripletFrame {
    row: MetricRow,
    predicted: TripletLabel,
}

fn triplet_pass_one(
    bundle: &RunBundle,
    frame: &FrameCapture,
    annotation: Option<&FrameAnnotation>,
) -> Result<Option<TripletFrame>, EvalError> {
    let Some(truth) = annotation.and_then(|a| a.triplet.as_ref()) else {
        return Ok(None);
    };
    let index = select_prediction(&frame.similarity_scores, bundle.prompt_pool.len())
        .map_err(|e| EvalError::frame(&frame.frame_id, e))?;
    let PromptLabel::Triplet(predicted) = &bundle.prompt_pool.entries()[index].label else {
        unreachable!("validated bundle")
    };
    let mut row = MetricRow::new(
        frame.frame_id.clone(),
        Prediction::Triplet(predicted.clone()),
    );
    row.triplet = Some(triplet_match(predicted, truth));
    Ok(Some(TripletFrame {
        row,
        predicted: predicted.clone(),
    }))
}

/// Triplet classification run with the optional verb re-prompt pass.
///
/// Pass 1 yields IVT/IV/IT and the worklist of IV-correct frames. When the
/// pass-2 bundle is given it must cover exactly those frames; ARS is then
/// computed from the verb heatmap with the strict `> τ` region.
pub fn run_triplet_eval(
    pass1: &RunBundle,
    pass2: Option<&RunBundle>,
    annotations: &Annotations,
    opts: &EvalOptions,
) -> Result<EvalOutput, EvalError> {
    expect_task(pass1, Task::Triplet)?;
    if let Some(p2) = pass2 {
        expect_task(p2, Task::VerbReprompt)?;
    }
    let first: Vec<Option<TripletFrame>> = with_pool(opts.jobs, || {
        pass1
            .frames
            .par_iter()
            .map(|f| triplet_pass_one(pass1, f, annotation_of(annotations, f)))
            .collect::<Result<Vec<_>, EvalError>>()
    })??;

    let verbs = pool_verbs(pass1);
    let worklist = first
        .iter()
        .flatten()
        .filter(|t| t.row.triplet.is_some_and(|m| m.iv))
        .map(|t| {
            let verb_prompt = verb_reprompt(&t.predicted, &verbs)
                .map_err(|e| EvalError::frame(&t.row.frame_id, e))?;
            Ok(WorklistEntry {
                frame_id: t.row.frame_id.clone(),
                verb_prompt,
                predicted_triplet: t.predicted.clone(),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let rows_by_tau: Vec<(f64, Vec<Option<MetricRow>>)> = match pass2 {
        None => {
            let rows: Vec<Option<MetricRow>> = first
                .iter()
                .map(|t| t.as_ref().map(|t| t.row.clone()))
                .collect();
            opts.taus.iter().map(|&tau| (tau, rows.clone())).collect()
        }
        Some(p2) => {
            check_worklist(&worklist, p2)?;
            let verb_heatmaps: BTreeMap<&str, Heatmap> = with_pool(opts.jobs, || {
                worklist
                    .par_iter()
                    .map(|w| {
                        let frame = p2.frame(&w.frame_id).expect("checked against worklist");
                        let index = p2
                            .prompt_pool
                            .position_of_prompt(&w.verb_prompt)
                            .expect("checked against worklist");
                        Ok((w.frame_id.as_str(), frame_heatmap(frame, index)?))
                    })
                    .collect::<Result<BTreeMap<_, _>, EvalError>>()
            })??;
            opts.taus
                .iter()
                .map(|&tau| {
                    let rows = first
                        .iter()
                        .zip(&pass1.frames)
                        .map(|(t, frame)| {
                            t.as_ref()
                                .map(|t| {
                                    score_ars(
                                        t,
                                        frame,
                                        annotation_of(annotations, frame),
                                        verb_heatmaps.get(frame.frame_id.as_str()),
                                        tau,
                                    )
                                })
                                .transpose()
                        })
                        .collect::<Result<Vec<_>, EvalError>>()?;
                    Ok((tau, rows))
                })
                .collect::<Result<Vec<_>, EvalError>>()?
        }
    };

    let reports = build_reports(pass1, &rows_by_tau, opts.merge, |_| Ok(Vec::new()))?;
    Ok(EvalOutput {
        reports,
        frames: frame_rows(rows_by_tau),
        worklist,
    })
}

fn score_ars(
    t: &TripletFrame,
    frame: &FrameCapture,
    annotation: Option<&FrameAnnotation>,
    verb_heatmap: Option<&Heatmap>,
    tau: f64,
) -> Result<MetricRow, EvalError> {
    let mut row = t.row.clone();
    let iv = row.triplet.is_some_and(|m| m.iv);
    let size = frame.image_size;
    let err = |e| EvalError::frame(&frame.frame_id, e);
    let attention = match verb_heatmap {
        Some(h) => threshold_region(h.values(), tau, Comparison::Gt),
        None => groundcam_core::PixelRegion::empty(size),
    };
    let boxes = match annotation {
        Some(a) if !a.boxes(&t.predicted.instrument).is_empty() => {
            a.check_bounds(size).map_err(err)?;
            Some(a.class_region(&t.predicted.instrument, size).map_err(err)?)
        }
        _ => None,
    };
    match ars(&attention, boxes.as_ref(), iv) {
        Some(score) => {
            row.ars = Some(score.value);
            row.valid_for_ars = iv;
            row.degenerate_attention = iv && score.degenerate;
        }
        None => row.ars_excluded = true,
    }
    Ok(row)
}

fn check_worklist(worklist: &[WorklistEntry], pass2: &RunBundle) -> Result<(), EvalError> {
    let wanted: BTreeSet<&str> = worklist.iter().map(|w| w.frame_id.as_str()).collect();
    let got: BTreeSet<&str> = pass2.frames.iter().map(|f| f.frame_id.as_str()).collect();
    if wanted != got {
        let missing: Vec<_> = wanted.difference(&got).collect();
        let extra: Vec<_> = got.difference(&wanted).collect();
        return Err(EvalError::WorklistMismatch(format!(
            "pass-2 frames differ from the IV-correct set (missing {missing:?}, unexpected {extra:?})"
        )));
    }
    for w in worklist {
        if pass2
            .prompt_pool
            .position_of_prompt(&w.verb_prompt)
            .is_none()
        {
            return Err(EvalError::WorklistMismatch(format!(
                "frame {}: prompt {:?} is not in the pass-2 pool",
                w.frame_id, w.verb_prompt
            )));
        }
    }
    Ok(())
}
