//! Run-bundle format.
//!
//! A bundle is a directory holding `manifest.json` plus one `<name>.bin` file
//! per tensor. Tensor files are raw little-endian `f32` in row-major order;
//! their shapes live only in the manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use groundcam_core::prompts::{PromptEntry, PromptLabel, PromptPool};
use groundcam_core::{ImageSize, TripletLabel};
use serde::{Deserialize, Serialize};

use crate::error::BundleError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Instrument,
    Triplet,
    VerbReprompt,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Instrument => "instrument",
            Task::Triplet => "triplet",
            Task::VerbReprompt => "verb_reprompt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureKind {
    Conv,
    Transformer,
}

/// A named `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn validate(&self) -> Result<(), BundleError> {
        check_tensor_name(&self.name)?;
        if self.shape.is_empty() || self.shape.contains(&0) {
            return Err(BundleError::ShapeMismatch {
                record: self.name.clone(),
                detail: format!(
                    "shape {:?} must be non-empty with positive extents",
                    self.shape
                ),
            });
        }
        let expected: usize = self.shape.iter().product();
        if expected != self.data.len() {
            return Err(BundleError::ShapeMismatch {
                record: self.name.clone(),
                detail: format!(
                    "shape {:?} needs {expected} values, found {}",
                    self.shape,
                    self.data.len()
                ),
            });
        }
        if let Some(index) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(BundleError::NonFiniteValue {
                record: self.name.clone(),
                index,
            });
        }
        Ok(())
    }

    /// Little-endian payload as stored on disk.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

fn check_tensor_name(name: &str) -> Result<(), BundleError> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(BundleError::schema(
            format!("tensor {name:?}"),
            "names must be [A-Za-z0-9_.-]+ and not start with '.'",
        ))
    }
}

/// Post-softmax attention of one block and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPair {
    pub attention: TensorRecord,
    pub gradient: TensorRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Capture {
    Conv {
        activations: TensorRecord,
        gradients: TensorRecord,
    },
    /// Layers ordered first block to last. `patch_grid` defaults to a square
    /// grid when absent.
    Transformer {
        layers: Vec<AttentionPair>,
        patch_grid: Option<(usize, usize)>,
    },
}

impl Capture {
    pub fn kind(&self) -> CaptureKind {
        match self {
            Capture::Conv { .. } => CaptureKind::Conv,
            Capture::Transformer { .. } => CaptureKind::Transformer,
        }
    }

    pub fn tensors(&self) -> Vec<&TensorRecord> {
        match self {
            Capture::Conv {
                activations,
                gradients,
            } => vec![activations, gradients],
            Capture::Transformer { layers, .. } => layers
                .iter()
                .flat_map(|l| [&l.attention, &l.gradient])
                .collect(),
        }
    }

    fn validate(&self, frame_id: &str) -> Result<(), BundleError> {
        for t in self.tensors() {
            t.validate()?;
        }
        match self {
            Capture::Conv {
                activations,
                gradients,
            } => {
                if activations.shape.len() != 3 || activations.shape != gradients.shape {
                    return Err(BundleError::ShapeMismatch {
                        record: format!("frame {frame_id} conv capture"),
                        detail: format!(
                            "activations {:?} and gradients {:?} must share one K x H x W shape",
                            activations.shape, gradients.shape
                        ),
                    });
                }
            }
            Capture::Transformer { layers, patch_grid } => {
                let context = format!("frame {frame_id} attention stack");
                let first = layers
                    .first()
                    .ok_or_else(|| BundleError::schema(&context, "needs at least one layer"))?;
                let n = first.attention.shape.first().copied().unwrap_or(0);
                if n < 2 {
                    return Err(BundleError::schema(&context, "needs N >= 2 tokens"));
                }
                for (l, pair) in layers.iter().enumerate() {
                    for t in [&pair.attention, &pair.gradient] {
                        if t.shape != [n, n] {
                            return Err(BundleError::schema(
                                &context,
                                format!(
                                    "layer {} tensor {} has shape {:?}, expected [{n}, {n}]",
                                    l + 1,
                                    t.name,
                                    t.shape
                                ),
                            ));
                        }
                    }
                }
                if let Some((rows, cols)) = patch_grid {
                    if rows * cols != n - 1 {
                        return Err(BundleError::schema(
                            &context,
                            format!(
                                "patch grid {rows}x{cols} does not cover {} patch tokens",
                                n - 1
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of attention tokens (transformer captures only).
    pub fn tokens(&self) -> Option<usize> {
        match self {
            Capture::Transformer { layers, .. } => layers.first().map(|l| l.attention.shape[0]),
            Capture::Conv { .. } => None,
        }
    }
}

/// One frame of a run: scores for every prompt plus the captured tensors for
/// the prompt the gradients were taken against.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCapture {
    pub frame_id: String,
    pub video_id: Option<String>,
    pub image_size: ImageSize,
    pub similarity_scores: Vec<f64>,
    pub capture: Capture,
    pub image_path: Option<String>,
}

impl FrameCapture {
    pub fn video(&self) -> &str {
        self.video_id.as_deref().unwrap_or(DEFAULT_VIDEO)
    }
}

/// Video id used for frames that do not name one.
pub const DEFAULT_VIDEO: &str = "all";

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunBundle {
    pub task: Task,
    pub prompt_pool: PromptPool,
    pub frames: Vec<FrameCapture>,
    pub annotation_file: Option<String>,
}

impl RunBundle {
    pub fn validate(&self) -> Result<(), BundleError> {
        for (i, entry) in self.prompt_pool.entries().iter().enumerate() {
            let ok = matches!(
                (self.task, &entry.label),
                (Task::Instrument, PromptLabel::Instrument(_))
                    | (Task::Triplet, PromptLabel::Triplet(_))
                    | (Task::VerbReprompt, PromptLabel::Verb(_))
            );
            if !ok {
                return Err(BundleError::schema(
                    format!("prompt_pool[{i}]"),
                    format!("label does not fit task {}", self.task.name()),
                ));
            }
        }
        let mut frame_ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for frame in &self.frames {
            let context = format!("frame {}", frame.frame_id);
            if !frame_ids.insert(frame.frame_id.as_str()) {
                return Err(BundleError::schema(context, "duplicate frame_id"));
            }
            if frame.image_size.height == 0 || frame.image_size.width == 0 {
                return Err(BundleError::schema(context, "image_size must be positive"));
            }
            if frame.similarity_scores.len() != self.prompt_pool.len() {
                return Err(BundleError::schema(
                    context,
                    format!(
                        "{} similarity scores for a pool of {} prompts",
                        frame.similarity_scores.len(),
                        self.prompt_pool.len()
                    ),
                ));
            }
            if let Some(index) = frame.similarity_scores.iter().position(|s| !s.is_finite()) {
                return Err(BundleError::NonFiniteValue {
                    record: format!("{context} similarity_scores"),
                    index,
                });
            }
            frame.capture.validate(&frame.frame_id)?;
            for t in frame.capture.tensors() {
                if !names.insert(t.name.as_str()) {
                    return Err(BundleError::schema(
                        format!("tensor {}", t.name),
                        "name used more than once",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self, frame_id: &str) -> Option<&FrameCapture> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }
}

// ---- on-disk manifest ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    format_version: u32,
    task: Task,
    prompt_pool: Vec<PromptDoc>,
    frames: Vec<FrameDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotation_file: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptDoc {
    prompt: String,
    label: LabelDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LabelDoc {
    Name(String),
    Triplet(TripletLabel),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    frame_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    video_id: Option<String>,
    image_size: [usize; 2],
    capture_kind: CaptureKind,
    similarity_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conv: Option<ConvDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attention: Option<Vec<LayerDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patch_grid: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvDoc {
    activations: TensorDoc,
    gradients: TensorDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    attention: TensorDoc,
    gradient: TensorDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    name: String,
    shape: Vec<usize>,
}

impl TensorDoc {
    fn of(t: &TensorRecord) -> Self {
        Self {
            name: t.name.clone(),
            shape: t.shape.clone(),
        }
    }
}

fn label_doc(label: &PromptLabel) -> LabelDoc {
    match label {
        PromptLabel::Instrument(c) | PromptLabel::Verb(c) => LabelDoc::Name(c.clone()),
        PromptLabel::Triplet(t) => LabelDoc::Triplet(t.clone()),
    }
}

fn label_from_doc(task: Task, index: usize, doc: LabelDoc) -> Result<PromptLabel, BundleError> {
    match (task, doc) {
        (Task::Instrument, LabelDoc::Name(c)) => Ok(PromptLabel::Instrument(c)),
        (Task::VerbReprompt, LabelDoc::Name(v)) => Ok(PromptLabel::Verb(v)),
        (Task::Triplet, LabelDoc::Triplet(t)) => Ok(PromptLabel::Triplet(t)),
        (task, _) => Err(BundleError::schema(
            format!("prompt_pool[{index}]"),
            format!("label shape does not fit task {}", task.name()),
        )),
    }
}

fn manifest_doc(bundle: &RunBundle) -> ManifestDoc {
    let prompt_pool = bundle
        .prompt_pool
        .entries()
        .iter()
        .map(|e| PromptDoc {
            prompt: e.prompt.clone(),
            label: label_doc(&e.label),
        })
        .collect();
    let frames = bundle
        .frames
        .iter()
        .map(|f| {
            let (conv, attention, patch_grid) = match &f.capture {
                Capture::Conv {
                    activations,
                    gradients,
                } => (
                    Some(ConvDoc {
                        activations: TensorDoc::of(activations),
                        gradients: TensorDoc::of(gradients),
                    }),
                    None,
                    None,
                ),
                Capture::Transformer { layers, patch_grid } => (
                    None,
                    Some(
                        layers
                            .iter()
                            .map(|l| LayerDoc {
                                attention: TensorDoc::of(&l.attention),
                                gradient: TensorDoc::of(&l.gradient),
                            })
                            .collect(),
                    ),
                    patch_grid.map(|(r, c)| [r, c]),
                ),
            };
            FrameDoc {
                frame_id: f.frame_id.clone(),
                video_id: f.video_id.clone(),
                image_size: [f.image_size.height, f.image_size.width],
                capture_kind: f.capture.kind(),
                similarity_scores: f.similarity_scores.clone(),
                conv,
                attention,
                patch_grid,
                image_path: f.image_path.clone(),
            }
        })
        .collect();
    ManifestDoc {
        format_version: FORMAT_VERSION,
        task: bundle.task,
        prompt_pool,
        frames,
        annotation_file: bundle.annotation_file.clone(),
    }
}

/// Writes `bundle` into directory `path` (created if needed). Output bytes
/// depend only on the bundle's contents.
pub fn write_bundle(bundle: &RunBundle, path: &Path) -> Result<(), BundleError> {
    bundle.validate()?;
    fs::create_dir_all(path).map_err(|e| BundleError::io(path, e))?;
    let doc = manifest_doc(bundle);
    let mut json =
        serde_json::to_string_pretty(&doc).map_err(|e| BundleError::schema("manifest", e))?;
    json.push('\n');
    let manifest_path = path.join(MANIFEST_FILE);
    fs::write(&manifest_path, json).map_err(|e| BundleError::io(manifest_path, e))?;
    for frame in &bundle.frames {
        for t in frame.capture.tensors() {
            let file = tensor_path(path, &t.name);
            fs::write(&file, t.to_le_bytes()).map_err(|e| BundleError::io(file, e))?;
        }
    }
    Ok(())
}

pub fn tensor_path(bundle_dir: &Path, name: &str) -> PathBuf {
    bundle_dir.join(format!("{name}.bin"))
}

fn read_tensor(dir: &Path, doc: TensorDoc) -> Result<TensorRecord, BundleError> {
    check_tensor_name(&doc.name)?;
    let file = tensor_path(dir, &doc.name);
    let bytes = fs::read(&file).map_err(|e| BundleError::io(file, e))?;
    if bytes.len() % 4 != 0 {
        return Err(BundleError::ShapeMismatch {
            record: doc.name,
            detail: format!(
                "payload of {} bytes is not a whole number of f32 values",
                bytes.len()
            ),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let record = TensorRecord {
        name: doc.name,
        shape: doc.shape,
        data,
    };
    record.validate()?;
    Ok(record)
}

fn frame_from_doc(dir: &Path, doc: FrameDoc) -> Result<FrameCapture, BundleError> {
    let context = format!("frame {}", doc.frame_id);
    let capture = match doc.capture_kind {
        CaptureKind::Conv => {
            if doc.attention.is_some() || doc.patch_grid.is_some() {
                return Err(BundleError::schema(
                    context,
                    "conv capture must not carry attention fields",
                ));
            }
            let conv = doc
                .conv
                .ok_or_else(|| BundleError::schema(&context, "conv capture needs a conv pair"))?;
            Capture::Conv {
                activations: read_tensor(dir, conv.activations)?,
                gradients: read_tensor(dir, conv.gradients)?,
            }
        }
        CaptureKind::Transformer => {
            if doc.conv.is_some() {
                return Err(BundleError::schema(
                    context,
                    "transformer capture must not carry a conv pair",
                ));
            }
            let layers = doc
                .attention
                .ok_or_else(|| {
                    BundleError::schema(&context, "transformer capture needs an attention stack")
                })?
                .into_iter()
                .map(|l| {
                    Ok(AttentionPair {
                        attention: read_tensor(dir, l.attention)?,
                        gradient: read_tensor(dir, l.gradient)?,
                    })
                })
                .collect::<Result<Vec<_>, BundleError>>()?;
            Capture::Transformer {
                layers,
                patch_grid: doc.patch_grid.map(|[r, c]| (r, c)),
            }
        }
    };
    Ok(FrameCapture {
        frame_id: doc.frame_id,
        video_id: doc.video_id,
        image_size: ImageSize::new(doc.image_size[0], doc.image_size[1]),
        similarity_scores: doc.similarity_scores,
        capture,
        image_path: doc.image_path,
    })
}

/// Reads and validates the bundle in directory `path`.
pub fn load_bundle(path: &Path) -> Result<RunBundle, BundleError> {
    let manifest_path = path.join(MANIFEST_FILE);
    let text =
        fs::read_to_string(&manifest_path).map_err(|e| BundleError::io(&manifest_path, e))?;
    let doc: ManifestDoc =
        serde_json::from_str(&text).map_err(|e| BundleError::schema(MANIFEST_FILE, e))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(BundleError::schema(
            MANIFEST_FILE,
            format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            ),
        ));
    }
    let entries = doc
        .prompt_pool
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(PromptEntry {
                prompt: p.prompt,
                label: label_from_doc(doc.task, i, p.label)?,
            })
        })
        .collect::<Result<Vec<_>, BundleError>>()?;
    let prompt_pool =
        PromptPool::from_entries(entries).map_err(|e| BundleError::schema("prompt_pool", e))?;
    let frames = doc
        .frames
        .into_iter()
        .map(|f| frame_from_doc(path, f))
        .collect::<Result<Vec<_>, _>>()?;
    let bundle = RunBundle {
        task: doc.task,
        prompt_pool,
        frames,
        annotation_file: doc.annotation_file,
    };
    bundle.validate()?;
    Ok(bundle)
}
