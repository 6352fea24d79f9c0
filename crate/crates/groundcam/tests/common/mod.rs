#![allow(dead_code)]

use std::path::PathBuf;

use groundcam::annotations::{parse_annotations, Annotations};
use groundcam::bundle::{AttentionPair, Capture, FrameCapture, RunBundle, Task, TensorRecord};
use groundcam_core::prompts::{build_instrument_pool, build_triplet_pool, build_verb_pool};
use groundcam_core::ImageSize;

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn conv(prefix: &str, shape: [usize; 3], act: Vec<f32>, grad: Vec<f32>) -> Capture {
    Capture::Conv {
        activations: TensorRecord::new(format!("{prefix}_act"), shape.to_vec(), act),
        gradients: TensorRecord::new(format!("{prefix}_grad"), shape.to_vec(), grad),
    }
}

pub fn frame(
    id: &str,
    video: &str,
    size: (usize, usize),
    scores: Vec<f64>,
    capture: Capture,
) -> FrameCapture {
    FrameCapture {
        frame_id: id.into(),
        video_id: Some(video.into()),
        image_size: ImageSize::new(size.0, size.1),
        similarity_scores: scores,
        capture,
        image_path: None,
    }
}

/// Frame 2 of the three-frame fixture: one block, five tokens, 2x2 patches.
/// Only the CLS row carries gradient, so r = [0.5, 0, 0.125, 0].
pub fn rollout_capture(prefix: &str) -> Capture {
    let mut t = vec![0.2f32; 25];
    t[..5].copy_from_slice(&[0.25, 0.5, 0.125, 0.0625, 0.0625]);
    let mut g = vec![0.0f32; 25];
    g[..5].copy_from_slice(&[1.0, 1.0, -1.0, 2.0, 0.0]);
    Capture::Transformer {
        layers: vec![AttentionPair {
            attention: TensorRecord::new(format!("{prefix}_attn_l1"), vec![5, 5], t),
            gradient: TensorRecord::new(format!("{prefix}_grad_l1"), vec![5, 5], g),
        }],
        patch_grid: Some((2, 2)),
    }
}

/// Instrument bundle assembled from the hand-checked operation examples.
///
/// * f1: two-channel Grad-CAM case, heatmap [[1/3, 0], [1, 2/3]], predicts grasper.
/// * f2: single-block rollout, heatmap [[1, 0], [0.25, 0]], predicts hook.
/// * f3: zero gradients, all-zero heatmap, predicts grasper.
pub fn three_frame_bundle() -> RunBundle {
    RunBundle {
        task: Task::Instrument,
        prompt_pool: build_instrument_pool(&["grasper", "hook"]).unwrap(),
        frames: vec![
            frame(
                "f1",
                "v01",
                (2, 2),
                vec![0.9, 0.1],
                conv(
                    "f1",
                    [2, 2, 2],
                    vec![1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 0.0, 1.0],
                    vec![1.0, 1.0, 1.0, 1.0, -2.0, -2.0, -2.0, -2.0],
                ),
            ),
            frame("f2", "v01", (2, 2), vec![0.2, 0.7], rollout_capture("f2")),
            frame(
                "f3",
                "v01",
                (2, 2),
                vec![0.6, 0.4],
                conv("f3", [1, 2, 2], vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]),
            ),
        ],
        annotation_file: Some("annotations.json".into()),
    }
}

pub const THREE_FRAME_ANNOTATIONS: &str = r#"{
  "image_size": [2, 2],
  "frames": [
    {
      "frame_id": "f1",
      "boxes": [
        {"class": "grasper", "x_min": 0, "y_min": 1, "x_max": 1, "y_max": 1},
        {"class": "hook", "x_min": 0, "y_min": 0, "x_max": 0, "y_max": 0}
      ]
    },
    {
      "frame_id": "f2",
      "boxes": [{"class": "grasper", "x_min": 0, "y_min": 0, "x_max": 0, "y_max": 0}]
    },
    {
      "frame_id": "f3",
      "boxes": [{"class": "grasper", "x_min": 0, "y_min": 0, "x_max": 1, "y_max": 1}]
    }
  ]
}
"#;

pub fn three_frame_annotations() -> Annotations {
    parse_annotations(THREE_FRAME_ANNOTATIONS).unwrap()
}

/// 4x4 conv capture whose heatmap is 1 at `(row, col)` and 0 elsewhere.
pub fn spot_capture(prefix: &str, row: usize, col: usize) -> Capture {
    let mut act = vec![0.0f32; 16];
    act[row * 4 + col] = 1.0;
    conv(prefix, [1, 4, 4], act, vec![1.0; 16])
}

pub const S: [&str; 2] = ["grasper", "hook"];
pub const V: [&str; 2] = ["retract", "dissect"];
pub const O: [&str; 2] = ["gallbladder", "liver"];

/// Scores putting the maximum on pool position `best`.
pub fn scores_for(best: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i == best {
                0.9
            } else {
                0.1 + 0.01 * i as f64
            }
        })
        .collect()
}

fn triplet_index(s: usize, v: usize, o: usize) -> usize {
    s * 4 + v * 2 + o
}

/// Pass-1 triplet bundle on 4x4 frames.
///
/// * t1: predicts (grasper, retract, gallbladder), truth identical.
/// * t2: predicts (hook, dissect, liver), truth (hook, dissect, gallbladder).
/// * t3: predicts (grasper, dissect, liver), truth (hook, dissect, liver).
/// * t4: predicts (grasper, retract, liver), truth (grasper, retract, liver), no grasper box.
pub fn triplet_pass1() -> RunBundle {
    let pool = build_triplet_pool(&S, &V, &O).unwrap();
    let n = pool.len();
    let cap = |p: &str| spot_capture(p, 0, 0);
    RunBundle {
        task: Task::Triplet,
        prompt_pool: pool,
        frames: vec![
            frame(
                "t1",
                "v42",
                (4, 4),
                scores_for(triplet_index(0, 0, 0), n),
                cap("t1"),
            ),
            frame(
                "t2",
                "v42",
                (4, 4),
                scores_for(triplet_index(1, 1, 1), n),
                cap("t2"),
            ),
            frame(
                "t3",
                "v43",
                (4, 4),
                scores_for(triplet_index(0, 1, 1), n),
                cap("t3"),
            ),
            frame(
                "t4",
                "v43",
                (4, 4),
                scores_for(triplet_index(0, 0, 1), n),
                cap("t4"),
            ),
        ],
        annotation_file: None,
    }
}

pub const TRIPLET_ANNOTATIONS: &str = r#"{
  "image_size": [4, 4],
  "frames": [
    {"frame_id": "t1",
     "boxes": [{"class": "grasper", "x_min": 2, "y_min": 2, "x_max": 3, "y_max": 3}],
     "triplet": {"instrument": "grasper", "verb": "retract", "target": "gallbladder"}},
    {"frame_id": "t2",
     "boxes": [{"class": "hook", "x_min": 0, "y_min": 0, "x_max": 1, "y_max": 1}],
     "triplet": {"instrument": "hook", "verb": "dissect", "target": "gallbladder"}},
    {"frame_id": "t3",
     "boxes": [{"class": "hook", "x_min": 0, "y_min": 0, "x_max": 3, "y_max": 3}],
     "triplet": {"instrument": "hook", "verb": "dissect", "target": "liver"}},
    {"frame_id": "t4",
     "classes": ["grasper"],
     "triplet": {"instrument": "grasper", "verb": "retract", "target": "liver"}}
  ]
}
"#;

pub fn triplet_annotations() -> Annotations {
    parse_annotations(TRIPLET_ANNOTATIONS).unwrap()
}

/// Pass-2 bundle covering the IV-correct frames t1, t2, t4, with the verb
/// heatmap peak of each frame at the given pixel.
pub fn triplet_pass2(spots: [(usize, usize); 3]) -> RunBundle {
    let pool = build_verb_pool(&V).unwrap();
    let ids = [("t1", "v42", 0), ("t2", "v42", 1), ("t4", "v43", 0)];
    RunBundle {
        task: Task::VerbReprompt,
        prompt_pool: pool,
        frames: ids
            .iter()
            .zip(spots)
            .map(|(&(id, video, verb), (r, c))| {
                frame(
                    id,
                    video,
                    (4, 4),
                    scores_for(verb, 2),
                    spot_capture(&format!("{id}_verb"), r, c),
                )
            })
            .collect(),
        annotation_file: None,
    }
}
