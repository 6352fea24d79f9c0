mod common;

use common::*;
use groundcam::bundle::Task;
use groundcam::pipeline::{
    frame_heatmap, run_instrument_eval, run_triplet_eval, EvalOptions, MERGED_VIDEO,
};
use groundcam::EvalError;
use groundcam_core::metrics::{tau_aa, tau_ac, TripletMatch, VideoReport};
use groundcam_core::prompts::{build_instrument_pool, select_prediction, PromptLabel};
use groundcam_core::region::threshold_region;
use groundcam_core::{Comparison, Grid};

fn opts(taus: &[f64], jobs: Option<usize>) -> EvalOptions {
    EvalOptions {
        taus: taus.to_vec(),
        jobs,
        merge: false,
    }
}

fn report<'a>(reports: &'a [VideoReport], video: &str) -> &'a VideoReport {
    reports.iter().find(|r| r.video_id == video).unwrap()
}

#[test]
fn heatmaps_of_the_fixture_frames() {
    let bundle = three_frame_bundle();
    let want = [
        Grid::from_rows(&[[1.0 / 3.0, 0.0], [1.0, 2.0 / 3.0]]).unwrap(),
        Grid::from_rows(&[[1.0, 0.0], [0.25, 0.0]]).unwrap(),
        Grid::zeros(2, 2),
    ];
    for (frame, want) in bundle.frames.iter().zip(want) {
        assert_eq!(
            frame_heatmap(frame, 0).unwrap().values(),
            &want,
            "{}",
            frame.frame_id
        );
    }
}

#[test]
fn attention_inside_the_only_box_scores_one() {
    let mut bundle = three_frame_bundle();
    bundle.prompt_pool = build_instrument_pool(&["grasper", "hook"]).unwrap();
    bundle.frames.truncate(1);
    // grasper box covering the whole frame
    let anns = groundcam::annotations::parse_annotations(
        r#"{"frames": [{"frame_id": "f1", "boxes": [{"class": "grasper", "x_min": 0, "y_min": 0, "x_max": 1, "y_max": 1}]}]}"#,
    )
    .unwrap();
    let out = run_instrument_eval(&bundle, &anns, &EvalOptions::default()).unwrap();
    let r = report(&out.reports, "v01");
    assert_eq!((r.mean_tau_ac, r.mean_tau_aa), (Some(1.0), Some(1.0)));
    assert_eq!(r.tau, 0.3);
}

#[test]
fn per_frame_rows_match_individual_operations() {
    let bundle = three_frame_bundle();
    let anns = three_frame_annotations();
    let out = run_instrument_eval(&bundle, &anns, &opts(&[0.3, 0.5], None)).unwrap();
    for rows in &out.frames {
        for (row, frame) in rows.rows.iter().zip(&bundle.frames) {
            let idx = select_prediction(&frame.similarity_scores, 2).unwrap();
            let PromptLabel::Instrument(class) = &bundle.prompt_pool.entries()[idx].label else {
                panic!()
            };
            let heat = frame_heatmap(frame, idx).unwrap();
            let a = threshold_region(heat.values(), rows.tau, Comparison::Geq);
            let ann = &anns[&frame.frame_id];
            assert_eq!(
                row.tau_ac,
                Some(tau_ac(&a, &ann.all_region(frame.image_size).unwrap()).value)
            );
            assert_eq!(row.tau_aa, Some(tau_aa(&a, class, ann).unwrap().value));
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let bundle = three_frame_bundle();
    let anns = three_frame_annotations();
    let base = run_instrument_eval(&bundle, &anns, &opts(&[0.1, 0.3, 0.7], Some(1))).unwrap();
    for jobs in [Some(2), Some(4), None] {
        assert_eq!(
            run_instrument_eval(&bundle, &anns, &opts(&[0.1, 0.3, 0.7], jobs)).unwrap(),
            base
        );
    }
    assert_eq!(base.reports.len(), 3);
}

#[test]
fn frames_without_annotations_are_excluded_and_counted() {
    let bundle = three_frame_bundle();
    let mut anns = three_frame_annotations();
    anns.remove("f2");
    let out = run_instrument_eval(&bundle, &anns, &EvalOptions::default()).unwrap();
    let r = report(&out.reports, "v01");
    assert_eq!((r.counts.total, r.counts.evaluated), (3, 2));
    assert_eq!(r.mean_tau_ac, Some(0.5));
}

#[test]
fn merged_report_covers_every_video() {
    let mut bundle = three_frame_bundle();
    bundle.frames[2].video_id = Some("v02".into());
    let out = run_instrument_eval(
        &bundle,
        &three_frame_annotations(),
        &EvalOptions {
            merge: true,
            ..Default::default()
        },
    )
    .unwrap();
    let ids: Vec<&str> = out.reports.iter().map(|r| r.video_id.as_str()).collect();
    assert_eq!(ids, [MERGED_VIDEO, "v01", "v02"]);
    assert_eq!(report(&out.reports, MERGED_VIDEO).counts.total, 3);
    assert_eq!(report(&out.reports, "v02").counts.degenerate, 1);
}

#[test]
fn task_mismatch_is_reported() {
    let err = run_triplet_eval(
        &three_frame_bundle(),
        None,
        &three_frame_annotations(),
        &EvalOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        EvalError::TaskMismatch {
            expected: "triplet",
            found: "instrument"
        }
    ));
    let err = run_instrument_eval(
        &triplet_pass1(),
        &triplet_annotations(),
        &EvalOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, EvalError::TaskMismatch { .. }));
}

#[test]
fn pass_one_only_gives_triplet_accuracy_and_worklist() {
    let out = run_triplet_eval(
        &triplet_pass1(),
        None,
        &triplet_annotations(),
        &EvalOptions::default(),
    )
    .unwrap();
    let flags: Vec<TripletMatch> = out.frames[0]
        .rows
        .iter()
        .map(|r| r.triplet.unwrap())
        .collect();
    assert_eq!(
        flags,
        [
            TripletMatch {
                ivt: true,
                iv: true,
                it: true
            },
            TripletMatch {
                ivt: false,
                iv: true,
                it: false
            },
            TripletMatch {
                ivt: false,
                iv: false,
                it: false
            },
            TripletMatch {
                ivt: true,
                iv: true,
                it: true
            },
        ]
    );
    let wl: Vec<(&str, &str)> = out
        .worklist
        .iter()
        .map(|w| (w.frame_id.as_str(), w.verb_prompt.as_str()))
        .collect();
    assert_eq!(
        wl,
        [
            ("t1", "I am performing retract"),
            ("t2", "I am performing dissect"),
            ("t4", "I am performing retract")
        ]
    );
    let v42 = report(&out.reports, "v42");
    assert_eq!(
        (v42.ivt_percent, v42.iv_percent, v42.it_percent),
        (Some(50.0), Some(100.0), Some(50.0))
    );
    assert_eq!(v42.v_over_t_percent, Some(100.0));
    assert_eq!(v42.mean_ars_valid, None);
    assert_eq!(v42.z_over_v_percent, None);
    let v43 = report(&out.reports, "v43");
    assert_eq!(v43.v_over_t_percent, Some(50.0));
}

#[test]
fn verb_attention_inside_instrument_boxes() {
    // t1 grasper box spans rows/cols 2..=3, t2 hook box spans 0..=1
    let pass2 = triplet_pass2([(2, 2), (1, 1), (0, 0)]);
    let out = run_triplet_eval(
        &triplet_pass1(),
        Some(&pass2),
        &triplet_annotations(),
        &EvalOptions::default(),
    )
    .unwrap();
    let v42 = report(&out.reports, "v42");
    assert_eq!(v42.mean_ars_valid, Some(1.0));
    assert_eq!(v42.z_over_v_percent, Some(0.0));
    assert_eq!(v42.counts.ars_valid, 2);
    let v43 = report(&out.reports, "v43");
    // t4 has no grasper box: excluded; t3 has iv = 0 and scores 0
    assert_eq!(v43.counts.ars_excluded, 1);
    assert_eq!(v43.counts.ars_valid, 0);
    assert_eq!(v43.mean_ars_valid, None);
    assert_eq!(v43.mean_ars_all, Some(0.0));
}

#[test]
fn verb_attention_on_background_scores_zero() {
    let pass2 = triplet_pass2([(0, 0), (3, 3), (0, 0)]);
    let out = run_triplet_eval(
        &triplet_pass1(),
        Some(&pass2),
        &triplet_annotations(),
        &EvalOptions::default(),
    )
    .unwrap();
    let v42 = report(&out.reports, "v42");
    let ars: Vec<Option<f64>> = out.frames[0].rows.iter().map(|r| r.ars).collect();
    assert_eq!(ars, [Some(0.0), Some(0.0), Some(0.0), None]);
    assert_eq!(v42.mean_ars_valid, Some(0.0));
    assert_eq!(v42.z_over_v_percent, Some(100.0));
    assert_eq!(v42.v_over_t_percent, Some(100.0));
}

#[test]
fn pass_two_must_cover_exactly_the_iv_frames() {
    let mut pass2 = triplet_pass2([(0, 0), (0, 0), (0, 0)]);
    pass2.frames.pop();
    let err = run_triplet_eval(
        &triplet_pass1(),
        Some(&pass2),
        &triplet_annotations(),
        &EvalOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, EvalError::WorklistMismatch(_)), "{err}");

    let mut pass2 = triplet_pass2([(0, 0), (0, 0), (0, 0)]);
    let mut extra = pass2.frames[0].clone();
    extra.frame_id = "t3".into();
    extra.capture = spot_capture("t3_verb", 0, 0);
    pass2.frames.push(extra);
    let err = run_triplet_eval(
        &triplet_pass1(),
        Some(&pass2),
        &triplet_annotations(),
        &EvalOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, EvalError::WorklistMismatch(_)));

    let mut pass2 = triplet_pass2([(0, 0), (0, 0), (0, 0)]);
    pass2.task = Task::Triplet;
    assert!(matches!(
        run_triplet_eval(
            &triplet_pass1(),
            Some(&pass2),
            &triplet_annotations(),
            &EvalOptions::default()
        ),
        Err(EvalError::TaskMismatch { .. })
    ));
}

#[test]
fn triplet_runs_are_deterministic_across_workers() {
    let pass2 = triplet_pass2([(2, 2), (3, 3), (0, 0)]);
    let run = |jobs| {
        run_triplet_eval(
            &triplet_pass1(),
            Some(&pass2),
            &triplet_annotations(),
            &EvalOptions {
                taus: vec![0.3, 0.9],
                jobs,
                merge: true,
            },
        )
        .unwrap()
    };
    let base = run(Some(1));
    assert_eq!(run(Some(3)), base);
    assert_eq!(run(None), base);
}
