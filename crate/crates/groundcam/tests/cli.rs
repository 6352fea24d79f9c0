mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;
use groundcam::bundle::write_bundle;
use groundcam::report::parse_structured;

fn groundcam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundcam"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = groundcam(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reports_bundle_summary() {
    let dir = fixture_dir("three_frame");
    assert_eq!(
        ok(&["validate", path(&dir)]),
        "ok: instrument bundle, 2 prompts, 3 frames\n"
    );
}

#[test]
fn eval_instrument_uses_manifest_annotations() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let stdout = ok(&[
        "eval-instrument",
        "--bundle",
        path(&fixture_dir("three_frame")),
        "--out-dir",
        path(&out_dir),
        "--format",
        "delimited",
    ]);
    assert!(stdout.contains("v01"), "{stdout}");
    let reports =
        parse_structured(&fs::read_to_string(out_dir.join("reports.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 1);
    assert!((reports[0].mean_tau_aa.unwrap() - 2.0 / 9.0).abs() < 1e-12);
    for f in ["frames.json", "reports.csv", "class_f1.csv"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    assert!(!out_dir.join("worklist.json").exists());
}

#[test]
fn eval_output_is_identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture_dir("three_frame");
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "1"].iter().enumerate() {
        let d = tmp.path().join(i.to_string());
        ok(&[
            "eval-instrument",
            "--bundle",
            path(&bundle),
            "--out-dir",
            path(&d),
            "--jobs",
            jobs,
            "--tau",
            "0.3",
            "--tau",
            "0.6",
        ]);
        outputs.push((
            fs::read(d.join("reports.json")).unwrap(),
            fs::read(d.join("frames.json")).unwrap(),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn eval_triplet_two_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let p1 = tmp.path().join("p1");
    let p2 = tmp.path().join("p2");
    write_bundle(&triplet_pass1(), &p1).unwrap();
    write_bundle(&triplet_pass2([(2, 2), (1, 1), (0, 0)]), &p2).unwrap();
    let anns = tmp.path().join("anns.json");
    fs::write(&anns, TRIPLET_ANNOTATIONS).unwrap();

    let first = tmp.path().join("first");
    let stdout = ok(&[
        "eval-triplet",
        "--pass1",
        path(&p1),
        "--annotations",
        path(&anns),
        "--out-dir",
        path(&first),
    ]);
    assert!(
        stdout.contains("wrote 3 verb re-prompt requests"),
        "{stdout}"
    );
    let worklist: serde_json::Value =
        serde_json::from_slice(&fs::read(first.join("worklist.json")).unwrap()).unwrap();
    assert_eq!(worklist.as_array().unwrap().len(), 3);

    let second = tmp.path().join("second");
    ok(&[
        "eval-triplet",
        "--pass1",
        path(&p1),
        "--pass2",
        path(&p2),
        "--annotations",
        path(&anns),
        "--out-dir",
        path(&second),
        "--merge",
    ]);
    let reports =
        parse_structured(&fs::read_to_string(second.join("reports.json")).unwrap()).unwrap();
    let ids: Vec<&str> = reports.iter().map(|r| r.video_id.as_str()).collect();
    assert_eq!(ids, ["ALL", "v42", "v43"]);
    assert_eq!(reports[1].mean_ars_valid, Some(1.0));
}

#[test]
fn report_converts_between_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    ok(&[
        "eval-instrument",
        "--bundle",
        path(&fixture_dir("three_frame")),
        "--out-dir",
        path(&out_dir),
    ]);
    let input = out_dir.join("reports.json");
    let table = ok(&["report", "--input", path(&input)]);
    assert_eq!(
        table,
        fs::read_to_string(out_dir.join("report.txt")).unwrap()
    );
    let csv = ok(&["report", "--input", path(&input), "--format", "csv"]);
    assert!(csv.starts_with("video_id,tau,"), "{csv}");
    let json = ok(&["report", "--input", path(&input), "--format", "structured"]);
    assert_eq!(json, fs::read_to_string(&input).unwrap());
    let conv = tmp.path().join("conv");
    let listed = ok(&[
        "report",
        "--input",
        path(&input),
        "--format",
        "delimited",
        "--out-dir",
        path(&conv),
    ]);
    assert_eq!(listed.lines().count(), 2);
}

#[test]
fn render_writes_one_png_per_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundle = three_frame_bundle();
    for f in &mut bundle.frames {
        let name = format!("{}.png", f.frame_id);
        image::RgbImage::from_pixel(2, 2, image::Rgb([100, 100, 100]))
            .save(tmp.path().join(&name))
            .unwrap();
        f.image_path = Some(format!("../{name}"));
    }
    let dir = tmp.path().join("bundle");
    write_bundle(&bundle, &dir).unwrap();
    fs::write(dir.join("annotations.json"), THREE_FRAME_ANNOTATIONS).unwrap();
    let out = tmp.path().join("overlays");
    let stdout = ok(&["render", "--bundle", path(&dir), "--out-dir", path(&out)]);
    assert!(stdout.starts_with("wrote 3 overlays"), "{stdout}");
    let img = image::open(out.join("f1.png")).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (2, 2));
}

#[test]
fn failures_exit_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec![
            "validate".into(),
            tmp.path().join("missing").display().to_string(),
        ],
        vec![
            "eval-instrument".into(),
            "--bundle".into(),
            fixture_dir("three_frame").display().to_string(),
            "--tau".into(),
            "1.5".into(),
        ],
        vec![
            "eval-triplet".into(),
            "--pass1".into(),
            fixture_dir("three_frame").display().to_string(),
        ],
        vec![
            "render".into(),
            "--bundle".into(),
            fixture_dir("three_frame").display().to_string(),
            "--out-dir".into(),
            path(tmp.path()).into(),
        ],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = groundcam(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(
            String::from_utf8_lossy(&out.stderr).starts_with("error: "),
            "{args:?}"
        );
    }
}
