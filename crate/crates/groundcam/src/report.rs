//! Report emission: aligned text table, CSV and JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use groundcam_core::metrics::{ClassF1, FrameCounts, VideoReport};

use crate::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TableText,
    Delimited,
    Structured,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table-text" | "table" => Ok(ReportFormat::TableText),
            "delimited" | "csv" => Ok(ReportFormat::Delimited),
            "structured" | "json" => Ok(ReportFormat::Structured),
            other => Err(format!(
                "unknown report format {other:?} (table-text, delimited, structured)"
            )),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 16] = [
    "video_id",
    "tau",
    "mean_tau_ac",
    "mean_tau_aa",
    "ivt_percent",
    "iv_percent",
    "it_percent",
    "v_over_t_percent",
    "mean_ars_valid",
    "mean_ars_all",
    "z_over_v_percent",
    "frames_total",
    "frames_evaluated",
    "frames_degenerate",
    "frames_ars_valid",
    "frames_ars_excluded",
];

pub const F1_COLUMNS: [&str; 6] = [
    "video_id",
    "tau",
    "class",
    "threshold",
    "f1",
    "single_class",
];

/// Reports sorted by video id, then threshold.
pub fn sorted(reports: &[VideoReport]) -> Vec<&VideoReport> {
    let mut out: Vec<&VideoReport> = reports.iter().collect();
    out.sort_by(|a, b| a.video_id.cmp(&b.video_id).then(a.tau.total_cmp(&b.tau)));
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn float(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn report_record(r: &VideoReport) -> Vec<String> {
    let c = &r.counts;
    vec![
        r.video_id.clone(),
        r.tau.to_string(),
        opt(r.mean_tau_ac),
        opt(r.mean_tau_aa),
        opt(r.ivt_percent),
        opt(r.iv_percent),
        opt(r.it_percent),
        opt(r.v_over_t_percent),
        opt(r.mean_ars_valid),
        opt(r.mean_ars_all),
        opt(r.z_over_v_percent),
        c.total.to_string(),
        c.evaluated.to_string(),
        c.degenerate.to_string(),
        c.ars_valid.to_string(),
        c.ars_excluded.to_string(),
    ]
}

fn csv_string(
    header: &[&str],
    records: impl Iterator<Item = Vec<String>>,
) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| EvalError::Report(e.to_string());
    w.write_record(header).map_err(fail)?;
    for rec in records {
        w.write_record(&rec).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| EvalError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EvalError::Report(e.to_string()))
}

/// `(reports.csv, class_f1.csv)` contents. Floats use the shortest
/// representation that parses back to the same value.
pub fn to_delimited(reports: &[VideoReport]) -> Result<(String, String), EvalError> {
    let sorted = sorted(reports);
    let main = csv_string(&REPORT_COLUMNS, sorted.iter().map(|r| report_record(r)))?;
    let f1 = csv_string(
        &F1_COLUMNS,
        sorted.iter().flat_map(|r| {
            r.class_f1.iter().map(|c| {
                vec![
                    r.video_id.clone(),
                    r.tau.to_string(),
                    c.class.clone(),
                    float(c.threshold),
                    c.f1.to_string(),
                    c.single_class.to_string(),
                ]
            })
        }),
    )?;
    Ok((main, f1))
}

fn parse_opt(field: &str) -> Result<Option<f64>, EvalError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field).map(Some)
    }
}

fn parse_f64(field: &str) -> Result<f64, EvalError> {
    match field {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => field
            .parse()
            .map_err(|e| EvalError::Report(format!("bad number {field:?}: {e}"))),
    }
}

fn parse_usize(field: &str) -> Result<usize, EvalError> {
    field
        .parse()
        .map_err(|e| EvalError::Report(format!("bad count {field:?}: {e}")))
}

fn csv_rows(text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>, EvalError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let got = r
        .headers()
        .map_err(|e| EvalError::Report(e.to_string()))?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(EvalError::Report(format!("unexpected header {got:?}")));
    }
    r.records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| EvalError::Report(e.to_string()))
}

/// Parses the output of [`to_delimited`].
pub fn parse_delimited(reports_csv: &str, f1_csv: &str) -> Result<Vec<VideoReport>, EvalError> {
    let mut reports = csv_rows(reports_csv, &REPORT_COLUMNS)?
        .iter()
        .map(|rec| {
            Ok(VideoReport {
                video_id: rec[0].to_owned(),
                tau: parse_f64(&rec[1])?,
                mean_tau_ac: parse_opt(&rec[2])?,
                mean_tau_aa: parse_opt(&rec[3])?,
                ivt_percent: parse_opt(&rec[4])?,
                iv_percent: parse_opt(&rec[5])?,
                it_percent: parse_opt(&rec[6])?,
                v_over_t_percent: parse_opt(&rec[7])?,
                mean_ars_valid: parse_opt(&rec[8])?,
                mean_ars_all: parse_opt(&rec[9])?,
                z_over_v_percent: parse_opt(&rec[10])?,
                class_f1: Vec::new(),
                counts: FrameCounts {
                    total: parse_usize(&rec[11])?,
                    evaluated: parse_usize(&rec[12])?,
                    degenerate: parse_usize(&rec[13])?,
                    ars_valid: parse_usize(&rec[14])?,
                    ars_excluded: parse_usize(&rec[15])?,
                },
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    for rec in csv_rows(f1_csv, &F1_COLUMNS)? {
        let tau = parse_f64(&rec[1])?;
        let report = reports
            .iter_mut()
            .find(|r| r.video_id == rec[0] && r.tau == tau)
            .ok_or_else(|| {
                EvalError::Report(format!(
                    "F1 row for unknown report {:?} at tau {tau}",
                    &rec[0]
                ))
            })?;
        report.class_f1.push(ClassF1 {
            class: rec[2].to_owned(),
            threshold: parse_f64(&rec[3])?,
            f1: parse_f64(&rec[4])?,
            single_class: rec[5]
                .parse()
                .map_err(|_| EvalError::Report(format!("bad flag {:?}", &rec[5])))?,
        });
    }
    Ok(reports)
}

pub fn to_structured(reports: &[VideoReport]) -> Result<String, EvalError> {
    let sorted: Vec<&VideoReport> = sorted(reports);
    let mut s =
        serde_json::to_string_pretty(&sorted).map_err(|e| EvalError::Report(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_structured(text: &str) -> Result<Vec<VideoReport>, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}%")).unwrap_or_else(|| "-".into())
}

/// Aligned plain-text table, one row per report.
pub fn to_table(reports: &[VideoReport]) -> String {
    let header = [
        "video", "tau", "tau-AC", "tau-AA", "IVT", "IV", "IT", "V/T", "ARS", "ARS(all)", "Z/V",
        "frames", "eval", "degen",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in sorted(reports) {
        rows.push(vec![
            r.video_id.clone(),
            format!("{}", r.tau),
            cell(r.mean_tau_ac),
            cell(r.mean_tau_aa),
            pct(r.ivt_percent),
            pct(r.iv_percent),
            pct(r.it_percent),
            pct(r.v_over_t_percent),
            cell(r.mean_ars_valid),
            cell(r.mean_ars_all),
            pct(r.z_over_v_percent),
            r.counts.total.to_string(),
            r.counts.evaluated.to_string(),
            r.counts.degenerate.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:>w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    let f1_rows: Vec<String> = sorted(reports)
        .iter()
        .filter(|r| !r.class_f1.is_empty())
        .flat_map(|r| {
            r.class_f1.iter().map(move |c| {
                format!(
                    "  {} tau={} {}: F1 {:.4} at {}",
                    r.video_id,
                    r.tau,
                    c.class,
                    c.f1,
                    float(c.threshold)
                )
            })
        })
        .collect();
    if !f1_rows.is_empty() {
        out.push_str("\nper-class F1 (best threshold):\n");
        for l in f1_rows {
            out.push_str(&l);
            out.push('\n');
        }
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, EvalError> {
    fs::write(&path, contents).map_err(|source| EvalError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `reports` into `out_dir` in the given format and returns the
/// paths written.
pub fn emit_report(
    reports: &[VideoReport],
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Report("no reports to emit".into()));
    }
    fs::create_dir_all(out_dir).map_err(|source| EvalError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    match format {
        ReportFormat::TableText => Ok(vec![write(out_dir.join("report.txt"), &to_table(reports))?]),
        ReportFormat::Delimited => {
            let (main, f1) = to_delimited(reports)?;
            Ok(vec![
                write(out_dir.join("reports.csv"), &main)?,
                write(out_dir.join("class_f1.csv"), &f1)?,
            ])
        }
        ReportFormat::Structured => Ok(vec![write(
            out_dir.join("reports.json"),
            &to_structured(reports)?,
        )?]),
    }
}
