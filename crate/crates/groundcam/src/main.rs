use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groundcam::annotations::{load_annotations, Annotations};
use groundcam::bundle::{load_bundle, RunBundle};
use groundcam::overlay::render_bundle;
use groundcam::pipeline::{run_instrument_eval, run_triplet_eval, EvalOptions, EvalOutput};
use groundcam::report::{emit_report, parse_structured, to_structured, to_table, ReportFormat};
use groundcam::{AnnotationError, EvalError};
use groundcam_core::DEFAULT_TAU;

#[derive(Parser)]
#[command(
    name = "groundcam",
    version,
    about = "Spatial grounding evaluation for vision-language model captures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a run bundle.
    Validate { bundle: PathBuf },
    /// Instrument classification: tau-AC, tau-AA and per-class F1.
    EvalInstrument {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        common: EvalArgs,
    },
    /// Triplet classification and, with a second pass, action reasoning scores.
    EvalTriplet {
        #[arg(long)]
        pass1: PathBuf,
        #[arg(long)]
        pass2: Option<PathBuf>,
        #[command(flatten)]
        common: EvalArgs,
    },
    /// Write heatmap overlays for every frame of a bundle.
    Render {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-emit a structured report file in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "table-text")]
        format: ReportFormat,
        /// Print to stdout when omitted.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Annotation file; defaults to the manifest's annotation_file.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Attention threshold; repeat for a sweep.
    #[arg(long, default_values_t = [DEFAULT_TAU])]
    tau: Vec<f64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Add a dataset-level report over all videos.
    #[arg(long)]
    merge: bool,
    #[arg(long, default_value = "groundcam-out")]
    out_dir: PathBuf,
    /// Extra report format written next to reports.json.
    #[arg(long, default_value = "table-text")]
    format: ReportFormat,
}

impl EvalArgs {
    fn options(&self) -> Result<EvalOptions, EvalError> {
        if let Some(bad) = self.tau.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(EvalError::Report(format!("tau {bad} outside [0, 1]")));
        }
        Ok(EvalOptions {
            taus: self.tau.clone(),
            jobs: self.jobs,
            merge: self.merge,
        })
    }
}

fn annotations_for(
    explicit: Option<&Path>,
    bundle: &RunBundle,
    bundle_dir: &Path,
) -> Result<Annotations, EvalError> {
    let path = match (explicit, &bundle.annotation_file) {
        (Some(p), _) => p.to_owned(),
        (None, Some(rel)) => bundle_dir.join(rel),
        (None, None) => {
            return Err(AnnotationError::SchemaViolation(
                "no --annotations given and the manifest names no annotation_file".into(),
            )
            .into())
        }
    };
    Ok(load_annotations(&path)?)
}

fn write_file(path: PathBuf, contents: &str) -> Result<(), EvalError> {
    fs::write(&path, contents).map_err(|source| EvalError::Io { path, source })
}

fn write_outputs(out: &EvalOutput, args: &EvalArgs, worklist: bool) -> Result<(), EvalError> {
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.clone(),
        source,
    })?;
    write_file(dir.join("reports.json"), &to_structured(&out.reports)?)?;
    let frames =
        serde_json::to_string_pretty(&out.frames).map_err(|e| EvalError::Report(e.to_string()))?;
    write_file(dir.join("frames.json"), &(frames + "\n"))?;
    if worklist {
        let w = serde_json::to_string_pretty(&out.worklist)
            .map_err(|e| EvalError::Report(e.to_string()))?;
        write_file(dir.join("worklist.json"), &(w + "\n"))?;
    }
    if !out.reports.is_empty() && args.format != ReportFormat::Structured {
        emit_report(&out.reports, args.format, dir)?;
    }
    print!("{}", to_table(&out.reports));
    Ok(())
}

fn run(cli: Cli) -> Result<(), EvalError> {
    match cli.command {
        Command::Validate { bundle } => {
            let b = load_bundle(&bundle)?;
            println!(
                "ok: {} bundle, {} prompts, {} frames",
                b.task.name(),
                b.prompt_pool.len(),
                b.frames.len()
            );
        }
        Command::EvalInstrument { bundle, common } => {
            let opts = common.options()?;
            let b = load_bundle(&bundle)?;
            let anns = annotations_for(common.annotations.as_deref(), &b, &bundle)?;
            let out = run_instrument_eval(&b, &anns, &opts)?;
            write_outputs(&out, &common, false)?;
        }
        Command::EvalTriplet {
            pass1,
            pass2,
            common,
        } => {
            let opts = common.options()?;
            let p1 = load_bundle(&pass1)?;
            let p2 = pass2.as_deref().map(load_bundle).transpose()?;
            let anns = annotations_for(common.annotations.as_deref(), &p1, &pass1)?;
            let out = run_triplet_eval(&p1, p2.as_ref(), &anns, &opts)?;
            write_outputs(&out, &common, true)?;
            if p2.is_none() {
                println!(
                    "wrote {} verb re-prompt requests to {}",
                    out.worklist.len(),
                    common.out_dir.join("worklist.json").display()
                );
            }
        }
        Command::Render {
            bundle,
            annotations,
            out_dir,
        } => {
            let b = load_bundle(&bundle)?;
            let anns = match annotations_for(annotations.as_deref(), &b, &bundle) {
                Ok(a) => a,
                Err(_) if annotations.is_none() && b.annotation_file.is_none() => {
                    Annotations::new()
                }
                Err(e) => return Err(e),
            };
            let written = render_bundle(&b, &bundle, &anns, &out_dir)?;
            println!("wrote {} overlays to {}", written.len(), out_dir.display());
        }
        Command::Report {
            input,
            format,
            out_dir,
        } => {
            let text = fs::read_to_string(&input).map_err(|source| EvalError::Io {
                path: input.clone(),
                source,
            })?;
            let reports = parse_structured(&text)?;
            match out_dir {
                Some(dir) => {
                    for p in emit_report(&reports, format, &dir)? {
                        println!("{}", p.display());
                    }
                }
                None => match format {
                    ReportFormat::TableText => print!("{}", to_table(&reports)),
                    ReportFormat::Structured => print!("{}", to_structured(&reports)?),
                    ReportFormat::Delimited => {
                        let (main, f1) = groundcam::report::to_delimited(&reports)?;
                        print!("{main}\n{f1}");
                    }
                },
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
