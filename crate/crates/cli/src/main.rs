//! `detkit` command line: detection evaluation, NMS filtering, YOLOv3 head
//! decoding, gradient checking, and the loss-convergence benchmark.
//!
//! Standard output carries data only; diagnostics go to standard error.
//! Exit codes: 0 success, 1 bad input (or a failed check), 2 internal error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use detkit::dataset::{load_dataset, parse_detections, serialize_detection};
use detkit::decoder::{decode_head, DecoderConfig, RawHead};
use detkit::eval::{evaluate, pr_table, ApMethod};
use detkit::loss::gradient_check;
use detkit::nms::{greedy_nms, Detection, SuppressionMetric};
use detkit::sim::{export_curves, generate_cases, run_benchmark, run_case, KindSummary, SimConfig};
use detkit::LossKind;

#[derive(Parser)]
#[command(
    name = "detkit",
    version,
    about = "Detection-geometry toolkit: evaluation, NMS, YOLOv3 decoding, gradient checks, and the IoU/DIoU convergence benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate detections against a directory of annotation XML files
    Eval {
        /// Directory of <image_id>.xml annotation files
        #[arg(long)]
        gt_dir: PathBuf,
        /// Detection records, one JSON object per line
        #[arg(long)]
        det_file: PathBuf,
        /// IoU required to match a detection to a ground truth
        #[arg(long, default_value_t = 0.5)]
        iou_thresh: f64,
        /// AP integration: allpoint or elevenpoint
        #[arg(long, default_value = "allpoint")]
        ap_method: ApMethod,
        /// Write the PR curve table (score,precision,recall) here
        #[arg(long)]
        pr_out: Option<PathBuf>,
    },
    /// Filter detection records with greedy per-image NMS
    Nms {
        /// Detection records, one JSON object per line
        #[arg(long)]
        det_file: PathBuf,
        /// Suppress when the metric exceeds this
        #[arg(long, default_value_t = 0.45)]
        thresh: f64,
        /// Suppression metric: iou or diou
        #[arg(long, default_value = "iou")]
        metric: SuppressionMetric,
    },
    /// Decode three raw YOLOv3 head tensors into detection records
    Decode {
        /// Raw tensor files (flat little-endian f32), one per configured scale
        #[arg(long, num_args = 3, value_names = ["TENSOR_13", "TENSOR_26", "TENSOR_52"])]
        tensors: Vec<PathBuf>,
        /// Decoder configuration (TOML: input_size, conf_threshold, class_names, scales)
        #[arg(long)]
        config: PathBuf,
        /// Confidence threshold; overrides the config file's value
        #[arg(long)]
        conf: Option<f64>,
        /// Image id stamped on the decoded detections
        #[arg(long, default_value = "image")]
        image_id: String,
    },
    /// Compare analytic loss gradients against central finite differences
    Gradcheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Central-difference step in pixels
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Gradient-descent convergence benchmark: IoU loss vs DIoU loss
    Sim {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Learning rate in pixels per unit gradient
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        /// Step budget per case
        #[arg(long, default_value_t = 2_000_000)]
        max_steps: usize,
        /// Success once iou(pred, target) reaches this
        #[arg(long, default_value_t = 0.9)]
        stop_iou: f64,
        /// Write the paired loss-curve table of the first case here
        #[arg(long)]
        curves_out: Option<PathBuf>,
    },
}

enum CliError {
    /// Unusable input: missing/malformed files, out-of-range flags.
    Input(String),
    /// Everything that should not happen with valid inputs.
    #[allow(dead_code)]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Internal(msg) => f.write_str(msg),
        }
    }
}

fn input_err(e: impl fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn check_ratio(name: &str, value: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(CliError::Input(format!("{name} {value} outside [0, 1]")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Eval {
            gt_dir,
            det_file,
            iou_thresh,
            ap_method,
            pr_out,
        } => cmd_eval(&gt_dir, &det_file, iou_thresh, ap_method, pr_out.as_deref()),
        Command::Nms {
            det_file,
            thresh,
            metric,
        } => cmd_nms(&det_file, thresh, metric),
        Command::Decode {
            tensors,
            config,
            conf,
            image_id,
        } => cmd_decode(&tensors, &config, conf, &image_id),
        Command::Gradcheck { samples, eps, seed } => cmd_gradcheck(samples, eps, seed),
        Command::Sim {
            cases,
            seed,
            lr,
            max_steps,
            stop_iou,
            curves_out,
        } => cmd_sim(cases, seed, lr, max_steps, stop_iou, curves_out.as_deref()),
    }
}

fn cmd_eval(
    gt_dir: &Path,
    det_file: &Path,
    iou_thresh: f64,
    ap_method: ApMethod,
    pr_out: Option<&Path>,
) -> Result<u8, CliError> {
    check_ratio("--iou-thresh", iou_thresh)?;
    let index = load_dataset::<f64>(gt_dir).map_err(input_err)?;
    let dets = parse_detections::<f64>(&read_to_string(det_file)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", det_file.display())))?;
    let report = evaluate(&index, &dets, iou_thresh, ap_method).map_err(input_err)?;
    if report.unknown_image_detections > 0 {
        eprintln!(
            "warning: {} detection(s) reference images absent from the ground-truth index",
            report.unknown_image_detections
        );
    }
    println!("predicted_count: {}", report.predicted_count);
    println!("TP: {}", report.tp);
    println!("FP: {}", report.fp);
    println!("FN: {}", report.false_negatives);
    println!("AP: {:.2}", report.ap * 100.0);
    if let Some(path) = pr_out {
        write_file(path, &pr_table(&report.pr_curve))?;
    }
    Ok(0)
}

fn cmd_nms(det_file: &Path, thresh: f64, metric: SuppressionMetric) -> Result<u8, CliError> {
    let dets = parse_detections::<f64>(&read_to_string(det_file)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", det_file.display())))?;

    // group by image in first-appearance order
    let mut groups: Vec<(String, Vec<Detection<f64>>)> = Vec::new();
    for det in dets {
        match groups.iter_mut().find(|(id, _)| *id == det.image_id) {
            Some((_, group)) => group.push(det),
            None => groups.push((det.image_id.clone(), vec![det])),
        }
    }
    for (_, group) in &groups {
        let kept = greedy_nms(group, thresh, metric).map_err(input_err)?;
        for det in kept {
            println!("{}", serialize_detection(&det));
        }
    }
    Ok(0)
}

fn cmd_decode(
    tensors: &[PathBuf],
    config_path: &Path,
    conf: Option<f64>,
    image_id: &str,
) -> Result<u8, CliError> {
    if let Some(c) = conf {
        check_ratio("--conf", c)?;
    }
    let config = DecoderConfig::from_toml_str(&read_to_string(config_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", config_path.display())))?;
    let specs = config.grid_specs::<f64>(conf).map_err(input_err)?;
    if specs.len() != tensors.len() {
        return Err(CliError::Input(format!(
            "{} tensor files given for {} configured scales",
            tensors.len(),
            specs.len()
        )));
    }

    // pair files with scales positionally, then decode in ascending grid
    // order so output concatenation is always 13, 26, 52
    let mut paired: Vec<(_, &PathBuf)> = specs.iter().zip(tensors.iter()).collect();
    paired.sort_by_key(|(spec, _)| spec.grid_size);

    for (spec, path) in paired {
        let bytes =
            fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let raw = RawHead::from_le_bytes(spec.grid_size, &bytes)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let dets = decode_head(&raw, spec, &config.class_names, image_id)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        for det in dets {
            println!("{}", serialize_detection(&det));
        }
    }
    Ok(0)
}

fn cmd_gradcheck(samples: usize, eps: f64, seed: u64) -> Result<u8, CliError> {
    let report = gradient_check::<f64>(samples, eps, seed).map_err(input_err)?;
    println!("samples: {}", report.samples);
    println!("max_rel_error: {:.3e}", report.max_rel_error);
    println!("max_abs_error: {:.3e}", report.max_abs_error);
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_sim(
    cases: usize,
    seed: u64,
    lr: f64,
    max_steps: usize,
    stop_iou: f64,
    curves_out: Option<&Path>,
) -> Result<u8, CliError> {
    let config = SimConfig::<f64> {
        case_count: cases,
        seed,
        learning_rate: lr,
        max_steps,
        stop_iou,
        ..SimConfig::default()
    };
    let summary = run_benchmark(&config).map_err(input_err)?;

    let disjoint = summary.cases.iter().filter(|c| c.disjoint_start()).count();
    println!("cases: {}", summary.cases.len());
    println!("disjoint_start_cases: {disjoint}");
    println!(
        "overlapping_start_cases: {}",
        summary.cases.len() - disjoint
    );
    let print_kind = |label: &str, s: &KindSummary| {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
        println!("{label}_success_rate: {:.6}", s.success_rate);
        println!("{label}_median_steps: {}", opt(s.median_steps));
        println!("{label}_mean_steps: {}", opt(s.mean_steps));
        println!("{label}_mean_final_loss: {:.6}", s.mean_final_loss);
    };
    print_kind("iou", &summary.iou);
    print_kind("diou", &summary.diou);

    if let Some(path) = curves_out {
        let table = match generate_cases(&config).first() {
            Some((init, target)) => {
                let iou_traj = run_case(init, target, LossKind::Iou, &config).map_err(input_err)?;
                let diou_traj =
                    run_case(init, target, LossKind::Diou, &config).map_err(input_err)?;
                export_curves(&iou_traj, &diou_traj)
            }
            None => "step,loss_iou,loss_diou\n".to_string(),
        };
        write_file(path, &table)?;
    }
    Ok(0)
}
