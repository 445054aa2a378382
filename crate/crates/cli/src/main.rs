//! `cloudinspect` — register a current point cloud onto a reference cloud,
//! classify per-point changes, cluster them into defect regions, and score
//! the result against ground truth.
//!
//! Errors go to stderr as a single JSON line (`{"error": "..."}`) with a
//! nonzero exit status; on failure no partial output files are left behind.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cloudinspect::diff::{auto_threshold, diff as run_diff, DefectRegion, DiffConfig};
use cloudinspect::io::{read_cloud_file, write_ply_file, PlyFormat};
use cloudinspect::pipeline::{
    read_truth_file, run, RunConfig, RunReport, SynthInput, ThresholdSetting,
};
use cloudinspect::registration::{icp, IcpConfig};
use cloudinspect::synth::{generate, preset, PRESET_NAMES};
use cloudinspect::SimilarityTransform;

#[derive(Parser)]
#[command(
    name = "cloudinspect",
    version,
    about = "Point-cloud registration and change detection",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline (load, register, diff, evaluate, export) from
    /// a TOML config file; flags override config keys.
    Inspect(InspectArgs),
    /// Align the current cloud onto the reference cloud and print the
    /// recovered transform.
    Register(RegisterArgs),
    /// Classify changes between two already-aligned clouds.
    Diff(DiffArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Recompute evaluation metrics from a stored report.
    Eval(EvalArgs),
}

#[derive(Args)]
struct InspectArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    // input overrides
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    current: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long, value_parser = PRESET_NAMES)]
    synth_preset: Option<String>,
    #[arg(long)]
    synth_seed: Option<u64>,

    // registration overrides
    #[arg(long)]
    skip_registration: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    with_scale: bool,
    #[arg(long)]
    max_correspondence_distance: Option<f64>,
    #[arg(long)]
    trim_fraction: Option<f64>,
    #[arg(long)]
    subsample_size: Option<usize>,
    #[arg(long)]
    icp_seed: Option<u64>,

    // diff overrides
    #[arg(long, value_parser = parse_threshold)]
    threshold: Option<ThresholdSetting>,
    #[arg(long)]
    auto_factor: Option<f64>,
    #[arg(long)]
    cluster_radius: Option<f64>,
    #[arg(long)]
    min_region_points: Option<usize>,

    // output overrides
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    canonical: bool,
    /// Write ascii PLY instead of binary.
    #[arg(long)]
    ascii: bool,
    #[arg(long)]
    no_reference_labeled: bool,
    #[arg(long)]
    no_current_labeled: bool,
    #[arg(long)]
    no_overlay: bool,
    #[arg(long)]
    no_report: bool,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    current: PathBuf,
    #[arg(long)]
    with_scale: bool,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    max_correspondence_distance: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    trim_fraction: f64,
    #[arg(long)]
    subsample_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the aligned current cloud.
    #[arg(long, default_value = "aligned.ply")]
    out: PathBuf,
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    current: PathBuf,
    /// Match threshold in scene units, or "auto".
    #[arg(long, value_parser = parse_threshold)]
    threshold: ThresholdSetting,
    #[arg(long, default_value_t = cloudinspect::diff::AUTO_THRESHOLD_FACTOR)]
    auto_factor: f64,
    #[arg(long)]
    cluster_radius: Option<f64>,
    #[arg(long, default_value_t = 20)]
    min_region_points: usize,
    /// Optional directory for labeled PLY output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = PRESET_NAMES)]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// report.json from an inspect run.
    #[arg(long)]
    report: PathBuf,
    /// Ground-truth JSON file.
    #[arg(long)]
    truth: PathBuf,
}

fn parse_threshold(s: &str) -> std::result::Result<ThresholdSetting, String> {
    if s == "auto" {
        return Ok(ThresholdSetting::Named("auto".into()));
    }
    s.parse::<f64>()
        .map(ThresholdSetting::Value)
        .map_err(|_| format!("expected a number or \"auto\", got `{s}`"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Inspect(args) => cmd_inspect(args),
        Command::Register(args) => cmd_register(args),
        Command::Diff(args) => cmd_diff(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut config = RunConfig::from_toml(&text)?;

    // flag overrides win over config-file keys
    if args.reference.is_some() {
        config.input.reference = args.reference;
        config.input.synth = None;
    }
    if args.current.is_some() {
        config.input.current = args.current;
        config.input.synth = None;
    }
    if args.ground_truth.is_some() {
        config.input.ground_truth = args.ground_truth;
    }
    if let Some(name) = args.synth_preset {
        let seed = args
            .synth_seed
            .or(config.input.synth.as_ref().map(|s| s.seed))
            .unwrap_or(0);
        config.input.synth = Some(SynthInput {
            preset: Some(name),
            seed,
            scene: None,
        });
        config.input.reference = None;
        config.input.current = None;
        config.input.ground_truth = None;
    } else if let (Some(seed), Some(synth)) = (args.synth_seed, &mut config.input.synth) {
        synth.seed = seed;
    }
    if args.skip_registration {
        config.registration.skip = true;
    }
    if let Some(v) = args.max_iter {
        config.registration.icp.max_iterations = v;
    }
    if let Some(v) = args.tol {
        config.registration.icp.tolerance = v;
    }
    if args.with_scale {
        config.registration.icp.with_scale = true;
    }
    if args.max_correspondence_distance.is_some() {
        config.registration.icp.max_correspondence_distance = args.max_correspondence_distance;
    }
    if let Some(v) = args.trim_fraction {
        config.registration.icp.trim_fraction = v;
    }
    if args.subsample_size.is_some() {
        config.registration.icp.subsample_size = args.subsample_size;
    }
    if let Some(v) = args.icp_seed {
        config.registration.icp.seed = v;
    }
    if let Some(v) = args.threshold {
        config.diff.threshold = v;
    }
    if let Some(v) = args.auto_factor {
        config.diff.auto_factor = v;
    }
    if args.cluster_radius.is_some() {
        config.diff.cluster_radius = args.cluster_radius;
    }
    if let Some(v) = args.min_region_points {
        config.diff.min_region_points = v;
    }
    if let Some(dir) = args.out {
        config.output.directory = dir;
    }
    if args.canonical {
        config.output.canonical = true;
    }
    if args.ascii {
        config.output.ply_format = PlyFormat::Ascii;
    }
    if args.no_reference_labeled {
        config.output.reference_labeled = false;
    }
    if args.no_current_labeled {
        config.output.current_labeled = false;
    }
    if args.no_overlay {
        config.output.overlay = false;
    }
    if args.no_report {
        config.output.report = false;
    }

    let report = run(&config)?;

    if let Some(reg) = &report.registration {
        println!(
            "registration: {} after {} iterations (final mse {:.6e})",
            if reg.converged { "converged" } else { "max iterations" },
            reg.iterations_run,
            reg.final_mean_squared_error
        );
    } else {
        println!("registration: skipped");
    }
    println!(
        "diff: threshold {:.6}, matched {:.4} (reference) / {:.4} (current), {} regions",
        report.diff.match_threshold,
        report.diff.matched_fraction_reference,
        report.diff.matched_fraction_current,
        report.diff.region_count
    );
    if let Some(eval) = &report.evaluation {
        println!(
            "evaluation: precision {:.4}, recall {:.4}, f1 {:.4}, region detection {:.2}",
            eval.precision, eval.recall, eval.f1, eval.region_detection_rate
        );
    }
    if let Some(timing) = &report.timing {
        let stages: Vec<String> = timing
            .stages
            .iter()
            .map(|s| format!("{} {:.3}s", s.name, s.seconds))
            .collect();
        println!("timing: {} (total {:.3}s)", stages.join(", "), timing.total_seconds);
    }
    println!(
        "outputs: {} in {}",
        report.outputs.join(", "),
        config.output.directory.display()
    );
    Ok(())
}

fn cmd_register(args: RegisterArgs) -> Result<()> {
    let reference = read_cloud_file(&args.reference)?;
    let current = read_cloud_file(&args.current)?;
    let config = IcpConfig {
        max_iterations: args.max_iter,
        tolerance: args.tol,
        with_scale: args.with_scale,
        max_correspondence_distance: args.max_correspondence_distance,
        trim_fraction: args.trim_fraction,
        subsample_size: args.subsample_size,
        seed: args.seed,
    };
    let result = icp(&current, &reference, &config)?;

    let aligned = result.transform.apply_cloud(&current);
    write_ply_file(&args.out, &aligned, None, PlyFormat::BinaryLittleEndian)?;

    #[derive(serde::Serialize)]
    struct RegisterOutput<'a> {
        transform: &'a SimilarityTransform,
        iterations_run: usize,
        converged: bool,
        aligned_cloud: &'a Path,
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&RegisterOutput {
            transform: &result.transform,
            iterations_run: result.iterations_run,
            converged: result.converged,
            aligned_cloud: &args.out,
        })?
    );
    Ok(())
}

fn cmd_diff(args: DiffArgs) -> Result<()> {
    let reference = read_cloud_file(&args.reference)?;
    let current = read_cloud_file(&args.current)?;
    let threshold = match args.threshold {
        ThresholdSetting::Value(v) => v,
        _ => auto_threshold(&reference, args.auto_factor)?,
    };
    let config = DiffConfig {
        match_threshold: threshold,
        cluster_radius: args.cluster_radius.unwrap_or(2.0 * threshold),
        min_region_points: args.min_region_points,
    };
    let report = run_diff(
        &reference,
        &current,
        &SimilarityTransform::identity(),
        &config,
    )?;

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        write_ply_file(
            &dir.join("reference_labeled.ply"),
            &reference,
            Some(&report.reference_labels),
            PlyFormat::BinaryLittleEndian,
        )?;
        write_ply_file(
            &dir.join("current_labeled.ply"),
            &current,
            Some(&report.current_labels),
            PlyFormat::BinaryLittleEndian,
        )?;
    }

    #[derive(serde::Serialize)]
    struct DiffOutput<'a> {
        match_threshold: f64,
        cluster_radius: f64,
        matched_fraction_reference: f64,
        matched_fraction_current: f64,
        region_count: usize,
        regions: &'a [DefectRegion],
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&DiffOutput {
            match_threshold: config.match_threshold,
            cluster_radius: config.cluster_radius,
            matched_fraction_reference: report.matched_fraction_reference,
            matched_fraction_current: report.matched_fraction_current,
            region_count: report.regions.len(),
            regions: &report.regions,
        })?
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = preset(&args.preset, args.seed)?;
    let scene = generate(&spec)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    write_ply_file(
        &args.out.join("reference.ply"),
        &scene.reference,
        None,
        PlyFormat::BinaryLittleEndian,
    )?;
    write_ply_file(
        &args.out.join("current.ply"),
        &scene.current,
        None,
        PlyFormat::BinaryLittleEndian,
    )?;
    std::fs::write(
        args.out.join("truth.json"),
        serde_json::to_string_pretty(&scene.truth)?,
    )?;
    std::fs::write(
        args.out.join("scene.json"),
        serde_json::to_string_pretty(&spec)?,
    )?;

    println!(
        "wrote reference.ply ({} points), current.ply ({} points), truth.json, scene.json to {}",
        scene.reference.len(),
        scene.current.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.report)
        .with_context(|| format!("reading report {}", args.report.display()))?;
    let report = RunReport::from_json(&text)?;
    let truth = read_truth_file(&args.truth)?;
    let diff_report = report.diff.to_diff_report()?;
    let eval = cloudinspect::metrics::evaluate(&diff_report, &truth)?;
    println!("{}", serde_json::to_string_pretty(&eval)?);
    Ok(())
}
