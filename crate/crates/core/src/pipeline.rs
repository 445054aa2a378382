//! The inspection pipeline: load, register, diff, evaluate, export.
//!
//! A run is described by a [`RunConfig`] (read from a TOML file by the
//! CLI), executes the stages in order, writes viewer-ready PLY files plus a
//! JSON report into the output directory, and returns the [`RunReport`].
//! Runs are deterministic: identical config and seed produce byte-identical
//! output files, with the timing section excluded in canonical mode.
//!
//! On failure every file written so far is removed, so an output directory
//! never holds a partial result set.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diff::{auto_threshold, diff, DefectRegion, DiffConfig, DiffReport, PointLabel};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, SimilarityTransform};
use crate::io::{read_cloud_file, write_ply_file, PlyFormat};
use crate::metrics::{evaluate, EvalResult, GroundTruth, StageTimer, TimingRecord};
use crate::registration::{icp, IcpConfig, IterationStats};
use crate::synth::{generate, preset, SceneSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Where the clouds come from: a pair of files, or a synthetic scene.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current: Option<PathBuf>,
    /// Ground-truth JSON for evaluation (file inputs only; synthetic
    /// scenes carry their own truth).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthInput>,
}

/// A synthetic input: a bundled preset by name, or a full inline scene.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegistrationSettings {
    /// Skip registration and diff in the original frames (inputs already
    /// aligned).
    #[serde(default)]
    pub skip: bool,
    #[serde(flatten)]
    pub icp: IcpConfig,
}

/// The match threshold: an explicit value in scene units, or `"auto"` to
/// derive it from the reference cloud's sampling density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Value(f64),
    Named(String),
}

impl ThresholdSetting {
    fn is_auto(&self) -> bool {
        matches!(self, ThresholdSetting::Named(s) if s == "auto")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffSettings {
    pub threshold: ThresholdSetting,
    /// Multiplier on the median nearest-neighbor spacing when the
    /// threshold is `"auto"`.
    #[serde(default = "default_auto_factor")]
    pub auto_factor: f64,
    /// Defaults to twice the resolved match threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_radius: Option<f64>,
    #[serde(default = "default_min_region_points")]
    pub min_region_points: usize,
}

fn default_auto_factor() -> f64 {
    crate::diff::AUTO_THRESHOLD_FACTOR
}

fn default_min_region_points() -> usize {
    20
}

impl Default for DiffSettings {
    fn default() -> Self {
        DiffSettings {
            threshold: ThresholdSetting::Named("auto".into()),
            auto_factor: default_auto_factor(),
            cluster_radius: None,
            min_region_points: default_min_region_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default = "default_true")]
    pub reference_labeled: bool,
    #[serde(default = "default_true")]
    pub current_labeled: bool,
    #[serde(default = "default_true")]
    pub overlay: bool,
    #[serde(default = "default_true")]
    pub report: bool,
    /// Omit the timing section from the report so repeated runs produce
    /// byte-identical files.
    #[serde(default)]
    pub canonical: bool,
    #[serde(default = "default_ply_format")]
    pub ply_format: PlyFormat,
}

fn default_true() -> bool {
    true
}

fn default_ply_format() -> PlyFormat {
    PlyFormat::BinaryLittleEndian
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("inspect-out"),
            reference_labeled: true,
            current_labeled: true,
            overlay: true,
            report: true,
            canonical: false,
            ply_format: default_ply_format(),
        }
    }
}

/// Everything one run needs. Serializable both ways: the TOML config file
/// parses into this, and the JSON report embeds it back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub registration: RegistrationSettings,
    /// No implicit threshold: config files must set `diff.threshold` to a
    /// value or to `"auto"`.
    pub diff: DiffSettings,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses a TOML config document.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let files = self.input.reference.is_some() || self.input.current.is_some();
        match (&self.input.synth, files) {
            (Some(_), true) => {
                return Err(Error::Config(
                    "input: choose either reference/current files or synth, not both".into(),
                ))
            }
            (None, _) => {
                if self.input.reference.is_none() || self.input.current.is_none() {
                    return Err(Error::Config(
                        "input: both reference and current paths are required".into(),
                    ));
                }
            }
            (Some(synth), false) => {
                match (&synth.preset, &synth.scene) {
                    (Some(_), Some(_)) | (None, None) => {
                        return Err(Error::Config(
                            "input.synth: exactly one of preset or scene is required".into(),
                        ))
                    }
                    _ => {}
                }
                if self.input.ground_truth.is_some() {
                    return Err(Error::Config(
                        "input: ground_truth conflicts with synth (scenes carry their own truth)"
                            .into(),
                    ));
                }
            }
        }
        self.registration.icp.validate()?;
        match &self.diff.threshold {
            ThresholdSetting::Value(v) if *v > 0.0 => {}
            ThresholdSetting::Value(v) => {
                return Err(Error::Config(format!(
                    "diff.threshold must be positive, got {v}"
                )))
            }
            named if named.is_auto() => {}
            ThresholdSetting::Named(other) => {
                return Err(Error::Config(format!(
                    "diff.threshold must be a number or \"auto\", got \"{other}\""
                )))
            }
        }
        if !self.diff.auto_factor.is_finite() || self.diff.auto_factor <= 0.0 {
            return Err(Error::Config("diff.auto_factor must be positive".into()));
        }
        if let Some(r) = self.diff.cluster_radius {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::Config("diff.cluster_radius must be positive".into()));
            }
        }
        if self.diff.min_region_points == 0 {
            return Err(Error::Config("diff.min_region_points must be >= 1".into()));
        }
        if self.output.directory.as_os_str().is_empty() {
            return Err(Error::Config("output.directory must not be empty".into()));
        }
        Ok(())
    }
}

/// Registration outcome embedded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpSummary {
    pub transform: SimilarityTransform,
    pub iterations_run: usize,
    pub converged: bool,
    pub final_sum_of_distances: f64,
    pub final_mean_squared_error: f64,
    pub error_trace: Vec<IterationStats>,
}

/// Diff outcome embedded in the report. Per-point labels are packed one
/// character per point (`M` matched, `U` unmatched), index-aligned with
/// the owning cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub match_threshold: f64,
    pub cluster_radius: f64,
    pub min_region_points: usize,
    pub matched_fraction_reference: f64,
    pub matched_fraction_current: f64,
    pub reference_labels: String,
    pub current_labels: String,
    pub region_count: usize,
    pub regions: Vec<DefectRegion>,
    pub alignment_used: SimilarityTransform,
}

impl DiffSummary {
    fn from_report(report: &DiffReport) -> DiffSummary {
        DiffSummary {
            match_threshold: report.config_used.match_threshold,
            cluster_radius: report.config_used.cluster_radius,
            min_region_points: report.config_used.min_region_points,
            matched_fraction_reference: report.matched_fraction_reference,
            matched_fraction_current: report.matched_fraction_current,
            reference_labels: pack_labels(&report.reference_labels),
            current_labels: pack_labels(&report.current_labels),
            region_count: report.regions.len(),
            regions: report.regions.clone(),
            alignment_used: report.alignment_used,
        }
    }

    /// Rebuilds the full diff report (for re-evaluation from a stored
    /// report file).
    pub fn to_diff_report(&self) -> Result<DiffReport> {
        Ok(DiffReport {
            reference_labels: unpack_labels(&self.reference_labels, PointLabel::UnmatchedReference)?,
            current_labels: unpack_labels(&self.current_labels, PointLabel::UnmatchedCurrent)?,
            regions: self.regions.clone(),
            matched_fraction_reference: self.matched_fraction_reference,
            matched_fraction_current: self.matched_fraction_current,
            config_used: DiffConfig {
                match_threshold: self.match_threshold,
                cluster_radius: self.cluster_radius,
                min_region_points: self.min_region_points,
            },
            alignment_used: self.alignment_used,
        })
    }
}

fn pack_labels(labels: &[PointLabel]) -> String {
    labels
        .iter()
        .map(|l| if l.is_matched() { 'M' } else { 'U' })
        .collect()
}

fn unpack_labels(packed: &str, unmatched: PointLabel) -> Result<Vec<PointLabel>> {
    packed
        .chars()
        .map(|c| match c {
            'M' => Ok(PointLabel::Matched),
            'U' => Ok(unmatched),
            other => Err(Error::Config(format!(
                "invalid label character `{other}` in stored report"
            ))),
        })
        .collect()
}

/// The single JSON document describing one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: RunConfig,
    /// Absent when registration was skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registration: Option<IcpSummary>,
    pub diff: DiffSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalResult>,
    /// Absent in canonical mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingRecord>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<RunReport> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Reads a ground-truth JSON file.
pub fn read_truth_file(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

struct LoadedInputs {
    reference: PointCloud,
    current: PointCloud,
    truth: Option<GroundTruth>,
}

fn load_inputs(config: &RunConfig) -> Result<LoadedInputs> {
    if let Some(synth) = &config.input.synth {
        let spec: SceneSpec = match (&synth.preset, &synth.scene) {
            (Some(name), None) => preset(name, synth.seed)?,
            (None, Some(scene)) => scene.clone(),
            _ => unreachable!("validated"),
        };
        let scene = generate(&spec)?;
        return Ok(LoadedInputs {
            reference: scene.reference,
            current: scene.current,
            truth: Some(scene.truth),
        });
    }
    let reference = read_cloud_file(config.input.reference.as_ref().expect("validated"))?;
    let current = read_cloud_file(config.input.current.as_ref().expect("validated"))?;
    let truth = match &config.input.ground_truth {
        Some(path) => Some(read_truth_file(path)?),
        None => None,
    };
    Ok(LoadedInputs {
        reference,
        current,
        truth,
    })
}

/// Executes the full pipeline for one config.
///
/// Outputs (each behind its toggle) land in the output directory:
/// `reference_labeled.ply`, `current_labeled.ply` (aligned into the
/// reference frame), `overlay.ply` (both clouds merged), `report.json`.
/// On error, files already written by this run are removed.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.output.directory)
        .map_err(|e| Error::io(config.output.directory.display().to_string(), e))?;

    let mut written: Vec<PathBuf> = Vec::new();
    match run_inner(config, &mut written) {
        Ok(report) => Ok(report),
        Err(e) => {
            for file in written {
                let _ = std::fs::remove_file(file);
            }
            Err(e)
        }
    }
}

fn run_inner(config: &RunConfig, written: &mut Vec<PathBuf>) -> Result<RunReport> {
    let mut timer = StageTimer::new();

    let inputs = timer.time("load", || load_inputs(config))?;
    let reference = inputs.reference;
    let current = inputs.current;

    let (registration, alignment) = if config.registration.skip {
        (None, SimilarityTransform::identity())
    } else {
        let result = timer.time("icp", || icp(&current, &reference, &config.registration.icp))?;
        let last = result
            .error_trace
            .last()
            .copied()
            .unwrap_or(IterationStats {
                sum_of_distances: 0.0,
                mean_squared_error: 0.0,
                transform_delta: 0.0,
            });
        let summary = IcpSummary {
            transform: result.transform,
            iterations_run: result.iterations_run,
            converged: result.converged,
            final_sum_of_distances: last.sum_of_distances,
            final_mean_squared_error: last.mean_squared_error,
            error_trace: result.error_trace,
        };
        (Some(summary), result.transform)
    };

    let aligned_current = if config.registration.skip {
        current
    } else {
        alignment.apply_cloud(&current)
    };

    let diff_report = timer.time("diff", || -> Result<DiffReport> {
        let threshold = match &config.diff.threshold {
            ThresholdSetting::Value(v) => *v,
            _ => auto_threshold(&reference, config.diff.auto_factor)?,
        };
        let diff_config = DiffConfig {
            match_threshold: threshold,
            cluster_radius: config.diff.cluster_radius.unwrap_or(2.0 * threshold),
            min_region_points: config.diff.min_region_points,
        };
        diff(&reference, &aligned_current, &alignment, &diff_config)
    })?;

    let evaluation = match &inputs.truth {
        Some(truth) => Some(timer.time("evaluate", || evaluate(&diff_report, truth))?),
        None => None,
    };

    let mut outputs: Vec<String> = Vec::new();
    timer.time("export", || -> Result<()> {
        let dir = &config.output.directory;
        let format = config.output.ply_format;
        let mut write = |name: &str,
                         cloud: &PointCloud,
                         labels: &[PointLabel],
                         written: &mut Vec<PathBuf>|
         -> Result<()> {
            let path = dir.join(name);
            write_ply_file(&path, cloud, Some(labels), format)?;
            written.push(path);
            outputs.push(name.to_string());
            Ok(())
        };
        if config.output.reference_labeled {
            write(
                "reference_labeled.ply",
                &reference,
                &diff_report.reference_labels,
                written,
            )?;
        }
        if config.output.current_labeled {
            write(
                "current_labeled.ply",
                &aligned_current,
                &diff_report.current_labels,
                written,
            )?;
        }
        if config.output.overlay {
            let mut points = reference.points.clone();
            points.extend_from_slice(&aligned_current.points);
            let overlay = PointCloud::new(points);
            let mut labels = diff_report.reference_labels.clone();
            labels.extend_from_slice(&diff_report.current_labels);
            write("overlay.ply", &overlay, &labels, written)?;
        }
        Ok(())
    })?;

    let timing = timer.finish();
    let mut report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        registration,
        diff: DiffSummary::from_report(&diff_report),
        evaluation,
        timing: if config.output.canonical {
            None
        } else {
            Some(timing)
        },
        outputs: Vec::new(),
    };

    if config.output.report {
        outputs.push("report.json".to_string());
        report.outputs = outputs;
        let path = config.output.directory.join("report.json");
        std::fs::write(&path, report.to_json()?)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        written.push(path);
    } else {
        report.outputs = outputs;
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;
    use crate::io::{read_ply, write_ply};

    fn synth_config(dir: &Path, preset: &str, seed: u64) -> RunConfig {
        RunConfig {
            input: InputConfig {
                synth: Some(SynthInput {
                    preset: Some(preset.into()),
                    seed,
                    scene: None,
                }),
                ..InputConfig::default()
            },
            registration: RegistrationSettings {
                skip: false,
                icp: IcpConfig {
                    max_iterations: 200,
                    ..IcpConfig::default()
                },
            },
            diff: DiffSettings::default(),
            output: OutputConfig {
                directory: dir.to_path_buf(),
                canonical: true,
                ..OutputConfig::default()
            },
        }
    }

    #[test]
    fn config_toml_round_trip() {
        let text = r#"
[input.synth]
preset = "tower"
seed = 9

[registration]
max_iterations = 120
with_scale = true
trim_fraction = 0.1

[diff]
threshold = "auto"
min_region_points = 25

[output]
directory = "out"
canonical = true
"#;
        let config = RunConfig::from_toml(text).unwrap();
        assert_eq!(config.registration.icp.max_iterations, 120);
        assert!(config.registration.icp.with_scale);
        assert!(config.diff.threshold.is_auto());
        assert_eq!(config.diff.min_region_points, 25);

        let echoed = config.to_toml().unwrap();
        let back = RunConfig::from_toml(&echoed).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn full_config_with_every_key_parses() {
        let text = r#"
[input]
reference = "scene/reference.ply"
current = "scene/current.ply"
ground_truth = "scene/truth.json"

[registration]
skip = false
max_iterations = 200
tolerance = 1e-6
with_scale = false
trim_fraction = 0.15
max_correspondence_distance = 0.5
subsample_size = 25000
seed = 0

[diff]
threshold = "auto"
auto_factor = 3.0
cluster_radius = 0.1
min_region_points = 20

[output]
directory = "out"
reference_labeled = true
current_labeled = true
overlay = true
report = true
canonical = false
ply_format = "binary_little_endian"
"#;
        let config = RunConfig::from_toml(text).unwrap();
        assert_eq!(config.output.ply_format, PlyFormat::BinaryLittleEndian);
        assert_eq!(config.registration.icp.subsample_size, Some(25_000));
        assert_eq!(
            config.registration.icp.max_correspondence_distance,
            Some(0.5)
        );

        let ascii = text.replace("binary_little_endian", "ascii");
        let config = RunConfig::from_toml(&ascii).unwrap();
        assert_eq!(config.output.ply_format, PlyFormat::Ascii);
    }

    #[test]
    fn numeric_threshold_parses() {
        let text = r#"
[input]
reference = "a.ply"
current = "b.ply"

[diff]
threshold = 0.05

[output]
directory = "out"
"#;
        let config = RunConfig::from_toml(text).unwrap();
        assert_eq!(config.diff.threshold, ThresholdSetting::Value(0.05));
    }

    #[test]
    fn conflicting_inputs_are_rejected() {
        let text = r#"
[input]
reference = "a.ply"
current = "b.ply"

[input.synth]
preset = "tower"

[diff]
threshold = "auto"

[output]
directory = "out"
"#;
        assert!(RunConfig::from_toml(text).is_err());
    }

    #[test]
    fn missing_current_is_rejected() {
        let text = r#"
[input]
reference = "a.ply"

[diff]
threshold = "auto"

[output]
directory = "out"
"#;
        assert!(RunConfig::from_toml(text).is_err());
    }

    #[test]
    fn threshold_must_be_stated() {
        let text = r#"
[input]
reference = "a.ply"
current = "b.ply"

[diff]

[output]
directory = "out"
"#;
        let err = RunConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("threshold"), "{err}");
    }

    #[test]
    fn identical_file_inputs_with_skip_report_full_match() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = crate::synth::sample_surface(
            &crate::synth::BaseShape::Composite(vec![crate::synth::Primitive::Cuboid {
                min: Point3::new(0.0, 0.0, 0.0),
                max: Point3::new(1.0, 1.0, 1.0),
            }]),
            300.0,
            5,
        )
        .unwrap();
        let path = dir.path().join("cloud.ply");
        std::fs::write(&path, write_ply(&cloud, None, PlyFormat::BinaryLittleEndian).unwrap())
            .unwrap();

        let config = RunConfig {
            input: InputConfig {
                reference: Some(path.clone()),
                current: Some(path),
                ..InputConfig::default()
            },
            registration: RegistrationSettings {
                skip: true,
                icp: IcpConfig::default(),
            },
            diff: DiffSettings::default(),
            output: OutputConfig {
                directory: dir.path().join("out"),
                ..OutputConfig::default()
            },
        };
        let report = run(&config).unwrap();
        assert!(report.registration.is_none());
        assert_eq!(report.diff.matched_fraction_reference, 1.0);
        assert_eq!(report.diff.matched_fraction_current, 1.0);
        assert_eq!(report.diff.region_count, 0);
        assert!(report.timing.is_some());
        assert!(report
            .timing
            .as_ref()
            .unwrap()
            .stage_seconds("icp")
            .is_none());
        for name in ["reference_labeled.ply", "current_labeled.ply", "overlay.ply", "report.json"] {
            assert!(config.output.directory.join(name).exists(), "{name} missing");
        }
    }

    #[test]
    fn canonical_runs_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut config_a = synth_config(dir_a.path(), "shiba-tail", 3);
        let mut config_b = synth_config(dir_b.path(), "shiba-tail", 3);
        // output dirs differ, so compare files only
        run(&config_a).unwrap();
        run(&config_b).unwrap();
        for name in ["reference_labeled.ply", "current_labeled.ply", "overlay.ply"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
        // reports embed the (differing) output dir; normalize it
        config_a.output.directory = PathBuf::from("X");
        config_b.output.directory = PathBuf::from("X");
        let report_a = std::fs::read_to_string(dir_a.path().join("report.json")).unwrap();
        let report_b = std::fs::read_to_string(dir_b.path().join("report.json")).unwrap();
        let norm = |s: &str, dir: &Path| s.replace(&dir.display().to_string(), "X");
        assert_eq!(
            norm(&report_a, dir_a.path()),
            norm(&report_b, dir_b.path())
        );
    }

    #[test]
    fn report_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let config = synth_config(dir.path(), "shiba-tail", 4);
        let report = run(&config).unwrap();
        let text = report.to_json().unwrap();
        let back = RunReport::from_json(&text).unwrap();
        assert_eq!(back, report);

        // stored labels rebuild a diff report usable for re-evaluation
        let rebuilt = back.diff.to_diff_report().unwrap();
        assert_eq!(rebuilt.regions.len(), back.diff.region_count);
    }

    #[test]
    fn failed_runs_leave_no_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let config = RunConfig {
            input: InputConfig {
                reference: Some(dir.path().join("missing.ply")),
                current: Some(dir.path().join("also-missing.ply")),
                ..InputConfig::default()
            },
            registration: RegistrationSettings::default(),
            diff: DiffSettings::default(),
            output: OutputConfig {
                directory: out.clone(),
                ..OutputConfig::default()
            },
        };
        let err = run(&config).unwrap_err();
        assert!(err.to_string().contains("missing.ply"));
        let leftovers: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
        assert!(leftovers.is_empty(), "partial outputs: {leftovers:?}");
    }

    #[test]
    fn shiba_run_detects_the_tail() {
        let dir = tempfile::tempdir().unwrap();
        let config = synth_config(dir.path(), "shiba-tail", 1);
        let report = run(&config).unwrap();

        let registration = report.registration.as_ref().unwrap();
        assert!(registration.converged);

        let eval = report.evaluation.as_ref().unwrap();
        assert!(eval.precision >= 0.9, "precision {}", eval.precision);
        assert!(eval.recall >= 0.9, "recall {}", eval.recall);
        assert_eq!(eval.region_detection_rate, 1.0);

        // overlay carries both green (reference-only) and gray vertices
        let overlay = read_ply(&std::fs::read(dir.path().join("overlay.ply")).unwrap()).unwrap();
        let colors = overlay.colors.unwrap();
        assert!(colors.contains(&crate::io::ply::UNMATCHED_REFERENCE_COLOR));
        assert!(colors.contains(&crate::io::ply::MATCHED_COLOR));
    }
}
