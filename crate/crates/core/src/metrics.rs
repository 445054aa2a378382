//! Detection-quality evaluation against ground truth, and stage timing.
//!
//! A prediction is "positive" when a point is labeled unmatched; a truth
//! label is positive when the point carries a nonzero defect component id.
//! Both sides are pooled into one confusion matrix. Region-level quality is
//! the fraction of truth components overlapped by at least one predicted
//! region (one shared point suffices).

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diff::DiffReport;
use crate::error::{Error, Result};

/// Per-point defect component ids for both clouds, index-aligned with the
/// cloud points. `0` means clean; ids `>= 1` name the defect component the
/// point belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub reference: Vec<u32>,
    pub current: Vec<u32>,
}

impl GroundTruth {
    /// Distinct nonzero component ids across both sides.
    pub fn component_ids(&self) -> BTreeSet<u32> {
        self.reference
            .iter()
            .chain(self.current.iter())
            .copied()
            .filter(|&id| id != 0)
            .collect()
    }
}

/// Point-level confusion counts, derived rates, and region-level detection
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when there were no predicted positives; precision is then
    /// reported as 1.0 by convention.
    pub precision_undefined: bool,
    /// Set when there were no truth positives; recall is then reported as
    /// 1.0 by convention.
    pub recall_undefined: bool,
    /// Fraction of truth components overlapped by >= 1 predicted region.
    pub region_detection_rate: f64,
    pub truth_region_count: usize,
    pub detected_region_count: usize,
    /// Predicted regions at or above the minimum size that overlap no
    /// truth component at all.
    pub spurious_region_count: usize,
}

/// Scores a diff report against ground truth.
pub fn evaluate(report: &DiffReport, truth: &GroundTruth) -> Result<EvalResult> {
    if truth.reference.len() != report.reference_labels.len() {
        return Err(Error::GroundTruthMismatch {
            side: "reference",
            got: truth.reference.len(),
            expected: report.reference_labels.len(),
        });
    }
    if truth.current.len() != report.current_labels.len() {
        return Err(Error::GroundTruthMismatch {
            side: "current",
            got: truth.current.len(),
            expected: report.current_labels.len(),
        });
    }

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    let sides = [
        (&report.reference_labels, &truth.reference),
        (&report.current_labels, &truth.current),
    ];
    for (labels, ids) in sides {
        for (label, &id) in labels.iter().zip(ids) {
            match (!label.is_matched(), id != 0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }

    let precision_undefined = tp + fp == 0;
    let precision = if precision_undefined {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall_undefined = tp + fn_ == 0;
    let recall = if recall_undefined {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };

    // Region-level detection: a truth component counts as detected when any
    // predicted region shares at least one point with it.
    let all_ids = truth.component_ids();
    let mut detected: BTreeSet<u32> = BTreeSet::new();
    let mut spurious = 0usize;
    for region in &report.regions {
        let ids = match region.cloud_side {
            crate::diff::Side::Reference => &truth.reference,
            crate::diff::Side::Current => &truth.current,
        };
        let mut overlapped = false;
        for &idx in &region.point_indices {
            let id = ids[idx];
            if id != 0 {
                detected.insert(id);
                overlapped = true;
            }
        }
        if !overlapped && !region.below_min_points {
            spurious += 1;
        }
    }
    let region_detection_rate = if all_ids.is_empty() {
        1.0
    } else {
        detected.len() as f64 / all_ids.len() as f64
    };

    Ok(EvalResult {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        region_detection_rate,
        truth_region_count: all_ids.len(),
        detected_region_count: detected.len(),
        spurious_region_count: spurious,
    })
}

/// Wall time of one named pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub name: String,
    pub seconds: f64,
}

/// Per-stage wall times in execution order plus the total. Skipped stages
/// simply have no entry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingRecord {
    pub stages: Vec<StageTime>,
    pub total_seconds: f64,
}

impl TimingRecord {
    pub fn stage_seconds(&self, name: &str) -> Option<f64> {
        self.stages
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.seconds)
    }
}

/// Monotonic-clock stopwatch for the pipeline stages.
pub struct StageTimer {
    start: Instant,
    stages: Vec<StageTime>,
}

impl StageTimer {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        StageTimer {
            start: Instant::now(),
            stages: Vec::new(),
        }
    }

    /// Runs `f`, recording its wall time under `name`.
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages.push(StageTime {
            name: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn finish(self) -> TimingRecord {
        TimingRecord {
            stages: self.stages,
            total_seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}
