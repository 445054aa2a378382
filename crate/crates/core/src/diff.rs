//! Per-point change classification and defect-region clustering.
//!
//! Classification is symmetric and two-pass: a current point is matched
//! when its nearest reference neighbor lies within the threshold, a
//! reference point when its nearest current neighbor does. The comparison
//! is inclusive (distance <= threshold counts as matched). Unmatched points
//! are then grouped per side into single-linkage connected components, the
//! defect regions.
//!
//! Per-point labels are pure functions of the immutable trees, so the
//! classification loops run in parallel and the result is independent of
//! the schedule. Region clustering is sequential (union-find).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, SimilarityTransform};
use crate::kdtree::KdTree;
use rayon::prelude::*;

/// Multiplier applied to the reference cloud's median nearest-neighbor
/// spacing when the match threshold is requested as "auto".
pub const AUTO_THRESHOLD_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffConfig {
    /// Match threshold in scene units; a point is matched when its nearest
    /// neighbor in the other cloud is at most this far away.
    pub match_threshold: f64,
    /// Maximum gap between points of one defect region (single linkage).
    pub cluster_radius: f64,
    /// Regions with fewer points than this are flagged as sub-minimal
    /// noise but still reported.
    pub min_region_points: usize,
}

impl DiffConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.match_threshold.is_finite() || self.match_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "match_threshold must be positive, got {}",
                self.match_threshold
            )));
        }
        if !self.cluster_radius.is_finite() || self.cluster_radius <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "cluster_radius must be positive, got {}",
                self.cluster_radius
            )));
        }
        if self.min_region_points == 0 {
            return Err(Error::InvalidConfig(
                "min_region_points must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-point classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointLabel {
    /// Within threshold of the other cloud.
    Matched,
    /// Present in the reference only (rendered green).
    UnmatchedReference,
    /// Present in the current cloud only (rendered red).
    UnmatchedCurrent,
}

impl PointLabel {
    pub fn is_matched(self) -> bool {
        self == PointLabel::Matched
    }
}

/// Which cloud a defect region lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Reference,
    Current,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

/// A connected component of unmatched points on one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRegion {
    pub cloud_side: Side,
    /// Indices into the owning cloud, ascending.
    pub point_indices: Vec<usize>,
    pub point_count: usize,
    pub centroid: Point3,
    pub bounding_box: BoundingBox,
    /// Largest nearest-neighbor distance to the other cloud among members.
    pub max_deviation: f64,
    /// True when the region is smaller than `min_region_points`.
    pub below_min_points: bool,
}

/// Output of [`classify`]: labels plus the nearest-neighbor distance of
/// every point to the other cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub reference_labels: Vec<PointLabel>,
    pub current_labels: Vec<PointLabel>,
    pub reference_distances: Vec<f64>,
    pub current_distances: Vec<f64>,
}

/// Full change report for an aligned cloud pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffReport {
    pub reference_labels: Vec<PointLabel>,
    pub current_labels: Vec<PointLabel>,
    /// All regions of both sides, largest first; ties broken by ascending
    /// centroid, then side.
    pub regions: Vec<DefectRegion>,
    pub matched_fraction_reference: f64,
    pub matched_fraction_current: f64,
    pub config_used: DiffConfig,
    pub alignment_used: SimilarityTransform,
}

/// Labels every point of both clouds by nearest-neighbor distance against
/// the threshold. The current cloud must already be in the reference frame.
pub fn classify(
    reference: &PointCloud,
    current_aligned: &PointCloud,
    config: &DiffConfig,
) -> Result<Classification> {
    config.validate()?;
    if reference.is_empty() || current_aligned.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ref_tree = KdTree::build(reference)?;
    let cur_tree = KdTree::build(current_aligned)?;
    let thr_sq = config.match_threshold * config.match_threshold;

    let (current_labels, current_distances) =
        label_side(&current_aligned.points, &ref_tree, thr_sq, PointLabel::UnmatchedCurrent);
    let (reference_labels, reference_distances) =
        label_side(&reference.points, &cur_tree, thr_sq, PointLabel::UnmatchedReference);

    Ok(Classification {
        reference_labels,
        current_labels,
        reference_distances,
        current_distances,
    })
}

fn label_side(
    points: &[Point3],
    other_tree: &KdTree,
    thr_sq: f64,
    unmatched: PointLabel,
) -> (Vec<PointLabel>, Vec<f64>) {
    let hits: Vec<(f64, PointLabel)> = points
        .par_iter()
        .map(|&p| {
            let (_, d2) = other_tree.nearest_sq(p);
            let label = if d2 <= thr_sq {
                PointLabel::Matched
            } else {
                unmatched
            };
            (d2.sqrt(), label)
        })
        .collect();
    let mut labels = Vec::with_capacity(hits.len());
    let mut distances = Vec::with_capacity(hits.len());
    for (d, l) in hits {
        distances.push(d);
        labels.push(l);
    }
    (labels, distances)
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Groups unmatched points into single-linkage connected components: two
/// points belong to the same region when a chain of hops, each at most
/// `cluster_radius` long, connects them.
///
/// `nn_distances` holds each cloud point's nearest-neighbor distance to
/// the other cloud (as produced by [`classify`]); it feeds each region's
/// `max_deviation`. Regions come back sorted by descending size, ties by
/// ascending centroid.
pub fn cluster_regions(
    cloud: &PointCloud,
    unmatched_indices: &[usize],
    side: Side,
    nn_distances: &[f64],
    config: &DiffConfig,
) -> Result<Vec<DefectRegion>> {
    config.validate()?;
    if unmatched_indices.is_empty() {
        return Ok(Vec::new());
    }
    let sub_points: Vec<Point3> = unmatched_indices.iter().map(|&i| cloud.points[i]).collect();
    let sub_cloud = PointCloud::new(sub_points);
    let tree = KdTree::build(&sub_cloud)?;

    let mut uf = UnionFind::new(unmatched_indices.len());
    for (i, &p) in sub_cloud.points.iter().enumerate() {
        for j in tree.within_radius(p, config.cluster_radius)? {
            uf.union(i, j);
        }
    }

    // Group members under their root, preserving ascending sub-index order.
    let mut components: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for i in 0..unmatched_indices.len() {
        let root = uf.find(i);
        components.entry(root).or_default().push(i);
    }

    let mut regions: Vec<DefectRegion> = components
        .into_values()
        .map(|members| {
            let indices: Vec<usize> = members.iter().map(|&i| unmatched_indices[i]).collect();
            let mut min = cloud.points[indices[0]];
            let mut max = min;
            let mut sum = Point3::ORIGIN;
            let mut max_dev: f64 = 0.0;
            for &idx in &indices {
                let p = cloud.points[idx];
                min = min.min(p);
                max = max.max(p);
                sum = sum + p;
                max_dev = max_dev.max(nn_distances[idx]);
            }
            let count = indices.len();
            DefectRegion {
                cloud_side: side,
                centroid: sum * (1.0 / count as f64),
                bounding_box: BoundingBox { min, max },
                max_deviation: max_dev,
                below_min_points: count < config.min_region_points,
                point_count: count,
                point_indices: indices,
            }
        })
        .collect();

    sort_regions(&mut regions);
    Ok(regions)
}

fn sort_regions(regions: &mut [DefectRegion]) {
    regions.sort_by(|a, b| {
        b.point_count
            .cmp(&a.point_count)
            .then(a.centroid.x.total_cmp(&b.centroid.x))
            .then(a.centroid.y.total_cmp(&b.centroid.y))
            .then(a.centroid.z.total_cmp(&b.centroid.z))
            .then(a.cloud_side.cmp(&b.cloud_side))
    });
}

/// Classifies both clouds and clusters each side's unmatched points,
/// assembling the full report. Deterministic for fixed inputs.
pub fn diff(
    reference: &PointCloud,
    current_aligned: &PointCloud,
    alignment: &SimilarityTransform,
    config: &DiffConfig,
) -> Result<DiffReport> {
    let cls = classify(reference, current_aligned, config)?;

    let ref_unmatched: Vec<usize> = unmatched_indices(&cls.reference_labels);
    let cur_unmatched: Vec<usize> = unmatched_indices(&cls.current_labels);

    let mut regions = cluster_regions(
        reference,
        &ref_unmatched,
        Side::Reference,
        &cls.reference_distances,
        config,
    )?;
    regions.extend(cluster_regions(
        current_aligned,
        &cur_unmatched,
        Side::Current,
        &cls.current_distances,
        config,
    )?);
    sort_regions(&mut regions);

    let matched_ref = cls.reference_labels.iter().filter(|l| l.is_matched()).count();
    let matched_cur = cls.current_labels.iter().filter(|l| l.is_matched()).count();

    Ok(DiffReport {
        matched_fraction_reference: matched_ref as f64 / reference.len() as f64,
        matched_fraction_current: matched_cur as f64 / current_aligned.len() as f64,
        reference_labels: cls.reference_labels,
        current_labels: cls.current_labels,
        regions,
        config_used: config.clone(),
        alignment_used: *alignment,
    })
}

fn unmatched_indices(labels: &[PointLabel]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_matched())
        .map(|(i, _)| i)
        .collect()
}

/// Derives a match threshold from sampling density:
/// `factor` times the median nearest-neighbor spacing of the cloud.
pub fn auto_threshold(reference: &PointCloud, factor: f64) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if reference.len() < 2 {
        return Err(Error::InvalidConfig(
            "auto threshold needs at least 2 points".into(),
        ));
    }
    let tree = KdTree::build(reference)?;
    let mut spacings: Vec<f64> = reference
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| tree.nearest_excluding(p, i).1)
        .collect();
    spacings.sort_unstable_by(f64::total_cmp);
    let n = spacings.len();
    let median = if n % 2 == 1 {
        spacings[n / 2]
    } else {
        0.5 * (spacings[n / 2 - 1] + spacings[n / 2])
    };
    let threshold = factor * median;
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(Error::InvalidConfig(
            "auto threshold: cloud median spacing is zero".into(),
        ));
    }
    Ok(threshold)
}
