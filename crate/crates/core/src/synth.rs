//! Procedural reference/current scene pairs with known defects, known
//! misalignment, and index-aligned ground truth.
//!
//! Scenes are sampled uniformly by surface area from composites of
//! axis-aligned boxes and cylinders. By default the reference and current
//! clouds are drawn with different derived seeds, the way two independent
//! reconstructions of the same object never land on identical points; a
//! shared-sampling mode exists for exact null tests. Everything is fully
//! deterministic in the scene seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, SimilarityTransform};
use crate::metrics::GroundTruth;

/// A surface primitive of the scene composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    /// Axis-aligned box between two opposite corners.
    Cuboid { min: Point3, max: Point3 },
    /// Cylinder extruded from `base` along `axis` (normalized internally),
    /// capped on both ends.
    Cylinder {
        base: Point3,
        axis: [f64; 3],
        radius: f64,
        height: f64,
    },
}

/// The scene geometry: two named shapes plus free composites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseShape {
    /// A stacked-box tower with a jib arm, hammer head, side fin, and a
    /// rooftop antenna.
    BoxTower,
    /// A four-legged chair with a backrest and two raised armrests.
    Chair,
    Composite(Vec<Primitive>),
}

impl BaseShape {
    pub fn primitives(&self) -> Vec<Primitive> {
        match self {
            BaseShape::BoxTower => tower_primitives(),
            BaseShape::Chair => chair_primitives(),
            BaseShape::Composite(prims) => prims.clone(),
        }
    }
}

/// Point membership test for defect application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSelector {
    Sphere { center: Point3, radius: f64 },
    Box { min: Point3, max: Point3 },
}

impl RegionSelector {
    /// Inclusive membership.
    pub fn contains(&self, p: Point3) -> bool {
        match self {
            RegionSelector::Sphere { center, radius } => {
                p.distance_squared(*center) <= radius * radius
            }
            RegionSelector::Box { min, max } => {
                p.x >= min.x
                    && p.x <= max.x
                    && p.y >= min.y
                    && p.y <= max.y
                    && p.z >= min.z
                    && p.z <= max.z
            }
        }
    }
}

/// What happens to the selected points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    /// Delete the selected points (material loss).
    Remove,
    /// Shift the selected points by a fixed offset.
    Translate { offset: [f64; 3] },
    /// Rotate the selected points about an axis through `pivot`.
    Rotate {
        axis: [f64; 3],
        angle_degrees: f64,
        pivot: Point3,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub region: RegionSelector,
    pub kind: DefectKind,
}

impl DefectSpec {
    fn validate(&self, index: usize) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidConfig(format!("defect {index}: {what}")))
        };
        match &self.region {
            RegionSelector::Sphere { center, radius } => {
                if !center.is_finite() || !radius.is_finite() {
                    return bad("sphere selector must be finite");
                }
            }
            RegionSelector::Box { min, max } => {
                if !min.is_finite() || !max.is_finite() {
                    return bad("box selector must be finite");
                }
            }
        }
        match &self.kind {
            DefectKind::Remove => {}
            DefectKind::Translate { offset } => {
                if !offset.iter().all(|v| v.is_finite()) {
                    return bad("translate offset must be finite");
                }
            }
            DefectKind::Rotate {
                axis,
                angle_degrees,
                pivot,
            } => {
                let norm_sq: f64 = axis.iter().map(|v| v * v).sum();
                if !norm_sq.is_finite() || norm_sq == 0.0 {
                    return bad("rotation axis must be finite and nonzero");
                }
                if !angle_degrees.is_finite() || !pivot.is_finite() {
                    return bad("rotation angle and pivot must be finite");
                }
            }
        }
        Ok(())
    }
}

/// Full description of a synthetic scene. Deterministic in `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub shape: BaseShape,
    /// Sample points per unit of surface area.
    pub density: f64,
    #[serde(default)]
    pub defects: Vec<DefectSpec>,
    /// Applied to the current cloud after defect injection.
    #[serde(default)]
    pub misalignment: SimilarityTransform,
    /// Isotropic Gaussian noise added per point to both clouds.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sample both sides with the same derived seed, making the clean
    /// parts of the clouds point-identical (for exact null tests).
    #[serde(default)]
    pub shared_sampling: bool,
}

/// A generated scene: both clouds, truth labels aligned with each, and the
/// misalignment that was baked into the current cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectScene {
    pub reference: PointCloud,
    pub current: PointCloud,
    pub truth: GroundTruth,
    pub generator_misalignment: SimilarityTransform,
    pub spec: SceneSpec,
}

// ── Surface sampling ─────────────────────────────────────────────────────

enum Patch {
    /// Parallelogram spanned by `u` and `v` from `origin`.
    Rect { origin: Point3, u: Point3, v: Point3 },
    /// Cylinder side wall.
    Lateral {
        base: Point3,
        axis: Point3,
        u: Point3,
        v: Point3,
        radius: f64,
        height: f64,
    },
    /// Cylinder end cap.
    Disk {
        center: Point3,
        u: Point3,
        v: Point3,
        radius: f64,
    },
}

impl Patch {
    fn area(&self) -> f64 {
        match self {
            Patch::Rect { u, v, .. } => u.cross(*v).norm(),
            Patch::Lateral { radius, height, .. } => {
                2.0 * std::f64::consts::PI * radius * height
            }
            Patch::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        match self {
            Patch::Rect { origin, u, v } => {
                let s: f64 = rng.random();
                let t: f64 = rng.random();
                *origin + *u * s + *v * t
            }
            Patch::Lateral {
                base,
                axis,
                u,
                v,
                radius,
                height,
            } => {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let h: f64 = rng.random_range(0.0..*height);
                *base + *axis * h + (*u * theta.cos() + *v * theta.sin()) * *radius
            }
            Patch::Disk {
                center,
                u,
                v,
                radius,
            } => {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = radius * rng.random::<f64>().sqrt();
                *center + (*u * theta.cos() + *v * theta.sin()) * r
            }
        }
    }
}

/// Orthonormal basis perpendicular to a unit axis, chosen deterministically.
fn perpendicular_basis(axis: Point3) -> (Point3, Point3) {
    let pick = if axis.x.abs() <= axis.y.abs() && axis.x.abs() <= axis.z.abs() {
        Point3::new(1.0, 0.0, 0.0)
    } else if axis.y.abs() <= axis.z.abs() {
        Point3::new(0.0, 1.0, 0.0)
    } else {
        Point3::new(0.0, 0.0, 1.0)
    };
    let u = axis.cross(pick);
    let u = u * (1.0 / u.norm());
    let v = axis.cross(u);
    (u, v)
}

fn patches_of(primitive: &Primitive) -> Result<Vec<Patch>> {
    match primitive {
        Primitive::Cuboid { min, max } => {
            if max.x < min.x || max.y < min.y || max.z < min.z {
                return Err(Error::InvalidConfig(
                    "cuboid max corner below min corner".into(),
                ));
            }
            let d = *max - *min;
            let ex = Point3::new(d.x, 0.0, 0.0);
            let ey = Point3::new(0.0, d.y, 0.0);
            let ez = Point3::new(0.0, 0.0, d.z);
            Ok(vec![
                Patch::Rect { origin: *min, u: ex, v: ey }, // bottom
                Patch::Rect { origin: Point3::new(min.x, min.y, max.z), u: ex, v: ey }, // top
                Patch::Rect { origin: *min, u: ex, v: ez }, // front
                Patch::Rect { origin: Point3::new(min.x, max.y, min.z), u: ex, v: ez }, // back
                Patch::Rect { origin: *min, u: ey, v: ez }, // left
                Patch::Rect { origin: Point3::new(max.x, min.y, min.z), u: ey, v: ez }, // right
            ])
        }
        Primitive::Cylinder {
            base,
            axis,
            radius,
            height,
        } => {
            if !(radius.is_finite() && *radius > 0.0 && height.is_finite() && *height > 0.0) {
                return Err(Error::InvalidConfig(
                    "cylinder radius and height must be positive".into(),
                ));
            }
            let a = Point3::from_array(*axis);
            let n = a.norm();
            if n == 0.0 {
                return Err(Error::InvalidConfig("cylinder axis must be nonzero".into()));
            }
            let axis = a * (1.0 / n);
            let (u, v) = perpendicular_basis(axis);
            Ok(vec![
                Patch::Lateral {
                    base: *base,
                    axis,
                    u,
                    v,
                    radius: *radius,
                    height: *height,
                },
                Patch::Disk { center: *base, u, v, radius: *radius },
                Patch::Disk {
                    center: *base + axis * *height,
                    u,
                    v,
                    radius: *radius,
                },
            ])
        }
    }
}

/// Samples the composite surface uniformly by area at `density` points per
/// unit area. The point count is `round(density * total_area)`; patches are
/// chosen with probability proportional to their area.
pub fn sample_surface(shape: &BaseShape, density: f64, seed: u64) -> Result<PointCloud> {
    let mut rng = stream_rng(seed, 0);
    sample_surface_with_rng(shape, density, &mut rng)
}

fn sample_surface_with_rng(
    shape: &BaseShape,
    density: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PointCloud> {
    if !density.is_finite() || density <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "density must be positive, got {density}"
        )));
    }
    let mut patches = Vec::new();
    for primitive in shape.primitives() {
        patches.extend(patches_of(&primitive)?);
    }
    let mut cumulative = Vec::with_capacity(patches.len());
    let mut total = 0.0;
    for patch in &patches {
        total += patch.area();
        cumulative.push(total);
    }
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::DegenerateShape);
    }

    let count = (density * total).round() as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let pick: f64 = rng.random_range(0.0..total);
        let idx = cumulative.partition_point(|&c| c <= pick).min(patches.len() - 1);
        points.push(patches[idx].sample(rng));
    }
    Ok(PointCloud::new(points))
}

// ── Defect application ───────────────────────────────────────────────────

/// Applies the defect list to a cloud, in order, selecting against the
/// point positions current at each step. Returns the modified cloud and
/// per-point component ids (0 = clean, `k+1` = defect `k`) aligned with it.
///
/// Removed points disappear from both outputs; their ground truth lives on
/// the reference side (see [`reference_truth`]).
pub fn apply_defects(
    cloud: &PointCloud,
    defects: &[DefectSpec],
) -> Result<(PointCloud, Vec<u32>)> {
    let mut points = cloud.points.clone();
    let mut labels = vec![0u32; points.len()];
    let mut alive = vec![true; points.len()];

    for (k, defect) in defects.iter().enumerate() {
        defect.validate(k)?;
        let selected: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|&(i, p)| alive[i] && defect.region.contains(*p))
            .map(|(i, _)| i)
            .collect();
        if selected.is_empty() {
            return Err(Error::DefectSelectsNoPoints { index: k });
        }
        let id = (k + 1) as u32;
        match &defect.kind {
            DefectKind::Remove => {
                for i in selected {
                    alive[i] = false;
                }
            }
            DefectKind::Translate { offset } => {
                let shift = Point3::from_array(*offset);
                for i in selected {
                    points[i] = points[i] + shift;
                    labels[i] = id;
                }
            }
            DefectKind::Rotate {
                axis,
                angle_degrees,
                pivot,
            } => {
                let rot = SimilarityTransform::from_axis_angle(*axis, angle_degrees.to_radians());
                for i in selected {
                    points[i] = *pivot + rot.apply(points[i] - *pivot);
                    labels[i] = id;
                }
            }
        }
    }

    let mut out_points = Vec::with_capacity(points.len());
    let mut out_labels = Vec::with_capacity(points.len());
    let mut out_colors = cloud.colors.as_ref().map(|_| Vec::new());
    let mut out_tags = cloud.labels.as_ref().map(|_| Vec::new());
    for i in 0..points.len() {
        if !alive[i] {
            continue;
        }
        out_points.push(points[i]);
        out_labels.push(labels[i]);
        if let (Some(dst), Some(src)) = (&mut out_colors, &cloud.colors) {
            dst.push(src[i]);
        }
        if let (Some(dst), Some(src)) = (&mut out_tags, &cloud.labels) {
            dst.push(src[i]);
        }
    }

    Ok((
        PointCloud {
            points: out_points,
            colors: out_colors,
            labels: out_tags,
        },
        out_labels,
    ))
}

/// Reference-side ground truth: marks every point inside a defect's
/// selector with that defect's component id. In the reference cloud these
/// are the vacated (or removed) locations. Later defects overwrite earlier
/// ids where selectors overlap.
pub fn reference_truth(cloud: &PointCloud, defects: &[DefectSpec]) -> Vec<u32> {
    let mut labels = vec![0u32; cloud.len()];
    for (k, defect) in defects.iter().enumerate() {
        let id = (k + 1) as u32;
        for (i, &p) in cloud.points.iter().enumerate() {
            if defect.region.contains(p) {
                labels[i] = id;
            }
        }
    }
    labels
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn add_noise(cloud: &mut PointCloud, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    for p in &mut cloud.points {
        p.x += normal.sample(rng);
        p.y += normal.sample(rng);
        p.z += normal.sample(rng);
    }
}

/// Generates the full scene: a clean reference sampling, an independently
/// resampled current cloud with defects applied, the misalignment baked
/// into the current cloud, Gaussian noise on both, and index-aligned truth.
pub fn generate(spec: &SceneSpec) -> Result<DefectScene> {
    if spec.noise_sigma.is_nan() || spec.noise_sigma < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "noise_sigma must be non-negative, got {}",
            spec.noise_sigma
        )));
    }
    spec.misalignment.validate()?;

    let mut ref_rng = stream_rng(spec.seed, 1);
    let mut cur_rng = if spec.shared_sampling {
        stream_rng(spec.seed, 1)
    } else {
        stream_rng(spec.seed, 2)
    };

    let mut reference = sample_surface_with_rng(&spec.shape, spec.density, &mut ref_rng)?;
    let current_base = sample_surface_with_rng(&spec.shape, spec.density, &mut cur_rng)?;

    let (current_defected, current_truth) = apply_defects(&current_base, &spec.defects)?;
    let ref_truth = reference_truth(&reference, &spec.defects);
    for k in 0..spec.defects.len() {
        let id = (k + 1) as u32;
        if !ref_truth.contains(&id) {
            return Err(Error::DefectSelectsNoPoints { index: k });
        }
    }

    let mut current = spec.misalignment.apply_cloud(&current_defected);
    add_noise(&mut reference, spec.noise_sigma, &mut stream_rng(spec.seed, 3));
    add_noise(&mut current, spec.noise_sigma, &mut stream_rng(spec.seed, 4));

    Ok(DefectScene {
        reference,
        current,
        truth: GroundTruth {
            reference: ref_truth,
            current: current_truth,
        },
        generator_misalignment: spec.misalignment,
        spec: spec.clone(),
    })
}

// ── Bundled presets ──────────────────────────────────────────────────────

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 3] = ["tower", "shiba-tail", "chair-armrest"];

/// A ready-made scene spec for one of the bundled experiments:
///
/// * `tower` — the stacked-box tower with three defects: the antenna
///   removed, the hammer head dropped, and the side fin swung 40 degrees.
/// * `shiba-tail` — a block animal whose protruding tail is removed.
/// * `chair-armrest` — a chair whose left armrest is raised, producing
///   both a vacated (reference-side) and an occupied (current-side) region.
pub fn preset(name: &str, seed: u64) -> Result<SceneSpec> {
    match name {
        "tower" => Ok(SceneSpec {
            shape: BaseShape::BoxTower,
            density: 576.0,
            defects: tower_defects(),
            misalignment: SimilarityTransform::from_axis_angle([0.0, 0.0, 1.0], 10f64.to_radians())
                .translated([0.15, -0.1, 0.05]),
            noise_sigma: 0.0039,
            seed,
            shared_sampling: false,
        }),
        "shiba-tail" => Ok(SceneSpec {
            shape: BaseShape::Composite(shiba_primitives()),
            density: 2850.0,
            defects: vec![DefectSpec {
                region: RegionSelector::Box {
                    min: Point3::new(-1.45, -0.25, 0.6),
                    max: Point3::new(-0.64, 0.25, 1.5),
                },
                kind: DefectKind::Remove,
            }],
            misalignment: SimilarityTransform::from_axis_angle([0.0, 0.0, 1.0], 8f64.to_radians())
                .translated([0.1, 0.05, -0.02]),
            noise_sigma: 0.0018,
            seed,
            shared_sampling: false,
        }),
        "chair-armrest" => Ok(SceneSpec {
            shape: BaseShape::Chair,
            density: 2900.0,
            defects: vec![DefectSpec {
                region: RegionSelector::Box {
                    min: Point3::new(-0.53, -0.47, 1.32),
                    max: Point3::new(-0.37, 0.37, 1.47),
                },
                kind: DefectKind::Translate {
                    offset: [0.0, 0.0, 0.35],
                },
            }],
            misalignment: SimilarityTransform::from_axis_angle([0.0, 0.0, 1.0], 10f64.to_radians())
                .translated([0.12, -0.08, 0.04]),
            noise_sigma: 0.0017,
            seed,
            shared_sampling: false,
        }),
        other => Err(Error::InvalidConfig(format!(
            "unknown preset `{other}`; expected one of {PRESET_NAMES:?}"
        ))),
    }
}

fn cuboid(min: [f64; 3], max: [f64; 3]) -> Primitive {
    Primitive::Cuboid {
        min: Point3::from_array(min),
        max: Point3::from_array(max),
    }
}

fn tower_primitives() -> Vec<Primitive> {
    vec![
        cuboid([-1.0, -1.0, 0.0], [1.0, 1.0, 0.5]),   // base slab
        cuboid([-0.7, -0.7, 0.5], [0.7, 0.7, 2.0]),   // mid section
        cuboid([-0.4, -0.4, 2.0], [0.4, 0.4, 3.5]),   // upper section
        cuboid([0.4, -0.15, 3.0], [1.6, 0.15, 3.3]),  // jib arm
        cuboid([1.35, -0.3, 2.5], [1.75, 0.3, 3.0]),  // hammer head
        cuboid([-1.2, -0.1, 1.0], [-0.7, 0.1, 1.4]),  // side fin
        Primitive::Cylinder {
            base: Point3::new(0.0, 0.0, 3.5),
            axis: [0.0, 0.0, 1.0],
            radius: 0.08,
            height: 0.8,
        }, // antenna
    ]
}

fn tower_defects() -> Vec<DefectSpec> {
    vec![
        DefectSpec {
            region: RegionSelector::Box {
                min: Point3::new(-0.2, -0.2, 3.55),
                max: Point3::new(0.2, 0.2, 4.4),
            },
            kind: DefectKind::Remove,
        },
        DefectSpec {
            region: RegionSelector::Box {
                min: Point3::new(1.3, -0.35, 2.45),
                max: Point3::new(1.8, 0.35, 3.01),
            },
            kind: DefectKind::Translate {
                offset: [0.0, 0.0, -0.5],
            },
        },
        DefectSpec {
            region: RegionSelector::Box {
                min: Point3::new(-1.25, -0.15, 0.95),
                max: Point3::new(-0.705, 0.15, 1.45),
            },
            kind: DefectKind::Rotate {
                axis: [0.0, 0.0, 1.0],
                angle_degrees: 40.0,
                pivot: Point3::new(-0.7, 0.0, 1.2),
            },
        },
    ]
}

fn shiba_primitives() -> Vec<Primitive> {
    let mut prims = vec![
        cuboid([-0.6, -0.4, 0.25], [0.6, 0.4, 1.05]), // body
        cuboid([0.6, -0.25, 0.7], [1.0, 0.25, 1.1]),  // head
    ];
    for (x, y) in [(-0.45, -0.25), (-0.45, 0.25), (0.45, -0.25), (0.45, 0.25)] {
        prims.push(Primitive::Cylinder {
            base: Point3::new(x, y, 0.0),
            axis: [0.0, 0.0, 1.0],
            radius: 0.06,
            height: 0.25,
        });
    }
    prims.push(Primitive::Cylinder {
        base: Point3::new(-0.6, 0.0, 0.8),
        axis: [-0.8, 0.0, 0.6],
        radius: 0.07,
        height: 0.7,
    }); // tail
    prims
}

fn chair_primitives() -> Vec<Primitive> {
    let mut prims = vec![
        cuboid([-0.5, -0.5, 0.9], [0.5, 0.5, 1.0]), // seat
        cuboid([-0.5, 0.4, 1.0], [0.5, 0.5, 2.0]),  // backrest
    ];
    for (x, y) in [(-0.42, -0.42), (-0.42, 0.42), (0.42, -0.42), (0.42, 0.42)] {
        prims.push(Primitive::Cylinder {
            base: Point3::new(x, y, 0.0),
            axis: [0.0, 0.0, 1.0],
            radius: 0.05,
            height: 0.9,
        });
    }
    for x in [-0.45, 0.45] {
        prims.push(Primitive::Cylinder {
            base: Point3::new(x, -0.3, 1.0),
            axis: [0.0, 0.0, 1.0],
            radius: 0.04,
            height: 0.35,
        });
        prims.push(cuboid([x - 0.06, -0.45, 1.35], [x + 0.06, 0.35, 1.45]));
    }
    prims
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{auto_threshold, diff, DiffConfig, AUTO_THRESHOLD_FACTOR};
    use crate::registration::{icp, IcpConfig};

    fn unit_cube() -> BaseShape {
        BaseShape::Composite(vec![cuboid([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])])
    }

    #[test]
    fn unit_cube_sampling_hits_the_expected_count() {
        let cloud = sample_surface(&unit_cube(), 100.0, 1).unwrap();
        // area 6, density 100
        assert!((cloud.len() as f64 - 600.0).abs() <= 30.0);
        assert!(cloud.points.iter().all(|p| {
            let on_face = [p.x, p.y, p.z].iter().any(|&v| v == 0.0 || v == 1.0);
            let inside = p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0 && p.z >= 0.0 && p.z <= 1.0;
            on_face && inside
        }));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_surface(&unit_cube(), 200.0, 7).unwrap();
        let b = sample_surface(&unit_cube(), 200.0, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_surface(&unit_cube(), 200.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn doubling_density_doubles_the_count() {
        let a = sample_surface(&unit_cube(), 150.0, 3).unwrap();
        let b = sample_surface(&unit_cube(), 300.0, 3).unwrap();
        let ratio = b.len() as f64 / a.len() as f64;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn zero_area_shape_is_degenerate() {
        let flat = BaseShape::Composite(vec![cuboid([0.0; 3], [0.0; 3])]);
        assert!(matches!(
            sample_surface(&flat, 100.0, 1),
            Err(Error::DegenerateShape)
        ));
    }

    #[test]
    fn cylinder_points_lie_on_the_surface() {
        let shape = BaseShape::Composite(vec![Primitive::Cylinder {
            base: Point3::new(1.0, 2.0, 3.0),
            axis: [0.0, 0.0, 2.0],
            radius: 0.5,
            height: 2.0,
        }]);
        let cloud = sample_surface(&shape, 120.0, 5).unwrap();
        for p in &cloud.points {
            let dz = p.z - 3.0;
            let dr = ((p.x - 1.0).powi(2) + (p.y - 2.0).powi(2)).sqrt();
            let on_wall = (dr - 0.5).abs() < 1e-9 && (0.0..=2.0).contains(&dz);
            let on_cap = dr <= 0.5 + 1e-9 && (dz.abs() < 1e-9 || (dz - 2.0).abs() < 1e-9);
            assert!(on_wall || on_cap, "off-surface point {p:?}");
        }
    }

    #[test]
    fn empty_defect_list_leaves_the_cloud_alone() {
        let cloud = sample_surface(&unit_cube(), 100.0, 2).unwrap();
        let (out, labels) = apply_defects(&cloud, &[]).unwrap();
        assert_eq!(out, cloud);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn remove_defect_deletes_exactly_the_selected_points() {
        let cloud = sample_surface(&unit_cube(), 400.0, 3).unwrap();
        let selector = RegionSelector::Box {
            min: Point3::new(0.5, 0.5, 0.5),
            max: Point3::new(1.1, 1.1, 1.1),
        };
        let inside = cloud
            .points
            .iter()
            .filter(|&&p| selector.contains(p))
            .count();
        assert!(inside > 0);
        let (out, labels) = apply_defects(
            &cloud,
            &[DefectSpec {
                region: selector.clone(),
                kind: DefectKind::Remove,
            }],
        )
        .unwrap();
        assert_eq!(out.len(), cloud.len() - inside);
        assert!(out.points.iter().all(|&p| !selector.contains(p)));
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn translate_defect_marks_moved_points() {
        let cloud = sample_surface(&unit_cube(), 400.0, 4).unwrap();
        let selector = RegionSelector::Sphere {
            center: Point3::new(1.0, 1.0, 1.0),
            radius: 0.4,
        };
        let (out, labels) = apply_defects(
            &cloud,
            &[DefectSpec {
                region: selector.clone(),
                kind: DefectKind::Translate {
                    offset: [5.0, 0.0, 0.0],
                },
            }],
        )
        .unwrap();
        assert_eq!(out.len(), cloud.len());
        for (i, &label) in labels.iter().enumerate() {
            if label == 1 {
                // moved points sit 5 units along x from a selected origin
                let original = out.points[i] - Point3::new(5.0, 0.0, 0.0);
                assert!(selector.contains(original));
            } else {
                assert!(!selector.contains(out.points[i]));
            }
        }
        assert!(labels.contains(&1));
    }

    #[test]
    fn malformed_defect_motion_is_rejected() {
        let cloud = sample_surface(&unit_cube(), 100.0, 6).unwrap();
        let whole = RegionSelector::Box {
            min: Point3::new(-1.0, -1.0, -1.0),
            max: Point3::new(2.0, 2.0, 2.0),
        };
        let zero_axis = DefectSpec {
            region: whole.clone(),
            kind: DefectKind::Rotate {
                axis: [0.0, 0.0, 0.0],
                angle_degrees: 15.0,
                pivot: Point3::ORIGIN,
            },
        };
        assert!(matches!(
            apply_defects(&cloud, &[zero_axis]),
            Err(Error::InvalidConfig(_))
        ));

        let nan_offset = DefectSpec {
            region: whole,
            kind: DefectKind::Translate {
                offset: [f64::NAN, 0.0, 0.0],
            },
        };
        assert!(matches!(
            apply_defects(&cloud, &[nan_offset]),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn empty_selection_is_an_error() {
        let cloud = sample_surface(&unit_cube(), 100.0, 5).unwrap();
        let far = DefectSpec {
            region: RegionSelector::Sphere {
                center: Point3::new(50.0, 0.0, 0.0),
                radius: 0.1,
            },
            kind: DefectKind::Remove,
        };
        assert!(matches!(
            apply_defects(&cloud, &[far]),
            Err(Error::DefectSelectsNoPoints { index: 0 })
        ));
    }

    #[test]
    fn generated_scenes_are_byte_identical_per_seed() {
        let spec = preset("tower", 11).unwrap();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truth_labels_match_selector_reevaluation() {
        let mut spec = preset("shiba-tail", 13).unwrap();
        spec.noise_sigma = 0.0;
        let scene = generate(&spec).unwrap();
        let selector = &spec.defects[0].region;
        for (i, &p) in scene.reference.points.iter().enumerate() {
            assert_eq!(scene.truth.reference[i] != 0, selector.contains(p), "point {i}");
        }
        // the current cloud lost exactly its selected points: none of the
        // surviving points sit inside the selector (pre-misalignment frame)
        let undo = scene.generator_misalignment.inverse();
        for &p in &scene.current.points {
            assert!(!selector.contains(undo.apply(p)));
        }
        assert!(scene.truth.current.iter().all(|&l| l == 0));
    }

    #[test]
    fn shared_seed_null_scene_is_exactly_clean() {
        let spec = SceneSpec {
            shape: unit_cube(),
            density: 500.0,
            defects: vec![],
            misalignment: SimilarityTransform::identity(),
            noise_sigma: 0.0,
            seed: 21,
            shared_sampling: true,
        };
        let scene = generate(&spec).unwrap();
        assert_eq!(scene.reference, scene.current);

        let threshold = auto_threshold(&scene.reference, AUTO_THRESHOLD_FACTOR).unwrap();
        let report = diff(
            &scene.reference,
            &scene.current,
            &SimilarityTransform::identity(),
            &DiffConfig {
                match_threshold: threshold,
                cluster_radius: 2.0 * threshold,
                min_region_points: 5,
            },
        )
        .unwrap();
        assert!(report.regions.is_empty());
        assert_eq!(report.matched_fraction_reference, 1.0);
    }

    #[test]
    fn clean_resampled_scene_is_nearly_fully_matched() {
        let spec = SceneSpec {
            shape: unit_cube(),
            density: 2000.0,
            defects: vec![],
            misalignment: SimilarityTransform::identity(),
            noise_sigma: 0.0,
            seed: 23,
            shared_sampling: false,
        };
        let scene = generate(&spec).unwrap();
        assert_ne!(scene.reference, scene.current);

        let threshold = auto_threshold(&scene.reference, AUTO_THRESHOLD_FACTOR).unwrap();
        let report = diff(
            &scene.reference,
            &scene.current,
            &SimilarityTransform::identity(),
            &DiffConfig {
                match_threshold: threshold,
                cluster_radius: 2.0 * threshold,
                min_region_points: 5,
            },
        )
        .unwrap();
        assert!(report.matched_fraction_reference >= 0.99);
        assert!(report.matched_fraction_current >= 0.99);
    }

    #[test]
    fn icp_recovers_the_inverse_misalignment() {
        let mut spec = preset("tower", 29).unwrap();
        spec.defects.clear();
        spec.misalignment = SimilarityTransform::from_axis_angle([0.0, 0.0, 1.0], 15f64.to_radians())
            .translated([0.3, 0.0, 0.0]);
        let scene = generate(&spec).unwrap();

        let config = IcpConfig {
            max_iterations: 200,
            ..IcpConfig::default()
        };
        let result = icp(&scene.current, &scene.reference, &config).unwrap();
        assert!(result.converged);
        // Recovery accuracy at this density and noise level, measured
        // against the generator: rotation ~5e-4 rad, translation ~1e-3.
        let expect = scene.generator_misalignment.inverse();
        let rot_err = result.transform.compose(&expect.inverse()).rotation_angle();
        assert!(rot_err <= 1e-3, "rotation error {rot_err:.3e} rad");
        let t_err: f64 = result
            .transform
            .translation
            .iter()
            .zip(&expect.translation)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(t_err <= 1.5e-3, "translation error {t_err:.3e}");
        assert_eq!(result.transform.scale, 1.0);
    }

    #[test]
    fn presets_are_distinct_and_unknown_names_fail() {
        assert_eq!(preset("tower", 1).unwrap().defects.len(), 3);
        assert_eq!(preset("shiba-tail", 1).unwrap().defects.len(), 1);
        assert_eq!(preset("chair-armrest", 1).unwrap().defects.len(), 1);
        assert!(preset("boat", 1).is_err());
    }
}
