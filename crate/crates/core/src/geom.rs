//! Fundamental 3D types: points, point clouds, and similarity transforms.
//!
//! All types are plain immutable values. Coordinates are unitless scene
//! coordinates; consistency of units across the clouds of one run is the
//! caller's contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum allowed max-abs deviation of `R^T R` from the identity for a
/// matrix to count as a rotation.
pub const ORTHONORMALITY_TOL: f64 = 1e-9;

/// A point (or free vector) in 3D space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Squared Euclidean distance. Every distance comparison in the crate
    /// (nearest neighbor, radius queries, threshold classification) goes
    /// through this one expression so results agree bit-for-bit.
    pub fn distance_squared(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(self, other: Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Componentwise minimum.
    pub fn min(self, other: Point3) -> Point3 {
        Point3::new(
            self.x.min(other.x),
            self.y.min(other.y),
            self.z.min(other.z),
        )
    }

    /// Componentwise maximum.
    pub fn max(self, other: Point3) -> Point3 {
        Point3::new(
            self.x.max(other.x),
            self.y.max(other.y),
            self.z.max(other.z),
        )
    }

    /// Coordinate by axis index (0 = x, 1 = y, 2 = z).
    pub fn axis(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index out of range: {axis}"),
        }
    }
}

impl std::ops::Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, rhs: f64) -> Point3 {
        Point3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl std::ops::Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// An RGB color triple, 0–255 per channel.
pub type Rgb = [u8; 3];

/// An ordered collection of 3D points with optional per-point colors and
/// integer tags. Optional attributes, when present, have exactly one entry
/// per point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub colors: Option<Vec<Rgb>>,
    pub labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            colors: None,
            labels: None,
        }
    }

    pub fn with_colors(points: Vec<Point3>, colors: Vec<Rgb>) -> Result<Self> {
        let cloud = PointCloud {
            points,
            colors: Some(colors),
            labels: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the structural invariants: attribute lengths match the point
    /// count. Called at module boundaries that consume foreign clouds.
    pub fn validate(&self) -> Result<()> {
        if let Some(colors) = &self.colors {
            if colors.len() != self.points.len() {
                return Err(Error::AttributeLength {
                    attribute: "colors",
                    got: colors.len(),
                    expected: self.points.len(),
                });
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::AttributeLength {
                    attribute: "labels",
                    got: labels.len(),
                    expected: self.points.len(),
                });
            }
        }
        Ok(())
    }

    /// Arithmetic mean of the points.
    pub fn centroid(&self) -> Result<Point3> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let sum = self
            .points
            .iter()
            .fold(Point3::ORIGIN, |acc, &p| acc + p);
        Ok(sum * (1.0 / self.points.len() as f64))
    }
}

type Mat3 = [[f64; 3]; 3];

pub(crate) const MAT3_IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn mat_transpose(m: &Mat3) -> Mat3 {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}

pub(crate) fn mat_det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// A uniform scale, a rotation, and a translation, applied in that order:
/// `p' = scale * (rotation * p) + translation`.
///
/// The rotation is a row-major 3x3 matrix, orthonormal with determinant +1;
/// the scale is strictly positive (1.0 for rigid transforms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub rotation: Mat3,
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        SimilarityTransform::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: MAT3_IDENTITY,
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    /// Builds a transform from its parts, verifying the rotation is
    /// orthonormal with determinant +1 and the scale is positive.
    pub fn from_parts(rotation: Mat3, translation: [f64; 3], scale: f64) -> Result<Self> {
        let t = SimilarityTransform {
            rotation,
            translation,
            scale,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(translation: [f64; 3]) -> Self {
        SimilarityTransform {
            rotation: MAT3_IDENTITY,
            translation,
            scale: 1.0,
        }
    }

    /// Rotation about `axis` (need not be normalized, must be nonzero) by
    /// `angle` radians, via the Rodrigues formula.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        assert!(n > 0.0, "rotation axis must be nonzero");
        let (ux, uy, uz) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (s, c) = angle.sin_cos();
        let ic = 1.0 - c;
        let rotation = [
            [
                c + ux * ux * ic,
                ux * uy * ic - uz * s,
                ux * uz * ic + uy * s,
            ],
            [
                uy * ux * ic + uz * s,
                c + uy * uy * ic,
                uy * uz * ic - ux * s,
            ],
            [
                uz * ux * ic - uy * s,
                uz * uy * ic + ux * s,
                c + uz * uz * ic,
            ],
        ];
        SimilarityTransform {
            rotation,
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    /// Returns a copy with the translation replaced.
    pub fn translated(mut self, translation: [f64; 3]) -> Self {
        self.translation = translation;
        self
    }

    /// Returns a copy with the scale replaced. Panics on non-positive scale.
    pub fn scaled(mut self, scale: f64) -> Self {
        assert!(scale > 0.0, "scale must be positive");
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::InvalidTransform(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        for row in &self.rotation {
            for v in row {
                if !v.is_finite() {
                    return Err(Error::InvalidTransform("non-finite rotation entry".into()));
                }
            }
        }
        for v in &self.translation {
            if !v.is_finite() {
                return Err(Error::InvalidTransform(
                    "non-finite translation entry".into(),
                ));
            }
        }
        let rt_r = mat_mul(&mat_transpose(&self.rotation), &self.rotation);
        let mut max_dev: f64 = 0.0;
        for (i, row) in rt_r.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((v - expect).abs());
            }
        }
        if max_dev > ORTHONORMALITY_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation not orthonormal: max |R^T R - I| = {max_dev:.3e}"
            )));
        }
        if mat_det(&self.rotation) < 0.0 {
            return Err(Error::InvalidTransform(
                "rotation has negative determinant (reflection)".into(),
            ));
        }
        Ok(())
    }

    /// Applies the transform to one point: `scale * (R * p) + t`.
    pub fn apply(&self, p: Point3) -> Point3 {
        let r = mat_vec(&self.rotation, p.to_array());
        Point3::new(
            self.scale * r[0] + self.translation[0],
            self.scale * r[1] + self.translation[1],
            self.scale * r[2] + self.translation[2],
        )
    }

    /// Applies the transform to every point of a cloud; colors and labels
    /// are carried through unchanged.
    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|&p| self.apply(p)).collect(),
            colors: cloud.colors.clone(),
            labels: cloud.labels.clone(),
        }
    }

    /// Composition: `a.compose(&b)` applies `b` first, then `a`, so that
    /// `a.compose(&b).apply(p) == a.apply(b.apply(p))`.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        let rotation = mat_mul(&self.rotation, &other.rotation);
        let rt = mat_vec(&self.rotation, other.translation);
        let translation = [
            self.scale * rt[0] + self.translation[0],
            self.scale * rt[1] + self.translation[1],
            self.scale * rt[2] + self.translation[2],
        ];
        SimilarityTransform {
            rotation,
            translation,
            scale: self.scale * other.scale,
        }
    }

    /// The inverse transform: `t.inverse().compose(&t)` is the identity.
    pub fn inverse(&self) -> SimilarityTransform {
        let rotation = mat_transpose(&self.rotation);
        let inv_scale = 1.0 / self.scale;
        let rt = mat_vec(&rotation, self.translation);
        SimilarityTransform {
            rotation,
            translation: [-inv_scale * rt[0], -inv_scale * rt[1], -inv_scale * rt[2]],
            scale: inv_scale,
        }
    }

    /// The 4x4 homogeneous matrix, with the scale folded into the rotation
    /// block. Internal: only the convergence metric is defined over this
    /// form.
    pub(crate) fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let mut h = [[0.0; 4]; 4];
        for (i, row) in self.rotation.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                h[i][j] = self.scale * v;
            }
            h[i][3] = self.translation[i];
        }
        h[3][3] = 1.0;
        h
    }

    /// Frobenius norm of the difference of the two homogeneous matrices.
    /// Zero iff the matrices are equal; used as the convergence metric of
    /// the registration loop.
    pub fn distance_to(&self, other: &SimilarityTransform) -> f64 {
        let a = self.to_homogeneous();
        let b = other.to_homogeneous();
        let sum: f64 = a
            .iter()
            .zip(&b)
            .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(va, vb)| (va - vb) * (va - vb)))
            .sum();
        sum.sqrt()
    }

    /// The rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let trace = self.rotation[0][0] + self.rotation[1][1] + self.rotation[2][2];
        ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}
