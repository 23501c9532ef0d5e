//! Rotations, object symmetry groups and the symmetry-aware pose distance.
//!
//! An object's rotational symmetry is described by a step angle about each of
//! its body axes. Finite steps generate a finite group `S` of rotation
//! matrices; very fine steps are treated as continuous symmetry and handled by
//! an [`AxisMask`] that projects model points onto the symmetry axis instead.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sum::OrderedSum;

/// Tolerance used when comparing rotation matrices for equality.
pub const MATRIX_EQ_TOL: f64 = 1e-6;

/// Upper bound on the number of elements in a symmetry group.
pub const MAX_GROUP_SIZE: usize = 360;

const UNIT_TOL: f64 = 1e-6;

/// Unit quaternion `w + xi + yj + zk` with canonical sign.
///
/// The canonical representative has `w >= 0`; when `w == 0` the first non-zero
/// component among `(x, y, z)` is positive. `q` and `-q` therefore map to the
/// same value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from components that must already be unit-norm
    /// within `1e-6`. The result is renormalized and canonicalized.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(invalid(format!("quaternion norm {n} is not 1")));
        }
        Ok(Self::from_components_unchecked(w / n, x / n, y / n, z / n))
    }

    /// Normalizes an arbitrary non-zero 4-vector.
    pub fn normalized(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(invalid("cannot normalize a zero quaternion"));
        }
        Ok(Self::from_components_unchecked(w / n, x / n, y / n, z / n))
    }

    pub fn from_array(q: [f64; 4]) -> Result<Self> {
        Self::try_new(q[0], q[1], q[2], q[3])
    }

    fn from_components_unchecked(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }.canonical()
    }

    /// Rotation of `angle_rad` about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle_rad: f64) -> Self {
        let n = axis.norm();
        if n < 1e-15 || angle_rad == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (angle_rad / 2.0).sin_cos();
        Self::from_components_unchecked(c, a.x * s, a.y * s, a.z * s)
    }

    /// Uniformly distributed random rotation.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            if let Ok(q) = Self::normalized(v[0], v[1], v[2], v[3]) {
                return q;
            }
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Returns the canonical-sign representative. Idempotent.
    pub fn canonical(self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Hamilton product `self * other` (apply `other` first).
    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        let (a, b) = (self, o);
        Quaternion::from_components_unchecked(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn inverse(&self) -> Quaternion {
        Quaternion::from_components_unchecked(self.w, -self.x, -self.y, -self.z)
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let d = self.inverse().mul(other);
        let v = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        2.0 * v.atan2(d.w.abs())
    }

    pub fn to_matrix(&self) -> RotationMatrix {
        quat_to_matrix(self)
    }
}

/// Proper rotation matrix (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Validates orthonormality and `det = +1` within `1e-6`.
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("rotation matrix has non-finite entries"));
        }
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > UNIT_TOL {
            return Err(invalid(format!("matrix is not orthonormal (error {err:e})")));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > UNIT_TOL {
            return Err(invalid(format!("matrix determinant is {det}, expected +1")));
        }
        Ok(RotationMatrix(m))
    }

    /// Rotation by `angle_deg` degrees about a body axis.
    pub fn about_axis(axis: Axis, angle_deg: f64) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let m = match axis {
            Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        };
        RotationMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * other.0)
    }

    pub fn frobenius_distance(&self, other: &RotationMatrix) -> f64 {
        (self.0 - other.0).norm()
    }

    pub fn to_quat(&self) -> Quaternion {
        matrix_to_quat(self)
    }
}

/// Converts a unit quaternion to its rotation matrix. `q` and `-q` give the
/// same matrix.
pub fn quat_to_matrix(q: &Quaternion) -> RotationMatrix {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    RotationMatrix(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Converts a rotation matrix to the canonical-sign unit quaternion
/// (Shepperd's method, branching on the largest diagonal term).
pub fn matrix_to_quat(r: &RotationMatrix) -> Quaternion {
    let m = &r.0;
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let (w, x, y, z);
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        w = 0.25 * s;
        x = (m[(2, 1)] - m[(1, 2)]) / s;
        y = (m[(0, 2)] - m[(2, 0)]) / s;
        z = (m[(1, 0)] - m[(0, 1)]) / s;
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        w = (m[(2, 1)] - m[(1, 2)]) / s;
        x = 0.25 * s;
        y = (m[(0, 1)] + m[(1, 0)]) / s;
        z = (m[(0, 2)] + m[(2, 0)]) / s;
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        w = (m[(0, 2)] - m[(2, 0)]) / s;
        x = (m[(0, 1)] + m[(1, 0)]) / s;
        y = 0.25 * s;
        z = (m[(1, 2)] + m[(2, 1)]) / s;
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        w = (m[(1, 0)] - m[(0, 1)]) / s;
        x = (m[(0, 2)] + m[(2, 0)]) / s;
        y = (m[(1, 2)] + m[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let n = (w * w + x * x + y * y + z * z).sqrt();
    Quaternion::from_components_unchecked(w / n, x / n, y / n, z / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        v[self.index()] = 1.0;
        v
    }
}

fn default_ts() -> f64 {
    15.0
}

/// Per-axis rotational symmetry of an object.
///
/// `d*_deg` is the step angle of the symmetry about that body axis (0 = no
/// symmetry). Steps finer than `ts_deg` are treated as continuous symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryDescriptor {
    #[serde(default)]
    pub dx_deg: f64,
    #[serde(default)]
    pub dy_deg: f64,
    #[serde(default)]
    pub dz_deg: f64,
    #[serde(default = "default_ts")]
    pub ts_deg: f64,
}

impl Default for SymmetryDescriptor {
    fn default() -> Self {
        SymmetryDescriptor { dx_deg: 0.0, dy_deg: 0.0, dz_deg: 0.0, ts_deg: default_ts() }
    }
}

impl SymmetryDescriptor {
    pub fn new(dx_deg: f64, dy_deg: f64, dz_deg: f64, ts_deg: f64) -> Result<Self> {
        let d = SymmetryDescriptor { dx_deg, dy_deg, dz_deg, ts_deg };
        d.validate()?;
        Ok(d)
    }

    pub fn steps(&self) -> [f64; 3] {
        [self.dx_deg, self.dy_deg, self.dz_deg]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ts_deg > 0.0) || !self.ts_deg.is_finite() {
            return Err(Error::InvalidDescriptor(format!("ts_deg must be > 0, got {}", self.ts_deg)));
        }
        for (axis, d) in Axis::ALL.iter().zip(self.steps()) {
            if !(0.0..360.0).contains(&d) {
                return Err(Error::InvalidDescriptor(format!("step about {axis:?} must lie in [0, 360), got {d}")));
            }
            if d > 0.0 {
                let order = 360.0 / d;
                if (order - order.round()).abs() > 1e-6 {
                    return Err(Error::InvalidDescriptor(format!("step about {axis:?} ({d} deg) does not divide 360")));
                }
            }
        }
        Ok(())
    }
}

/// Symmetry class of a single body axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisClass {
    None,
    Finite { step_deg: f64 },
    Infinite,
}

/// Classifies each axis: `d == 0` is no symmetry, `0 < d < ts` is continuous
/// symmetry, anything else is a finite cyclic symmetry of step `d`.
pub fn classify_axes(desc: &SymmetryDescriptor) -> Result<[AxisClass; 3]> {
    desc.validate()?;
    Ok(desc.steps().map(|d| {
        if d == 0.0 {
            AxisClass::None
        } else if d < desc.ts_deg {
            AxisClass::Infinite
        } else {
            AxisClass::Finite { step_deg: d }
        }
    }))
}

/// Finite list of rotations mapping the object onto itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryGroup {
    matrices: Vec<RotationMatrix>,
    generator_axes: Vec<Axis>,
}

impl SymmetryGroup {
    pub fn trivial() -> Self {
        SymmetryGroup { matrices: vec![RotationMatrix::identity()], generator_axes: Vec::new() }
    }

    pub fn matrices(&self) -> &[RotationMatrix] {
        &self.matrices
    }

    pub fn generator_axes(&self) -> &[Axis] {
        &self.generator_axes
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Index of the element equal to `m` within [`MATRIX_EQ_TOL`].
    pub fn position(&self, m: &RotationMatrix) -> Option<usize> {
        self.matrices.iter().position(|s| s.frobenius_distance(m) <= MATRIX_EQ_TOL)
    }
}

/// Closes the cyclic generators of all finite axes under composition.
///
/// Continuous axes contribute nothing here; they are handled by the mask.
pub fn build_symmetry_group(desc: &SymmetryDescriptor) -> Result<SymmetryGroup> {
    let classes = classify_axes(desc)?;
    let mut generators = Vec::new();
    let mut generator_axes = Vec::new();
    for (axis, class) in Axis::ALL.into_iter().zip(classes) {
        if let AxisClass::Finite { step_deg } = class {
            generators.push(RotationMatrix::about_axis(axis, step_deg));
            generator_axes.push(axis);
        }
    }

    let mut group = SymmetryGroup { matrices: vec![RotationMatrix::identity()], generator_axes };
    let mut next = 0;
    while next < group.matrices.len() {
        let element = group.matrices[next];
        for g in &generators {
            let candidate = element.compose(g);
            if group.position(&candidate).is_none() {
                if group.matrices.len() == MAX_GROUP_SIZE {
                    return Err(Error::UnsupportedSymmetry(format!(
                        "symmetry group of {desc:?} does not close within {MAX_GROUP_SIZE} elements"
                    )));
                }
                group.matrices.push(candidate);
            }
        }
        next += 1;
    }
    Ok(group)
}

/// Component-wise mask applied to model points before distances are taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMask(Vector3<f64>);

impl AxisMask {
    pub fn ones() -> Self {
        AxisMask(Vector3::new(1.0, 1.0, 1.0))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p.component_mul(&self.0)
    }
}

/// Builds the mask `v`: all ones without continuous symmetry, the unit vector
/// of the continuous axis when there is exactly one, zero for a sphere.
pub fn build_axis_mask(desc: &SymmetryDescriptor) -> Result<AxisMask> {
    let classes = classify_axes(desc)?;
    let infinite: Vec<Axis> =
        Axis::ALL.into_iter().zip(classes).filter(|(_, c)| *c == AxisClass::Infinite).map(|(a, _)| a).collect();
    match infinite.len() {
        0 => Ok(AxisMask::ones()),
        1 => Ok(AxisMask(infinite[0].unit())),
        2 => Err(Error::InvalidDescriptor("exactly two continuous-symmetry axes is geometrically inconsistent".into())),
        _ => Ok(AxisMask(Vector3::zeros())),
    }
}

/// Symmetry group and mask of one object, built together from a descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Symmetry {
    pub descriptor: SymmetryDescriptor,
    pub group: SymmetryGroup,
    pub mask: AxisMask,
}

impl Symmetry {
    pub fn from_descriptor(descriptor: SymmetryDescriptor) -> Result<Self> {
        Ok(Symmetry { descriptor, group: build_symmetry_group(&descriptor)?, mask: build_axis_mask(&descriptor)? })
    }

    pub fn none() -> Self {
        Symmetry { descriptor: SymmetryDescriptor::default(), group: SymmetryGroup::trivial(), mask: AxisMask::ones() }
    }

    pub fn continuous_axis(&self) -> Option<Axis> {
        let v = self.mask.vector();
        let ones = v.iter().filter(|c| **c == 1.0).count();
        if ones == 1 {
            Axis::ALL.into_iter().find(|a| v[a.index()] == 1.0)
        } else {
            None
        }
    }
}

/// Rigid pose: rotation followed by translation (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Quaternion,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Quaternion, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn identity() -> Self {
        Pose { rotation: Quaternion::IDENTITY, translation: Vector3::zeros() }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.to_matrix().matrix() * p + self.translation
    }
}

/// Result of [`symmetric_pose_distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDistance {
    /// Per-model-point distance (mm) for the best symmetry element.
    pub per_point: Vec<f64>,
    /// Mean of `per_point`.
    pub mean: f64,
    /// Index into the group of the minimizing element.
    pub symmetry_index: usize,
}

/// Symmetry-aware distance between two placements of a model.
///
/// For every `s` in the group, the per-point distances
/// `|(R_gt s (m*v) + T_gt) - (R_pred (m*v) + T_pred)|` are computed; the
/// element with the smallest mean wins (lowest index on ties).
pub fn symmetric_pose_distance(
    model: &[Vector3<f64>],
    gt: &Pose,
    pred: &Pose,
    group: &SymmetryGroup,
    mask: &AxisMask,
) -> Result<SymmetricDistance> {
    if model.is_empty() {
        return Err(invalid("model point cloud is empty"));
    }
    let masked: Vec<Vector3<f64>> = model.iter().map(|m| mask.apply(m)).collect();
    let r_pred = pred.rotation.to_matrix();
    let placed_pred: Vec<Vector3<f64>> = masked.iter().map(|u| r_pred.matrix() * u + pred.translation).collect();
    let r_gt = gt.rotation.to_matrix();

    let mut best: Option<SymmetricDistance> = None;
    for (index, s) in group.matrices().iter().enumerate() {
        let a = r_gt.matrix() * s.matrix();
        let per_point: Vec<f64> =
            masked.iter().zip(&placed_pred).map(|(u, p)| (a * u + gt.translation - p).norm()).collect();
        let mean = per_point.iter().copied().collect::<OrderedSum>().value() / per_point.len() as f64;
        if best.as_ref().is_none_or(|b| mean < b.mean) {
            best = Some(SymmetricDistance { per_point, mean, symmetry_index: index });
        }
    }
    Ok(best.expect("symmetry group always contains the identity"))
}

/// Mean symmetry-aware distance between two rotations applied to a model,
/// without translation.
pub fn symmetric_rotation_distance(
    masked_model: &[Vector3<f64>],
    a: &Quaternion,
    b: &Quaternion,
    group: &SymmetryGroup,
) -> f64 {
    let ra = a.to_matrix();
    let rb = b.to_matrix();
    let n = masked_model.len().max(1) as f64;
    group
        .matrices()
        .iter()
        .map(|s| {
            let diff = ra.matrix() * s.matrix() - rb.matrix();
            masked_model.iter().map(|u| (diff * u).norm()).collect::<OrderedSum>().value() / n
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest geodesic angle (radians) between `pred` and any symmetric
/// equivalent `gt * s`.
pub fn symmetric_angle(gt: &Quaternion, pred: &Quaternion, group: &SymmetryGroup) -> f64 {
    group.matrices().iter().map(|s| gt.mul(&s.to_quat()).angle_to(pred)).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rodrigues(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        let k = axis.normalize();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
    }

    fn desc(dx: f64, dy: f64, dz: f64) -> SymmetryDescriptor {
        SymmetryDescriptor::new(dx, dy, dz, 15.0).unwrap()
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        assert_eq!(*quat_to_matrix(&Quaternion::IDENTITY).matrix(), Matrix3::identity());
    }

    #[test]
    fn half_turn_about_z() {
        let q = Quaternion::try_new(0.0, 0.0, 0.0, 1.0).unwrap();
        let m = quat_to_matrix(&q);
        assert_eq!(*m.matrix(), Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)));
        let back = matrix_to_quat(&m);
        assert_eq!(back.to_array(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn matches_rodrigues() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let axis =
                Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let q = Quaternion::from_axis_angle(&axis, angle);
            let diff = (quat_to_matrix(&q).matrix() - rodrigues(axis, angle)).abs().max();
            assert!(diff < 1e-9, "diff {diff}");
        }
    }

    #[test]
    fn negated_quaternion_same_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = Quaternion::random(&mut rng);
        let neg = Quaternion { w: -q.w, x: -q.x, y: -q.y, z: -q.z };
        assert_eq!(quat_to_matrix(&q), quat_to_matrix(&neg));
        assert_eq!(neg.canonical(), q);
    }

    #[test]
    fn quaternion_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q = Quaternion::random(&mut rng);
            let back = matrix_to_quat(&quat_to_matrix(&q));
            for (a, b) in q.to_array().iter().zip(back.to_array()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_unit_and_non_orthonormal() {
        assert!(matches!(Quaternion::try_new(2.0, 0.0, 0.0, 0.0), Err(Error::InvalidArgument(_))));
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RotationMatrix::try_from_matrix(skew).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RotationMatrix::try_from_matrix(reflection).is_err());
    }

    #[test]
    fn canonical_sign_with_zero_w() {
        let q = Quaternion::try_new(0.0, 0.0, -1.0, 0.0).unwrap();
        assert_eq!(q.to_array(), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(q.canonical(), q);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_axes(&desc(0.0, 0.0, 180.0)).unwrap(),
            [AxisClass::None, AxisClass::None, AxisClass::Finite { step_deg: 180.0 }]
        );
        assert_eq!(
            classify_axes(&desc(0.0, 0.0, 1.0)).unwrap(),
            [AxisClass::None, AxisClass::None, AxisClass::Infinite]
        );
        assert_eq!(classify_axes(&desc(0.0, 0.0, 0.0)).unwrap(), [AxisClass::None; 3]);
    }

    #[test]
    fn descriptor_validation() {
        assert!(SymmetryDescriptor::new(0.0, 0.0, 7.0, 15.0).is_err());
        assert!(SymmetryDescriptor::new(0.0, 0.0, 360.0, 15.0).is_err());
        assert!(SymmetryDescriptor::new(-90.0, 0.0, 0.0, 15.0).is_err());
        assert!(SymmetryDescriptor::new(0.0, 0.0, 90.0, 0.0).is_err());
        assert!(SymmetryDescriptor::new(120.0, 0.0, 72.0, 15.0).is_ok());
    }

    #[test]
    fn two_fold_group_matches_listing() {
        let g = build_symmetry_group(&desc(0.0, 0.0, 180.0)).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(*g.matrices()[0].matrix(), Matrix3::identity());
        let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!((g.matrices()[1].matrix() - flip).abs().max() < 1e-12);
        assert_eq!(g.generator_axes(), &[Axis::Z]);
    }

    #[test]
    fn trivial_groups() {
        assert_eq!(build_symmetry_group(&desc(0.0, 0.0, 0.0)).unwrap().len(), 1);
        // continuous symmetry only
        assert_eq!(build_symmetry_group(&desc(0.0, 0.0, 5.0)).unwrap().len(), 1);
    }

    fn assert_closed(g: &SymmetryGroup) {
        for a in g.matrices() {
            for b in g.matrices() {
                assert!(g.position(&a.compose(b)).is_some());
            }
        }
        for (i, a) in g.matrices().iter().enumerate() {
            for b in &g.matrices()[i + 1..] {
                assert!(a.frobenius_distance(b) > MATRIX_EQ_TOL);
            }
        }
    }

    #[test]
    fn four_fold_group_is_closed() {
        let g = build_symmetry_group(&desc(0.0, 0.0, 90.0)).unwrap();
        assert_eq!(g.len(), 4);
        assert_closed(&g);
        for (k, m) in g.matrices().iter().enumerate() {
            let expected = rodrigues(Vector3::z(), (90.0 * k as f64).to_radians());
            assert!((m.matrix() - expected).abs().max() < 1e-9);
        }
    }

    #[test]
    fn multi_axis_groups() {
        // dihedral groups
        assert_eq!(build_symmetry_group(&desc(180.0, 0.0, 90.0)).unwrap().len(), 8);
        assert_eq!(build_symmetry_group(&desc(180.0, 0.0, 120.0)).unwrap().len(), 6);
        // rotation group of the cube
        let cube = build_symmetry_group(&desc(90.0, 90.0, 90.0)).unwrap();
        assert_eq!(cube.len(), 24);
        assert_closed(&cube);
    }

    #[test]
    fn non_closing_group_is_rejected() {
        let err = build_symmetry_group(&desc(90.0, 0.0, 72.0)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedSymmetry(_)));
    }

    #[test]
    fn axis_masks() {
        assert_eq!(*build_axis_mask(&desc(0.0, 0.0, 5.0)).unwrap().vector(), Vector3::z());
        assert_eq!(*build_axis_mask(&desc(0.0, 0.0, 0.0)).unwrap().vector(), Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(*build_axis_mask(&desc(1.0, 1.0, 1.0)).unwrap().vector(), Vector3::zeros());
        assert!(matches!(build_axis_mask(&desc(1.0, 0.0, 1.0)), Err(Error::InvalidDescriptor(_))));
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-10.0..10.0),
                )
            })
            .collect()
    }

    #[test]
    fn distance_zero_for_equal_and_symmetric_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_cloud(&mut rng, 64);
        let sym = Symmetry::from_descriptor(desc(0.0, 0.0, 180.0)).unwrap();
        let gt = Pose::new(Quaternion::random(&mut rng), Vector3::new(1.0, 2.0, 3.0));
        let d = symmetric_pose_distance(&model, &gt, &gt, &sym.group, &sym.mask).unwrap();
        assert!(d.per_point.iter().all(|v| *v == 0.0));

        let flipped = gt.rotation.mul(&sym.group.matrices()[1].to_quat());
        let pred = Pose::new(flipped, gt.translation);
        let d = symmetric_pose_distance(&model, &gt, &pred, &sym.group, &sym.mask).unwrap();
        assert!(d.mean < 1e-9);
        assert_eq!(d.symmetry_index, 1);
    }

    #[test]
    fn distance_matches_naive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = random_cloud(&mut rng, 40);
        for dz in [0.0, 180.0, 90.0, 120.0] {
            let sym = Symmetry::from_descriptor(desc(0.0, 0.0, dz)).unwrap();
            for _ in 0..20 {
                let gt = Pose::new(Quaternion::random(&mut rng), Vector3::new(3.0, -1.0, 2.0));
                let pred = Pose::new(Quaternion::random(&mut rng), Vector3::new(2.0, 0.5, 1.0));
                let d = symmetric_pose_distance(&model, &gt, &pred, &sym.group, &sym.mask).unwrap();
                // naive: evaluate every element independently, keep the smallest mean
                let mut best = f64::INFINITY;
                let mut best_pts = Vec::new();
                for s in sym.group.matrices() {
                    let mut pts = Vec::new();
                    for m in &model {
                        let a = gt.rotation.to_matrix().matrix() * (s.matrix() * m) + gt.translation;
                        let b = pred.rotation.to_matrix().matrix() * m + pred.translation;
                        pts.push((a - b).norm());
                    }
                    let mut total = 0.0;
                    for p in &pts {
                        total += p;
                    }
                    let mean = total / pts.len() as f64;
                    if mean < best {
                        best = mean;
                        best_pts = pts;
                    }
                }
                assert!((d.mean - best).abs() <= 1e-12 * best.max(1.0));
                for (a, b) in d.per_point.iter().zip(&best_pts) {
                    assert!((a - b).abs() <= 1e-12 * b.max(1.0));
                }
            }
        }
    }

    #[test]
    fn empty_model_rejected() {
        let sym = Symmetry::none();
        let p = Pose::identity();
        assert!(symmetric_pose_distance(&[], &p, &p, &sym.group, &sym.mask).is_err());
    }

    #[test]
    fn symmetric_angle_absorbs_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = build_symmetry_group(&desc(0.0, 0.0, 90.0)).unwrap();
        let q = Quaternion::random(&mut rng);
        for s in g.matrices() {
            assert!(symmetric_angle(&q, &q.mul(&s.to_quat()), &g) < 1e-7);
        }
    }
}
