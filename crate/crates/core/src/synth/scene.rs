//! Physics-free bin scenes: random placement, sphere stacking and top-down
//! occlusion.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ObjectModel;
use crate::cloud::{centroid, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::so3::{Axis, Pose, RotationMatrix};
use crate::workspace::{fit_normalization, NormalizationTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneInstance {
    pub pose: Pose,
    /// Points of this instance left in the scene cloud.
    pub visible_count: usize,
    /// Points of this instance before occlusion.
    pub total_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub instances: Vec<SceneInstance>,
    pub points: PointCloud,
    /// Instance index per point.
    pub labels: Vec<usize>,
    pub seed: u64,
    pub normalization: NormalizationTransform,
}

impl Scene {
    pub fn gt_poses(&self) -> Vec<Pose> {
        self.instances.iter().map(|i| i.pose).collect()
    }

    pub fn visible_counts(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.visible_count).collect()
    }

    /// Indices of the points labelled with `instance`.
    pub fn instance_points(&self, instance: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == instance).map(|(k, _)| k).collect()
    }

    /// Builds a scene holding every model point of every pose.
    pub fn from_poses(model: &ObjectModel, poses: &[Pose], seed: u64) -> Result<Self> {
        let mut points = Vec::with_capacity(model.points().len() * poses.len());
        let mut labels = Vec::with_capacity(points.capacity());
        let mut instances = Vec::with_capacity(poses.len());
        for (i, pose) in poses.iter().enumerate() {
            points.extend(model.points().iter().map(|m| pose.transform_point(m)));
            labels.extend(std::iter::repeat_n(i, model.points().len()));
            let n = model.points().len();
            instances.push(SceneInstance { pose: *pose, visible_count: n, total_count: n });
        }
        let scale = fit_normalization(model.points())?.scale;
        let normalization = NormalizationTransform::new(scale, centroid(&points))?;
        Ok(Scene { instances, points, labels, seed, normalization })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenParams {
    pub min_instances: usize,
    pub max_instances: usize,
    /// Bin size (mm); the floor spans `[0, x] x [0, y]` at `z = 0`.
    pub bin_extent: [f64; 3],
    pub max_attempts: usize,
    pub occlusion_cell: f64,
    pub occlusion_depth: f64,
    pub seed: u64,
}

impl Default for SceneGenParams {
    fn default() -> Self {
        SceneGenParams {
            min_instances: 4,
            max_instances: 8,
            bin_extent: [400.0, 300.0, 250.0],
            max_attempts: 200,
            occlusion_cell: 5.0,
            occlusion_depth: 3.0,
            seed: 0,
        }
    }
}

impl SceneGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_instances == 0 || self.min_instances > self.max_instances {
            return Err(invalid("instance range must satisfy 1 <= min <= max"));
        }
        if !self.bin_extent.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(invalid("bin extents must be positive"));
        }
        if !(self.occlusion_cell > 0.0) {
            return Err(invalid("occlusion cell must be positive"));
        }
        if !(self.occlusion_depth >= 0.0) {
            return Err(invalid("occlusion depth must be non-negative"));
        }
        if self.max_attempts == 0 {
            return Err(invalid("max_attempts must be at least 1"));
        }
        Ok(())
    }
}

/// Rotation from yaw (z), pitch (y) and roll (x) angles in degrees.
pub fn yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> RotationMatrix {
    RotationMatrix::about_axis(Axis::Z, yaw)
        .compose(&RotationMatrix::about_axis(Axis::Y, pitch))
        .compose(&RotationMatrix::about_axis(Axis::X, roll))
}

/// Lowest height at which a sphere of radius `r` centred above `xy` clears
/// all placed spheres of the same radius and the floor.
fn stack_height(xy: [f64; 2], placed: &[Vector3<f64>], r: f64) -> f64 {
    let d = 2.0 * r;
    placed.iter().fold(r, |z, c| {
        let dxy2 = (c.x - xy[0]).powi(2) + (c.y - xy[1]).powi(2);
        if dxy2 < d * d {
            z.max(c.z + (d * d - dxy2).sqrt())
        } else {
            z
        }
    })
}

/// Scatters instances into the bin. Every model point is visible; call
/// [`apply_occlusion`] for the camera view.
pub fn generate_scene(model: &ObjectModel, params: &SceneGenParams) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let r = model.bounding_radius();
    let [bx, by, bz] = params.bin_extent;
    if 2.0 * r > bx || 2.0 * r > by || 2.0 * r > bz {
        return Err(Error::GenerationFailed("object does not fit into the bin".into()));
    }
    let count = rng.random_range(params.min_instances..=params.max_instances);
    let mut centres: Vec<Vector3<f64>> = Vec::new();
    let mut poses = Vec::new();
    'instances: for _ in 0..count {
        for _ in 0..params.max_attempts {
            let rot = yaw_pitch_roll(
                rng.random_range(-180.0..180.0),
                rng.random_range(-180.0..180.0),
                rng.random_range(-180.0..180.0),
            );
            let xy = [rng.random_range(r..=bx - r), rng.random_range(r..=by - r)];
            let z = stack_height(xy, &centres, r);
            if z + r <= bz {
                let c = Vector3::new(xy[0], xy[1], z);
                centres.push(c);
                poses.push(Pose::new(rot.to_quat(), c));
                continue 'instances;
            }
        }
        break;
    }
    if poses.is_empty() {
        return Err(Error::GenerationFailed("no instance could be placed".into()));
    }
    Scene::from_poses(model, &poses, params.seed)
}

/// Top-down visibility: within each `cell` x `cell` column only points within
/// `depth` of the column's highest point survive.
pub fn apply_occlusion(scene: &Scene, cell: f64, depth: f64) -> Result<Scene> {
    if !(cell > 0.0) {
        return Err(invalid("occlusion cell must be positive"));
    }
    let key = |p: &Vector3<f64>| [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64];
    let mut top: HashMap<[i64; 2], f64> = HashMap::new();
    for p in &scene.points {
        let z = top.entry(key(p)).or_insert(f64::NEG_INFINITY);
        *z = z.max(p.z);
    }
    let keep: Vec<bool> = scene.points.iter().map(|p| p.z >= top[&key(p)] - depth).collect();
    let points: PointCloud = scene.points.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
    let labels: Vec<usize> = scene.labels.iter().zip(&keep).filter(|(_, &k)| k).map(|(l, _)| *l).collect();
    let mut instances = scene.instances.clone();
    for inst in &mut instances {
        inst.visible_count = 0;
    }
    for &l in &labels {
        instances[l].visible_count += 1;
    }
    let normalization = NormalizationTransform::new(scene.normalization.scale, centroid(&points))?;
    Ok(Scene { instances, points, labels, seed: scene.seed, normalization })
}

/// Two rods lying along x and rotated by `angle_deg` about z, the second one
/// raised by `separation` mm above the first.
pub fn make_crossing_rods_scene(rod: &ObjectModel, separation: f64, angle_deg: f64) -> Result<Scene> {
    let (lo, hi) = rod.bbox();
    let e = hi - lo;
    if !(e.z > e.x && e.z > e.y) {
        return Err(invalid("rod model must be elongated along z"));
    }
    let lying = RotationMatrix::about_axis(Axis::Y, 90.0);
    let crossing = RotationMatrix::about_axis(Axis::Z, angle_deg).compose(&lying);
    let base = Vector3::new(0.0, 0.0, e.x / 2.0);
    let poses =
        [Pose::new(lying.to_quat(), base), Pose::new(crossing.to_quat(), base + Vector3::new(0.0, 0.0, separation))];
    Scene::from_poses(rod, &poses, 0)
}
