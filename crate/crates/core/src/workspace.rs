//! Normalized workpiece space.
//!
//! Models are uniformly scaled so their longest bounding-box edge becomes
//! 100 mm, and scenes are recentred on their centroid. Clustering runs in
//! this space so that bandwidths do not depend on object size; poses are
//! mapped back with [`denormalize_pose`].

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud::{bbox_extent, centroid, PointCloud};
use crate::error::{invalid, Result};
use crate::so3::Pose;

/// Side length of the normalization cube, in millimetres.
pub const CUBE_SIDE_MM: f64 = 100.0;

/// Maps scene millimetres to normalized millimetres: `(p - scene_offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub scale: f64,
    pub scene_offset: Vector3<f64>,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        NormalizationTransform { scale: 1.0, scene_offset: Vector3::zeros() }
    }

    pub fn new(scale: f64, scene_offset: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid(format!("normalization scale must be positive, got {scale}")));
        }
        Ok(NormalizationTransform { scale, scene_offset })
    }

    pub fn forward_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.scene_offset) * self.scale
    }

    pub fn inverse_point(&self, q: &Vector3<f64>) -> Vector3<f64> {
        q / self.scale + self.scene_offset
    }

    /// Scales an object-frame model (no recentring; models are centred already).
    pub fn scale_model(&self, model: &[Vector3<f64>]) -> PointCloud {
        model.iter().map(|m| m * self.scale).collect()
    }

    /// Maps a scene-frame pose into normalized space.
    pub fn normalize_pose(&self, p: &Pose) -> Pose {
        Pose::new(p.rotation, self.forward_point(&p.translation))
    }
}

/// Scale that fits the model's longest bounding-box edge to the 100 mm cube.
pub fn fit_normalization(model: &[Vector3<f64>]) -> Result<NormalizationTransform> {
    let extent = bbox_extent(model).ok_or_else(|| invalid("model point cloud is empty"))?;
    let longest = extent.max();
    if !(longest > 0.0) {
        return Err(invalid("model bounding box has zero extent"));
    }
    NormalizationTransform::new(CUBE_SIDE_MM / longest, Vector3::zeros())
}

/// Recentres the scene on its centroid and applies the scale of `t`.
///
/// Returns the normalized cloud and the transform with `scene_offset` set to
/// the subtracted centroid.
pub fn normalize_scene(
    scene_cloud: &[Vector3<f64>],
    t: &NormalizationTransform,
) -> (PointCloud, NormalizationTransform) {
    let transform = NormalizationTransform { scale: t.scale, scene_offset: centroid(scene_cloud) };
    let cloud = scene_cloud.iter().map(|p| transform.forward_point(p)).collect();
    (cloud, transform)
}

/// Maps a normalized-space pose back to scene millimetres. Rotation is
/// untouched by the uniform scale.
pub fn denormalize_pose(p: &Pose, t: &NormalizationTransform) -> Pose {
    Pose::new(p.rotation, t.inverse_point(&p.translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::Quaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bbox_model(extent: [f64; 3]) -> PointCloud {
        let mut pts = Vec::new();
        for &sx in &[-0.5, 0.5] {
            for &sy in &[-0.5, 0.5] {
                for &sz in &[-0.5, 0.5] {
                    pts.push(Vector3::new(sx * extent[0], sy * extent[1], sz * extent[2]));
                }
            }
        }
        pts.push(Vector3::new(0.1, -0.2, 0.3));
        pts
    }

    #[test]
    fn slender_part_scale() {
        let t = fit_normalization(&bbox_model([32.0, 92.0, 1304.0])).unwrap();
        assert_eq!(t.scale, 100.0 / 1304.0);
    }

    #[test]
    fn unit_scale_for_100mm_model() {
        let t = fit_normalization(&bbox_model([40.0, 100.0, 20.0])).unwrap();
        assert_eq!(t.scale, 1.0);
    }

    #[test]
    fn scale_matches_naive_bbox() {
        let model = bbox_model([38.0, 41.0, 56.0]);
        let mut max_edge: f64 = 0.0;
        for axis in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in &model {
                lo = lo.min(p[axis]);
                hi = hi.max(p[axis]);
            }
            max_edge = max_edge.max(hi - lo);
        }
        let t = fit_normalization(&model).unwrap();
        assert_eq!(t.scale, 100.0 / max_edge);
        assert_eq!(t.scale, 100.0 / 56.0);
        let scaled = t.scale_model(&model);
        assert!((bbox_extent(&scaled).unwrap().max() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_models_rejected() {
        assert!(fit_normalization(&[]).is_err());
        assert!(fit_normalization(&[Vector3::new(1.0, 1.0, 1.0); 3]).is_err());
    }

    #[test]
    fn single_point_scene_goes_to_origin() {
        let (cloud, t) = normalize_scene(&[Vector3::new(10.0, 10.0, 10.0)], &NormalizationTransform::identity());
        assert_eq!(cloud, vec![Vector3::zeros()]);
        assert_eq!(t.scene_offset, Vector3::new(10.0, 10.0, 10.0));
    }

    #[test]
    fn normalized_scene_is_centred_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let cloud: PointCloud = (0..200)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-300.0..500.0),
                        rng.random_range(0.0..400.0),
                        rng.random_range(900.0..1200.0),
                    )
                })
                .collect();
            let scale = rng.random_range(0.05..4.0);
            let (norm, t) = normalize_scene(&cloud, &NormalizationTransform::new(scale, Vector3::zeros()).unwrap());
            assert!(centroid(&norm).norm() < 1e-9);
            for (p, q) in cloud.iter().zip(&norm) {
                assert!((t.inverse_point(q) - p).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn denormalize_arithmetic() {
        let p = Pose::new(Quaternion::IDENTITY, Vector3::new(2.0, 2.0, 2.0));
        let t = NormalizationTransform::new(0.5, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(denormalize_pose(&p, &t).translation, Vector3::new(5.0, 6.0, 7.0));
        assert_eq!(denormalize_pose(&p, &NormalizationTransform::identity()), p);
    }

    #[test]
    fn pose_round_trip_through_normalized_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let pose = Pose::new(
                Quaternion::random(&mut rng),
                Vector3::new(
                    rng.random_range(-200.0..200.0),
                    rng.random_range(-200.0..200.0),
                    rng.random_range(0.0..300.0),
                ),
            );
            let t = NormalizationTransform::new(
                rng.random_range(0.05..3.0),
                Vector3::new(rng.random_range(-50.0..50.0), 3.0, rng.random_range(50.0..150.0)),
            )
            .unwrap();
            let back = denormalize_pose(&t.normalize_pose(&pose), &t);
            assert_eq!(back.rotation, pose.rotation);
            assert!((back.translation - pose.translation).norm() < 1e-9);
        }
    }
}
