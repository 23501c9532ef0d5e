//! Oracle stand-in for a per-point pose regressor.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::model::ObjectModel;
use super::scene::Scene;
use crate::cloud::bounding_box;
use crate::cluster::PerPointPrediction;
use crate::error::{invalid, Result};
use crate::so3::Quaternion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    /// Per-axis centroid noise, mm.
    pub sigma_t: f64,
    /// Rotation noise angle standard deviation, degrees.
    pub sigma_r_deg: f64,
    /// Emit a uniformly drawn symmetric equivalent per point.
    pub symmetric_ambiguity: bool,
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams { sigma_t: 1.0, sigma_r_deg: 2.0, symmetric_ambiguity: true, outlier_fraction: 0.0, seed: 0 }
    }
}

impl OracleParams {
    pub fn perfect() -> Self {
        OracleParams { sigma_t: 0.0, sigma_r_deg: 0.0, symmetric_ambiguity: false, outlier_fraction: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t >= 0.0 && self.sigma_t.is_finite())
            || !(self.sigma_r_deg >= 0.0 && self.sigma_r_deg.is_finite())
        {
            return Err(invalid("oracle noise must be non-negative"));
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction < 1.0) {
            return Err(invalid("outlier fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

const STREAM_CENTROID: u64 = 1;
const STREAM_ROTATION: u64 = 2;
const STREAM_SYMMETRY: u64 = 3;
const STREAM_OUTLIER: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Emulates per-point network output for every point of `scene`.
///
/// Each point predicts its instance centroid with Gaussian noise and the
/// rotation `R_gt * s * dR`, where `s` is a random symmetric equivalent when
/// ambiguity is enabled (including a free spin about a continuous axis) and
/// `dR` turns about a random axis by a Gaussian angle. Exactly
/// `floor(outlier_fraction * M)` points are then replaced by a random
/// centroid inside the scene bounds and a random rotation.
pub fn oracle_predict(scene: &Scene, model: &ObjectModel, params: &OracleParams) -> Result<PerPointPrediction> {
    params.validate()?;
    let mut rng_t = stream(params.seed, STREAM_CENTROID);
    let mut rng_r = stream(params.seed, STREAM_ROTATION);
    let mut rng_s = stream(params.seed, STREAM_SYMMETRY);
    let mut rng_o = stream(params.seed, STREAM_OUTLIER);
    let noise_t = Normal::new(0.0, params.sigma_t).map_err(|e| invalid(e.to_string()))?;
    let noise_r = Normal::new(0.0, params.sigma_r_deg.to_radians()).map_err(|e| invalid(e.to_string()))?;
    let group: Vec<Quaternion> = model.symmetry.group.matrices().iter().map(|m| m.to_quat()).collect();
    let spin_axis = model.symmetry.continuous_axis().map(|a| a.unit());
    let gt: Vec<Quaternion> = scene.instances.iter().map(|i| i.pose.rotation).collect();

    let mut centroids = Vec::with_capacity(scene.points.len());
    let mut quaternions = Vec::with_capacity(scene.points.len());
    for &label in &scene.labels {
        let inst = &scene.instances[label];
        let offset = Vector3::from_fn(|_, _| noise_t.sample(&mut rng_t));
        centroids.push(inst.pose.translation + offset);

        let mut q = gt[label];
        if params.symmetric_ambiguity {
            let s = group[rng_s.random_range(0..group.len())];
            q = q.mul(&s);
            if let Some(axis) = spin_axis {
                q = q.mul(&Quaternion::from_axis_angle(&axis, rng_s.random_range(0.0..std::f64::consts::TAU)));
            }
        }
        let axis: [f64; 3] = UnitSphere.sample(&mut rng_r);
        let angle = noise_r.sample(&mut rng_r);
        quaternions.push(q.mul(&Quaternion::from_axis_angle(&Vector3::from(axis), angle)));
    }

    let m = scene.points.len();
    let n_out = (params.outlier_fraction * m as f64).floor() as usize;
    if n_out > 0 {
        let (lo, hi) = bounding_box(&scene.points).expect("scene has points");
        let mut picked = rand::seq::index::sample(&mut rng_o, m, n_out).into_vec();
        picked.sort_unstable();
        for k in picked {
            centroids[k] =
                Vector3::from_fn(|a, _| if hi[a] > lo[a] { rng_o.random_range(lo[a]..hi[a]) } else { lo[a] });
            quaternions[k] = Quaternion::random(&mut rng_o);
        }
    }
    PerPointPrediction::new(scene.points.clone(), centroids, quaternions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::symmetric_angle;
    use crate::synth::{apply_occlusion, generate_scene, BuiltinShape, SceneGenParams};

    fn scene(shape: BuiltinShape, seed: u64) -> (Scene, ObjectModel) {
        let model = ObjectModel::builtin(shape);
        let s = generate_scene(&model, &SceneGenParams { seed, ..SceneGenParams::default() }).unwrap();
        (apply_occlusion(&s, 5.0, 3.0).unwrap(), model)
    }

    #[test]
    fn perfect_oracle_is_exact() {
        let (s, model) = scene(BuiltinShape::Bracket, 1);
        let p = oracle_predict(&s, &model, &OracleParams::perfect()).unwrap();
        for (k, &l) in s.labels.iter().enumerate() {
            assert_eq!(p.centroids()[k], s.instances[l].pose.translation);
            assert_eq!(p.quaternions()[k], s.instances[l].pose.rotation.canonical());
        }
    }

    #[test]
    fn deterministic() {
        let (s, model) = scene(BuiltinShape::TwoFold, 2);
        let params = OracleParams { outlier_fraction: 0.1, seed: 9, ..OracleParams::default() };
        assert_eq!(oracle_predict(&s, &model, &params).unwrap(), oracle_predict(&s, &model, &params).unwrap());
    }

    #[test]
    fn ambiguity_yields_two_modes_for_two_fold() {
        let (s, model) = scene(BuiltinShape::TwoFold, 3);
        let params = OracleParams { sigma_t: 0.0, sigma_r_deg: 1.0, ..OracleParams::default() };
        let p = oracle_predict(&s, &model, &params).unwrap();
        let flip = model.symmetry.group.matrices()[1].to_quat();
        for i in 0..s.instances.len() {
            let gt = s.instances[i].pose.rotation;
            let mut modes = [0usize; 2];
            for k in s.instance_points(i) {
                let q = p.quaternions()[k];
                let near_id = gt.angle_to(&q).to_degrees() < 10.0;
                let near_flip = gt.mul(&flip).angle_to(&q).to_degrees() < 10.0;
                assert!(near_id != near_flip);
                modes[near_flip as usize] += 1;
                assert!(symmetric_angle(&gt, &q, &model.symmetry.group).to_degrees() < 10.0);
            }
            let n = s.instances[i].visible_count;
            if n >= 100 {
                assert!(modes[0] > n / 4 && modes[1] > n / 4, "{modes:?}");
            }
        }
    }

    #[test]
    fn centroid_noise_averages_out() {
        let (s, model) = scene(BuiltinShape::Bracket, 4);
        let p = oracle_predict(&s, &model, &OracleParams { sigma_t: 1.0, ..OracleParams::default() }).unwrap();
        for i in 0..s.instances.len() {
            let ids = s.instance_points(i);
            if ids.is_empty() {
                continue;
            }
            let mean = ids.iter().map(|&k| p.centroids()[k]).sum::<Vector3<f64>>() / ids.len() as f64;
            let err = mean - s.instances[i].pose.translation;
            let bound = 3.0 / (ids.len() as f64).sqrt();
            assert!(err.iter().all(|e| e.abs() < bound + 1e-12), "{err:?} vs {bound}");
        }
    }

    #[test]
    fn outlier_count_is_exact() {
        let (s, model) = scene(BuiltinShape::Bracket, 5);
        let params = OracleParams {
            sigma_t: 0.0,
            sigma_r_deg: 0.0,
            symmetric_ambiguity: false,
            outlier_fraction: 0.25,
            seed: 1,
        };
        let p = oracle_predict(&s, &model, &params).unwrap();
        let moved =
            s.labels.iter().enumerate().filter(|(k, &l)| p.centroids()[*k] != s.instances[l].pose.translation).count();
        assert_eq!(moved, (0.25 * s.points.len() as f64).floor() as usize);
    }

    #[test]
    fn spin_about_continuous_axis() {
        let (s, model) = scene(BuiltinShape::Candlestick, 6);
        let params = OracleParams { sigma_t: 0.0, sigma_r_deg: 0.0, ..OracleParams::default() };
        let p = oracle_predict(&s, &model, &params).unwrap();
        for (k, &l) in s.labels.iter().enumerate() {
            let gt = s.instances[l].pose.rotation.to_matrix();
            let q = p.quaternions()[k].to_matrix();
            assert!((gt.matrix().column(2) - q.matrix().column(2)).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(OracleParams { outlier_fraction: 1.0, ..OracleParams::default() }.validate().is_err());
        assert!(OracleParams { sigma_t: -1.0, ..OracleParams::default() }.validate().is_err());
    }
}
