//! Point-to-point ICP refinement of a single instance pose.

use nalgebra::{Matrix3, Vector3};

use crate::cloud::{centroid, NearestIndex};
use crate::error::{invalid, Result};
use crate::so3::{Pose, RotationMatrix};
use crate::sum::OrderedSum;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop once no model point moves by more than this between updates (mm).
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams { max_iters: 50, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcpStatus {
    Converged,
    MaxIterations,
    /// Rank-deficient cross-covariance; the initial pose is returned.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: Pose,
    /// Number of Procrustes solves performed.
    pub iterations: usize,
    /// Mean squared correspondence distance: initial value, then one entry per
    /// accepted update. Never increases.
    pub errors: Vec<f64>,
    pub status: IcpStatus,
}

struct Correspondences {
    model_idx: Vec<usize>,
    mean_sq: f64,
}

fn correspond(scene: &[Vector3<f64>], index: &NearestIndex, pose: &Pose) -> Correspondences {
    let inv = pose.rotation.to_matrix().transpose();
    let mut sum = OrderedSum::new();
    let model_idx = scene
        .iter()
        .map(|p| {
            let local = inv.matrix() * (p - pose.translation);
            let (i, d2) = index.nearest(&local);
            sum.add(d2);
            i
        })
        .collect();
    Correspondences { model_idx, mean_sq: sum.value() / scene.len() as f64 }
}

/// Least-squares rigid transform mapping `src[k]` onto `dst[k]`; `None` when
/// the cross-covariance has rank below two.
pub fn best_fit_transform(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Option<Pose> {
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= sv[0] * 1e-9 {
        return None;
    }
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let det = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det)) * u.transpose();
    let rotation = RotationMatrix::try_from_matrix(r).ok()?.to_quat();
    Some(Pose::new(rotation, cd - rotation.to_matrix().matrix() * cs))
}

/// Largest displacement of any model point between two poses.
fn pose_change(a: &Pose, b: &Pose, radius: f64) -> f64 {
    let angle = a.rotation.angle_to(&b.rotation);
    (a.translation - b.translation).norm() + angle * radius
}

/// Refines `init` so the model fits the instance's scene points.
///
/// Each iteration pairs every scene point with its nearest transformed model
/// point and solves the orthogonal Procrustes problem. An update that would
/// raise the mean squared correspondence distance is rejected and the loop
/// stops.
pub fn icp_refine(
    scene: &[Vector3<f64>],
    model: &[Vector3<f64>],
    init: &Pose,
    params: &IcpParams,
) -> Result<IcpResult> {
    if scene.is_empty() || model.is_empty() {
        return Err(invalid("ICP needs non-empty scene and model clouds"));
    }
    if !(params.tol > 0.0) {
        return Err(invalid("ICP tolerance must be positive"));
    }
    let index = NearestIndex::new(model).expect("model is non-empty");
    let radius = model.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let mut pose = *init;
    let mut corr = correspond(scene, &index, &pose);
    let mut errors = vec![corr.mean_sq];
    let mut status = IcpStatus::MaxIterations;
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        iterations += 1;
        let src: Vec<Vector3<f64>> = corr.model_idx.iter().map(|&i| model[i]).collect();
        let Some(next) = best_fit_transform(&src, scene) else {
            return Ok(IcpResult { pose: *init, iterations: 0, errors: vec![errors[0]], status: IcpStatus::Failed });
        };
        let next_corr = correspond(scene, &index, &next);
        if next_corr.mean_sq > corr.mean_sq {
            status = IcpStatus::Converged;
            break;
        }
        let moved = pose_change(&pose, &next, radius);
        pose = next;
        corr = next_corr;
        errors.push(corr.mean_sq);
        if moved < params.tol {
            status = IcpStatus::Converged;
            break;
        }
    }
    Ok(IcpResult { pose, iterations, errors, status })
}
