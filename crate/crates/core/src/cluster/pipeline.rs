//! Two-stage clustering of per-point predictions into posed instances.
//!
//! Stage 1 runs mean shift on `(centroid, lambda * quaternion)` so that
//! crossing instances and symmetric-equivalent rotation modes end up in
//! separate clusters. Stage 2 runs mean shift on the stage-1 cluster
//! centroids alone, merging the rotation modes of one physical instance.
//! Each final instance then votes for one of its stage-1 representative
//! rotations.

use log::warn;
use nalgebra::{Matrix4, Vector3};

use super::mean_shift::{
    mean_shift_weighted, mean_shift_with, Euclidean, FeatureMetric, MeanShiftParams, SignFreeTail,
};
use crate::cloud::PointCloud;
use crate::error::{invalid, Result};
use crate::so3::{symmetric_rotation_distance, Pose, Quaternion, Symmetry};
use crate::sum::OrderedSum;

/// Model points used when scoring rotation candidates during voting.
pub const VOTE_MODEL_POINTS: usize = 64;

/// Per-point network output (or its oracle stand-in).
#[derive(Debug, Clone, PartialEq)]
pub struct PerPointPrediction {
    positions: Vec<Vector3<f64>>,
    centroids: Vec<Vector3<f64>>,
    quaternions: Vec<Quaternion>,
}

impl PerPointPrediction {
    pub fn new(
        positions: Vec<Vector3<f64>>,
        centroids: Vec<Vector3<f64>>,
        quaternions: Vec<Quaternion>,
    ) -> Result<Self> {
        if positions.len() != centroids.len() || positions.len() != quaternions.len() {
            return Err(invalid(format!(
                "prediction arrays differ in length ({}, {}, {})",
                positions.len(),
                centroids.len(),
                quaternions.len()
            )));
        }
        let quaternions = quaternions.into_iter().map(Quaternion::canonical).collect();
        Ok(PerPointPrediction { positions, centroids, quaternions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn centroids(&self) -> &[Vector3<f64>] {
        &self.centroids
    }

    pub fn quaternions(&self) -> &[Quaternion] {
        &self.quaternions
    }

    /// Applies `f` to positions and centroids (rotations are unchanged).
    pub fn map_points(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        PerPointPrediction {
            positions: self.positions.iter().map(&f).collect(),
            centroids: self.centroids.iter().map(&f).collect(),
            quaternions: self.quaternions.clone(),
        }
    }

    /// Reorders points: entry `k` of the result is entry `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        PerPointPrediction {
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            centroids: order.iter().map(|&i| self.centroids[i]).collect(),
            quaternions: order.iter().map(|&i| self.quaternions[i]).collect(),
        }
    }
}

/// Clustering parameters, in normalized millimetres.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub bandwidth_1: f64,
    pub bandwidth_2: f64,
    pub min_points_1: usize,
    pub min_points_2: usize,
    /// Millimetres per unit of quaternion distance in the stage-1 features.
    pub quat_scale: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            bandwidth_1: 5.0,
            bandwidth_2: 0.5,
            min_points_1: 20,
            min_points_2: 50,
            quat_scale: 20.0,
            max_iters: 300,
            convergence_tol: 1e-3,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_1 > 0.0 && self.bandwidth_2 > 0.0) {
            return Err(invalid("bandwidths must be positive"));
        }
        if !(self.bandwidth_2 < self.bandwidth_1) {
            return Err(invalid("bandwidth_2 must be smaller than bandwidth_1"));
        }
        if self.min_points_2 < self.min_points_1 {
            return Err(invalid("min_points_2 must be at least min_points_1"));
        }
        if self.quat_scale < 0.0 || !self.quat_scale.is_finite() {
            return Err(invalid("quat_scale must be non-negative"));
        }
        MeanShiftParams::new(self.bandwidth_1, 0.0, self.max_iters, self.convergence_tol)?;
        Ok(())
    }

    fn stage1(&self) -> Result<MeanShiftParams> {
        MeanShiftParams::new(self.bandwidth_1, self.min_points_1 as f64, self.max_iters, self.convergence_tol)
    }

    fn stage2(&self) -> Result<MeanShiftParams> {
        MeanShiftParams::new(self.bandwidth_2, self.min_points_2 as f64, self.max_iters, self.convergence_tol)
    }

    /// Same parameters expressed in a space scaled by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        ClusterParams {
            bandwidth_1: self.bandwidth_1 * k,
            bandwidth_2: self.bandwidth_2 * k,
            quat_scale: self.quat_scale * k,
            convergence_tol: self.convergence_tol * k,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterMode {
    #[default]
    TwoStage,
    /// Centroid-only clustering with averaged rotations (ablation).
    SingleStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Cluster {
    pub members: Vec<usize>,
    /// Mean predicted centroid of the features inside the kernel window.
    pub centroid: Vector3<f64>,
    /// Normalized mean quaternion of the same features.
    pub quaternion: Quaternion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub pose: Pose,
    /// Point indices, ascending.
    pub members: Vec<usize>,
    /// Indices into [`ClusterResult::stage1`] merged into this instance.
    pub stage1: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub stage1: Vec<Stage1Cluster>,
    pub instances: Vec<Instance>,
    pub point_count: usize,
    /// Set when no instance survived.
    pub warning: Option<String>,
}

impl ClusterResult {
    /// Instance id per point, `-1` for unassigned points.
    pub fn labels(&self) -> Vec<i64> {
        let mut labels = vec![-1; self.point_count];
        for (k, inst) in self.instances.iter().enumerate() {
            for &m in &inst.members {
                labels[m] = k as i64;
            }
        }
        labels
    }

    fn finish(mut self) -> Self {
        if self.instances.is_empty() {
            let msg = "no clusters survived".to_string();
            warn!("{msg}");
            self.warning = Some(msg);
        }
        self
    }
}

/// Concatenates each predicted centroid with `lambda` times its quaternion.
pub fn stage1_features(pred: &PerPointPrediction, lambda: f64) -> Vec<[f64; 7]> {
    pred.centroids
        .iter()
        .zip(&pred.quaternions)
        .map(|(c, q)| {
            let q = q.canonical().to_array();
            [c.x, c.y, c.z, lambda * q[0], lambda * q[1], lambda * q[2], lambda * q[3]]
        })
        .collect()
}

/// Principal eigenvector of the summed outer products `q q^T`; blind to the
/// sign of each quaternion.
fn principal_quaternion(quats: &[Quaternion]) -> Quaternion {
    let mut acc = [[OrderedSum::new(); 4]; 4];
    for q in quats {
        let a = q.to_array();
        for r in 0..4 {
            for c in 0..4 {
                acc[r][c].add(a[r] * a[c]);
            }
        }
    }
    let m = Matrix4::from_fn(|r, c| acc[r][c].value());
    let eig = m.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    Quaternion::normalized(v[0], v[1], v[2], v[3]).unwrap_or(Quaternion::IDENTITY)
}

/// Mean of quaternions after flipping each onto the hemisphere of their
/// principal direction.
fn mean_quaternion(quats: &[Quaternion]) -> Quaternion {
    if quats.is_empty() {
        return Quaternion::IDENTITY;
    }
    let reference = principal_quaternion(quats);
    let mut acc = [OrderedSum::new(); 4];
    for q in quats {
        let sign = if q.dot(&reference) < 0.0 { -1.0 } else { 1.0 };
        for (a, v) in acc.iter_mut().zip(q.to_array()) {
            a.add(sign * v);
        }
    }
    let [w, x, y, z] = acc.map(|a| a.value());
    Quaternion::normalized(w, x, y, z).unwrap_or(reference)
}

fn mean_vector<'a>(vs: impl Iterator<Item = &'a Vector3<f64>>) -> Vector3<f64> {
    let mut acc = [OrderedSum::new(); 3];
    let mut n = 0usize;
    for v in vs {
        for (a, c) in acc.iter_mut().zip(v.iter()) {
            a.add(*c);
        }
        n += 1;
    }
    Vector3::from_fn(|i, _| acc[i].value() / n.max(1) as f64)
}

/// Statistics of the features of `members` that lie inside the kernel window
/// around `mode`; falls back to all members when the window is empty.
fn window_stats<const D: usize, M: FeatureMetric<D>>(
    pred: &PerPointPrediction,
    features: &[[f64; D]],
    metric: &M,
    members: &[usize],
    mode: &[f64; D],
    bandwidth: f64,
) -> (Vector3<f64>, Quaternion) {
    let h2 = bandwidth * bandwidth;
    let mut inside: Vec<usize> = members.iter().copied().filter(|&i| metric.dist2(&features[i], mode) <= h2).collect();
    if inside.is_empty() {
        inside = members.to_vec();
    }
    let quats: Vec<Quaternion> = inside.iter().map(|&i| pred.quaternions[i]).collect();
    (mean_vector(inside.iter().map(|&i| &pred.centroids[i])), mean_quaternion(&quats))
}

/// Deterministic stride subsample of the masked model used for voting.
pub fn voting_model(model: &[Vector3<f64>], symmetry: &Symmetry) -> PointCloud {
    let step = model.len().div_ceil(VOTE_MODEL_POINTS).max(1);
    model.iter().step_by(step).map(|m| symmetry.mask.apply(m)).collect()
}

/// Selects the candidate rotation with the smallest summed symmetry-aware
/// distance to all member rotations (a medoid, never an average). Ties go to
/// the lowest candidate index.
pub fn pose_vote(
    candidates: &[Quaternion],
    member_rotations: &[Quaternion],
    symmetry: &Symmetry,
    masked_model: &[Vector3<f64>],
) -> Result<Quaternion> {
    if candidates.is_empty() {
        return Err(invalid("pose vote needs at least one candidate"));
    }
    let mut best = (f64::INFINITY, 0);
    for (k, c) in candidates.iter().enumerate() {
        let cost: OrderedSum =
            member_rotations.iter().map(|q| symmetric_rotation_distance(masked_model, c, q, &symmetry.group)).collect();
        if cost.value() < best.0 {
            best = (cost.value(), k);
        }
    }
    Ok(candidates[best.1])
}

/// Runs stage 1, stage 2 and pose voting.
pub fn two_stage_pipeline(
    pred: &PerPointPrediction,
    params: &ClusterParams,
    symmetry: &Symmetry,
    model: &[Vector3<f64>],
) -> Result<ClusterResult> {
    params.validate()?;
    let features = stage1_features(pred, params.quat_scale);
    let metric = SignFreeTail { start: 3 };
    let s1 = mean_shift_with(&features, &vec![1.0; features.len()], &params.stage1()?, &metric)?;
    let stage1: Vec<Stage1Cluster> = s1
        .clusters
        .iter()
        .map(|c| {
            let (centroid, quaternion) =
                window_stats(pred, &features, &metric, &c.members, &c.mode, params.bandwidth_1);
            Stage1Cluster { members: c.members.clone(), centroid, quaternion }
        })
        .collect();

    let centres: Vec<[f64; 3]> = stage1.iter().map(|c| [c.centroid.x, c.centroid.y, c.centroid.z]).collect();
    let counts: Vec<f64> = stage1.iter().map(|c| c.members.len() as f64).collect();
    let s2 = mean_shift_weighted(&centres, &counts, &params.stage2()?)?;

    let vote_model = voting_model(model, symmetry);
    let mut instances = Vec::with_capacity(s2.clusters.len());
    for c in &s2.clusters {
        let merged = &c.members;
        let total: f64 = merged.iter().map(|&k| counts[k]).sum();
        let translation = {
            let mut acc = [OrderedSum::new(); 3];
            for &k in merged {
                for (a, v) in acc.iter_mut().zip(stage1[k].centroid.iter()) {
                    a.add(v * counts[k]);
                }
            }
            Vector3::from_fn(|i, _| acc[i].value() / total)
        };
        let mut members: Vec<usize> = merged.iter().flat_map(|&k| stage1[k].members.iter().copied()).collect();
        members.sort_unstable();
        let candidates: Vec<Quaternion> = merged.iter().map(|&k| stage1[k].quaternion).collect();
        let member_rotations: Vec<Quaternion> = members.iter().map(|&i| pred.quaternions[i]).collect();
        let rotation = pose_vote(&candidates, &member_rotations, symmetry, &vote_model)?;
        instances.push(Instance { pose: Pose::new(rotation, translation), members, stage1: merged.clone() });
    }
    Ok(ClusterResult { stage1, instances, point_count: pred.len(), warning: None }.finish())
}

/// Ablation path: centroid-only mean shift with the quaternions of each
/// cluster averaged.
pub fn single_stage_pipeline(pred: &PerPointPrediction, params: &ClusterParams) -> Result<ClusterResult> {
    params.validate()?;
    let features: Vec<[f64; 3]> = pred.centroids.iter().map(|c| [c.x, c.y, c.z]).collect();
    let s1 = mean_shift_weighted(&features, &vec![1.0; features.len()], &params.stage1()?)?;
    let mut stage1 = Vec::new();
    let mut instances = Vec::new();
    for (k, c) in s1.clusters.iter().enumerate() {
        let (centroid, quaternion) = window_stats(pred, &features, &Euclidean, &c.members, &c.mode, params.bandwidth_1);
        stage1.push(Stage1Cluster { members: c.members.clone(), centroid, quaternion });
        instances.push(Instance { pose: Pose::new(quaternion, centroid), members: c.members.clone(), stage1: vec![k] });
    }
    Ok(ClusterResult { stage1, instances, point_count: pred.len(), warning: None }.finish())
}

/// Configured clustering pipeline; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct ClusterPipeline {
    pub params: ClusterParams,
    pub mode: ClusterMode,
}

impl ClusterPipeline {
    pub fn new(params: ClusterParams, mode: ClusterMode) -> Result<Self> {
        params.validate()?;
        Ok(ClusterPipeline { params, mode })
    }

    pub fn run(&self, pred: &PerPointPrediction, symmetry: &Symmetry, model: &[Vector3<f64>]) -> Result<ClusterResult> {
        match self.mode {
            ClusterMode::TwoStage => two_stage_pipeline(pred, &self.params, symmetry, model),
            ClusterMode::SingleStage => single_stage_pipeline(pred, &self.params),
        }
    }
}
