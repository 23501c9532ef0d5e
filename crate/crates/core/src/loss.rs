//! Training losses for per-point pose regression and their gradients.
//!
//! The rotation loss compares the model placed by the ground-truth rotation
//! (composed with the best symmetry element) against the model placed by each
//! point's predicted rotation. The translation loss weights each point's
//! centroid error by how far the point lies from its instance centroid.
//!
//! Set-valued norms are taken as the mean over points of per-point Euclidean
//! norms; per-point values are averaged within an instance, then over
//! instances.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::so3::{Quaternion, Symmetry, SymmetryDescriptor};
use crate::sum::OrderedSum;

/// Weights of the combined loss `w_r * L_r + w_t * L_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_r: f64,
    pub w_t: f64,
}

impl LossWeights {
    pub fn new(w_r: f64, w_t: f64) -> Result<Self> {
        if !(w_r >= 0.0 && w_t >= 0.0) || (w_r == 0.0 && w_t == 0.0) {
            return Err(invalid(format!("loss weights must be non-negative and not both zero, got ({w_r}, {w_t})")));
        }
        Ok(LossWeights { w_r, w_t })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_r: 1.0, w_t: 1.0 }
    }
}

/// Per-point weights in `[0.5, 1.5]`, increasing with distance to the centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterWeights(pub Vec<f64>);

/// Below this spread (mm) every weight is 1.
const DEGENERATE_SPREAD: f64 = 1e-9;

/// Linear min-max map of point-to-centroid distances onto `[0.5, 1.5]`.
pub fn center_weights(instance_points: &[Vector3<f64>], centroid: &Vector3<f64>) -> CenterWeights {
    let d: Vec<f64> = instance_points.iter().map(|p| (p - centroid).norm()).collect();
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if d.is_empty() || hi - lo < DEGENERATE_SPREAD {
        return CenterWeights(vec![1.0; d.len()]);
    }
    CenterWeights(d.iter().map(|v| 0.5 + (v - lo) / (hi - lo)).collect())
}

/// Ground truth of one instance.
#[derive(Debug, Clone)]
pub struct InstanceTarget {
    pub rotation: Quaternion,
    pub centroid: Vector3<f64>,
    /// Model points in the object frame.
    pub model: PointCloud,
    pub symmetry: Symmetry,
}

/// One scene point with its network-style prediction.
#[derive(Debug, Clone, Copy)]
pub struct PointTarget {
    pub instance: usize,
    pub position: Vector3<f64>,
    pub predicted_centroid: Vector3<f64>,
    /// Raw predicted quaternion `(w, x, y, z)`; normalized inside the loss.
    pub predicted_quaternion: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct InstanceTargets {
    pub instances: Vec<InstanceTarget>,
    pub points: Vec<PointTarget>,
}

impl InstanceTargets {
    /// Point indices of each instance, in input order.
    fn grouped(&self) -> Result<Vec<Vec<usize>>> {
        if self.instances.is_empty() {
            return Err(invalid("loss needs at least one instance"));
        }
        let mut groups = vec![Vec::new(); self.instances.len()];
        for (j, p) in self.points.iter().enumerate() {
            groups
                .get_mut(p.instance)
                .ok_or_else(|| invalid(format!("point {j} references unknown instance {}", p.instance)))?
                .push(j);
        }
        if let Some(i) = groups.iter().position(|g| g.is_empty()) {
            return Err(invalid(format!("instance {i} has no points")));
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.model.is_empty() {
                return Err(invalid(format!("instance {i} has an empty model")));
            }
        }
        Ok(groups)
    }
}

/// Gradient of a loss with respect to every point's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub centroid: Vec<Vector3<f64>>,
    pub quaternion: Vec<[f64; 4]>,
}

impl LossGradient {
    fn zeros(n: usize) -> Self {
        LossGradient { centroid: vec![Vector3::zeros(); n], quaternion: vec![[0.0; 4]; n] }
    }

    /// Flattened as `[c_x, c_y, c_z, q_w, q_x, q_y, q_z]` per point.
    pub fn flatten(&self) -> Vec<f64> {
        self.centroid.iter().zip(&self.quaternion).flat_map(|(c, q)| [c.x, c.y, c.z, q[0], q[1], q[2], q[3]]).collect()
    }

    fn scaled_add(&mut self, other: &LossGradient, k: f64) {
        for (a, b) in self.centroid.iter_mut().zip(&other.centroid) {
            *a += b * k;
        }
        for (a, b) in self.quaternion.iter_mut().zip(&other.quaternion) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y * k;
            }
        }
    }
}

fn unit(q: &[f64; 4]) -> Result<([f64; 4], f64)> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(invalid("predicted quaternion has zero norm"));
    }
    Ok((q.map(|v| v / n), n))
}

fn rotation_of(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Partial derivatives of the rotation matrix with respect to `(w, x, y, z)`.
fn rotation_partials(q: &[f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = *q;
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

struct RotationInstance {
    /// Instance value for each symmetry element.
    per_symmetry: Vec<f64>,
    best: usize,
    pred_rot: Vec<Matrix3<f64>>,
    masked: Vec<Vector3<f64>>,
}

fn evaluate_rotation_instance(inst: &InstanceTarget, points: &[&PointTarget]) -> Result<RotationInstance> {
    let masked: Vec<Vector3<f64>> = inst.model.iter().map(|m| inst.symmetry.mask.apply(m)).collect();
    let r_gt = inst.rotation.to_matrix();
    let mut pred_rot = Vec::with_capacity(points.len());
    for p in points {
        let (q, _) = unit(&p.predicted_quaternion)?;
        pred_rot.push(rotation_of(&q));
    }
    let m = masked.len() as f64;
    let mut per_symmetry = Vec::with_capacity(inst.symmetry.group.len());
    for s in inst.symmetry.group.matrices() {
        let a = r_gt.matrix() * s.matrix();
        let total: OrderedSum = pred_rot
            .iter()
            .map(|r| {
                let d = a - r;
                masked.iter().map(|u| (d * u).norm()).collect::<OrderedSum>().value() / m
            })
            .collect();
        per_symmetry.push(total.value() / points.len() as f64);
    }
    let mut best = 0;
    for (k, v) in per_symmetry.iter().enumerate() {
        if *v < per_symmetry[best] {
            best = k;
        }
    }
    Ok(RotationInstance { per_symmetry, best, pred_rot, masked })
}

/// Rotation loss with its gradient with respect to the raw quaternions.
pub fn rotation_loss_with_grad(targets: &InstanceTargets) -> Result<(f64, LossGradient)> {
    let groups = targets.grouped()?;
    let n = targets.instances.len() as f64;
    let mut grad = LossGradient::zeros(targets.points.len());
    let mut total = OrderedSum::new();
    for (inst, idx) in targets.instances.iter().zip(&groups) {
        let pts: Vec<&PointTarget> = idx.iter().map(|&j| &targets.points[j]).collect();
        let eval = evaluate_rotation_instance(inst, &pts)?;
        let masked = &eval.masked;
        total.add(eval.per_symmetry[eval.best]);

        let s = inst.symmetry.group.matrices()[eval.best];
        let a = inst.rotation.to_matrix().matrix() * s.matrix();
        let k = 1.0 / (n * idx.len() as f64 * masked.len() as f64);
        for ((&j, r), p) in idx.iter().zip(&eval.pred_rot).zip(&pts) {
            // d|e_m|/dR = -(e_m / |e_m|) u_m^T with e_m = (A - R) u_m
            let d = a - r;
            let mut g = Matrix3::zeros();
            for u in masked {
                let e = d * u;
                let len = e.norm();
                if len > 0.0 {
                    g += (e / len) * u.transpose();
                }
            }
            let (q_hat, q_norm) = unit(&p.predicted_quaternion)?;
            let partials = rotation_partials(&q_hat);
            let d_hat: [f64; 4] = partials.map(|dr| -k * g.component_mul(&dr).sum());
            // chain through q / |q|: (I - q_hat q_hat^T) / |q|
            let proj: f64 = d_hat.iter().zip(&q_hat).map(|(a, b)| a * b).sum();
            for c in 0..4 {
                grad.quaternion[j][c] = (d_hat[c] - proj * q_hat[c]) / q_norm;
            }
        }
    }
    Ok((total.value() / n, grad))
}

/// Symmetry-aware rotation loss (mm).
pub fn rotation_loss(targets: &InstanceTargets) -> Result<f64> {
    let groups = targets.grouped()?;
    let n = targets.instances.len() as f64;
    let mut total = OrderedSum::new();
    for (inst, idx) in targets.instances.iter().zip(&groups) {
        let pts: Vec<&PointTarget> = idx.iter().map(|&j| &targets.points[j]).collect();
        let eval = evaluate_rotation_instance(inst, &pts)?;
        total.add(eval.per_symmetry[eval.best]);
    }
    Ok(total.value() / n)
}

/// Smallest gap, over instances, between the best and second-best symmetry
/// element of the rotation loss. Infinite when every group is trivial.
pub fn symmetry_tie_gap(targets: &InstanceTargets) -> Result<f64> {
    let groups = targets.grouped()?;
    let mut gap = f64::INFINITY;
    for (inst, idx) in targets.instances.iter().zip(&groups) {
        let pts: Vec<&PointTarget> = idx.iter().map(|&j| &targets.points[j]).collect();
        let eval = evaluate_rotation_instance(inst, &pts)?;
        let best = eval.per_symmetry[eval.best];
        for (k, v) in eval.per_symmetry.iter().enumerate() {
            if k != eval.best {
                gap = gap.min(v - best);
            }
        }
    }
    Ok(gap)
}

/// Centre-distance-weighted translation loss with its gradient with respect
/// to the predicted centroids.
pub fn translation_loss_with_grad(targets: &InstanceTargets) -> Result<(f64, LossGradient)> {
    let groups = targets.grouped()?;
    let n = targets.instances.len() as f64;
    let mut grad = LossGradient::zeros(targets.points.len());
    let mut total = OrderedSum::new();
    for (inst, idx) in targets.instances.iter().zip(&groups) {
        let positions: Vec<Vector3<f64>> = idx.iter().map(|&j| targets.points[j].position).collect();
        let weights = center_weights(&positions, &inst.centroid);
        let m = idx.len() as f64;
        let mut sum = OrderedSum::new();
        for (&j, c) in idx.iter().zip(&weights.0) {
            let e = inst.centroid - targets.points[j].predicted_centroid;
            let len = e.norm();
            sum.add(len * c);
            if len > 0.0 {
                grad.centroid[j] = -e / len * (c / (n * m));
            }
        }
        total.add(sum.value() / m);
    }
    Ok((total.value() / n, grad))
}

pub fn translation_loss(targets: &InstanceTargets) -> Result<f64> {
    translation_loss_with_grad(targets).map(|(v, _)| v)
}

/// `w_r * L_r + w_t * L_t`.
pub fn total_loss(targets: &InstanceTargets, weights: &LossWeights) -> Result<f64> {
    Ok(weights.w_r * rotation_loss(targets)? + weights.w_t * translation_loss(targets)?)
}

/// Which loss a gradient check exercises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Rotation,
    Translation,
    Total(LossWeights),
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Rotation => "rotation",
            LossKind::Translation => "translation",
            LossKind::Total(_) => "total",
        }
    }

    pub fn evaluate(&self, targets: &InstanceTargets) -> Result<f64> {
        match self {
            LossKind::Rotation => rotation_loss(targets),
            LossKind::Translation => translation_loss(targets),
            LossKind::Total(w) => total_loss(targets, w),
        }
    }

    pub fn evaluate_with_grad(&self, targets: &InstanceTargets) -> Result<(f64, LossGradient)> {
        match self {
            LossKind::Rotation => rotation_loss_with_grad(targets),
            LossKind::Translation => translation_loss_with_grad(targets),
            LossKind::Total(w) => {
                let (lr, gr) = rotation_loss_with_grad(targets)?;
                let (lt, gt) = translation_loss_with_grad(targets)?;
                let mut g = LossGradient::zeros(targets.points.len());
                g.scaled_add(&gr, w.w_r);
                g.scaled_add(&gt, w.w_t);
                Ok((w.w_r * lr + w.w_t * lt, g))
            }
        }
    }
}

/// Two best symmetry elements closer than this count as a tie.
pub const TIE_GAP: f64 = 1e-6;

/// Components whose gradients are both smaller than this are compared in
/// absolute rather than relative terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Central finite-difference gradient with step `epsilon`.
pub fn numeric_gradient(kind: LossKind, targets: &InstanceTargets, epsilon: f64) -> Result<LossGradient> {
    let mut work = targets.clone();
    let mut grad = LossGradient::zeros(targets.points.len());
    for j in 0..targets.points.len() {
        for c in 0..7 {
            let original = read_param(&work.points[j], c);
            write_param(&mut work.points[j], c, original + epsilon);
            let plus = kind.evaluate(&work)?;
            write_param(&mut work.points[j], c, original - epsilon);
            let minus = kind.evaluate(&work)?;
            write_param(&mut work.points[j], c, original);
            let d = (plus - minus) / (2.0 * epsilon);
            if c < 3 {
                grad.centroid[j][c] = d;
            } else {
                grad.quaternion[j][c - 3] = d;
            }
        }
    }
    Ok(grad)
}

fn read_param(p: &PointTarget, c: usize) -> f64 {
    if c < 3 {
        p.predicted_centroid[c]
    } else {
        p.predicted_quaternion[c - 3]
    }
}

fn write_param(p: &mut PointTarget, c: usize, v: f64) {
    if c < 3 {
        p.predicted_centroid[c] = v;
    } else {
        p.predicted_quaternion[c - 3] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckResult {
    pub loss: f64,
    pub max_rel_err: f64,
    pub parameters: usize,
}

/// Compares the analytic gradient against central finite differences.
///
/// Returns [`Error::TieAtMinimum`] when the evaluation point sits on a tie of
/// the minimum over a symmetry group; the caller should resample.
pub fn gradcheck(kind: LossKind, targets: &InstanceTargets, epsilon: f64) -> Result<GradcheckResult> {
    if !matches!(kind, LossKind::Translation) {
        let gap = symmetry_tie_gap(targets)?;
        if gap < TIE_GAP {
            return Err(Error::TieAtMinimum { gap });
        }
    }
    let (loss, analytic) = kind.evaluate_with_grad(targets)?;
    let numeric = numeric_gradient(kind, targets, epsilon)?;
    let a = analytic.flatten();
    let n = numeric.flatten();
    let max_rel_err = a
        .iter()
        .zip(&n)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max);
    Ok(GradcheckResult { loss, max_rel_err, parameters: a.len() })
}

/// Random small configuration for gradient checking: 1-3 instances with
/// mixed symmetries, a few points each, predictions scattered around the
/// ground truth.
pub fn sample_gradcheck_targets<R: Rng + ?Sized>(rng: &mut R) -> InstanceTargets {
    const DESCRIPTORS: [[f64; 3]; 5] =
        [[0.0, 0.0, 0.0], [0.0, 0.0, 180.0], [0.0, 0.0, 90.0], [180.0, 0.0, 120.0], [0.0, 0.0, 5.0]];
    let noise = Normal::new(0.0, 3.0).expect("valid sigma");
    let n_instances = rng.random_range(1..=3);
    let mut instances = Vec::new();
    let mut points = Vec::new();
    for i in 0..n_instances {
        let d = DESCRIPTORS[rng.random_range(0..DESCRIPTORS.len())];
        let desc = SymmetryDescriptor::new(d[0], d[1], d[2], 15.0).expect("valid descriptor");
        let symmetry = Symmetry::from_descriptor(desc).expect("valid symmetry");
        let model: PointCloud = (0..rng.random_range(6..16))
            .map(|_| {
                Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-10.0..10.0), rng.random_range(-8.0..8.0))
            })
            .collect();
        let rotation = Quaternion::random(rng);
        let centroid = Vector3::new(
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
            rng.random_range(0.0..100.0),
        );
        for _ in 0..rng.random_range(3..8) {
            let m = model[rng.random_range(0..model.len())];
            let position = rotation.to_matrix().matrix() * m + centroid;
            let predicted_centroid = centroid + Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            let axis = Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            let jitter = Quaternion::from_axis_angle(&axis, rng.random_range(0.1..1.0));
            let q = rotation.mul(&jitter).to_array();
            let scale = rng.random_range(0.8..1.25);
            points.push(PointTarget {
                instance: i,
                position,
                predicted_centroid,
                predicted_quaternion: q.map(|v| v * scale),
            });
        }
        instances.push(InstanceTarget { rotation, centroid, model, symmetry });
    }
    InstanceTargets { instances, points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube_model() -> PointCloud {
        let mut pts = Vec::new();
        for x in [-0.5, 0.5] {
            for y in [-0.5, 0.5] {
                for z in [-0.5, 0.5] {
                    pts.push(Vector3::new(x, y, z));
                }
            }
        }
        pts
    }

    fn single(model: PointCloud, symmetry: Symmetry, gt: Quaternion, pred: Quaternion) -> InstanceTargets {
        InstanceTargets {
            instances: vec![InstanceTarget { rotation: gt, centroid: Vector3::zeros(), model, symmetry }],
            points: vec![PointTarget {
                instance: 0,
                position: Vector3::new(1.0, 0.0, 0.0),
                predicted_centroid: Vector3::zeros(),
                predicted_quaternion: pred.to_array(),
            }],
        }
    }

    #[test]
    fn center_weight_endpoints() {
        let w = center_weights(&[Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 3.0, 0.0)], &Vector3::zeros());
        assert_eq!(w.0, vec![0.5, 1.5]);
    }

    #[test]
    fn center_weights_equidistant() {
        let pts = [Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.0, -2.0, 0.0), Vector3::new(0.0, 0.0, 2.0)];
        assert_eq!(center_weights(&pts, &Vector3::zeros()).0, vec![1.0; 3]);
    }

    #[test]
    fn center_weights_monotone_along_rod() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vector3<f64>> = (0..200)
            .map(|_| {
                Vector3::new(rng.random_range(-200.0..200.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))
            })
            .collect();
        let w = center_weights(&pts, &Vector3::zeros());
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &b| pts[a].norm().total_cmp(&pts[b].norm()));
        for pair in order.windows(2) {
            assert!(w.0[pair[0]] < w.0[pair[1]]);
        }
        assert_eq!(w.0[order[0]], 0.5);
        assert_eq!(w.0[*order.last().unwrap()], 1.5);
    }

    #[test]
    fn rotation_loss_zero_at_truth_and_symmetric_equivalent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sym = Symmetry::from_descriptor(SymmetryDescriptor::new(0.0, 0.0, 180.0, 15.0).unwrap()).unwrap();
        let gt = Quaternion::random(&mut rng);
        let t = single(cube_model(), sym.clone(), gt, gt);
        assert_eq!(rotation_loss(&t).unwrap(), 0.0);
        let flipped = gt.mul(&sym.group.matrices()[1].to_quat());
        let t = single(cube_model(), sym, gt, flipped);
        assert!(rotation_loss(&t).unwrap() < 1e-12);
    }

    #[test]
    fn rotation_loss_matches_naive_formula() {
        let gt = Quaternion::IDENTITY;
        let pred = Quaternion::from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2);
        let t = single(cube_model(), Symmetry::none(), gt, pred);
        // naive: corners rotated by 90 deg about z move by |(x,y) - (-y,x)| = sqrt(2) * |(x,y)|
        let mut total = 0.0;
        for m in cube_model() {
            let rotated = Vector3::new(-m.y, m.x, m.z);
            total += (m - rotated).norm();
        }
        let naive = total / 8.0;
        assert!((naive - 1.0).abs() < 1e-12);
        assert!((rotation_loss(&t).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn translation_loss_examples() {
        let sym = Symmetry::none();
        let mut t = single(cube_model(), sym, Quaternion::IDENTITY, Quaternion::IDENTITY);
        assert_eq!(translation_loss(&t).unwrap(), 0.0);
        // equidistant points, uniform 1 mm error
        t.points = [Vector3::x(), Vector3::y(), -Vector3::x()]
            .iter()
            .map(|p| PointTarget {
                instance: 0,
                position: *p,
                predicted_centroid: Vector3::new(0.0, 0.0, 1.0),
                predicted_quaternion: [1.0, 0.0, 0.0, 0.0],
            })
            .collect();
        assert_eq!(translation_loss(&t).unwrap(), 1.0);
    }

    #[test]
    fn rod_tip_counts_three_times_the_centre() {
        let positions = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(200.0, 0.0, 0.0)];
        let mut t = single(cube_model(), Symmetry::none(), Quaternion::IDENTITY, Quaternion::IDENTITY);
        t.points = positions
            .iter()
            .map(|p| PointTarget {
                instance: 0,
                position: *p,
                predicted_centroid: Vector3::new(0.0, 2.0, 0.0),
                predicted_quaternion: [1.0, 0.0, 0.0, 0.0],
            })
            .collect();
        let (_, g) = translation_loss_with_grad(&t).unwrap();
        let w = center_weights(&positions, &Vector3::zeros());
        assert_eq!(w.0, vec![0.5, 1.5]);
        assert!((g.centroid[1].norm() / g.centroid[0].norm() - 3.0).abs() < 1e-12);
        // (0.5 * 2 + 1.5 * 2) / 2
        assert_eq!(translation_loss(&t).unwrap(), 2.0);
    }

    #[test]
    fn total_loss_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let t = sample_gradcheck_targets(&mut rng);
            let lr = rotation_loss(&t).unwrap();
            let lt = translation_loss(&t).unwrap();
            assert_eq!(total_loss(&t, &LossWeights::default()).unwrap(), lr + lt);
            assert_eq!(total_loss(&t, &LossWeights::new(0.0, 2.5).unwrap()).unwrap(), 2.5 * lt);
            let (a, b) = (rng.random_range(0.0..3.0), rng.random_range(0.1..3.0));
            let w = LossWeights::new(a, b).unwrap();
            assert!((total_loss(&t, &w).unwrap() - (a * lr + b * lt)).abs() < 1e-12 * (1.0 + lr + lt));
        }
    }

    #[test]
    fn invalid_targets() {
        let empty = InstanceTargets { instances: vec![], points: vec![] };
        assert!(rotation_loss(&empty).is_err());
        assert!(translation_loss(&empty).is_err());
        let mut t = single(cube_model(), Symmetry::none(), Quaternion::IDENTITY, Quaternion::IDENTITY);
        t.points[0].instance = 3;
        assert!(rotation_loss(&t).is_err());
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        while checked < 10 {
            let t = sample_gradcheck_targets(&mut rng);
            for kind in
                [LossKind::Rotation, LossKind::Translation, LossKind::Total(LossWeights::new(0.7, 1.3).unwrap())]
            {
                match gradcheck(kind, &t, 1e-5) {
                    Ok(r) => assert!(r.max_rel_err < 1e-4, "{kind:?}: {}", r.max_rel_err),
                    Err(Error::TieAtMinimum { .. }) => continue,
                    Err(e) => panic!("{e}"),
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn numeric_gradient_vanishes_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut t = sample_gradcheck_targets(&mut rng);
        for p in t.points.iter_mut() {
            let inst = &t.instances[p.instance];
            p.predicted_centroid = inst.centroid;
            p.predicted_quaternion = inst.rotation.to_array();
        }
        let norm = |kind, eps| {
            let g = numeric_gradient(kind, &t, eps).unwrap();
            g.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        assert_eq!(norm(LossKind::Translation, 1e-5), 0.0);
        // the rotation residual sits on the kink of |e|, so central differences
        // shrink linearly with the step instead of vanishing
        let coarse = norm(LossKind::Rotation, 1e-5);
        let fine = norm(LossKind::Rotation, 1e-8);
        assert!(fine < 1e-6, "rotation gradient norm {fine}");
        assert!(fine < coarse * 1e-2);
    }

    #[test]
    fn tie_is_reported() {
        // prediction halfway between the two equivalents of a 2-fold object
        let sym = Symmetry::from_descriptor(SymmetryDescriptor::new(0.0, 0.0, 180.0, 15.0).unwrap()).unwrap();
        let pred = Quaternion::from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2);
        let t = single(cube_model(), sym, Quaternion::IDENTITY, pred);
        assert!(matches!(gradcheck(LossKind::Rotation, &t, 1e-5), Err(Error::TieAtMinimum { .. })));
    }
}
