//! Flat-kernel mean shift over fixed-dimension feature vectors.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanShiftParams {
    pub bandwidth: f64,
    /// Minimum total weight (point count when unweighted) of a kept cluster.
    pub min_points: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl MeanShiftParams {
    pub fn new(bandwidth: f64, min_points: f64, max_iters: usize, tol: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if !(tol > 0.0) {
            return Err(invalid(format!("convergence tolerance must be positive, got {tol}")));
        }
        if max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(MeanShiftParams { bandwidth, min_points, max_iters, tol })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftCluster<const D: usize> {
    pub mode: [f64; D],
    /// Indices of the features assigned to this cluster, ascending.
    pub members: Vec<usize>,
    /// Total weight of the members.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftResult<const D: usize> {
    pub clusters: Vec<MeanShiftCluster<D>>,
    /// Cluster index per feature; `None` for features of discarded clusters.
    pub labels: Vec<Option<usize>>,
}

impl<const D: usize> MeanShiftResult<D> {
    fn empty() -> Self {
        MeanShiftResult { clusters: Vec::new(), labels: Vec::new() }
    }
}

fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Distance used by the kernel. It must never be smaller than the Euclidean
/// distance over the first three coordinates, which the neighbour grid uses.
pub trait FeatureMetric<const D: usize>: Sync {
    fn dist2(&self, a: &[f64; D], b: &[f64; D]) -> f64;

    /// Representative of `f` to average with features near `reference`.
    fn align(&self, f: &[f64; D], _reference: &[f64; D]) -> [f64; D] {
        *f
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl<const D: usize> FeatureMetric<D> for Euclidean {
    fn dist2(&self, a: &[f64; D], b: &[f64; D]) -> f64 {
        dist2(a, b)
    }
}

/// Euclidean metric in which the coordinates from `start` on form a block
/// identified with its negation, as for quaternions `q` and `-q`.
#[derive(Debug, Clone, Copy)]
pub struct SignFreeTail {
    pub start: usize,
}

impl SignFreeTail {
    fn parts<const D: usize>(&self, a: &[f64; D], b: &[f64; D]) -> (f64, f64, f64) {
        let mut head = 0.0;
        let mut same = 0.0;
        let mut flipped = 0.0;
        for k in 0..D {
            if k < self.start {
                head += (a[k] - b[k]) * (a[k] - b[k]);
            } else {
                same += (a[k] - b[k]) * (a[k] - b[k]);
                flipped += (a[k] + b[k]) * (a[k] + b[k]);
            }
        }
        (head, same, flipped)
    }
}

impl<const D: usize> FeatureMetric<D> for SignFreeTail {
    fn dist2(&self, a: &[f64; D], b: &[f64; D]) -> f64 {
        let (head, same, flipped) = self.parts(a, b);
        head + same.min(flipped)
    }

    fn align(&self, f: &[f64; D], reference: &[f64; D]) -> [f64; D] {
        let (_, same, flipped) = self.parts(f, reference);
        let mut out = *f;
        if flipped < same {
            for v in out.iter_mut().skip(self.start) {
                *v = -*v;
            }
        }
        out
    }
}

/// Uniform grid over the first (up to three) coordinates, cell size equal to
/// the bandwidth. Any feature within the bandwidth of a query lies in one of
/// the neighbouring cells.
struct GridIndex {
    cell: f64,
    dims: usize,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl GridIndex {
    fn new<const D: usize>(features: &[[f64; D]], cell: f64) -> Self {
        let dims = D.min(3);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, f) in features.iter().enumerate() {
            cells.entry(Self::key(f, cell, dims)).or_default().push(i);
        }
        GridIndex { cell, dims, cells }
    }

    fn key<const D: usize>(f: &[f64; D], cell: f64, dims: usize) -> [i64; 3] {
        let mut k = [0i64; 3];
        for (a, slot) in k.iter_mut().enumerate().take(dims) {
            *slot = (f[a] / cell).floor() as i64;
        }
        k
    }

    /// Calls `visit` for every feature within `radius2` (squared) of `q`, in a
    /// fixed order.
    fn for_each_within<const D: usize, M: FeatureMetric<D>>(
        &self,
        features: &[[f64; D]],
        metric: &M,
        q: &[f64; D],
        radius2: f64,
        mut visit: impl FnMut(usize),
    ) {
        let base = Self::key(q, self.cell, self.dims);
        let span = |a: usize| if a < self.dims { -1..=1 } else { 0..=0 };
        for dx in span(0) {
            for dy in span(1) {
                for dz in span(2) {
                    let key = [base[0] + dx, base[1] + dy, base[2] + dz];
                    if let Some(ids) = self.cells.get(&key) {
                        for &i in ids {
                            if metric.dist2(&features[i], q) <= radius2 {
                                visit(i);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Unweighted mean shift; see [`mean_shift_weighted`].
pub fn mean_shift<const D: usize>(features: &[[f64; D]], params: &MeanShiftParams) -> Result<MeanShiftResult<D>> {
    mean_shift_weighted(features, &vec![1.0; features.len()], params)
}

/// Flat-kernel Euclidean mean shift; see [`mean_shift_with`].
pub fn mean_shift_weighted<const D: usize>(
    features: &[[f64; D]],
    weights: &[f64],
    params: &MeanShiftParams,
) -> Result<MeanShiftResult<D>> {
    mean_shift_with(features, weights, params, &Euclidean)
}

/// Flat-kernel mean shift under `metric`.
///
/// Every feature seeds a trajectory that moves to the weighted mean of the
/// features within `bandwidth` until the shift drops below `tol` or
/// `max_iters` is reached. Converged modes are visited in order of
/// decreasing density `sum_i w_i (1 - d_i^2 / h^2)` over the window, the
/// profile the flat kernel climbs (ties: lowest seed index), and a mode within
/// `bandwidth / 2` of an already kept mode is merged into it. Every feature
/// is assigned to its nearest kept mode (ties: earliest mode); clusters whose
/// total weight is below `min_points` are dropped and their features left
/// unlabeled.
pub fn mean_shift_with<const D: usize, M: FeatureMetric<D>>(
    features: &[[f64; D]],
    weights: &[f64],
    params: &MeanShiftParams,
    metric: &M,
) -> Result<MeanShiftResult<D>> {
    if weights.len() != features.len() {
        return Err(invalid("feature and weight counts differ"));
    }
    if features.is_empty() {
        return Ok(MeanShiftResult::empty());
    }
    let h = params.bandwidth;
    let h2 = h * h;
    let index = GridIndex::new(features, h);

    let converged: Vec<([f64; D], f64)> = features
        .par_iter()
        .map(|seed| {
            let mut x = *seed;
            for _ in 0..params.max_iters {
                let mut acc = [0.0; D];
                let mut total = 0.0;
                index.for_each_within(features, metric, &x, h2, |i| {
                    let w = weights[i];
                    for (a, v) in acc.iter_mut().zip(&metric.align(&features[i], &x)) {
                        *a += w * v;
                    }
                    total += w;
                });
                if total <= 0.0 {
                    break;
                }
                let next = acc.map(|a| a / total);
                let shift = metric.dist2(&next, &x).sqrt();
                x = next;
                if shift < params.tol {
                    break;
                }
            }
            let mut density = 0.0;
            index.for_each_within(features, metric, &x, h2, |i| {
                density += weights[i] * (1.0 - metric.dist2(&features[i], &x) / h2);
            });
            (x, density)
        })
        .collect();

    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| converged[b].1.total_cmp(&converged[a].1).then(a.cmp(&b)));
    let merge2 = (h / 2.0) * (h / 2.0);
    let mut modes: Vec<[f64; D]> = Vec::new();
    for i in order {
        let m = converged[i].0;
        if !modes.iter().any(|k| metric.dist2(k, &m) <= merge2) {
            modes.push(m);
        }
    }

    let nearest: Vec<usize> = features
        .par_iter()
        .map(|f| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, m) in modes.iter().enumerate() {
                let d = metric.dist2(f, m);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect();

    let mut weight = vec![0.0; modes.len()];
    for (i, k) in nearest.iter().enumerate() {
        weight[*k] += weights[i];
    }
    let mut remap = vec![None; modes.len()];
    let mut clusters = Vec::new();
    for (k, m) in modes.iter().enumerate() {
        if weight[k] >= params.min_points && weight[k] > 0.0 {
            remap[k] = Some(clusters.len());
            clusters.push(MeanShiftCluster { mode: *m, members: Vec::new(), weight: weight[k] });
        }
    }
    let labels: Vec<Option<usize>> = nearest.iter().map(|k| remap[*k]).collect();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            clusters[*c].members.push(i);
        }
    }
    Ok(MeanShiftResult { clusters, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn params(h: f64, min_points: f64) -> MeanShiftParams {
        MeanShiftParams::new(h, min_points, 300, 1e-4).unwrap()
    }

    #[test]
    fn empty_input() {
        let r = mean_shift::<2>(&[], &params(1.0, 1.0)).unwrap();
        assert!(r.clusters.is_empty());
    }

    #[test]
    fn identical_points() {
        let pts = vec![[1.5, -2.0, 3.0]; 10];
        let r = mean_shift(&pts, &params(0.5, 1.0)).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.clusters[0].mode, [1.5, -2.0, 3.0]);
        assert_eq!(r.clusters[0].members.len(), 10);
    }

    #[test]
    fn two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 0.5).unwrap();
        let mut pts = Vec::new();
        for i in 0..60 {
            let c = if i % 2 == 0 { 0.0 } else { 10.0 };
            pts.push([c + n.sample(&mut rng), n.sample(&mut rng)]);
        }
        let r = mean_shift(&pts, &params(3.0, 5.0)).unwrap();
        assert_eq!(r.clusters.len(), 2);
        for c in &r.clusters {
            let parity = c.members[0] % 2;
            assert_eq!(c.members.len(), 30);
            assert!(c.members.iter().all(|m| m % 2 == parity));
        }
    }

    #[test]
    fn one_dimensional_example() {
        let pts = [[0.0], [0.1], [0.2], [5.0], [5.1]];
        let r = mean_shift(&pts, &params(0.5, 2.0)).unwrap();
        assert_eq!(r.clusters.len(), 2);
        assert_eq!(r.clusters[0].members, vec![0, 1, 2]);
        assert_eq!(r.clusters[1].members, vec![3, 4]);
        assert!((r.clusters[0].mode[0] - 0.1).abs() < 1e-9);
        assert!((r.clusters[1].mode[0] - 5.05).abs() < 1e-9);
    }

    #[test]
    fn small_clusters_are_unlabeled() {
        let pts = [[0.0], [0.1], [0.2], [5.0]];
        let r = mean_shift(&pts, &params(0.5, 2.0)).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert_eq!(r.labels, vec![Some(0), Some(0), Some(0), None]);
    }

    #[test]
    fn weights_move_modes_and_count_towards_min_points() {
        let pts = [[0.0], [1.0]];
        let r = mean_shift_weighted(&pts, &[3.0, 1.0], &params(2.0, 4.0)).unwrap();
        assert_eq!(r.clusters.len(), 1);
        assert!((r.clusters[0].mode[0] - 0.25).abs() < 1e-12);
        assert_eq!(r.clusters[0].weight, 4.0);
        let r = mean_shift_weighted(&pts, &[3.0, 1.0], &params(2.0, 4.5)).unwrap();
        assert!(r.clusters.is_empty());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(MeanShiftParams::new(0.0, 1.0, 10, 1e-3).is_err());
        assert!(MeanShiftParams::new(1.0, 1.0, 0, 1e-3).is_err());
        assert!(mean_shift_weighted(&[[0.0]], &[], &params(1.0, 1.0)).is_err());
    }
}
