//! Point clouds and small geometric helpers.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::sum::OrderedSum;

/// Ordered list of 3-D points in millimetres.
pub type PointCloud = Vec<Vector3<f64>>;

/// Arithmetic mean of the points; zero for an empty slice.
pub fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    if points.is_empty() {
        return Vector3::zeros();
    }
    let n = points.len() as f64;
    Vector3::from_fn(|axis, _| points.iter().map(|p| p[axis]).collect::<OrderedSum>().value() / n)
}

/// Axis-aligned bounding box as `(min, max)` corners.
pub fn bounding_box(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let first = points.first()?;
    Some(points.iter().fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

/// Edge lengths of the axis-aligned bounding box.
pub fn bbox_extent(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    bounding_box(points).map(|(lo, hi)| hi - lo)
}

/// Exact nearest-neighbour lookup over a fixed cloud using a uniform grid.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    points: PointCloud,
    cell: f64,
    lo: [i64; 3],
    hi: [i64; 3],
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl NearestIndex {
    /// Builds the index; `None` for an empty cloud.
    pub fn new(points: &[Vector3<f64>]) -> Option<Self> {
        let (lo, hi) = bounding_box(points)?;
        let extent = hi - lo;
        let volume = extent.iter().map(|e| e.max(1e-9)).product::<f64>();
        let mut cell = (volume / points.len() as f64 * 4.0).cbrt();
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        cell = cell.max(extent.max() / 256.0).max(1e-9);
        let key = |p: &Vector3<f64>| [0, 1, 2].map(|a| (p[a] / cell).floor() as i64);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p)).or_default().push(i);
        }
        Some(NearestIndex { points: points.to_vec(), cell, lo: key(&lo), hi: key(&hi), cells })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Index and squared distance of the closest point (ties: lowest index).
    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        let c = [0, 1, 2].map(|a| (q[a] / self.cell).floor() as i64);
        let max_ring = (0..3).map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs())).max().unwrap_or(0);
        let mut best = (usize::MAX, f64::INFINITY);
        for ring in 0..=max_ring {
            if ring > 8 {
                return self.brute_force(q);
            }
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in ids {
                                let d = (self.points[i] - q).norm_squared();
                                if d < best.1 || (d == best.1 && i < best.0) {
                                    best = (i, d);
                                }
                            }
                        }
                    }
                }
            }
            let reach = ring as f64 * self.cell;
            if best.0 != usize::MAX && best.1 < reach * reach {
                break;
            }
        }
        best
    }

    fn brute_force(&self, q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}
