//! Object models: point clouds in the object frame plus their symmetry.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{bounding_box, centroid, PointCloud};
use crate::error::{invalid, Result};
use crate::so3::{Symmetry, SymmetryDescriptor};

#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub name: String,
    points: PointCloud,
    pub symmetry: Symmetry,
}

impl ObjectModel {
    /// Builds a model and shifts its points so the centroid is the origin.
    pub fn new(name: impl Into<String>, points: PointCloud, descriptor: SymmetryDescriptor) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("object model has no points"));
        }
        let c = centroid(&points);
        let points = points.iter().map(|p| p - c).collect();
        Ok(ObjectModel { name: name.into(), points, symmetry: Symmetry::from_descriptor(descriptor)? })
    }

    pub fn builtin(shape: BuiltinShape) -> Self {
        shape.build()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn bbox(&self) -> (Vector3<f64>, Vector3<f64>) {
        bounding_box(&self.points).expect("model is non-empty")
    }

    /// Radius of the origin-centred sphere enclosing the model.
    pub fn bounding_radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinShape {
    /// L-shaped bracket with a bump; no symmetry.
    Bracket,
    /// Flat block with two diagonal bumps; 180 degree symmetry about z.
    TwoFold,
    /// Stacked cylinders; continuous symmetry about z.
    Candlestick,
    /// 10 x 10 x 400 mm square bar sampled on a 2 mm lattice.
    Rod,
}

impl BuiltinShape {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinShape::Bracket => "bracket",
            BuiltinShape::TwoFold => "two_fold",
            BuiltinShape::Candlestick => "candlestick",
            BuiltinShape::Rod => "rod",
        }
    }

    pub fn descriptor(self) -> SymmetryDescriptor {
        let (dx, dy, dz) = match self {
            BuiltinShape::Bracket => (0.0, 0.0, 0.0),
            BuiltinShape::TwoFold => (0.0, 0.0, 180.0),
            BuiltinShape::Candlestick => (0.0, 0.0, 1.0),
            BuiltinShape::Rod => (180.0, 0.0, 90.0),
        };
        SymmetryDescriptor::new(dx, dy, dz, 15.0).expect("builtin descriptors are valid")
    }

    fn build(self) -> ObjectModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + self as u64);
        let points = match self {
            BuiltinShape::Bracket => sample_boxes(
                &[
                    Cuboid::new([-30.0, -20.0, -15.0], [30.0, 20.0, -7.0]),
                    Cuboid::new([22.0, -20.0, -7.0], [30.0, 20.0, 25.0]),
                    Cuboid::new([-20.0, 2.0, -7.0], [-10.0, 12.0, -1.0]),
                ],
                3000,
                &mut rng,
            ),
            BuiltinShape::TwoFold => {
                let base = sample_boxes(
                    &[
                        Cuboid::new([-40.0, -20.0, -10.0], [40.0, 20.0, 10.0]),
                        Cuboid::new([21.0, 6.0, 10.0], [29.0, 14.0, 16.0]),
                        Cuboid::new([-29.0, -14.0, 10.0], [-21.0, -6.0, 16.0]),
                    ],
                    1500,
                    &mut rng,
                );
                symmetrize(base, self.descriptor())
            }
            BuiltinShape::Candlestick => sample_candlestick(2500, &mut rng),
            BuiltinShape::Rod => rod_lattice(10.0, 400.0, 2.0),
        };
        ObjectModel::new(self.name(), points, self.descriptor()).expect("builtin models are valid")
    }
}

#[derive(Debug, Clone, Copy)]
struct Cuboid {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl Cuboid {
    fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Cuboid { lo: lo.into(), hi: hi.into() }
    }

    fn area(&self) -> f64 {
        let e = self.hi - self.lo;
        2.0 * (e.x * e.y + e.y * e.z + e.x * e.z)
    }

    fn strictly_contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] > self.lo[a] + 1e-9 && p[a] < self.hi[a] - 1e-9)
    }

    fn sample_surface(&self, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let e = self.hi - self.lo;
        let faces = [e.y * e.z, e.x * e.z, e.x * e.y];
        let mut pick = rng.random_range(0.0..faces.iter().sum::<f64>());
        let mut axis = 0;
        while axis < 2 && pick >= faces[axis] {
            pick -= faces[axis];
            axis += 1;
        }
        let mut p = Vector3::from_fn(|a, _| rng.random_range(self.lo[a]..self.hi[a]));
        p[axis] = if rng.random_bool(0.5) { self.lo[axis] } else { self.hi[axis] };
        p
    }
}

/// Uniform samples on the outer surface of a union of boxes.
fn sample_boxes(boxes: &[Cuboid], n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let areas: Vec<f64> = boxes.iter().map(Cuboid::area).collect();
    let total: f64 = areas.iter().sum();
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let mut pick = rng.random_range(0.0..total);
        let mut k = 0;
        while k + 1 < boxes.len() && pick >= areas[k] {
            pick -= areas[k];
            k += 1;
        }
        let p = boxes[k].sample_surface(rng);
        if !boxes.iter().any(|b| b.strictly_contains(&p)) {
            pts.push(p);
        }
    }
    pts
}

/// Union of the images of `base` under every element of the finite group.
fn symmetrize(base: PointCloud, descriptor: SymmetryDescriptor) -> PointCloud {
    let sym = Symmetry::from_descriptor(descriptor).expect("valid descriptor");
    sym.group.matrices().iter().flat_map(|s| base.iter().map(move |p| s.matrix() * p)).collect()
}

fn sample_candlestick(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    // (radius, z_lo, z_hi) of each stacked cylinder
    let parts = [(25.0, 0.0, 8.0), (12.0, 8.0, 68.0)];
    let side = |r: f64, lo: f64, hi: f64| 2.0 * std::f64::consts::PI * r * (hi - lo);
    let disk = |r: f64| std::f64::consts::PI * r * r;
    // lateral surfaces, bottom cap, exposed ring of the base, top cap
    let areas = [
        side(parts[0].0, parts[0].1, parts[0].2),
        side(parts[1].0, parts[1].1, parts[1].2),
        disk(parts[0].0),
        disk(parts[0].0) - disk(parts[1].0),
        disk(parts[1].0),
    ];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            let mut pick = rng.random_range(0.0..total);
            let mut k = 0;
            while k + 1 < areas.len() && pick >= areas[k] {
                pick -= areas[k];
                k += 1;
            }
            let (r, z) = match k {
                0 | 1 => (parts[k].0, rng.random_range(parts[k].1..parts[k].2)),
                2 => (parts[0].0 * rng.random::<f64>().sqrt(), parts[0].1),
                3 => {
                    let (a, b) = (parts[1].0 * parts[1].0, parts[0].0 * parts[0].0);
                    (rng.random_range(a..b).sqrt(), parts[0].2)
                }
                _ => (parts[1].0 * rng.random::<f64>().sqrt(), parts[1].2),
            };
            Vector3::new(r * c, r * s, z)
        })
        .collect()
}

/// Surface lattice of a square bar along z with side `width` and `length`.
fn rod_lattice(width: f64, length: f64, pitch: f64) -> PointCloud {
    let nw = (width / pitch).round() as usize;
    let nl = (length / pitch).round() as usize;
    let mut pts = Vec::new();
    for k in 0..=nl {
        let z = -length / 2.0 + pitch * k as f64;
        let end = k == 0 || k == nl;
        for i in 0..=nw {
            for j in 0..=nw {
                let rim = i == 0 || j == 0 || i == nw || j == nw;
                if rim || end {
                    pts.push(Vector3::new(-width / 2.0 + pitch * i as f64, -width / 2.0 + pitch * j as f64, z));
                }
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_invariant(model: &ObjectModel) {
        let pts = model.points();
        for s in model.symmetry.group.matrices() {
            for p in pts.iter().step_by(7) {
                let q = s.matrix() * p;
                let nearest = pts.iter().map(|m| (m - q).norm()).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-9, "{} not invariant: {nearest}", model.name);
            }
        }
    }

    #[test]
    fn builtins_are_centred() {
        for shape in [BuiltinShape::Bracket, BuiltinShape::TwoFold, BuiltinShape::Candlestick, BuiltinShape::Rod] {
            let m = ObjectModel::builtin(shape);
            assert!(centroid(m.points()).norm() < 1e-6, "{}", m.name);
            assert!(!m.points().is_empty());
        }
    }

    #[test]
    fn builtins_are_deterministic() {
        let a = ObjectModel::builtin(BuiltinShape::TwoFold);
        let b = ObjectModel::builtin(BuiltinShape::TwoFold);
        assert_eq!(a.points(), b.points());
    }

    #[test]
    fn symmetric_builtins_map_onto_themselves() {
        assert_invariant(&ObjectModel::builtin(BuiltinShape::TwoFold));
        assert_invariant(&ObjectModel::builtin(BuiltinShape::Rod));
    }

    #[test]
    fn group_sizes() {
        assert_eq!(ObjectModel::builtin(BuiltinShape::Bracket).symmetry.group.len(), 1);
        assert_eq!(ObjectModel::builtin(BuiltinShape::TwoFold).symmetry.group.len(), 2);
        assert_eq!(ObjectModel::builtin(BuiltinShape::Rod).symmetry.group.len(), 8);
        let c = ObjectModel::builtin(BuiltinShape::Candlestick);
        assert_eq!(c.symmetry.continuous_axis(), Some(crate::so3::Axis::Z));
    }

    #[test]
    fn rod_dimensions() {
        let m = ObjectModel::builtin(BuiltinShape::Rod);
        let (lo, hi) = m.bbox();
        let e = hi - lo;
        assert!((e - Vector3::new(10.0, 10.0, 400.0)).norm() < 1e-9);
        assert_eq!(m.points().len(), 20 * 201 + 2 * 16);
    }

    #[test]
    fn two_fold_extent() {
        let (lo, hi) = ObjectModel::builtin(BuiltinShape::TwoFold).bbox();
        let e = hi - lo;
        assert!((e.x - 80.0).abs() < 1e-9 && (e.y - 40.0).abs() < 1e-9 && (e.z - 26.0).abs() < 1e-9);
    }

    #[test]
    fn empty_model_rejected() {
        assert!(ObjectModel::new("x", vec![], SymmetryDescriptor::default()).is_err());
    }
}
