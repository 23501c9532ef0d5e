//! JSON, CSV and text artifacts exchanged between pipeline stages.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ply::{load_ply, save_ply, PlyCloud};
use crate::cluster::PerPointPrediction;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::so3::{Pose, Quaternion};
use crate::synth::{Scene, SceneInstance};
use crate::workspace::NormalizationTransform;

pub const SCHEMA_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn check_schema(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(format_err(format!("unsupported schema_version {found}, expected {SCHEMA_VERSION}")));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneInstanceRecord {
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    tx: f64,
    ty: f64,
    tz: f64,
    visible_count: usize,
    total_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneRecord {
    schema_version: u32,
    seed: u64,
    scale: f64,
    scene_offset: [f64; 3],
    instances: Vec<SceneInstanceRecord>,
}

/// Writes the scene cloud as PLY (with instance ids) and its ground truth as
/// a JSON sidecar.
pub fn save_scene(ply_path: &Path, json_path: &Path, scene: &Scene) -> Result<()> {
    let cloud =
        PlyCloud { points: scene.points.clone(), instance_ids: Some(scene.labels.iter().map(|&l| l as i64).collect()) };
    save_ply(ply_path, &cloud)?;
    let o = scene.normalization.scene_offset;
    let record = SceneRecord {
        schema_version: SCHEMA_VERSION,
        seed: scene.seed,
        scale: scene.normalization.scale,
        scene_offset: [o.x, o.y, o.z],
        instances: scene
            .instances
            .iter()
            .map(|i| {
                let [qw, qx, qy, qz] = i.pose.rotation.to_array();
                let t = i.pose.translation;
                SceneInstanceRecord {
                    qw,
                    qx,
                    qy,
                    qz,
                    tx: t.x,
                    ty: t.y,
                    tz: t.z,
                    visible_count: i.visible_count,
                    total_count: i.total_count,
                }
            })
            .collect(),
    };
    write_json(json_path, &record)
}

pub fn load_scene(ply_path: &Path, json_path: &Path) -> Result<Scene> {
    let record: SceneRecord = read_json(json_path)?;
    check_schema(record.schema_version)?;
    let cloud = load_ply(ply_path)?;
    let ids = cloud.instance_ids.ok_or_else(|| format_err("scene PLY lacks instance_id"))?;
    let n = record.instances.len();
    let labels = ids
        .iter()
        .map(|&id| {
            usize::try_from(id)
                .ok()
                .filter(|&i| i < n)
                .ok_or_else(|| format_err(format!("instance id {id} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    let instances = record
        .instances
        .iter()
        .map(|r| {
            Ok(SceneInstance {
                pose: Pose::new(Quaternion::try_new(r.qw, r.qx, r.qy, r.qz)?, Vector3::new(r.tx, r.ty, r.tz)),
                visible_count: r.visible_count,
                total_count: r.total_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, inst) in instances.iter().enumerate() {
        let counted = labels.iter().filter(|&&l| l == i).count();
        if counted != inst.visible_count {
            return Err(format_err(format!(
                "instance {i}: visible_count {} but {counted} labelled points",
                inst.visible_count
            )));
        }
    }
    Ok(Scene {
        instances,
        points: cloud.points,
        labels,
        seed: record.seed,
        normalization: NormalizationTransform::new(record.scale, record.scene_offset.into())?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionRow {
    x: f64,
    y: f64,
    z: f64,
    cx: f64,
    cy: f64,
    cz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

pub fn save_predictions(path: &Path, pred: &PerPointPrediction) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for ((p, c), q) in pred.positions().iter().zip(pred.centroids()).zip(pred.quaternions()) {
        let [qw, qx, qy, qz] = q.to_array();
        w.serialize(PredictionRow { x: p.x, y: p.y, z: p.z, cx: c.x, cy: c.y, cz: c.z, qw, qx, qy, qz })?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<PerPointPrediction> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut pos, mut cen, mut quat) = (Vec::new(), Vec::new(), Vec::new());
    for (k, row) in r.deserialize::<PredictionRow>().enumerate() {
        let row = row?;
        pos.push(Vector3::new(row.x, row.y, row.z));
        cen.push(Vector3::new(row.cx, row.cy, row.cz));
        quat.push(
            Quaternion::try_new(row.qw, row.qx, row.qy, row.qz)
                .map_err(|e| format_err(format!("prediction row {}: {e}", k + 1)))?,
        );
    }
    PerPointPrediction::new(pos, cen, quat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub member_count: usize,
}

impl PoseRecord {
    pub fn new(pose: &Pose, member_count: usize) -> Self {
        let [qw, qx, qy, qz] = pose.rotation.to_array();
        let t = pose.translation;
        PoseRecord { qw, qx, qy, qz, tx: t.x, ty: t.y, tz: t.z, member_count }
    }

    pub fn pose(&self) -> Result<Pose> {
        Ok(Pose::new(Quaternion::try_new(self.qw, self.qx, self.qy, self.qz)?, Vector3::new(self.tx, self.ty, self.tz)))
    }
}

pub fn save_poses(path: &Path, poses: &[PoseRecord]) -> Result<()> {
    write_json(path, &poses)
}

pub fn load_poses(path: &Path) -> Result<Vec<PoseRecord>> {
    read_json(path)
}

/// One instance id per line, `-1` for unassigned points.
pub fn save_labels(path: &Path, labels: &[i64]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<i64>> {
    std::fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| l.trim().parse().map_err(|_| format_err(format!("labels line {}: bad id '{l}'", k + 1))))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportRecord {
    schema_version: u32,
    #[serde(flatten)]
    report: EvalReport,
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_json(path, &ReportRecord { schema_version: SCHEMA_VERSION, report: report.clone() })
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let r: ReportRecord = read_json(path)?;
    check_schema(r.schema_version)?;
    Ok(r.report)
}
