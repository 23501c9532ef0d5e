//! End-to-end run: synthetic scene, oracle predictions, clustering in
//! normalized space, optional ICP and evaluation.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use crate::cluster::{icp_refine, ClusterMode, ClusterPipeline, ClusterResult, IcpStatus, PerPointPrediction};
use crate::error::Result;
use crate::io::{save_labels, save_poses, save_predictions, save_report, save_scene, Config, PoseRecord};
use crate::metrics::{evaluate, EvalReport};
use crate::so3::Pose;
use crate::synth::{apply_occlusion, generate_scene, oracle_predict, ObjectModel, OracleParams, Scene, SceneGenParams};
use crate::workspace::{denormalize_pose, fit_normalization, normalize_scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    pub mode: ClusterMode,
    pub icp: bool,
    pub scenes: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { mode: ClusterMode::TwoStage, icp: false, scenes: 1 }
    }
}

/// Clustered instances with poses in scene millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredScene {
    /// Raw result in normalized space.
    pub result: ClusterResult,
    pub poses: Vec<Pose>,
}

impl ClusteredScene {
    pub fn pose_records(&self) -> Vec<PoseRecord> {
        self.poses.iter().zip(&self.result.instances).map(|(p, i)| PoseRecord::new(p, i.members.len())).collect()
    }
}

/// Clusters millimetre predictions: normalizes scene and model, runs the
/// configured clustering, maps poses back and optionally refines them with
/// ICP against each instance's member points.
pub fn cluster_predictions(
    pred: &PerPointPrediction,
    model: &ObjectModel,
    config: &Config,
    mode: ClusterMode,
    icp: bool,
) -> Result<ClusteredScene> {
    let fit = fit_normalization(model.points()).map_err(|e| e.in_stage("normalize"))?;
    let (_, transform) = normalize_scene(pred.positions(), &fit);
    let norm_pred = pred.map_points(|p| transform.forward_point(p));
    let norm_model = transform.scale_model(model.points());
    let pipeline = ClusterPipeline::new(config.cluster, mode).map_err(|e| e.in_stage("cluster"))?;
    let result = pipeline.run(&norm_pred, &model.symmetry, &norm_model).map_err(|e| e.in_stage("cluster"))?;
    let mut poses: Vec<Pose> = result.instances.iter().map(|i| denormalize_pose(&i.pose, &transform)).collect();
    if icp {
        for (pose, inst) in poses.iter_mut().zip(&result.instances) {
            let pts: Vec<_> = inst.members.iter().map(|&m| pred.positions()[m]).collect();
            let refined = icp_refine(&pts, model.points(), pose, &config.icp).map_err(|e| e.in_stage("icp"))?;
            if refined.status == IcpStatus::Failed {
                warn!("ICP refinement failed; keeping the voted pose");
            }
            *pose = refined.pose;
        }
    }
    Ok(ClusteredScene { result, poses })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneOutcome {
    pub scene: Scene,
    pub predictions: PerPointPrediction,
    pub clustered: ClusteredScene,
    pub report: EvalReport,
}

/// Oracle seed derived from the scene seed so the two random streams differ.
pub fn oracle_seed(scene_seed: u64) -> u64 {
    scene_seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn synthesize_scene(model: &ObjectModel, params: &SceneGenParams) -> Result<Scene> {
    let scene = generate_scene(model, params).map_err(|e| e.in_stage("synth"))?;
    apply_occlusion(&scene, params.occlusion_cell, params.occlusion_depth).map_err(|e| e.in_stage("synth"))
}

/// Runs one scene with the given seed.
pub fn run_scene(config: &Config, model: &ObjectModel, seed: u64, options: &PipelineOptions) -> Result<SceneOutcome> {
    let scene = synthesize_scene(model, &SceneGenParams { seed, ..config.synth })?;
    let oracle = OracleParams { seed: oracle_seed(seed), ..config.oracle };
    let predictions = oracle_predict(&scene, model, &oracle).map_err(|e| e.in_stage("oracle"))?;
    let clustered = cluster_predictions(&predictions, model, config, options.mode, options.icp)?;
    let report = evaluate(
        &clustered.poses,
        &scene.gt_poses(),
        &scene.visible_counts(),
        model.points(),
        &model.symmetry,
        &config.eval,
    )
    .map_err(|e| e.in_stage("eval"))?;
    Ok(SceneOutcome { scene, predictions, clustered, report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Counts pooled over all scenes.
    pub report: EvalReport,
    pub scenes: Vec<SceneOutcome>,
}

/// Writes the artifacts of one scene into `dir`.
pub fn write_scene_artifacts(dir: &Path, outcome: &SceneOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_scene(&dir.join("scene.ply"), &dir.join("scene.json"), &outcome.scene)?;
    save_predictions(&dir.join("predictions.csv"), &outcome.predictions)?;
    save_poses(&dir.join("poses.json"), &outcome.clustered.pose_records())?;
    save_labels(&dir.join("labels.txt"), &outcome.clustered.result.labels())?;
    save_report(&dir.join("report.json"), &outcome.report)?;
    Ok(())
}

/// Runs `options.scenes` scenes with seeds `seed, seed + 1, ...` in parallel.
/// With `out_dir`, each scene's artifacts go to `scene_NNN/` and the pooled
/// report to `report.json`.
pub fn run_pipeline(
    config: &Config,
    seed: u64,
    options: &PipelineOptions,
    out_dir: Option<&Path>,
) -> Result<PipelineOutput> {
    let model = config.object.load_model().map_err(|e| e.in_stage("config"))?;
    let scenes = (0..options.scenes.max(1) as u64)
        .into_par_iter()
        .map(|k| run_scene(config, &model, seed.wrapping_add(k), options))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = scenes.iter().map(|s| s.report.clone()).collect();
    let report = EvalReport::aggregate(&reports);
    info!("{} scene(s): f1_inst {:.4}, recall {:.4}", scenes.len(), report.f1_inst, report.recall);
    if let Some(dir) = out_dir {
        let write = || -> Result<()> {
            std::fs::create_dir_all(dir)?;
            for (k, s) in scenes.iter().enumerate() {
                write_scene_artifacts(&dir.join(format!("scene_{k:03}")), s)?;
            }
            save_report(&dir.join("report.json"), &report)
        };
        write().map_err(|e| e.in_stage("write"))?;
    }
    Ok(PipelineOutput { report, scenes })
}
