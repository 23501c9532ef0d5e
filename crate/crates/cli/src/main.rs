use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use binpose::cluster::ClusterMode;
use binpose::io::{
    load_poses, load_predictions, load_scene, save_labels, save_poses, save_predictions, save_report, save_scene,
    Config,
};
use binpose::loss::{gradcheck, sample_gradcheck_targets, LossKind, LossWeights};
use binpose::metrics::evaluate;
use binpose::pipeline::{cluster_predictions, oracle_seed, run_pipeline, synthesize_scene, PipelineOptions};
use binpose::synth::{oracle_predict, OracleParams, SceneGenParams};
use binpose::Error;

/// Instance-level 6D pose clustering for bin picking with symmetric objects.
#[derive(Parser, Debug)]
#[command(name = "binpose", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Cluster centroids only and average quaternions.
    #[arg(long, global = true)]
    single_stage: bool,
    /// Refine each instance pose with ICP.
    #[arg(long, global = true)]
    icp: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic bin scene (scene.ply + scene.json).
    Synth,
    /// Emit per-point oracle predictions for a scene (predictions.csv).
    Oracle {
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Cluster per-point predictions into instance poses (poses.json + labels.txt).
    Cluster {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score predicted poses against a scene (report.json).
    Eval {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Also append a one-line summary row to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare analytic and numeric loss gradients on random configurations.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
    },
    /// Run synth, oracle, cluster, optional ICP and eval end to end.
    Pipeline {
        #[arg(long, default_value_t = 1)]
        scenes: usize,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    match &common.config {
        Some(path) => Ok(Config::load(path).map_err(|e| e.in_stage("config"))?),
        None => Ok(Config::default()),
    }
}

fn mode(common: &Common) -> ClusterMode {
    if common.single_stage {
        ClusterMode::SingleStage
    } else {
        ClusterMode::TwoStage
    }
}

fn scene_paths(dir: &Path, scene: Option<&PathBuf>) -> (PathBuf, PathBuf) {
    match scene {
        Some(p) if p.extension().is_some_and(|e| e == "json") => (p.with_extension("ply"), p.clone()),
        Some(p) => (p.with_extension("ply"), p.with_extension("json")),
        None => (dir.join("scene.ply"), dir.join("scene.json")),
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let config = load_config(common)?;
    let out = &common.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Synth => {
            let model = config.object.load_model().map_err(|e| e.in_stage("config"))?;
            let scene = synthesize_scene(&model, &SceneGenParams { seed: common.seed, ..config.synth })?;
            save_scene(&out.join("scene.ply"), &out.join("scene.json"), &scene).map_err(|e| e.in_stage("write"))?;
            info!("{} instances, {} points", scene.instances.len(), scene.points.len());
        }
        Command::Oracle { scene } => {
            let model = config.object.load_model().map_err(|e| e.in_stage("config"))?;
            let (ply, json) = scene_paths(out, scene.as_ref());
            let scene = load_scene(&ply, &json).map_err(|e| e.in_stage("read"))?;
            let params = OracleParams { seed: oracle_seed(common.seed), ..config.oracle };
            let pred = oracle_predict(&scene, &model, &params).map_err(|e| e.in_stage("oracle"))?;
            save_predictions(&out.join("predictions.csv"), &pred).map_err(|e| e.in_stage("write"))?;
        }
        Command::Cluster { predictions } => {
            let model = config.object.load_model().map_err(|e| e.in_stage("config"))?;
            let path = predictions.unwrap_or_else(|| out.join("predictions.csv"));
            let pred = load_predictions(&path).map_err(|e| e.in_stage("read"))?;
            let clustered = cluster_predictions(&pred, &model, &config, mode(common), common.icp)?;
            if let Some(w) = &clustered.result.warning {
                warn!("{w}");
            }
            save_poses(&out.join("poses.json"), &clustered.pose_records()).map_err(|e| e.in_stage("write"))?;
            save_labels(&out.join("labels.txt"), &clustered.result.labels()).map_err(|e| e.in_stage("write"))?;
            info!("{} instances", clustered.poses.len());
        }
        Command::Eval { scene, poses, csv } => {
            let model = config.object.load_model().map_err(|e| e.in_stage("config"))?;
            let (ply, json) = scene_paths(out, scene.as_ref());
            let scene = load_scene(&ply, &json).map_err(|e| e.in_stage("read"))?;
            let poses_path = poses.unwrap_or_else(|| out.join("poses.json"));
            let records = load_poses(&poses_path).map_err(|e| e.in_stage("read"))?;
            let preds = records
                .iter()
                .map(|r| r.pose())
                .collect::<binpose::Result<Vec<_>>>()
                .map_err(|e| e.in_stage("read"))?;
            let report = evaluate(
                &preds,
                &scene.gt_poses(),
                &scene.visible_counts(),
                model.points(),
                &model.symmetry,
                &config.eval,
            )
            .map_err(|e| e.in_stage("eval"))?;
            save_report(&out.join("report.json"), &report).map_err(|e| e.in_stage("write"))?;
            if let Some(csv) = csv {
                let fresh = !csv.exists();
                let mut text = String::new();
                if fresh {
                    text.push_str("seed,n_gt,n_pred,n_ignored,tp,f1_inst,recall\n");
                }
                text.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    scene.seed, report.n_gt, report.n_pred, report.n_ignored, report.tp, report.f1_inst, report.recall
                ));
                use std::io::Write;
                fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&csv)
                    .and_then(|mut f| f.write_all(text.as_bytes()))
                    .with_context(|| format!("writing {}", csv.display()))?;
            }
            println!("f1_inst {} recall {}", report.f1_inst, report.recall);
        }
        Command::Gradcheck { trials, epsilon } => {
            if trials == 0 || epsilon.is_nan() || epsilon <= 0.0 {
                bail!("gradcheck: trials must be positive and epsilon > 0");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            let kind = LossKind::Total(LossWeights::default());
            let mut loss = 0.0;
            let mut max_rel_err: f64 = 0.0;
            let mut done = 0;
            while done < trials {
                let targets = sample_gradcheck_targets(&mut rng);
                match gradcheck(kind, &targets, epsilon) {
                    Ok(r) => {
                        loss += r.loss;
                        max_rel_err = max_rel_err.max(r.max_rel_err);
                        done += 1;
                    }
                    Err(Error::TieAtMinimum { .. }) => continue,
                    Err(e) => return Err(e.in_stage("gradcheck").into()),
                }
            }
            let record = json!({
                "loss": loss / trials as f64,
                "max_rel_err": max_rel_err,
                "trials": trials,
                "epsilon": epsilon,
            });
            println!("{record}");
        }
        Command::Pipeline { scenes } => {
            let options = PipelineOptions { mode: mode(common), icp: common.icp, scenes };
            let output = run_pipeline(&config, common.seed, &options, Some(out))?;
            println!("f1_inst {} recall {}", output.report.f1_inst, output.report.recall);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
