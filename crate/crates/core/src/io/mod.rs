//! File formats and run configuration.

pub mod config;
pub mod formats;
pub mod ply;

pub use config::{Config, ObjectConfig};
pub use formats::{
    load_labels, load_poses, load_predictions, load_report, load_scene, save_labels, save_poses, save_predictions,
    save_report, save_scene, PoseRecord, SCHEMA_VERSION,
};
pub use ply::{load_ply, save_ply, PlyCloud};
