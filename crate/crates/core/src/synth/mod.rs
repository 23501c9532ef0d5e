//! Synthetic bin-picking scenes with ground truth and an oracle predictor.

mod model;
mod oracle;
mod scene;

pub use model::{BuiltinShape, ObjectModel};
pub use oracle::{oracle_predict, OracleParams};
pub use scene::{
    apply_occlusion, generate_scene, make_crossing_rods_scene, yaw_pitch_roll, Scene, SceneGenParams, SceneInstance,
};
