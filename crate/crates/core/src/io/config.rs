//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ply::load_ply;
use crate::cluster::{ClusterParams, IcpParams};
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::so3::SymmetryDescriptor;
use crate::synth::{BuiltinShape, ObjectModel, OracleParams, SceneGenParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    /// Built-in model; ignored when `model_path` is set.
    #[serde(default)]
    pub shape: Option<BuiltinShape>,
    /// ASCII PLY model in millimetres, relative to the config file.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    pub dx_deg: Option<f64>,
    pub dy_deg: Option<f64>,
    pub dz_deg: Option<f64>,
    pub ts_deg: Option<f64>,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        ObjectConfig {
            shape: Some(BuiltinShape::TwoFold),
            model_path: None,
            dx_deg: None,
            dy_deg: None,
            dz_deg: None,
            ts_deg: None,
        }
    }
}

impl ObjectConfig {
    pub fn builtin(shape: BuiltinShape) -> Self {
        ObjectConfig { shape: Some(shape), ..ObjectConfig::default() }
    }

    /// Descriptor from the explicit angles, falling back to the built-in
    /// shape's own symmetry (or none) for missing values.
    pub fn descriptor(&self) -> Result<SymmetryDescriptor> {
        let base = match (&self.model_path, self.shape) {
            (None, Some(shape)) => shape.descriptor(),
            _ => SymmetryDescriptor::default(),
        };
        SymmetryDescriptor::new(
            self.dx_deg.unwrap_or(base.dx_deg),
            self.dy_deg.unwrap_or(base.dy_deg),
            self.dz_deg.unwrap_or(base.dz_deg),
            self.ts_deg.unwrap_or(base.ts_deg),
        )
    }

    pub fn load_model(&self) -> Result<ObjectModel> {
        let descriptor = self.descriptor()?;
        match (&self.model_path, self.shape) {
            (Some(path), _) => {
                let cloud = load_ply(path)?;
                let name = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
                ObjectModel::new(name, cloud.points, descriptor)
            }
            (None, Some(shape)) => {
                let m = ObjectModel::builtin(shape);
                ObjectModel::new(m.name.clone(), m.points().to_vec(), descriptor)
            }
            (None, None) => Err(Error::Config("[object] needs either shape or model_path".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub object: ObjectConfig,
    pub cluster: ClusterParams,
    pub eval: EvalConfig,
    pub synth: SceneGenParams,
    pub oracle: OracleParams,
    pub icp: IcpParams,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl Config {
    /// Parses TOML; relative model paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: Config = toml::from_str(text).map_err(config_err)?;
        if let Some(p) = c.object.model_path.take() {
            c.object.model_path = Some(if p.is_relative() { base_dir.join(p) } else { p });
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.object.model_path {
            if !p.is_file() {
                return Err(Error::Config(format!("model file {} does not exist", p.display())));
            }
        } else if self.object.shape.is_none() {
            return Err(Error::Config("[object] needs either shape or model_path".into()));
        }
        let tag = |section: &str, e: Error| Error::Config(format!("[{section}] {e}"));
        self.object.descriptor().map_err(|e| tag("object", e))?;
        self.cluster.validate().map_err(|e| tag("cluster", e))?;
        self.eval.validate().map_err(|e| tag("eval", e))?;
        self.synth.validate().map_err(|e| tag("synth", e))?;
        self.oracle.validate().map_err(|e| tag("oracle", e))?;
        if !(self.icp.tol > 0.0) {
            return Err(Error::Config("[icp] tol must be positive".into()));
        }
        Ok(())
    }
}
