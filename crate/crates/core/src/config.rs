//! Pipeline configuration: one JSON file plus dotted `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::camera::CameraModel;
use crate::contact::ContactConfig;
use crate::dataset::{AugmentSettings, SourceMode};
use crate::geometry::KinematicChain;
use crate::perturb::{AnnealConfig, PerturbationConfig, PhaseSampler};
use crate::render::StyleConfig;
use crate::ArmPair;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("override `{0}`: {1}")]
    Override(String, String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{what} path does not exist: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Directory of source episodes.
    pub dataset: PathBuf,
    /// Root of the generated tree.
    pub output: PathBuf,
    /// JSON object `{"left": chain, "right": chain}`.
    pub kinematics: PathBuf,
    /// JSON array of cameras, in image order.
    pub cameras: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesizerKind {
    #[default]
    Overlay,
    Identity,
}

fn default_k() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SourceMode,
    #[serde(default)]
    pub tiling: bool,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub style: StyleConfig,
    #[serde(default)]
    pub synthesizer: SynthesizerKind,
    /// Square side of exported bundle images; native size when absent.
    #[serde(default)]
    pub bundle_side: Option<u32>,
}

/// Parse `key=value`. The value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(s.into(), "expected key=value".into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(s.into(), "empty key".into()));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

/// Set a dotted path inside a JSON object, creating objects on the way.
pub fn apply_override(root: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::Override(key.into(), format!("`{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl PipelineConfig {
    /// Load `path`, apply overrides in order, resolve relative paths against
    /// the config file's directory and validate.
    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let mut value: Value = read_json(path)?;
        for (k, v) in overrides {
            apply_override(&mut value, k, v.clone())?;
        }
        let mut cfg: PipelineConfig = serde_json::from_value(value).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        p.dataset = resolve(base, &p.dataset);
        p.output = resolve(base, &p.output);
        p.kinematics = resolve(base, &p.kinematics);
        p.cameras = resolve(base, &p.cameras);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        if self.bundle_side == Some(0) {
            return Err(ConfigError::Invalid("bundle_side must be positive".into()));
        }
        self.perturbation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.anneal.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.contact.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (what, p) in [
            ("dataset", &self.paths.dataset),
            ("kinematics", &self.paths.kinematics),
            ("cameras", &self.paths.cameras),
        ] {
            if !p.exists() {
                return Err(ConfigError::MissingPath { what, path: p.clone() });
            }
        }
        Ok(())
    }

    pub fn load_chains(&self) -> Result<ArmPair<KinematicChain>, ConfigError> {
        read_json(&self.paths.kinematics)
    }

    pub fn load_cameras(&self) -> Result<Vec<CameraModel>, ConfigError> {
        let cams: Vec<CameraModel> = read_json(&self.paths.cameras)?;
        if cams.is_empty() || cams.len() > 4 {
            return Err(ConfigError::Invalid(format!("expected 1 to 4 cameras, got {}", cams.len())));
        }
        for (i, c) in cams.iter().enumerate() {
            c.validate().map_err(|e| ConfigError::Invalid(format!("camera {i}: {e}")))?;
        }
        Ok(cams)
    }

    pub fn settings(&self) -> AugmentSettings {
        AugmentSettings {
            k: self.k,
            seed: self.seed,
            mode: self.mode,
            tiling: self.tiling,
            style: self.style.clone(),
        }
    }

    pub fn sampler(&self) -> PhaseSampler {
        PhaseSampler {
            perturbation: self.perturbation.clone(),
            anneal: self.anneal.clone(),
        }
    }

    /// Copy stored in the output tree. The output path is written as `.`
    /// so that trees generated in different places compare equal.
    pub fn to_output_json(&self) -> String {
        let mut copy = self.clone();
        copy.paths.output = PathBuf::from(".");
        serde_json::to_string_pretty(&copy).expect("plain struct")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_set_nested_keys() {
        let mut v = json!({"k": 8, "anneal": {"visiting": 2.62}});
        let (k, val) = parse_override("anneal.max_iterations=50").unwrap();
        apply_override(&mut v, &k, val).unwrap();
        let (k, val) = parse_override("mode=rgbd").unwrap();
        apply_override(&mut v, &k, val).unwrap();
        let (k, val) = parse_override("contact.lambda=2.5").unwrap();
        apply_override(&mut v, &k, val).unwrap();
        assert_eq!(v["anneal"]["max_iterations"], 50);
        assert_eq!(v["mode"], "rgbd");
        assert_eq!(v["contact"]["lambda"], 2.5);
        assert!(parse_override("novalue").is_err());
        let (k, val) = parse_override("k.x=1").unwrap();
        assert!(apply_override(&mut v, &k, val).is_err());
    }

    #[test]
    fn load_resolves_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("data")).unwrap();
        std::fs::write(dir.path().join("kin.json"), "{}").unwrap();
        std::fs::write(dir.path().join("cams.json"), "[]").unwrap();
        let cfg_path = dir.path().join("cfg.json");
        let body = json!({"paths": {"dataset": "data", "output": "out", "kinematics": "kin.json", "cameras": "cams.json"}});
        std::fs::write(&cfg_path, body.to_string()).unwrap();
        let cfg = PipelineConfig::load(&cfg_path, &[]).unwrap();
        assert_eq!(cfg.k, 8);
        assert_eq!(cfg.paths.dataset, dir.path().join("data"));
        assert_eq!(cfg.perturbation.translation_min, 0.05);

        let bad = PipelineConfig::load(&cfg_path, &[("k".into(), json!(0))]);
        assert!(matches!(bad, Err(ConfigError::Invalid(_))));
        let missing = PipelineConfig::load(&cfg_path, &[("paths.dataset".into(), json!("nowhere"))]);
        assert!(matches!(missing, Err(ConfigError::MissingPath { what: "dataset", .. })));
    }
}
