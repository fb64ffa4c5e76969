use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::PatchSpec;
use crate::error::{Result, SvlError};
use crate::matching::RotationGrid;
use crate::separation::Connectivity;
use crate::synthgen::{CorruptionSpec, PackConfig};

/// Which particles the simulated model is retrained on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Only particles validated by matching.
    #[default]
    Svl,
    /// Every separated particle, validated or not.
    St,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorConfig {
    /// Answers from the ground-truth labels.
    Oracle,
    /// Intensity flood fill from the patch centre.
    Grow {
        #[serde(default = "default_grow_fraction")]
        fraction: f64,
    },
    /// Ground truth corrupted by `base` rates scaled with an error factor
    /// that falls with training coverage.
    Stub {
        base: CorruptionSpec,
        decay: f64,
        #[serde(default)]
        feedback: f64,
    },
}

fn default_grow_fraction() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputConfig {
    /// Generate and render a pack.
    Synthetic {
        pack: PackConfig,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        noise_seed: u64,
    },
    /// Grayscale scans on disk, optionally with ground-truth labels.
    Files {
        gray: Vec<PathBuf>,
        #[serde(default)]
        truth: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub patch: PatchSpec,
    #[serde(default)]
    pub grid: RotationGrid,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Separated components below this many voxels are dropped.
    #[serde(default = "default_min_voxels")]
    pub min_voxels: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Stop once an iteration validates fewer new particles than this.
    #[serde(default = "default_epsilon")]
    pub epsilon: usize,
    #[serde(default)]
    pub mode: Mode,
    /// Majority vote needs more than half of the other instances.
    #[serde(default)]
    pub strict_vote: bool,
    #[serde(default)]
    pub connectivity: Connectivity,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> f64 {
    0.9
}

fn default_min_voxels() -> usize {
    10
}

fn default_max_iterations() -> usize {
    10
}

fn default_epsilon() -> usize {
    1
}

impl PipelineConfig {
    /// Defaults for everything but the input and the predictor.
    pub fn new(input: InputConfig, predictor: PredictorConfig) -> Self {
        PipelineConfig {
            input,
            predictor,
            patch: PatchSpec::default(),
            grid: RotationGrid::default(),
            threshold: default_threshold(),
            min_voxels: default_min_voxels(),
            max_iterations: default_max_iterations(),
            epsilon: default_epsilon(),
            mode: Mode::Svl,
            strict_vote: false,
            connectivity: Connectivity::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(SvlError::Config(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(SvlError::Config("max_iterations must be at least 1".into()));
        }
        self.patch.validate()?;
        self.grid.validate()?;
        if let PredictorConfig::Stub { base, decay, feedback } = &self.predictor {
            base.validate()?;
            if *decay < 0.0 || *feedback < 0.0 {
                return Err(SvlError::Config("stub decay and feedback must be >= 0".into()));
            }
        }
        if let InputConfig::Files { gray, truth } = &self.input {
            if !truth.is_empty() && truth.len() != gray.len() {
                return Err(SvlError::Config(format!(
                    "{} truth volumes for {} scans",
                    truth.len(),
                    gray.len()
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SvlError::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_takes_defaults() {
        let text = r#"{
            "input": {"files": {"gray": ["a.json", "b.json"]}},
            "predictor": {"kind": "grow"}
        }"#;
        let cfg: PipelineConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.threshold, 0.9);
        assert_eq!((cfg.max_iterations, cfg.epsilon), (10, 1));
        assert_eq!(cfg.mode, Mode::Svl);
        assert_eq!(cfg.predictor, PredictorConfig::Grow { fraction: 0.6 });
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn bad_values_rejected() {
        let base = PipelineConfig::new(
            InputConfig::Files {
                gray: vec![],
                truth: vec![],
            },
            PredictorConfig::Oracle,
        );
        for cfg in [
            PipelineConfig { threshold: 0.0, ..base.clone() },
            PipelineConfig { threshold: 1.5, ..base.clone() },
            PipelineConfig { max_iterations: 0, ..base.clone() },
        ] {
            assert!(cfg.validate().is_err());
        }
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&base).unwrap()).unwrap();
        assert_eq!(back, base);
    }
}
