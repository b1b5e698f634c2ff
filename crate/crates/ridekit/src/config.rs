//! Per-command parameter sets. A `--config` file supplies any subset of the
//! fields; explicit flags are applied on top; the rest keep their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use ridekit_core::losses::{ContrastBatch, LossParts};
use ridekit_core::pipeline::{SegConfig, SegMode};
use ridekit_core::retinex::{RetinexWeights, SolverConfig};
use ridekit_core::synth::SynthSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Config { path: path.into(), reason: e.to_string() })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub spec: SynthSpec,
    /// Rotates `spec.delta_r` to this cosine against the illumination step.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub weights: RetinexWeights,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub sweeps: usize,
    pub eps_r: f64,
    pub seed: u64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self { sweeps: 100, eps_r: ridekit_core::disc::DEFAULT_EPS_R, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub mode: SegMode,
    pub seg: SegConfig,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { mode: SegMode::GapThreshold, seg: SegConfig::default() }
    }
}

pub const DEFAULT_TARGETS: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: SynthSpec,
    pub targets: Vec<f64>,
    pub per_target: usize,
    pub seg: SegConfig,
    /// Worker threads. Rows do not depend on it.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: SynthSpec::default(),
            targets: DEFAULT_TARGETS.to_vec(),
            per_target: 10,
            seg: SegConfig::default(),
            jobs: 1,
        }
    }
}

/// One loss evaluation. Raster inputs are file paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossRequest {
    Bce {
        pred: PathBuf,
        target: PathBuf,
    },
    Iou {
        pred: PathBuf,
        target: PathBuf,
    },
    Boundary {
        boundary: PathBuf,
        refl_boundary: PathBuf,
        gt: PathBuf,
    },
    DeepSeg {
        preds: Vec<PathBuf>,
        gts: Vec<PathBuf>,
    },
    MaskedPool {
        features: PathBuf,
        mask: PathBuf,
    },
    Infonce(ContrastBatch),
    Total(LossParts),
    Retinex {
        image: PathBuf,
        l: PathBuf,
        r: PathBuf,
        #[serde(default)]
        weights: RetinexWeights,
    },
}

impl LossRequest {
    pub fn name(&self) -> &'static str {
        match self {
            LossRequest::Bce { .. } => "bce",
            LossRequest::Iou { .. } => "iou",
            LossRequest::Boundary { .. } => "boundary",
            LossRequest::DeepSeg { .. } => "deep-seg",
            LossRequest::MaskedPool { .. } => "masked-pool",
            LossRequest::Infonce(_) => "infonce",
            LossRequest::Total(_) => "total",
            LossRequest::Retinex { .. } => "retinex",
        }
    }

    pub fn raster_inputs(&self) -> Vec<&Path> {
        match self {
            LossRequest::Bce { pred, target } | LossRequest::Iou { pred, target } => vec![pred, target],
            LossRequest::Boundary { boundary, refl_boundary, gt } => vec![boundary, refl_boundary, gt],
            LossRequest::DeepSeg { preds, gts } => preds.iter().chain(gts).map(PathBuf::as_path).collect(),
            LossRequest::MaskedPool { features, mask } => vec![features, mask],
            LossRequest::Retinex { image, l, r, .. } => vec![image, l, r],
            LossRequest::Infonce(_) | LossRequest::Total(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalLossConfig {
    pub request: Option<LossRequest>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_keep_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"per_target": 3, "seg": {"solver": {"max_iters": 20}}}"#).unwrap();
        let cfg: SweepConfig = load_config(Some(&path)).unwrap();
        assert_eq!(cfg.per_target, 3);
        assert_eq!(cfg.seg.solver.max_iters, 20);
        assert_eq!(cfg.seg.weights, RetinexWeights::high_pass());
        assert_eq!(cfg.targets, DEFAULT_TARGETS);
    }

    #[test]
    fn unknown_keys_and_bad_json_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"perTarget": 3}"#).unwrap();
        let err = load_config::<SweepConfig>(Some(&path)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        fs::write(&path, "{").unwrap();
        assert!(matches!(load_config::<SynthConfig>(Some(&path)), Err(Error::Config { .. })));
    }

    #[test]
    fn loss_requests_are_tagged() {
        let req: LossRequest =
            serde_json::from_str(r#"{"kind": "total", "seg": 1, "ret": 2, "bnd": 3, "con": 4}"#).unwrap();
        assert_eq!(req.name(), "total");
        let req: LossRequest = serde_json::from_str(
            r#"{"kind": "infonce", "f_pos_a": [1, 0], "f_pos_b": [1, 0], "negatives": [[0, 1]], "tau": 1}"#,
        )
        .unwrap();
        assert!(matches!(req, LossRequest::Infonce(_)));
    }
}
