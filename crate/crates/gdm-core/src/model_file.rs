//! Model file serialization: versioned JSON with stable key order, written
//! atomically so failed runs never leave partial output behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crm::ConstraintMask;
use crate::error::{GdmError, Result};
use crate::gdm::{FitState, GdmConfig, SelectionModel, StopReason, TraceEntry};
use crate::solver::SvmModel;
use crate::MODEL_SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub config: GdmConfig,
    pub n_features: usize,
    pub support: Vec<usize>,
    pub groups: BTreeMap<usize, Vec<usize>>,
    pub per_constraint: Vec<ConstraintMask>,
    pub trace: Vec<TraceEntry>,
    pub stop_reason: StopReason,
    pub scores_final: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<SvmModel>,
    /// What the embedded classifier was trained on:
    /// "support" or "support+affiliated".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_trained_on: Option<String>,
}

impl ModelFile {
    pub fn assemble(
        model: &SelectionModel,
        state: &FitState,
        classifier: Option<(SvmModel, bool)>,
    ) -> Self {
        let (classifier, classifier_trained_on) = match classifier {
            Some((svm, with_affiliated)) => (
                Some(svm),
                Some(
                    if with_affiliated {
                        "support+affiliated"
                    } else {
                        "support"
                    }
                    .to_string(),
                ),
            ),
            None => (None, None),
        };
        ModelFile {
            version: MODEL_SCHEMA_VERSION.to_string(),
            config: model.config.clone(),
            n_features: model.n_features,
            support: model.support.clone(),
            groups: model.groups.clone(),
            per_constraint: model.per_constraint.clone(),
            trace: state.trace.clone(),
            stop_reason: state.stop_reason,
            scores_final: model.scores_final.clone(),
            classifier,
            classifier_trained_on,
        }
    }

    pub fn selection_model(&self) -> SelectionModel {
        SelectionModel {
            support: self.support.clone(),
            groups: self.groups.clone(),
            per_constraint: self.per_constraint.clone(),
            scores_final: self.scores_final.clone(),
            config: self.config.clone(),
            n_features: self.n_features,
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save_atomic<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = self.to_json_pretty()?;
        write_atomic(path.as_ref(), json.as_bytes())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let bytes = fs::read(path)?;
        let file: ModelFile = serde_json::from_slice(&bytes)?;
        if file.version != MODEL_SCHEMA_VERSION {
            return Err(GdmError::ModelFile(format!(
                "unsupported schema version '{}' (expected '{}')",
                file.version, MODEL_SCHEMA_VERSION
            )));
        }
        Ok(file)
    }
}

/// Write via a temporary sibling file and rename, so readers never observe
/// partial content and failures leave the target untouched.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseDataset;
    use crate::gdm::{final_classifier, fit};

    fn toy_model() -> ModelFile {
        let labels: Vec<i8> = (0..12).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let cols: Vec<Vec<f64>> = vec![
            labels.iter().map(|&y| f64::from(y)).collect(),
            (0..12).map(|i| (i as f64 * 0.7).sin()).collect(),
            (0..12).map(|i| (i as f64 * 1.3).cos()).collect(),
        ];
        let ds = SparseDataset::from_dense_columns(&cols, labels).unwrap();
        let config = crate::gdm::GdmConfig::new(2);
        let (model, state) = fit(&ds, &config).unwrap();
        let svm = final_classifier(&ds, &model, &config, false, false).unwrap();
        ModelFile::assemble(&model, &state, Some((svm, false)))
    }

    #[test]
    fn json_roundtrip() {
        let file = toy_model();
        let json = file.to_json_pretty().unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(file, back);
        assert!(json.contains("\"version\": \"gdm-model/1\""));
    }

    #[test]
    fn save_and_load_atomic() {
        let file = toy_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        file.save_atomic(&path).unwrap();
        let loaded = ModelFile::load(&path).unwrap();
        assert_eq!(file, loaded);
        // no temp file remains
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut file = toy_model();
        file.version = "gdm-model/999".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(ModelFile::load(&path), Err(GdmError::ModelFile(_))));
    }
}
