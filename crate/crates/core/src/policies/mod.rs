//! Learnable components: subgoal classifier, object encoder, navigation,
//! interaction and flat policies, plus the loop-escape detector and the
//! navigation subgoal monitor.

mod cell;
mod features;
mod lem;
mod linear;
mod models;
mod monitor;
mod optim;
mod train;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{CellDims, RecurrentPolicyCell, SequenceStats, SparseVec, StepInput, StepOutput, StepTarget, PROGRESS_WEIGHTS};
pub use features::{
    featurize, flat_language, ip_language, language_features, nav_language, view_features, InputLayout, LanguageMode,
    StepContext, ViewMask, PER_CLASS, VIEW_DIM,
};
pub use lem::{detect_deadlock, escape_action, ObservationHistory};
pub use linear::LinearClassifier;
pub use models::{
    flat_index_of_interact, interaction_policy_step, FlatMask, nav_index, nav_policy_step, oem_predict, pcc_predict, FlatPolicy,
    FlatPolicyState, InteractionPolicy, InteractionPolicyState, NavPolicy, NavPolicyState, ObjectEncoder, PolicyInput,
    SubgoalClassifier, FLAT_OUTPUTS, FLAT_STOP, IP_OUTPUTS, MANIPULATE, NAV_OUTPUTS, STOP,
};
pub use monitor::{subgoal_monitor_check, MonitorNoise};
pub use optim::{argmax, clip_norm, sigmoid, softmax, Adam};
pub use train::{
    evaluate_cell, flat_sequence, ip_sequences, nav_sequence, oem_examples, pcc_examples, train_flat, train_imitation,
    train_interaction, train_nav, train_oem, train_pcc, DataOptions, Demonstration, ReplayedStep, Sequence,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub hidden: usize,
    pub l2: f64,
    pub clip: f64,
    /// Record a row before the first update.
    pub track_initial: bool,
    /// Evaluate the full training set after every epoch instead of only the last.
    pub track_every_epoch: bool,
    pub track_valid: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 10,
            batch: 32,
            seed: 0,
            hidden: 64,
            l2: 0.0,
            clip: 5.0,
            track_initial: true,
            track_every_epoch: false,
            track_valid: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub rows: Vec<LossRow>,
}

impl LossCurve {
    pub fn last(&self, split: &str) -> Option<&LossRow> {
        self.rows.iter().rev().find(|r| r.split == split)
    }

    pub fn first(&self, split: &str) -> Option<&LossRow> {
        self.rows.iter().find(|r| r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("loss rows serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }
}

/// Header written in front of every saved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub model_kind: String,
    pub dims: serde_json::Value,
    pub seed: u64,
    pub model: T,
}

pub fn save_checkpoint<T: Serialize>(path: &Path, model_kind: &str, dims: serde_json::Value, seed: u64, model: &T) -> Result<(), PolicyError> {
    let ck = Checkpoint { model_kind: model_kind.to_string(), dims, seed, model };
    let err = |reason: String| PolicyError::Checkpoint { path: path.display().to_string(), reason };
    let text = serde_json::to_string(&ck).map_err(|e| err(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| err(e.to_string()))
}

pub fn load_checkpoint<T: DeserializeOwned>(path: &Path, model_kind: &str) -> Result<Checkpoint<T>, PolicyError> {
    let err = |reason: String| PolicyError::Checkpoint { path: path.display().to_string(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let ck: Checkpoint<T> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    if ck.model_kind != model_kind {
        return Err(err(format!("expected a {model_kind} model, found {}", ck.model_kind)));
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let clf = LinearClassifier::random(3, 2, 0.5, 1);
        save_checkpoint(&path, "pcc", serde_json::json!({"in": 3, "out": 2}), 1, &clf).unwrap();
        let back: Checkpoint<LinearClassifier> = load_checkpoint(&path, "pcc").unwrap();
        assert_eq!(back.model, clf);
        assert!(load_checkpoint::<LinearClassifier>(&path, "oem").is_err());
    }

    #[test]
    fn loss_curve_csv_has_header() {
        let c = LossCurve { rows: vec![LossRow { epoch: 0, split: "train".into(), loss: 1.5, accuracy: 0.25 }] };
        assert_eq!(c.to_csv(), "epoch,split,loss,accuracy\n0,train,1.5,0.25\n");
    }
}
