use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::chemio::{feature_width, ElementVocab};
use crate::diffcore::OptimizerKind;
use crate::graphbuild::EdgeSchema;
use crate::layers::MessageKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Bond-only stage, then bond + spatial stage, then ligand gather.
    #[default]
    Staged,
    /// One stage over every edge type, then ligand gather.
    SingleUpdate,
    /// The staged model run on the ligand block alone.
    LigandOnly,
    /// Gated graph network over every edge type with a gather over all atoms.
    GgnnPlain,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Regression,
    MultitaskClassification,
}

/// Architecture and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    pub task_kind: TaskKind,
    pub n_tasks: usize,
    pub schema: EdgeSchema,
    pub vocab: ElementVocab,
    pub f_bond: usize,
    pub f_spatial: usize,
    pub bond_k: usize,
    pub spatial_k: usize,
    pub f_gather: usize,
    /// Layer count of the plain gated graph network.
    pub k: usize,
    /// Output widths of the FC layers; the last equals `n_tasks`.
    pub fc_widths: Vec<usize>,
    pub message: MessageKind,
    /// Reuse stage-1 bond message networks for the bond slices of stage 2.
    pub share_bond_messages: bool,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::Staged,
            task_kind: TaskKind::Regression,
            n_tasks: 1,
            schema: EdgeSchema::default(),
            vocab: ElementVocab::default(),
            f_bond: 64,
            f_spatial: 64,
            bond_k: 1,
            spatial_k: 1,
            f_gather: 64,
            k: 1,
            fc_widths: vec![64, 1],
            message: MessageKind::Mlp,
            share_bond_messages: false,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            dropout: 0.0,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let config: ModelConfig = serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn f_in(&self) -> usize {
        feature_width(&self.vocab)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        self.schema.validate().map_err(|e| ModelError::Config(e.to_string()))?;
        if self.n_tasks == 0 {
            return bad("n_tasks must be positive".into());
        }
        if self.fc_widths.last() != Some(&self.n_tasks) {
            return bad(format!("last FC width {:?} must equal n_tasks {}", self.fc_widths.last(), self.n_tasks));
        }
        if self.fc_widths.contains(&0) {
            return bad("FC widths must be positive".into());
        }
        let widths = match self.mode {
            Mode::GgnnPlain => vec![("f_gather", self.f_gather)],
            _ => vec![("f_bond", self.f_bond), ("f_spatial", self.f_spatial)],
        };
        for (name, w) in widths {
            if w == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.mode == Mode::SingleUpdate && self.spatial_k == 0 {
            return bad("single_update mode needs spatial_k >= 1".into());
        }
        if self.share_bond_messages && matches!(self.mode, Mode::Staged | Mode::LigandOnly) && self.f_in() != self.f_bond {
            return bad(format!(
                "sharing bond message networks needs f_bond ({}) equal to the feature width ({})",
                self.f_bond,
                self.f_in()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        Ok(())
    }
}
