use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, ModelConfig, ModelError, TaskKind};
use crate::chemio::MolecularSystem;
use crate::diffcore::{encode_checkpoint, load_checkpoint, ParamStore, Real, SparsePattern, Tape, Tensor, Var};
use crate::graphbuild::{build_graph, GraphTensors};
use crate::layers::{message_pass, sum_selected, EdgeMessageNet, FcStack, GatherGate, GruCell};

/// Message passing rounds followed by a per-row gather gate.
#[derive(Clone, Debug)]
struct Stage {
    messages: EdgeMessageNet,
    gru: GruCell,
    gate: GatherGate,
    layers: usize,
    /// Use only the bond slices of the graph.
    bond_only: bool,
}

impl Stage {
    /// Returns the gated per-row features, `N × gate width`.
    fn forward<T: Real>(&self, tape: &mut Tape<T>, g: &PreparedGraph<T>, h0: Var) -> Result<Var, ModelError> {
        let slices = if self.bond_only { &g.patterns[..g.n_bond_types] } else { &g.patterns[..] };
        let mut h = h0;
        for _ in 0..self.layers {
            let m = message_pass(tape, slices, h, &self.messages)?;
            h = self.gru.forward(tape, h, m)?;
        }
        Ok(self.gate.gate_rows(tape, h, h0)?)
    }
}

/// A graph ready for repeated forward passes: features plus one sparse
/// pattern per edge type.
#[derive(Clone, Debug)]
pub struct PreparedGraph<T: Real = f32> {
    x: Tensor<T>,
    patterns: Vec<Arc<SparsePattern>>,
    n_bond_types: usize,
    n_ligand: usize,
}

impl<T: Real> PreparedGraph<T> {
    pub fn n_atoms(&self) -> usize {
        self.x.rows()
    }

    pub fn n_ligand(&self) -> usize {
        self.n_ligand
    }

    pub fn cast<U: Real>(&self) -> PreparedGraph<U> {
        PreparedGraph {
            x: self.x.cast(),
            patterns: self.patterns.clone(),
            n_bond_types: self.n_bond_types,
            n_ligand: self.n_ligand,
        }
    }
}

/// PotentialNet family model with its parameters.
#[derive(Clone, Debug)]
pub struct PotentialNet<T: Real = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    stages: Vec<Stage>,
    head: FcStack,
}

impl<T: Real> PotentialNet<T> {
    /// Builds and initializes a model from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let f_in = config.f_in();
        let n_et = config.schema.n_edge_types();
        let n_bt = config.schema.bond_types.len();
        let kind = config.message;
        let mut stages = Vec::new();
        let head_in = match config.mode {
            Mode::Staged | Mode::LigandOnly => {
                let bond = Stage {
                    messages: EdgeMessageNet::new(&mut params, "bond.msg", n_bt, f_in, kind, &mut rng)?,
                    gru: GruCell::new(&mut params, "bond.gru", f_in, &mut rng)?,
                    gate: GatherGate::new(&mut params, "bond.gate", f_in, f_in, config.f_bond, &mut rng)?,
                    layers: config.bond_k,
                    bond_only: true,
                };
                let mut out = config.f_bond;
                if config.spatial_k > 0 {
                    let f = config.f_bond;
                    let messages = if config.share_bond_messages {
                        let own = EdgeMessageNet::new(&mut params, "spatial.msg", n_et - n_bt, f, kind, &mut rng)?;
                        let mut nets = bond.messages.nets.clone();
                        nets.extend(own.nets);
                        EdgeMessageNet { nets, width: f }
                    } else {
                        EdgeMessageNet::new(&mut params, "spatial.msg", n_et, f, kind, &mut rng)?
                    };
                    let spatial = Stage {
                        messages,
                        gru: GruCell::new(&mut params, "spatial.gru", f, &mut rng)?,
                        gate: GatherGate::new(&mut params, "spatial.gate", f, f, config.f_spatial, &mut rng)?,
                        layers: config.spatial_k,
                        bond_only: false,
                    };
                    out = config.f_spatial;
                    stages.push(bond);
                    stages.push(spatial);
                } else {
                    stages.push(bond);
                }
                out
            }
            Mode::SingleUpdate => {
                stages.push(Stage {
                    messages: EdgeMessageNet::new(&mut params, "spatial.msg", n_et, f_in, kind, &mut rng)?,
                    gru: GruCell::new(&mut params, "spatial.gru", f_in, &mut rng)?,
                    gate: GatherGate::new(&mut params, "spatial.gate", f_in, f_in, config.f_spatial, &mut rng)?,
                    layers: config.spatial_k,
                    bond_only: false,
                });
                config.f_spatial
            }
            Mode::GgnnPlain => {
                stages.push(Stage {
                    messages: EdgeMessageNet::new(&mut params, "graph.msg", n_et, f_in, kind, &mut rng)?,
                    gru: GruCell::new(&mut params, "graph.gru", f_in, &mut rng)?,
                    gate: GatherGate::new(&mut params, "graph.gate", f_in, f_in, config.f_gather, &mut rng)?,
                    layers: config.k,
                    bond_only: false,
                });
                config.f_gather
            }
        };
        let head = FcStack::new(&mut params, "fc", head_in, &config.fc_widths, &mut rng)?;
        Ok(PotentialNet { config, params, stages, head })
    }

    /// Same architecture with parameters converted to another precision.
    pub fn cast<U: Real>(&self) -> PotentialNet<U> {
        PotentialNet { config: self.config.clone(), params: self.params.cast(), stages: self.stages.clone(), head: self.head.clone() }
    }

    /// Checks the graph against the model's schema and feature width and
    /// builds its sparse patterns. In ligand-only mode the protein block is
    /// dropped here.
    pub fn prepare(&self, g: &GraphTensors) -> Result<PreparedGraph<T>, ModelError> {
        let schema = &self.config.schema;
        if g.n_edge_types() != schema.n_edge_types() || g.n_bond_types() != schema.bond_types.len() {
            return Err(ModelError::Schema(format!(
                "graph has {} edge types ({} bond), model expects {} ({} bond)",
                g.n_edge_types(),
                g.n_bond_types(),
                schema.n_edge_types(),
                schema.bond_types.len()
            )));
        }
        if g.f_in() != self.config.f_in() {
            return Err(ModelError::Schema(format!("feature width {} but model expects {}", g.f_in(), self.config.f_in())));
        }
        let sub;
        let g = if self.config.mode == Mode::LigandOnly && g.n_ligand() < g.n_atoms() {
            sub = g.ligand_subgraph();
            &sub
        } else {
            g
        };
        Ok(PreparedGraph { x: g.x().cast(), patterns: g.patterns(), n_bond_types: g.n_bond_types(), n_ligand: g.n_ligand() })
    }

    /// Featurizes and prepares a system with the model's vocabulary and schema.
    pub fn prepare_system(&self, system: &MolecularSystem) -> Result<PreparedGraph<T>, ModelError> {
        let g = build_graph(system, &self.config.vocab, &self.config.schema)?;
        self.prepare(&g)
    }

    /// Raw `1 × T` output (logits for classification).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        g: &PreparedGraph<T>,
        train: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let x = tape.constant(g.x.clone());
        let mut h = x;
        for stage in &self.stages {
            h = stage.forward(tape, g, h)?;
        }
        let rows: Vec<usize> = match self.config.mode {
            Mode::GgnnPlain => (0..g.n_atoms()).collect(),
            _ => (0..g.n_ligand).collect(),
        };
        let pooled = sum_selected(tape, h, &rows)?;
        Ok(self.head.forward(tape, pooled, self.config.dropout, train, rng)?)
    }

    /// Eval-mode predictions, one row per graph. Classification outputs are
    /// probabilities.
    pub fn predict(&self, g: &PreparedGraph<T>) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, g, false, &mut rng)?;
        let raw = tape.value(out).data().iter().map(|v| v.as_f64());
        Ok(match self.config.task_kind {
            TaskKind::Regression => raw.collect(),
            TaskKind::MultitaskClassification => raw.map(|z| 1.0 / (1.0 + (-z).exp())).collect(),
        })
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        encode_checkpoint(&self.params)
    }

    /// Rebuilds the model from its config and restores checkpointed weights.
    pub fn from_checkpoint(config: ModelConfig, bytes: &[u8]) -> Result<Self, ModelError> {
        let mut model = Self::new(config)?;
        load_checkpoint(&mut model.params, bytes)?;
        Ok(model)
    }
}

/// Predictions for a batch of systems in input order. Failures carry the
/// offending sample id.
pub fn predict_batch(model: &PotentialNet<f32>, systems: &[MolecularSystem]) -> Result<Tensor<f64>, ModelError> {
    use rayon::prelude::*;
    let rows: Vec<Vec<f64>> = systems
        .par_iter()
        .map(|s| {
            model
                .prepare_system(s)
                .and_then(|g| model.predict(&g))
                .map_err(|e| ModelError::Sample { id: s.sample_id.clone(), source: Box::new(e) })
        })
        .collect::<Result<_, _>>()?;
    let t = model.config.n_tasks;
    Ok(Tensor::matrix(rows.len(), t, rows.concat()).expect("prediction rows have n_tasks columns"))
}
