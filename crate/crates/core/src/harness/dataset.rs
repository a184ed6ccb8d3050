use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::binio::{put_f64, put_str, put_u32, Reader};
use crate::chemio::{feature_width, ElementVocab, MolecularSystem};
use crate::graphbuild::{build_graph, decode_graph, encode_graph, EdgeSchema, GraphTensors};
use crate::potentialnet::ModelConfig;

pub const DATASET_MAGIC: &[u8; 4] = b"SGCD";
pub const DATASET_VERSION: u32 = 1;

/// Featurization settings shared by every graph of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub tasks: Vec<String>,
    pub schema: EdgeSchema,
    pub vocab: ElementVocab,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub graph: GraphTensors,
    /// One entry per task; `None` where the label is missing.
    pub labels: Vec<Option<f64>>,
}

/// Featurized graphs with labels, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Builds one graph per system; `labels` come from each system's own
    /// `labels` field, which must have one entry per task.
    pub fn from_systems(systems: &[MolecularSystem], meta: DatasetMeta) -> Result<Self, HarnessError> {
        use rayon::prelude::*;
        meta.schema.validate()?;
        let samples = systems
            .par_iter()
            .map(|s| {
                let graph = build_graph(s, &meta.vocab, &meta.schema)?;
                Ok(Sample { id: s.sample_id.clone(), graph, labels: s.labels.clone() })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let data = Dataset { meta, samples };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Dataset(msg));
        self.meta.schema.validate()?;
        if self.meta.tasks.is_empty() {
            return bad("dataset has no tasks".into());
        }
        let f_in = feature_width(&self.meta.vocab);
        let mut seen = HashSet::new();
        for s in &self.samples {
            if s.id.is_empty() {
                return bad("empty sample id".into());
            }
            if !seen.insert(s.id.as_str()) {
                return bad(format!("duplicate sample id {:?}", s.id));
            }
            if s.labels.len() != self.meta.tasks.len() {
                return bad(format!("sample {:?} has {} labels for {} tasks", s.id, s.labels.len(), self.meta.tasks.len()));
            }
            if s.labels.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("sample {:?} has a non-finite label", s.id));
            }
            if s.graph.n_edge_types() != self.meta.schema.n_edge_types()
                || s.graph.n_bond_types() != self.meta.schema.bond_types.len()
                || s.graph.f_in() != f_in
            {
                return bad(format!("sample {:?} does not match the dataset schema", s.id));
            }
        }
        Ok(())
    }

    /// Errors unless graphs built for this dataset fit `config`.
    pub fn check_compatible(&self, config: &ModelConfig) -> Result<(), HarnessError> {
        if self.meta.schema != config.schema {
            return Err(HarnessError::Schema("dataset edge schema differs from the model's".into()));
        }
        if self.meta.vocab != config.vocab {
            return Err(HarnessError::Schema("dataset element vocabulary differs from the model's".into()));
        }
        if self.meta.tasks.len() != config.n_tasks {
            return Err(HarnessError::Schema(format!(
                "dataset has {} tasks, model predicts {}",
                self.meta.tasks.len(),
                config.n_tasks
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = DATASET_MAGIC.to_vec();
        put_u32(&mut out, DATASET_VERSION);
        put_str(&mut out, &serde_json::to_string(&self.meta).expect("meta serializes"));
        put_u32(&mut out, self.samples.len() as u32);
        for s in &self.samples {
            put_str(&mut out, &s.id);
            for l in &s.labels {
                match l {
                    Some(v) => {
                        out.push(1);
                        put_f64(&mut out, *v);
                    }
                    None => out.push(0),
                }
            }
            let g = encode_graph(&s.graph);
            put_u32(&mut out, g.len() as u32);
            out.extend_from_slice(&g);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, HarnessError> {
        let corrupt = |msg: String| HarnessError::Dataset(msg);
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(corrupt)? != DATASET_MAGIC {
            return Err(corrupt("not a dataset file (bad magic)".into()));
        }
        let version = r.u32().map_err(corrupt)?;
        if version != DATASET_VERSION {
            return Err(corrupt(format!("unsupported dataset version {version}")));
        }
        let meta: DatasetMeta = serde_json::from_str(&r.string().map_err(corrupt)?)
            .map_err(|e| corrupt(format!("metadata: {e}")))?;
        let n = r.u32().map_err(corrupt)? as usize;
        // every sample needs at least an id length and a graph length
        if n > r.remaining() / 8 {
            return Err(corrupt(format!("{n} samples cannot fit in {} bytes", r.remaining())));
        }
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let id = r.string().map_err(corrupt)?;
            let mut labels = Vec::with_capacity(meta.tasks.len());
            for _ in 0..meta.tasks.len() {
                labels.push(match r.u8().map_err(corrupt)? {
                    0 => None,
                    1 => Some(r.f64().map_err(corrupt)?),
                    f => return Err(corrupt(format!("invalid label flag {f}"))),
                });
            }
            let len = r.u32().map_err(corrupt)? as usize;
            let graph = decode_graph(r.take(len).map_err(corrupt)?)?;
            samples.push(Sample { id, graph, labels });
        }
        r.finish().map_err(corrupt)?;
        let data = Dataset { meta, samples };
        data.validate()?;
        Ok(data)
    }
}
