//! Fold construction: random splits and homology splits that keep whole
//! Ward clusters of similar proteins inside a single fold.

mod sequence;
mod ward;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sequence::{identity_distances, parse_fasta, sequence_identity};
pub use ward::{ward_cluster, ward_linkage, Cut, Merge};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("sequence error: {0}")]
    Sequence(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid distance matrix: {0}")]
    Matrix(String),
    #[error("invalid fractions: {0}")]
    Fractions(String),
    #[error("invalid cut: {0}")]
    Cut(String),
    #[error("invalid fold assignment: {0}")]
    Folds(String),
}

const SYMMETRY_TOL: f64 = 1e-9;

/// Square matrix of pairwise dissimilarities in `[0, 1]`, indexed like `ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Checks the shape, unique ids, zero diagonal, range and symmetry (to
    /// 1e-9; the two halves are then averaged).
    pub fn new(ids: Vec<String>, mut data: Vec<f64>) -> Result<Self, SplitError> {
        let n = ids.len();
        if data.len() != n * n {
            return Err(SplitError::Matrix(format!("{} entries for {n} ids", data.len())));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(SplitError::Matrix(format!("duplicate id {id:?}")));
            }
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(SplitError::Matrix(format!("nonzero diagonal at {:?}", ids[i])));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(SplitError::Matrix(format!("entry ({}, {}) = {v} outside [0, 1]", ids[i], ids[j])));
                }
            }
            for j in i + 1..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(SplitError::Matrix(format!("asymmetric at ({}, {}): {a} vs {b}", ids[i], ids[j])));
                }
                let m = 0.5 * (a + b);
                data[i * n + j] = m;
                data[j * n + i] = m;
            }
        }
        Ok(DistanceMatrix { ids, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.len() + j]
    }

    /// Parses a CSV whose header row and first column hold sample ids. Rows
    /// may appear in any order; they are matched to the header by id.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, SplitError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let mut records = reader.records();
        let csv_err = |e: csv::Error| SplitError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        };
        let header = records.next().ok_or(SplitError::Parse { line: 1, msg: "empty matrix file".into() })?;
        let header = header.map_err(csv_err)?;
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let n = ids.len();
        if n == 0 {
            return Err(SplitError::Parse { line: 1, msg: "header has no sample ids".into() });
        }
        let column: HashMap<&str, usize> = ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
        if column.len() != n {
            return Err(SplitError::Parse { line: 1, msg: "duplicate id in header".into() });
        }
        let mut data = vec![f64::NAN; n * n];
        let mut filled = vec![false; n];
        for rec in records {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if rec.len() != n + 1 {
                return Err(SplitError::Parse { line, msg: format!("expected {} fields, found {}", n + 1, rec.len()) });
            }
            let id = &rec[0];
            let &row = column.get(id).ok_or_else(|| SplitError::Parse { line, msg: format!("unknown id {id:?}") })?;
            if std::mem::replace(&mut filled[row], true) {
                return Err(SplitError::Parse { line, msg: format!("duplicate row {id:?}") });
            }
            for (j, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| SplitError::Parse { line, msg: format!("invalid number {field:?}") })?;
                if !v.is_finite() {
                    return Err(SplitError::Parse { line, msg: format!("non-finite value {field:?}") });
                }
                data[row * n + j] = v;
            }
        }
        if let Some(k) = filled.iter().position(|f| !f) {
            return Err(SplitError::Matrix(format!("missing row for {:?}", ids[k])));
        }
        DistanceMatrix::new(ids, data)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.len() {
                out.push(',');
                out.push_str(&self.get(i, j).to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fold {
    Train,
    Valid,
    Test,
}

impl Fold {
    pub const ALL: [Fold; 3] = [Fold::Train, Fold::Valid, Fold::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Valid => "valid",
            Fold::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Fold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fold {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, SplitError> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Fold::Train),
            "valid" | "validation" => Ok(Fold::Valid),
            "test" => Ok(Fold::Test),
            _ => Err(SplitError::Folds(format!("unknown fold {s:?}"))),
        }
    }
}

/// Target fractions of the train, validation and test folds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Fractions { train: 0.75, valid: 0.17, test: 0.08 }
    }
}

impl Fractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, SplitError> {
        let f = Fractions { train, valid, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        let v = self.as_array();
        if v.iter().any(|x| !(x.is_finite() && (0.0..=1.0).contains(x))) {
            return Err(SplitError::Fractions(format!("{v:?} must lie in [0, 1]")));
        }
        if (v.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(SplitError::Fractions(format!("{v:?} must sum to 1")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }

    pub fn max(&self) -> f64 {
        self.train.max(self.valid).max(self.test)
    }
}

impl FromStr for Fractions {
    type Err = SplitError;

    /// `"0.75,0.17,0.08"`.
    fn from_str(s: &str) -> Result<Self, SplitError> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(SplitError::Fractions(format!("expected three comma-separated values, got {s:?}")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| SplitError::Fractions(format!("invalid number {p:?}")))?;
        }
        Fractions::new(v[0], v[1], v[2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub target: [f64; 3],
    pub achieved: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_clusters: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Fold of every sample, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldAssignment {
    entries: Vec<(String, Fold)>,
    index: HashMap<String, usize>,
    pub provenance: Provenance,
}

impl FoldAssignment {
    fn build(entries: Vec<(String, Fold)>, method: &str, target: [f64; 3]) -> Result<Self, SplitError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (k, (id, _)) in entries.iter().enumerate() {
            if index.insert(id.clone(), k).is_some() {
                return Err(SplitError::Folds(format!("sample {id:?} assigned twice")));
            }
        }
        let mut fa = FoldAssignment {
            entries,
            index,
            provenance: Provenance { method: method.into(), target, achieved: [0.0; 3], n_clusters: None, warnings: vec![] },
        };
        let n = fa.len().max(1) as f64;
        let counts = fa.counts();
        fa.provenance.achieved = [counts[0] as f64 / n, counts[1] as f64 / n, counts[2] as f64 / n];
        Ok(fa)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<Fold> {
        self.index.get(id).map(|&k| self.entries[k].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Fold)> {
        self.entries.iter().map(|(id, f)| (id.as_str(), *f))
    }

    pub fn ids_in(&self, fold: Fold) -> Vec<&str> {
        self.iter().filter(|&(_, f)| f == fold).map(|(id, _)| id).collect()
    }

    /// Sample counts of train, validation and test.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for (_, f) in &self.entries {
            c[f.index()] += 1;
        }
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,fold\n");
        for (id, f) in &self.entries {
            out.push_str(id);
            out.push(',');
            out.push_str(f.as_str());
            out.push('\n');
        }
        out
    }

    /// Reads a `sample_id,fold` CSV.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, SplitError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let header = reader.headers().map_err(|e| SplitError::Parse { line: 1, msg: e.to_string() })?;
        if header.len() != 2 || &header[0] != "sample_id" || &header[1] != "fold" {
            return Err(SplitError::Parse { line: 1, msg: "header must be \"sample_id,fold\"".into() });
        }
        let mut entries = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| SplitError::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec[0].is_empty() {
                return Err(SplitError::Parse { line, msg: "empty sample id".into() });
            }
            let fold: Fold = rec[1].parse().map_err(|e: SplitError| SplitError::Parse { line, msg: e.to_string() })?;
            entries.push((rec[0].to_string(), fold));
        }
        let fa = FoldAssignment::build(entries, "file", [f64::NAN; 3])?;
        let mut fa = fa;
        fa.provenance.target = fa.provenance.achieved;
        Ok(fa)
    }
}

/// Uniform shuffle by `seed`, then contiguous quotas: `round(valid·N)`
/// validation samples, `round(test·N)` test samples, the remainder train.
pub fn random_split(ids: &[String], fractions: Fractions, seed: u64) -> Result<FoldAssignment, SplitError> {
    fractions.validate()?;
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = ((fractions.valid * n as f64).round() as usize).min(n);
    let n_test = ((fractions.test * n as f64).round() as usize).min(n - n_valid);
    let mut fold = vec![Fold::Train; n];
    for (rank, &k) in order.iter().enumerate() {
        if rank < n_valid {
            fold[k] = Fold::Valid;
        } else if rank < n_valid + n_test {
            fold[k] = Fold::Test;
        }
    }
    FoldAssignment::build(ids.iter().cloned().zip(fold).collect(), "random", fractions.as_array())
}

/// Packs whole clusters into folds: clusters by decreasing size (ties by
/// label) each go to the fold with the largest shortfall `target − count`,
/// ties broken at random from `seed`. A cluster larger than
/// `max(fractions)·N` is put in train with a warning.
pub fn assign_folds(
    ids: &[String],
    labels: &[usize],
    fractions: Fractions,
    seed: u64,
) -> Result<FoldAssignment, SplitError> {
    fractions.validate()?;
    if ids.len() != labels.len() {
        return Err(SplitError::Folds(format!("{} ids but {} cluster labels", ids.len(), labels.len())));
    }
    let n = ids.len();
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(k);
    }
    let mut clusters: Vec<(usize, Vec<usize>)> = members.into_iter().collect();
    clusters.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let target: Vec<f64> = fractions.as_array().iter().map(|f| f * n as f64).collect();
    let giant = fractions.max() * n as f64;
    let mut count = [0usize; 3];
    let mut fold = vec![Fold::Train; n];
    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (label, m) in &clusters {
        let chosen = if m.len() as f64 > giant {
            let msg = format!("cluster {label} holds {} of {n} samples; assigned to train", m.len());
            log::warn!("{msg}");
            warnings.push(msg);
            Fold::Train
        } else {
            let shortfall: Vec<f64> = (0..3).map(|f| target[f] - count[f] as f64).collect();
            let best = shortfall.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<Fold> =
                Fold::ALL.into_iter().filter(|f| best - shortfall[f.index()] <= 1e-9 * n.max(1) as f64).collect();
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.gen_range(0..tied.len())]
            }
        };
        count[chosen.index()] += m.len();
        for &k in m {
            fold[k] = chosen;
        }
    }
    let mut fa = FoldAssignment::build(ids.iter().cloned().zip(fold).collect(), "agglomerative", fractions.as_array())?;
    fa.provenance.n_clusters = Some(clusters.len());
    fa.provenance.warnings = warnings;
    Ok(fa)
}

/// Ward clustering of `d` followed by [`assign_folds`].
pub fn agglomerative_split(
    d: &DistanceMatrix,
    cut: Cut,
    fractions: Fractions,
    seed: u64,
) -> Result<FoldAssignment, SplitError> {
    let labels = ward_cluster(d, cut)?;
    assign_folds(d.ids(), &labels, fractions, seed)
}
