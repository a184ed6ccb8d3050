use serde::{Deserialize, Serialize};

use super::elements::{atomic_number, symbol};
use super::{ChemError, Hybridization, MolecularSystem};
use crate::diffcore::Tensor;

/// Columns after the element one-hot: formal charge, 7 hybridization slots,
/// aromatic flag, degree, total H, implicit H, radical electrons.
pub const FEATURE_TAIL: usize = 1 + 7 + 1 + 4;

/// Ordered element vocabulary; elements outside it share one trailing slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ElementVocab(Vec<u8>);

impl ElementVocab {
    pub fn new(elements: Vec<u8>) -> Self {
        ElementVocab(elements)
    }

    pub fn from_symbols<S: AsRef<str>>(symbols: &[S]) -> Result<Self, ChemError> {
        let mut out = Vec::with_capacity(symbols.len());
        for s in symbols {
            let z = atomic_number(s.as_ref())
                .ok_or_else(|| ChemError::UnknownElement { line: 0, symbol: s.as_ref().to_string() })?;
            if out.contains(&z) {
                return Err(ChemError::Invalid(format!("element {} listed twice in vocabulary", s.as_ref())));
            }
            out.push(z);
        }
        Ok(ElementVocab(out))
    }

    pub fn elements(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// One-hot slot for an element; the last slot (`len()`) means "other".
    pub fn slot(&self, z: u8) -> usize {
        self.0.iter().position(|&e| e == z).unwrap_or(self.0.len())
    }
}

impl Default for ElementVocab {
    /// Elements common in drug-like ligands and protein pockets.
    fn default() -> Self {
        ElementVocab(vec![1, 6, 7, 8, 9, 15, 16, 17, 35, 53])
    }
}

impl TryFrom<Vec<String>> for ElementVocab {
    type Error = ChemError;
    fn try_from(v: Vec<String>) -> Result<Self, ChemError> {
        ElementVocab::from_symbols(&v)
    }
}

impl From<ElementVocab> for Vec<String> {
    fn from(v: ElementVocab) -> Self {
        v.0.iter().map(|&z| symbol(z).to_string()).collect()
    }
}

/// Width of a feature row: `|vocab| + 1 + 1 + 7 + 1 + 4`.
pub fn feature_width(vocab: &ElementVocab) -> usize {
    vocab.len() + 1 + FEATURE_TAIL
}

/// Node feature matrix, one row per atom:
///
/// `[one-hot(element, |vocab|+1) | formal_charge | one-hot(hybridization, 7) |
///   is_aromatic | degree | total_hydrogens | implicit_hydrogens | radical_electrons]`
pub fn featurize(system: &MolecularSystem, vocab: &ElementVocab) -> Tensor<f32> {
    let width = feature_width(vocab);
    let n = system.n_atoms();
    let mut data = vec![0f32; n * width];
    for (row, atom) in data.chunks_mut(width).zip(system.atoms()) {
        row[vocab.slot(atom.element)] = 1.0;
        let tail = &mut row[vocab.len() + 1..];
        tail[0] = atom.formal_charge as f32;
        tail[1 + atom.hybridization.index()] = 1.0;
        tail[8] = if atom.is_aromatic { 1.0 } else { 0.0 };
        tail[9] = atom.degree as f32;
        tail[10] = atom.total_hydrogens as f32;
        tail[11] = atom.implicit_hydrogens as f32;
        tail[12] = atom.radical_electrons as f32;
    }
    debug_assert_eq!(Hybridization::ALL.len(), 7);
    Tensor::matrix(n, width, data).expect("feature matrix shape")
}
