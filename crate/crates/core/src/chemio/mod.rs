//! Molecular file ingestion: SDF (V2000), PDB, label CSV, and per-atom featurization.

pub mod elements;
mod featurize;
mod labels;
mod pdb;
mod sdf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use featurize::{feature_width, featurize, ElementVocab, FEATURE_TAIL};
pub use labels::{load_labels, LabelTable};
pub use pdb::{parse_pdb, parse_pdb_structure, COVALENT_TOLERANCE};
pub use sdf::{parse_sdf, write_sdf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChemError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown element symbol {symbol:?}")]
    UnknownElement { line: usize, symbol: String },
    #[error("line {line}: truncated record ({what})")]
    Truncated { line: usize, what: String },
    #[error("line {line}: missing element column")]
    MissingElement { line: usize },
    #[error("no atoms with residue name {0:?}")]
    NoLigand(String),
    #[error("labels line {line}: {msg}")]
    Labels { line: usize, msg: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("invalid molecular system: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Hybridization {
    S,
    Sp,
    Sp2,
    Sp3,
    Sp3d,
    Sp3d2,
    #[default]
    Other,
}

impl Hybridization {
    pub const ALL: [Hybridization; 7] = [
        Hybridization::S,
        Hybridization::Sp,
        Hybridization::Sp2,
        Hybridization::Sp3,
        Hybridization::Sp3d,
        Hybridization::Sp3d2,
        Hybridization::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's bond-order sum.
    pub fn valence(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    /// Atomic number, ≥ 1.
    pub element: u8,
    pub formal_charge: i32,
    pub hybridization: Hybridization,
    pub is_aromatic: bool,
    /// Number of explicit bonds.
    pub degree: u32,
    pub total_hydrogens: u32,
    pub implicit_hydrogens: u32,
    pub radical_electrons: u32,
    /// Cartesian position in Å.
    pub position: [f64; 3],
    /// Residue name for atoms read from PDB records.
    pub residue: Option<String>,
}

impl Atom {
    pub fn new(element: u8, position: [f64; 3]) -> Self {
        Atom {
            element,
            formal_charge: 0,
            hybridization: Hybridization::Other,
            is_aromatic: false,
            degree: 0,
            total_hydrogens: 0,
            implicit_hydrogens: 0,
            radical_electrons: 0,
            position,
            residue: None,
        }
    }

    pub fn is_hydrogen(&self) -> bool {
        self.element == 1
    }

    pub fn distance(&self, other: &Atom) -> f64 {
        let d = [
            self.position[0] - other.position[0],
            self.position[1] - other.position[1],
            self.position[2] - other.position[2],
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

/// Atoms and bonds without a ligand partition, e.g. a receptor read on its own.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Structure {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

/// One sample: ligand atoms occupy `[0, n_ligand)`, protein atoms follow.
#[derive(Clone, Debug, PartialEq)]
pub struct MolecularSystem {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    n_ligand: usize,
    pub sample_id: String,
    pub labels: Vec<Option<f64>>,
}

impl MolecularSystem {
    /// Validates bond indices, uniqueness of bonded pairs, the ligand count and
    /// finiteness of coordinates.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>, n_ligand: usize, sample_id: impl Into<String>) -> Result<Self, ChemError> {
        let n = atoms.len();
        if n_ligand == 0 || n_ligand > n {
            return Err(ChemError::Invalid(format!("n_ligand {n_ligand} outside [1, {n}]")));
        }
        let mut seen = std::collections::HashSet::with_capacity(bonds.len());
        for b in &bonds {
            if b.i == b.j || b.i >= n || b.j >= n {
                return Err(ChemError::Invalid(format!("bond ({}, {}) invalid for {n} atoms", b.i, b.j)));
            }
            if !seen.insert((b.i.min(b.j), b.i.max(b.j))) {
                return Err(ChemError::Invalid(format!("duplicate bond ({}, {})", b.i, b.j)));
            }
        }
        for (k, a) in atoms.iter().enumerate() {
            if a.element == 0 {
                return Err(ChemError::Invalid(format!("atom {k} has atomic number 0")));
            }
            if !a.position.iter().all(|c| c.is_finite()) {
                return Err(ChemError::Invalid(format!("atom {k} has non-finite coordinates")));
            }
            if a.implicit_hydrogens > a.total_hydrogens {
                return Err(ChemError::Invalid(format!("atom {k}: implicit hydrogens exceed total")));
            }
        }
        Ok(MolecularSystem { atoms, bonds, n_ligand, sample_id: sample_id.into(), labels: Vec::new() })
    }

    /// Ligand-only system (`n_ligand = N`).
    pub fn ligand(atoms: Vec<Atom>, bonds: Vec<Bond>, sample_id: impl Into<String>) -> Result<Self, ChemError> {
        let n = atoms.len();
        Self::new(atoms, bonds, n, sample_id)
    }

    /// Places the ligand block first and appends the protein atoms.
    pub fn from_complex(ligand: &MolecularSystem, protein: &Structure) -> Result<Self, ChemError> {
        let offset = ligand.atoms.len();
        let mut atoms = ligand.atoms.clone();
        atoms.extend(protein.atoms.iter().cloned());
        let mut bonds = ligand.bonds.clone();
        bonds.extend(protein.bonds.iter().map(|b| Bond { i: b.i + offset, j: b.j + offset, order: b.order }));
        let mut sys = Self::new(atoms, bonds, offset, ligand.sample_id.clone())?;
        sys.labels = ligand.labels.clone();
        Ok(sys)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_ligand(&self) -> usize {
        self.n_ligand
    }

    pub fn is_ligand_only(&self) -> bool {
        self.n_ligand == self.atoms.len()
    }

    /// Keeps the atoms whose index satisfies `keep`, remapping bonds.
    /// At least one ligand atom must survive.
    pub fn retain_atoms(&self, keep: impl Fn(usize, &Atom) -> bool) -> Result<Self, ChemError> {
        let mut map = vec![usize::MAX; self.atoms.len()];
        let mut atoms = Vec::new();
        let mut n_ligand = 0;
        for (k, a) in self.atoms.iter().enumerate() {
            if keep(k, a) {
                map[k] = atoms.len();
                atoms.push(a.clone());
                if k < self.n_ligand {
                    n_ligand += 1;
                }
            }
        }
        let bonds = self
            .bonds
            .iter()
            .filter(|b| map[b.i] != usize::MAX && map[b.j] != usize::MAX)
            .map(|b| Bond { i: map[b.i], j: map[b.j], order: b.order })
            .collect();
        let mut sys = Self::new(atoms, bonds, n_ligand, self.sample_id.clone())?;
        sys.labels = self.labels.clone();
        Ok(sys)
    }

    /// Removes explicit hydrogens. Each removed hydrogen is counted as an
    /// implicit hydrogen of its heavy neighbour; `degree` is recomputed.
    pub fn strip_hydrogens(&self) -> Result<Self, ChemError> {
        let mut atoms = self.atoms.clone();
        for b in &self.bonds {
            let (hi, hj) = (atoms[b.i].is_hydrogen(), atoms[b.j].is_hydrogen());
            if hi && !hj {
                atoms[b.j].implicit_hydrogens += 1;
                atoms[b.j].degree = atoms[b.j].degree.saturating_sub(1);
            } else if hj && !hi {
                atoms[b.i].implicit_hydrogens += 1;
                atoms[b.i].degree = atoms[b.i].degree.saturating_sub(1);
            }
        }
        for a in &mut atoms {
            a.total_hydrogens = a.total_hydrogens.max(a.implicit_hydrogens);
        }
        let stripped = MolecularSystem {
            atoms,
            bonds: self.bonds.clone(),
            n_ligand: self.n_ligand,
            sample_id: self.sample_id.clone(),
            labels: self.labels.clone(),
        };
        stripped.retain_atoms(|_, a| !a.is_hydrogen())
    }
}

/// Recomputes `degree` and the explicit part of `total_hydrogens` from bonds.
pub(crate) fn assign_connectivity(atoms: &mut [Atom], bonds: &[Bond]) {
    let mut explicit_h = vec![0u32; atoms.len()];
    for a in atoms.iter_mut() {
        a.degree = 0;
    }
    for b in bonds {
        atoms[b.i].degree += 1;
        atoms[b.j].degree += 1;
        if atoms[b.j].is_hydrogen() {
            explicit_h[b.i] += 1;
        }
        if atoms[b.i].is_hydrogen() {
            explicit_h[b.j] += 1;
        }
    }
    for (a, h) in atoms.iter_mut().zip(explicit_h) {
        a.total_hydrogens = h + a.implicit_hydrogens;
    }
}
