//! Distance matrix and multi-edge-type adjacency in ligand-first block layout.

mod cache;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemio::{featurize, BondOrder, ChemError, ElementVocab, MolecularSystem};
use crate::diffcore::{SparsePattern, Tensor};

pub use cache::{decode_graph, encode_graph, GRAPH_MAGIC};

/// Protein atoms farther than this from every ligand atom are dropped, in Å.
pub const DEFAULT_POCKET_CUTOFF: f64 = 12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid edge schema: {0}")]
    Schema(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("graph cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Chem(#[from] ChemError),
}

/// Edge types: one slice per bond class followed by one per distance bin.
/// Bins are `(lo, hi]` in Å.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeSchema {
    pub bond_types: Vec<BondOrder>,
    pub distance_bins: Vec<(f64, f64)>,
}

impl Default for EdgeSchema {
    fn default() -> Self {
        EdgeSchema {
            bond_types: vec![BondOrder::Single, BondOrder::Double, BondOrder::Triple, BondOrder::Aromatic],
            distance_bins: vec![(0.0, 2.0), (2.0, 2.5), (2.5, 3.0), (3.0, 4.5)],
        }
    }
}

impl EdgeSchema {
    pub fn n_edge_types(&self) -> usize {
        self.bond_types.len() + self.distance_bins.len()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = Vec::new();
        for t in &self.bond_types {
            if seen.contains(t) {
                return Err(GraphError::Schema(format!("bond type {t:?} listed twice")));
            }
            seen.push(*t);
        }
        let mut prev_hi = f64::NEG_INFINITY;
        for &(lo, hi) in &self.distance_bins {
            if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
                return Err(GraphError::Schema(format!("bin ({lo}, {hi}] is not a finite increasing interval")));
            }
            if lo < prev_hi {
                return Err(GraphError::Schema(format!("bin ({lo}, {hi}] overlaps or precedes the previous bin")));
            }
            prev_hi = hi;
        }
        if self.n_edge_types() == 0 {
            return Err(GraphError::Schema("no edge types".into()));
        }
        Ok(())
    }

    /// Index of the bin containing `d`, if any.
    pub fn bin_of(&self, d: f64) -> Option<usize> {
        self.distance_bins.iter().position(|&(lo, hi)| d > lo && d <= hi)
    }
}

/// Node features, adjacency tensor and distance matrix of one sample.
///
/// `A` is stored densely as a bitset indexed `(i * N + j) * N_et + e`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTensors {
    x: Tensor<f32>,
    bits: Vec<u64>,
    r: Vec<f32>,
    n: usize,
    n_et: usize,
    n_bond_types: usize,
    n_ligand: usize,
}

impl GraphTensors {
    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn f_in(&self) -> usize {
        self.x.cols()
    }

    pub fn n_edge_types(&self) -> usize {
        self.n_et
    }

    pub fn n_bond_types(&self) -> usize {
        self.n_bond_types
    }

    pub fn n_ligand(&self) -> usize {
        self.n_ligand
    }

    pub fn x(&self) -> &Tensor<f32> {
        &self.x
    }

    pub fn r(&self, i: usize, j: usize) -> f32 {
        self.r[i * self.n + j]
    }

    pub fn distances(&self) -> &[f32] {
        &self.r
    }

    #[inline]
    fn bit(&self, i: usize, j: usize, e: usize) -> usize {
        (i * self.n + j) * self.n_et + e
    }

    pub fn a(&self, i: usize, j: usize, e: usize) -> bool {
        assert!(i < self.n && j < self.n && e < self.n_et, "adjacency index out of range");
        let k = self.bit(i, j, e);
        self.bits[k / 64] >> (k % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize, e: usize) {
        let k = self.bit(i, j, e);
        self.bits[k / 64] |= 1 << (k % 64);
    }

    /// Replaces the node features, keeping the row count.
    pub fn with_features(mut self, x: Tensor<f32>) -> Result<Self, GraphError> {
        if x.rows() != self.n {
            return Err(GraphError::Shape(format!("{} feature rows for {} atoms", x.rows(), self.n)));
        }
        self.x = x;
        Ok(self)
    }

    /// Neighbour lists of slice `e`, ascending.
    pub fn neighbors(&self, e: usize) -> Vec<Vec<u32>> {
        (0..self.n).map(|i| (0..self.n).filter(|&j| self.a(i, j, e)).map(|j| j as u32).collect()).collect()
    }

    /// One sparse pattern per edge type, for message passing.
    pub fn patterns(&self) -> Vec<Arc<SparsePattern>> {
        let mut rows = vec![vec![Vec::new(); self.n]; self.n_et];
        for i in 0..self.n {
            for j in 0..self.n {
                let base = (i * self.n + j) * self.n_et;
                for (e, slice) in rows.iter_mut().enumerate() {
                    let k = base + e;
                    if self.bits[k / 64] >> (k % 64) & 1 == 1 {
                        slice[i].push(j as u32);
                    }
                }
            }
        }
        rows.iter()
            .map(|r| Arc::new(SparsePattern::from_rows(self.n, r).expect("neighbour indices in range")))
            .collect()
    }

    /// Keeps the first `n_keep` atoms (a prefix in block order) and all edge types.
    pub fn prefix(&self, n_keep: usize) -> GraphTensors {
        let n_keep = n_keep.min(self.n);
        let f = self.f_in();
        let x = Tensor::matrix(n_keep, f, self.x.data()[..n_keep * f].to_vec()).expect("prefix rows");
        let mut out = GraphTensors::empty(x, n_keep, self.n_et, self.n_bond_types, self.n_ligand.min(n_keep));
        for i in 0..n_keep {
            for j in 0..n_keep {
                out.r[i * n_keep + j] = self.r(i, j);
                for e in 0..self.n_et {
                    if self.a(i, j, e) {
                        out.set(i, j, e);
                    }
                }
            }
        }
        out
    }

    /// The ligand block alone.
    pub fn ligand_subgraph(&self) -> GraphTensors {
        self.prefix(self.n_ligand)
    }

    fn empty(x: Tensor<f32>, n: usize, n_et: usize, n_bond_types: usize, n_ligand: usize) -> Self {
        let n_bits = n * n * n_et;
        GraphTensors {
            x,
            bits: vec![0; n_bits.div_ceil(64)],
            r: vec![0.0; n * n],
            n,
            n_et,
            n_bond_types,
            n_ligand,
        }
    }

    /// Checks the structural invariants: symmetric slices with zero diagonal,
    /// symmetric non-negative distances with zero diagonal, at most one
    /// distance slice per pair and finite features.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.n;
        if self.x.rows() != n || !self.x.all_finite() {
            return Err(GraphError::Shape("feature matrix has wrong row count or non-finite entries".into()));
        }
        if self.n_bond_types > self.n_et || self.n_ligand == 0 || self.n_ligand > n {
            return Err(GraphError::Shape("inconsistent edge-type or ligand counts".into()));
        }
        for i in 0..n {
            if self.r(i, i) != 0.0 {
                return Err(GraphError::Shape(format!("R[{i},{i}] is not zero")));
            }
            for e in 0..self.n_et {
                if self.a(i, i, e) {
                    return Err(GraphError::Shape(format!("self loop at atom {i} in slice {e}")));
                }
            }
            for j in i + 1..n {
                let d = self.r(i, j);
                if !(d.is_finite() && d >= 0.0) || d != self.r(j, i) {
                    return Err(GraphError::Shape(format!("R[{i},{j}] is not a symmetric distance")));
                }
                let mut dist_hits = 0;
                for e in 0..self.n_et {
                    if self.a(i, j, e) != self.a(j, i, e) {
                        return Err(GraphError::Shape(format!("slice {e} asymmetric at ({i},{j})")));
                    }
                    if e >= self.n_bond_types && self.a(i, j, e) {
                        dist_hits += 1;
                    }
                }
                if dist_hits > 1 {
                    return Err(GraphError::Shape(format!("pair ({i},{j}) in {dist_hits} distance slices")));
                }
            }
        }
        Ok(())
    }
}

/// Pairwise Euclidean distances (N × N, Å).
pub fn build_distance_matrix(system: &MolecularSystem) -> Tensor<f64> {
    let atoms = system.atoms();
    let n = atoms.len();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = atoms[i].distance(&atoms[j]);
            r[i * n + j] = d;
            r[j * n + i] = d;
        }
    }
    Tensor::matrix(n, n, r).expect("square distance matrix")
}

/// Fills bond slices from the system's bonds and distance slices from `r`
/// for non-bonded pairs. `x` supplies the node features.
pub fn build_adjacency(
    system: &MolecularSystem,
    r: &Tensor<f64>,
    schema: &EdgeSchema,
    x: Tensor<f32>,
) -> Result<GraphTensors, GraphError> {
    schema.validate()?;
    let n = system.n_atoms();
    if r.shape() != [n, n] {
        return Err(GraphError::Shape(format!("distance matrix {:?} for {n} atoms", r.shape())));
    }
    if x.rows() != n {
        return Err(GraphError::Shape(format!("{} feature rows for {n} atoms", x.rows())));
    }
    let n_bt = schema.bond_types.len();
    let mut g = GraphTensors::empty(x, n, schema.n_edge_types(), n_bt, system.n_ligand());
    for (dst, &d) in g.r.iter_mut().zip(r.data()) {
        *dst = d as f32;
    }
    let mut bonded = vec![false; n * n];
    for b in system.bonds() {
        bonded[b.i * n + b.j] = true;
        bonded[b.j * n + b.i] = true;
        if let Some(e) = schema.bond_types.iter().position(|&t| t == b.order) {
            g.set(b.i, b.j, e);
            g.set(b.j, b.i, e);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if bonded[i * n + j] {
                continue;
            }
            if let Some(bin) = schema.bin_of(r.at(i, j)) {
                g.set(i, j, n_bt + bin);
                g.set(j, i, n_bt + bin);
            }
        }
    }
    Ok(g)
}

/// Featurizes and builds all tensors for one system.
pub fn build_graph(system: &MolecularSystem, vocab: &ElementVocab, schema: &EdgeSchema) -> Result<GraphTensors, GraphError> {
    let r = build_distance_matrix(system);
    build_adjacency(system, &r, schema, featurize(system, vocab))
}

/// Keeps only the bond-type slices.
pub fn bond_only_view(g: &GraphTensors) -> GraphTensors {
    let nb = g.n_bond_types;
    let mut out = GraphTensors::empty(g.x.clone(), g.n, nb, nb, g.n_ligand);
    out.r.clone_from(&g.r);
    for i in 0..g.n {
        for j in 0..g.n {
            for e in 0..nb {
                if g.a(i, j, e) {
                    out.set(i, j, e);
                }
            }
        }
    }
    out
}

/// Drops protein atoms farther than `cutoff` Å from every ligand atom.
pub fn extract_pocket(system: &MolecularSystem, cutoff: f64) -> Result<MolecularSystem, GraphError> {
    if !(cutoff.is_finite() && cutoff >= 0.0) {
        return Err(GraphError::Schema(format!("pocket cutoff {cutoff} must be a finite non-negative distance")));
    }
    let atoms = system.atoms();
    let ligand = &atoms[..system.n_ligand()];
    let kept = system.retain_atoms(|k, a| k < ligand.len() || ligand.iter().any(|l| l.distance(a) <= cutoff))?;
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemio::{parse_sdf, Atom, Bond};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PROPANAMIDE: &str = include_str!("../../tests/data/propanamide.sdf");

    fn random_system(rng: &mut ChaCha8Rng, n: usize, n_ligand: usize) -> MolecularSystem {
        let atoms: Vec<Atom> = (0..n)
            .map(|_| Atom::new([6, 7, 8][rng.gen_range(0..3)], [rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)]))
            .collect();
        let mut bonds = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let same_block = (i < n_ligand) == (j < n_ligand);
                if same_block && atoms[i].distance(&atoms[j]) < 1.8 {
                    let order = [BondOrder::Single, BondOrder::Double, BondOrder::Aromatic][rng.gen_range(0..3)];
                    bonds.push(Bond { i, j, order });
                }
            }
        }
        MolecularSystem::new(atoms, bonds, n_ligand, "rand").unwrap()
    }

    fn permuted(system: &MolecularSystem, perm: &[usize]) -> MolecularSystem {
        // new index k holds old atom perm[k]
        let mut inverse = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inverse[p] = k;
        }
        let atoms = perm.iter().map(|&p| system.atoms()[p].clone()).collect();
        let bonds = system.bonds().iter().map(|b| Bond { i: inverse[b.i], j: inverse[b.j], order: b.order }).collect();
        MolecularSystem::new(atoms, bonds, system.n_ligand(), "perm").unwrap()
    }

    #[test]
    fn three_four_five() {
        let sys = MolecularSystem::ligand(vec![Atom::new(6, [0.0; 3]), Atom::new(6, [3.0, 4.0, 0.0])], vec![], "t").unwrap();
        let r = build_distance_matrix(&sys);
        assert_eq!(r.at(0, 1), 5.0);
        assert_eq!(r.at(1, 0), 5.0);
        let one = MolecularSystem::ligand(vec![Atom::new(6, [1.0; 3])], vec![], "t").unwrap();
        assert_eq!(build_distance_matrix(&one).data(), &[0.0]);
    }

    #[test]
    fn distance_matrix_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_system(&mut rng, 10, 10);
        let r = build_distance_matrix(&sys);
        for i in 0..10 {
            for j in 0..10 {
                let p = sys.atoms()[i].position;
                let q = sys.atoms()[j].position;
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                assert!((r.at(i, j) - d).abs() < 1e-12);
                assert_eq!(r.at(i, j), r.at(j, i));
            }
        }
    }

    #[test]
    fn propanamide_carbonyl_bond_row() {
        let sys = parse_sdf(PROPANAMIDE.as_bytes()).unwrap().remove(0);
        let g = build_graph(&sys, &ElementVocab::default(), &EdgeSchema::default()).unwrap();
        let row: Vec<u8> = (0..5).map(|j| (0..g.n_bond_types()).any(|e| g.a(2, j, e)) as u8).collect();
        assert_eq!(row, vec![0, 1, 0, 1, 1]);
        // C=O sits in the double-bond slice only.
        assert!(g.a(2, 3, 1) && !g.a(2, 3, 0));
    }

    #[test]
    fn far_pair_has_no_edges() {
        let sys = MolecularSystem::ligand(vec![Atom::new(6, [0.0; 3]), Atom::new(8, [10.0, 0.0, 0.0])], vec![], "t").unwrap();
        let g = build_graph(&sys, &ElementVocab::default(), &EdgeSchema::default()).unwrap();
        assert!((0..g.n_edge_types()).all(|e| !g.a(0, 1, e)));
    }

    #[test]
    fn bonded_pairs_excluded_from_distance_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let sys = random_system(&mut rng, 16, 6);
            let g = build_graph(&sys, &ElementVocab::default(), &EdgeSchema::default()).unwrap();
            g.validate().unwrap();
            let nb = g.n_bond_types();
            for i in 0..16 {
                for j in 0..16 {
                    let bonded = sys.bonds().iter().any(|b| (b.i, b.j) == (i, j) || (b.j, b.i) == (i, j));
                    let dist: Vec<usize> = (nb..g.n_edge_types()).filter(|&e| g.a(i, j, e)).collect();
                    assert!(dist.len() <= 1);
                    if bonded {
                        assert!(dist.is_empty());
                        assert!((0..nb).any(|e| g.a(i, j, e)));
                    } else {
                        assert!((0..nb).all(|e| !g.a(i, j, e)));
                        let d = sys.atoms()[i].distance(&sys.atoms()[j]);
                        let expect = if i == j { None } else { EdgeSchema::default().bin_of(d) };
                        assert_eq!(dist.first().map(|e| e - nb), expect);
                    }
                    if (i < 6) != (j < 6) {
                        assert!((0..nb).all(|e| !g.a(i, j, e)), "bond slice crosses blocks");
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 7, 20] {
            let sys = random_system(&mut rng, n, n);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let schema = EdgeSchema::default();
            let g = build_graph(&sys, &ElementVocab::default(), &schema).unwrap();
            let h = build_graph(&permuted(&sys, &perm), &ElementVocab::default(), &schema).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(h.r(i, j), g.r(perm[i], perm[j]));
                    for e in 0..g.n_edge_types() {
                        assert_eq!(h.a(i, j, e), g.a(perm[i], perm[j], e));
                    }
                }
            }
        }
    }

    #[test]
    fn bond_only_view_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = random_system(&mut rng, 12, 12);
        let g = build_graph(&sys, &ElementVocab::default(), &EdgeSchema::default()).unwrap();
        let v = bond_only_view(&g);
        assert_eq!(v.n_edge_types(), 4);
        assert_eq!(v.x(), g.x());
        assert_eq!(v.distances(), g.distances());
        assert_eq!(bond_only_view(&v), v);
        for i in 0..12 {
            for j in 0..12 {
                for e in 0..4 {
                    assert_eq!(v.a(i, j, e), g.a(i, j, e));
                }
            }
        }
    }

    #[test]
    fn schema_validation() {
        assert!(EdgeSchema::default().validate().is_ok());
        let overlap = EdgeSchema { distance_bins: vec![(0.0, 3.0), (2.0, 4.0)], ..Default::default() };
        assert!(overlap.validate().is_err());
        let open = EdgeSchema { distance_bins: vec![(0.0, f64::INFINITY)], ..Default::default() };
        assert!(open.validate().is_err());
        let bins = EdgeSchema::default();
        assert_eq!(bins.bin_of(2.0), Some(0));
        assert_eq!(bins.bin_of(2.0001), Some(1));
        assert_eq!(bins.bin_of(0.0), None);
        assert_eq!(bins.bin_of(4.5), Some(3));
        assert_eq!(bins.bin_of(4.6), None);
    }

    #[test]
    fn pocket_cutoff_drops_distant_protein_atoms() {
        let atoms = vec![Atom::new(6, [0.0; 3]), Atom::new(7, [5.0, 0.0, 0.0]), Atom::new(8, [30.0, 0.0, 0.0])];
        let sys = MolecularSystem::new(atoms, vec![], 1, "c").unwrap();
        let pocket = extract_pocket(&sys, DEFAULT_POCKET_CUTOFF).unwrap();
        assert_eq!(pocket.n_atoms(), 2);
        assert_eq!(pocket.n_ligand(), 1);
    }

    #[test]
    fn patterns_match_dense_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = random_system(&mut rng, 15, 8);
        let g = build_graph(&sys, &ElementVocab::default(), &EdgeSchema::default()).unwrap();
        let pats = g.patterns();
        for (e, p) in pats.iter().enumerate() {
            let rows = g.neighbors(e);
            for (i, row) in rows.iter().enumerate() {
                assert_eq!(p.row(i), row.as_slice());
            }
        }
        let lig = g.ligand_subgraph();
        assert_eq!(lig.n_atoms(), 8);
        lig.validate().unwrap();
    }
}
