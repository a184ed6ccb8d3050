//! Random molecules and complexes for tests, benchmarks and demos.

use rand::Rng;

use crate::chemio::{assign_connectivity, Atom, Bond, BondOrder, Hybridization, MolecularSystem};

const BOND_LENGTH: f64 = 1.5;

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Tree-shaped heavy-atom fragment grown from `origin`: each new atom bonds
/// to a random earlier one at 1.5 Å and keeps at least 1.3 Å from the rest.
fn fragment<R: Rng + ?Sized>(rng: &mut R, n: usize, origin: [f64; 3], avoid: &[[f64; 3]]) -> (Vec<Atom>, Vec<Bond>) {
    let elements = [6u8, 6, 6, 7, 8];
    let mut atoms = vec![Atom::new(elements[rng.gen_range(0..elements.len())], origin)];
    let mut bonds = Vec::new();
    let mut rejected = 0;
    while atoms.len() < n {
        let parent = rng.gen_range(0..atoms.len());
        let d = random_unit(rng);
        let p = atoms[parent].position;
        let pos = [p[0] + BOND_LENGTH * d[0], p[1] + BOND_LENGTH * d[1], p[2] + BOND_LENGTH * d[2]];
        let clash = atoms.iter().enumerate().any(|(k, a)| k != parent && dist(a.position, pos) < 1.3)
            || avoid.iter().any(|&q| dist(q, pos) < 1.3);
        // crowded regions eventually accept a close contact rather than loop forever
        if clash && rejected < 500 {
            rejected += 1;
            continue;
        }
        let order = if rng.gen_bool(0.2) { BondOrder::Double } else { BondOrder::Single };
        bonds.push(Bond { i: parent, j: atoms.len(), order });
        atoms.push(Atom::new(elements[rng.gen_range(0..elements.len())], pos));
    }
    (atoms, bonds)
}

fn finish(atoms: &mut [Atom], bonds: &[Bond]) {
    assign_connectivity(atoms, bonds);
    for (k, a) in atoms.iter_mut().enumerate() {
        let double = bonds.iter().any(|b| (b.i == k || b.j == k) && b.order == BondOrder::Double);
        a.hybridization = if double { Hybridization::Sp2 } else { Hybridization::Sp3 };
    }
}

/// Ligand-only molecule with `n` heavy atoms.
pub fn random_ligand<R: Rng + ?Sized>(rng: &mut R, n: usize, id: &str) -> MolecularSystem {
    let (mut atoms, bonds) = fragment(rng, n.max(1), [0.0; 3], &[]);
    finish(&mut atoms, &bonds);
    MolecularSystem::ligand(atoms, bonds, id).expect("generated ligand is valid")
}

/// Ligand of `n_ligand` atoms surrounded by `n_fragments` protein fragments of
/// `fragment_size` atoms, each started 3–5 Å from a random ligand atom.
pub fn random_complex<R: Rng + ?Sized>(
    rng: &mut R,
    n_ligand: usize,
    n_fragments: usize,
    fragment_size: usize,
    id: &str,
) -> MolecularSystem {
    let (mut atoms, mut bonds) = fragment(rng, n_ligand.max(1), [0.0; 3], &[]);
    let n_lig = atoms.len();
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_fragments && attempts < 1000 {
        attempts += 1;
        let anchor = atoms[rng.gen_range(0..n_lig)].position;
        let d = random_unit(rng);
        let r = rng.gen_range(3.0..5.0);
        let origin = [anchor[0] + r * d[0], anchor[1] + r * d[1], anchor[2] + r * d[2]];
        let existing: Vec<[f64; 3]> = atoms.iter().map(|a| a.position).collect();
        if existing.iter().any(|&q| dist(q, origin) < 2.6) {
            continue;
        }
        let (frag, frag_bonds) = fragment(rng, fragment_size.max(1), origin, &existing);
        let offset = atoms.len();
        atoms.extend(frag);
        bonds.extend(frag_bonds.into_iter().map(|b| Bond { i: b.i + offset, j: b.j + offset, order: b.order }));
        placed += 1;
    }
    for a in &mut atoms[n_lig..] {
        a.residue = Some("PRT".into());
    }
    finish(&mut atoms, &bonds);
    MolecularSystem::new(atoms, bonds, n_lig, id).expect("generated complex is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sizes_and_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lig = random_ligand(&mut rng, 9, "l");
        assert_eq!((lig.n_atoms(), lig.bonds().len()), (9, 8));
        let c = random_complex(&mut rng, 8, 3, 4, "c");
        assert_eq!((c.n_ligand(), c.n_atoms()), (8, 20));
        let atoms = c.atoms();
        for b in c.bonds() {
            assert!((atoms[b.i].distance(&atoms[b.j]) - 1.5).abs() < 1e-9);
            assert_eq!(b.i < 8, b.j < 8);
        }
    }
}
