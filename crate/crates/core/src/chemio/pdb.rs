//! Fixed-column PDB reader (ATOM/HETATM/CONECT).

use std::collections::{BTreeMap, HashMap};

use super::elements::{atomic_number, covalent_radius};
use super::{assign_connectivity, Atom, Bond, BondOrder, ChemError, MolecularSystem, Structure};

/// Slack added to the covalent-radius sum when inferring bonds, in Å.
pub const COVALENT_TOLERANCE: f64 = 0.4;

struct PdbAtom {
    serial: i64,
    resname: String,
    atom: Atom,
}

struct PdbFile {
    atoms: Vec<PdbAtom>,
    /// Unordered serial pair → listing count, taking the larger of the two directions.
    conect: BTreeMap<(i64, i64), u32>,
    id_code: String,
}

fn cols(line: &[u8], a: usize, b: usize) -> Option<&str> {
    let end = b.min(line.len());
    let start = a.min(end);
    std::str::from_utf8(&line[start..end]).ok().map(str::trim)
}

fn read_pdb(bytes: &[u8]) -> Result<PdbFile, ChemError> {
    let mut atoms = Vec::new();
    let mut directed: HashMap<(i64, i64), u32> = HashMap::new();
    let mut id_code = String::new();
    for (k, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = raw.strip_suffix(b"\r").unwrap_or(raw);
        let ln = k + 1;
        if line.starts_with(b"ENDMDL") {
            break;
        }
        if line.starts_with(b"HEADER") {
            id_code = cols(line, 62, 66).unwrap_or("").to_string();
            continue;
        }
        if line.starts_with(b"CONECT") {
            let parse = |a, b| cols(line, a, b).filter(|s| !s.is_empty()).map(|s| s.parse::<i64>());
            let Some(origin) = parse(6, 11) else { continue };
            let origin = origin.map_err(|_| ChemError::Parse { line: ln, msg: "bad CONECT serial".into() })?;
            for start in [11, 16, 21, 26] {
                if let Some(partner) = parse(start, start + 5) {
                    let partner = partner.map_err(|_| ChemError::Parse { line: ln, msg: "bad CONECT serial".into() })?;
                    if partner != origin {
                        *directed.entry((origin, partner)).or_insert(0) += 1;
                    }
                }
            }
            continue;
        }
        if !(line.starts_with(b"ATOM  ") || line.starts_with(b"HETATM")) {
            continue;
        }
        // Keep the first alternate location only.
        if let Some(&alt) = line.get(16) {
            if alt != b' ' && alt != b'A' {
                continue;
            }
        }
        let element = cols(line, 76, 78).unwrap_or("");
        if element.is_empty() {
            return Err(ChemError::MissingElement { line: ln });
        }
        let z = atomic_number(element).ok_or_else(|| ChemError::UnknownElement { line: ln, symbol: element.to_string() })?;
        let coord = |a, b| -> Result<f64, ChemError> {
            let s = cols(line, a, b).unwrap_or("");
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(ChemError::Parse { line: ln, msg: format!("bad coordinate {s:?}") }),
            }
        };
        let position = [coord(30, 38)?, coord(38, 46)?, coord(46, 54)?];
        let serial = cols(line, 6, 11)
            .and_then(|s| s.parse::<i64>().ok())
            .ok_or_else(|| ChemError::Parse { line: ln, msg: "bad atom serial".into() })?;
        let resname = cols(line, 17, 20).unwrap_or("").to_string();
        let mut atom = Atom::new(z, position);
        atom.formal_charge = parse_charge(cols(line, 78, 80).unwrap_or(""));
        atom.residue = Some(resname.clone());
        atoms.push(PdbAtom { serial, resname, atom });
    }
    let mut conect = BTreeMap::new();
    for (&(a, b), &count) in &directed {
        let key = (a.min(b), a.max(b));
        let entry = conect.entry(key).or_insert(0);
        *entry = (*entry).max(count);
    }
    Ok(PdbFile { atoms, conect, id_code })
}

fn parse_charge(s: &str) -> i32 {
    let b = s.as_bytes();
    if b.len() != 2 {
        return 0;
    }
    let mag = (b[0] as char).to_digit(10).unwrap_or(0) as i32;
    match b[1] {
        b'+' => mag,
        b'-' => -mag,
        _ => 0,
    }
}

/// Bonds for an ordered atom list: CONECT pairs first (listing count gives the
/// order, capped at triple), then covalent-radius inference inside each block.
/// Pairs across blocks are bonded only through CONECT.
fn build_bonds(atoms: &[&PdbAtom], blocks: &[(usize, usize)], conect: &BTreeMap<(i64, i64), u32>) -> Vec<Bond> {
    let index: HashMap<i64, usize> = atoms.iter().enumerate().map(|(k, a)| (a.serial, k)).collect();
    let mut listed = std::collections::HashSet::new();
    let mut bonds = Vec::new();
    for (&(a, b), &count) in conect {
        let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) else { continue };
        let order = match count {
            0 | 1 => BondOrder::Single,
            2 => BondOrder::Double,
            _ => BondOrder::Triple,
        };
        listed.insert((i.min(j), i.max(j)));
        bonds.push(Bond { i: i.min(j), j: i.max(j), order });
    }
    for &(start, end) in blocks {
        for i in start..end {
            let ri = covalent_radius(atoms[i].atom.element);
            for j in i + 1..end {
                if listed.contains(&(i, j)) {
                    continue;
                }
                let cutoff = ri + covalent_radius(atoms[j].atom.element) + COVALENT_TOLERANCE;
                if atoms[i].atom.distance(&atoms[j].atom) <= cutoff {
                    bonds.push(Bond { i, j, order: BondOrder::Single });
                }
            }
        }
    }
    bonds.sort_by_key(|b| (b.i, b.j));
    bonds
}

/// Reads a complex. Atoms whose residue name equals `ligand_resname` form the
/// ligand block at the front; everything else follows as the protein block.
pub fn parse_pdb(bytes: &[u8], ligand_resname: &str) -> Result<MolecularSystem, ChemError> {
    let file = read_pdb(bytes)?;
    let wanted = ligand_resname.trim();
    let (ligand, protein): (Vec<&PdbAtom>, Vec<&PdbAtom>) = file.atoms.iter().partition(|a| a.resname == wanted);
    if ligand.is_empty() {
        return Err(ChemError::NoLigand(wanted.to_string()));
    }
    let n_ligand = ligand.len();
    let ordered: Vec<&PdbAtom> = ligand.into_iter().chain(protein).collect();
    let blocks = [(0, n_ligand), (n_ligand, ordered.len())];
    let bonds = build_bonds(&ordered, &blocks, &file.conect);
    let mut atoms: Vec<Atom> = ordered.iter().map(|a| a.atom.clone()).collect();
    assign_connectivity(&mut atoms, &bonds);
    MolecularSystem::new(atoms, bonds, n_ligand, file.id_code)
}

/// Reads a receptor without a ligand partition.
pub fn parse_pdb_structure(bytes: &[u8]) -> Result<Structure, ChemError> {
    let file = read_pdb(bytes)?;
    let ordered: Vec<&PdbAtom> = file.atoms.iter().collect();
    let bonds = build_bonds(&ordered, &[(0, ordered.len())], &file.conect);
    let mut atoms: Vec<Atom> = ordered.iter().map(|a| a.atom.clone()).collect();
    assign_connectivity(&mut atoms, &bonds);
    Ok(Structure { atoms, bonds })
}
