//! MDL V2000 SDF reader and writer.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use super::elements::{atomic_number, default_valences, is_main_group_nonmetal, symbol};
use super::{assign_connectivity, Atom, Bond, BondOrder, ChemError, Hybridization, MolecularSystem};

const MAX_ATOMS: usize = 999;

struct Lines<'a> {
    lines: Vec<&'a [u8]>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').map(|l| l.strip_suffix(b"\r").unwrap_or(l)).collect();
        if lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        Lines { lines, pos: 0 }
    }

    /// 1-based number of the line most recently returned.
    fn line_no(&self) -> usize {
        self.pos
    }

    fn next(&mut self, what: &str) -> Result<&'a [u8], ChemError> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| ChemError::Truncated { line: self.pos + 1, what: what.to_string() })?;
        self.pos += 1;
        Ok(line)
    }

    fn at_end(&self) -> bool {
        self.lines[self.pos..].iter().all(|l| l.iter().all(u8::is_ascii_whitespace))
    }
}

/// Column slice `[a, b)` clamped to the line length, as trimmed text.
fn field(line: &[u8], a: usize, b: usize, line_no: usize) -> Result<&str, ChemError> {
    let end = b.min(line.len());
    let start = a.min(end);
    std::str::from_utf8(&line[start..end])
        .map(str::trim)
        .map_err(|_| ChemError::Parse { line: line_no, msg: format!("non-ASCII content in columns {a}-{b}") })
}

fn int_field(line: &[u8], a: usize, b: usize, line_no: usize, what: &str) -> Result<i64, ChemError> {
    let s = field(line, a, b, line_no)?;
    if s.is_empty() {
        return Ok(0);
    }
    s.parse().map_err(|_| ChemError::Parse { line: line_no, msg: format!("{what}: expected integer, got {s:?}") })
}

fn coord_field(line: &[u8], a: usize, b: usize, line_no: usize) -> Result<f64, ChemError> {
    let s = field(line, a, b, line_no)?;
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ChemError::Parse { line: line_no, msg: format!("bad coordinate {s:?}") }),
    }
}

/// Parses every record of a V2000 SDF stream. Each record becomes a
/// ligand-only system whose `sample_id` is the molecule name line (or
/// `mol<k>` when that line is blank).
pub fn parse_sdf(bytes: &[u8]) -> Result<Vec<MolecularSystem>, ChemError> {
    let mut lines = Lines::new(bytes);
    let mut out = Vec::new();
    while !lines.at_end() {
        out.push(parse_record(&mut lines, out.len())?);
    }
    Ok(out)
}

fn parse_record(lines: &mut Lines<'_>, index: usize) -> Result<MolecularSystem, ChemError> {
    let name_line = lines.next("header")?;
    let name = String::from_utf8_lossy(name_line).trim().to_string();
    lines.next("header")?;
    lines.next("header")?;
    let counts = lines.next("counts line")?;
    let ln = lines.line_no();
    if counts.windows(5).any(|w| w == b"V3000") {
        return Err(ChemError::Parse { line: ln, msg: "V3000 records are not supported".into() });
    }
    if counts.len() < 6 {
        return Err(ChemError::Parse { line: ln, msg: "malformed counts line".into() });
    }
    let parse_count = |a, b| -> Result<usize, ChemError> {
        let s = field(counts, a, b, ln)?;
        s.parse::<usize>().map_err(|_| ChemError::Parse { line: ln, msg: format!("malformed counts line: {s:?}") })
    };
    let n_atoms = parse_count(0, 3)?;
    let n_bonds = parse_count(3, 6)?;
    if n_atoms == 0 || n_atoms > MAX_ATOMS {
        return Err(ChemError::Parse { line: ln, msg: format!("atom count {n_atoms} outside [1, {MAX_ATOMS}]") });
    }

    let mut atoms = Vec::with_capacity(n_atoms);
    let mut radical_codes = vec![0u32; n_atoms];
    for _ in 0..n_atoms {
        let line = lines.next("atom block")?;
        let ln = lines.line_no();
        if line.len() < 34 {
            return Err(ChemError::Truncated { line: ln, what: "atom line shorter than 34 columns".into() });
        }
        let position = [coord_field(line, 0, 10, ln)?, coord_field(line, 10, 20, ln)?, coord_field(line, 20, 30, ln)?];
        let sym = field(line, 31, 34, ln)?;
        let z = atomic_number(sym).ok_or_else(|| ChemError::UnknownElement { line: ln, symbol: sym.to_string() })?;
        let mut atom = Atom::new(z, position);
        // Atom-block charge codes: 1..3 → +3..+1, 4 → doublet radical, 5..7 → -1..-3.
        match int_field(line, 36, 39, ln, "charge")? {
            0 => {}
            c @ 1..=3 => atom.formal_charge = 4 - c as i32,
            4 => radical_codes[atoms.len()] = 2,
            c @ 5..=7 => atom.formal_charge = 4 - c as i32,
            c => return Err(ChemError::Parse { line: ln, msg: format!("invalid charge code {c}") }),
        }
        atoms.push(atom);
    }

    let mut raw_bonds: Vec<(usize, usize, i64)> = Vec::with_capacity(n_bonds);
    let mut seen = HashSet::new();
    for _ in 0..n_bonds {
        let line = lines.next("bond block")?;
        let ln = lines.line_no();
        if line.len() < 9 {
            return Err(ChemError::Truncated { line: ln, what: "bond line shorter than 9 columns".into() });
        }
        let i = int_field(line, 0, 3, ln, "bond atom")?;
        let j = int_field(line, 3, 6, ln, "bond atom")?;
        let kind = int_field(line, 6, 9, ln, "bond type")?;
        let valid = 1..=n_atoms as i64;
        if !valid.contains(&i) || !valid.contains(&j) {
            return Err(ChemError::Parse { line: ln, msg: format!("bond references atom outside 1..={n_atoms}") });
        }
        if i == j {
            return Err(ChemError::Parse { line: ln, msg: "bond joins an atom to itself".into() });
        }
        if !(1..=4).contains(&kind) {
            return Err(ChemError::Parse { line: ln, msg: format!("unsupported bond type {kind}") });
        }
        let (i, j) = (i as usize - 1, j as usize - 1);
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(ChemError::Parse { line: ln, msg: format!("duplicate bond {} {}", i + 1, j + 1) });
        }
        raw_bonds.push((i, j, kind));
    }

    let mut charges: Option<HashMap<usize, i32>> = None;
    loop {
        let line = lines.next("properties block (missing 'M  END')")?;
        let ln = lines.line_no();
        if line.starts_with(b"M  END") {
            break;
        }
        if line.starts_with(b"$$$$") {
            return Err(ChemError::Truncated { line: ln, what: "record ended before 'M  END'".into() });
        }
        if line.starts_with(b"M  CHG") || line.starts_with(b"M  RAD") {
            let pairs = property_pairs(line, ln, n_atoms)?;
            if line.starts_with(b"M  CHG") {
                let map = charges.get_or_insert_with(HashMap::new);
                for (a, v) in pairs {
                    map.insert(a, v as i32);
                }
            } else {
                for (a, v) in pairs {
                    // 1 = singlet and 3 = triplet carry two radical electrons, 2 = doublet one.
                    radical_codes[a] = match v {
                        0 => 0,
                        1 | 3 => 1,
                        2 => 2,
                        _ => return Err(ChemError::Parse { line: ln, msg: format!("invalid radical code {v}") }),
                    };
                }
            }
        }
    }
    // Data items up to the record separator.
    while lines.pos < lines.lines.len() {
        let line = lines.next("data")?;
        if line.starts_with(b"$$$$") {
            break;
        }
    }

    // Any 'M  CHG' line resets atom-block charges.
    if let Some(map) = charges {
        for (k, a) in atoms.iter_mut().enumerate() {
            a.formal_charge = map.get(&k).copied().unwrap_or(0);
        }
    }
    for (a, code) in atoms.iter_mut().zip(&radical_codes) {
        a.radical_electrons = match code {
            1 => 2,
            2 => 1,
            _ => 0,
        };
    }

    let bonds = perceive_orders(n_atoms, &raw_bonds);
    finish_atoms(&mut atoms, &bonds);
    let sample_id = if name.is_empty() { format!("mol{index}") } else { name };
    MolecularSystem::ligand(atoms, bonds, sample_id)
}

fn property_pairs(line: &[u8], ln: usize, n_atoms: usize) -> Result<Vec<(usize, i64)>, ChemError> {
    let text = std::str::from_utf8(line).map_err(|_| ChemError::Parse { line: ln, msg: "non-ASCII property line".into() })?;
    let nums: Vec<i64> = text
        .get(6..)
        .unwrap_or("")
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| ChemError::Parse { line: ln, msg: format!("bad property value {t:?}") }))
        .collect::<Result<_, _>>()?;
    let Some((&count, rest)) = nums.split_first() else {
        return Err(ChemError::Parse { line: ln, msg: "empty property line".into() });
    };
    if count < 0 || rest.len() != 2 * count as usize {
        return Err(ChemError::Parse { line: ln, msg: "property entry count does not match".into() });
    }
    rest.chunks_exact(2)
        .map(|p| {
            if p[0] < 1 || p[0] as usize > n_atoms {
                Err(ChemError::Parse { line: ln, msg: format!("property references atom {}", p[0]) })
            } else {
                Ok((p[0] as usize - 1, p[1]))
            }
        })
        .collect()
}

/// Type-4 bonds are aromatic only when they lie on a ring made entirely of
/// type-4 bonds; stray type-4 bonds fall back to single. Types 1..3 map directly.
fn perceive_orders(n_atoms: usize, raw: &[(usize, usize, i64)]) -> Vec<Bond> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_atoms];
    for (k, &(i, j, kind)) in raw.iter().enumerate() {
        if kind == 4 {
            adj[i].push((j, k));
            adj[j].push((i, k));
        }
    }
    raw.iter()
        .enumerate()
        .map(|(k, &(i, j, kind))| {
            let order = match kind {
                1 => BondOrder::Single,
                2 => BondOrder::Double,
                3 => BondOrder::Triple,
                _ if connected_without(&adj, i, j, k) => BondOrder::Aromatic,
                _ => BondOrder::Single,
            };
            Bond { i, j, order }
        })
        .collect()
}

/// Whether `to` is reachable from `from` without traversing edge `skip`.
fn connected_without(adj: &[Vec<(usize, usize)>], from: usize, to: usize, skip: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        for &(v, e) in &adj[u] {
            if e == skip || seen[v] {
                continue;
            }
            if v == to {
                return true;
            }
            seen[v] = true;
            stack.push(v);
        }
    }
    false
}

/// Fills aromaticity, degree, hydrogen counts and hybridization from the
/// connection table.
fn finish_atoms(atoms: &mut [Atom], bonds: &[Bond]) {
    let n = atoms.len();
    let mut bo_sum = vec![0f64; n];
    let mut doubles = vec![0u32; n];
    let mut triples = vec![0u32; n];
    for b in bonds {
        for k in [b.i, b.j] {
            bo_sum[k] += b.order.valence();
            match b.order {
                BondOrder::Double => doubles[k] += 1,
                BondOrder::Triple => triples[k] += 1,
                BondOrder::Aromatic => atoms[k].is_aromatic = true,
                BondOrder::Single => {}
            }
        }
    }
    for (k, a) in atoms.iter_mut().enumerate() {
        a.implicit_hydrogens = implicit_hydrogens(a, bo_sum[k].floor() as i32);
    }
    assign_connectivity(atoms, bonds);
    for (k, a) in atoms.iter_mut().enumerate() {
        a.hybridization = if a.element == 1 {
            Hybridization::S
        } else if triples[k] > 0 || doubles[k] >= 2 {
            Hybridization::Sp
        } else if doubles[k] == 1 || a.is_aromatic {
            Hybridization::Sp2
        } else if is_main_group_nonmetal(a.element) && a.degree + a.implicit_hydrogens > 0 {
            Hybridization::Sp3
        } else {
            Hybridization::Other
        };
    }
}

fn implicit_hydrogens(atom: &Atom, bond_order_sum: i32) -> u32 {
    let valences = default_valences(atom.element);
    let charge = atom.formal_charge;
    // Group-14 atoms lose a bonding slot for either charge sign; the others
    // gain one per positive charge (N+, O+) and lose one per negative charge.
    let adjust = |v: i32| if matches!(atom.element, 6 | 14) { v - charge.abs() } else { v + charge };
    let used = bond_order_sum + atom.radical_electrons as i32;
    valences
        .iter()
        .map(|&v| adjust(v))
        .find(|&v| v >= used)
        .map(|v| (v - used).max(0) as u32)
        .unwrap_or(0)
}

/// Serializes ligand-only or complex systems as V2000 records. Aromatic bonds
/// are written as type 4; charges go to both the atom block and `M  CHG`.
pub fn write_sdf(systems: &[MolecularSystem]) -> String {
    let mut out = String::new();
    for sys in systems {
        let _ = writeln!(out, "{}", sys.sample_id);
        out.push_str("  sgc\n\n");
        let _ = writeln!(out, "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000", sys.n_atoms(), sys.bonds().len());
        for a in sys.atoms() {
            let code = match a.formal_charge {
                c @ -3..=-1 => 4 - c,
                c @ 1..=3 => 4 - c,
                _ => 0,
            };
            let _ = writeln!(
                out,
                "{:>10.4}{:>10.4}{:>10.4} {:<3} 0{:>3}  0  0  0  0  0  0  0  0  0  0",
                a.position[0],
                a.position[1],
                a.position[2],
                symbol(a.element),
                code
            );
        }
        for b in sys.bonds() {
            let kind = match b.order {
                BondOrder::Single => 1,
                BondOrder::Double => 2,
                BondOrder::Triple => 3,
                BondOrder::Aromatic => 4,
            };
            let _ = writeln!(out, "{:>3}{:>3}{:>3}  0", b.i + 1, b.j + 1, kind);
        }
        let charged: Vec<(usize, i32)> =
            sys.atoms().iter().enumerate().filter(|(_, a)| a.formal_charge != 0).map(|(k, a)| (k + 1, a.formal_charge)).collect();
        for chunk in charged.chunks(8) {
            let _ = write!(out, "M  CHG{:>3}", chunk.len());
            for (k, c) in chunk {
                let _ = write!(out, " {k:>3} {c:>3}");
            }
            out.push('\n');
        }
        let radicals: Vec<(usize, u32)> = sys
            .atoms()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.radical_electrons > 0)
            .map(|(k, a)| (k + 1, if a.radical_electrons == 1 { 2 } else { 3 }))
            .collect();
        for chunk in radicals.chunks(8) {
            let _ = write!(out, "M  RAD{:>3}", chunk.len());
            for (k, c) in chunk {
                let _ = write!(out, " {k:>3} {c:>3}");
            }
            out.push('\n');
        }
        out.push_str("M  END\n$$$$\n");
    }
    out
}
