/// Element symbols indexed by atomic number (index 0 unused).
pub const SYMBOLS: [&str; 119] = [
    "*", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K",
    "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr",
    "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La",
    "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os",
    "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am",
    "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl",
    "Mc", "Lv", "Ts", "Og",
];

// Single-bond covalent radii in Å (Cordero et al. 2008), Z = 1..=96.
// Low-spin values for Mn, Fe, Co; sp3 value for carbon.
const COVALENT_RADII: [f64; 96] = [
    0.31, 0.28, 1.28, 0.96, 0.84, 0.76, 0.71, 0.66, 0.57, 0.58, 1.66, 1.41, 1.21, 1.11, 1.07, 1.05, 1.02, 1.06,
    2.03, 1.76, 1.70, 1.60, 1.53, 1.39, 1.39, 1.32, 1.26, 1.24, 1.32, 1.22, 1.22, 1.20, 1.19, 1.20, 1.20, 1.16,
    2.20, 1.95, 1.90, 1.75, 1.64, 1.54, 1.47, 1.46, 1.42, 1.39, 1.45, 1.44, 1.42, 1.39, 1.39, 1.38, 1.39, 1.40,
    2.44, 2.15, 2.07, 2.04, 2.03, 2.01, 1.99, 1.98, 1.98, 1.96, 1.94, 1.92, 1.92, 1.89, 1.90, 1.87, 1.87, 1.75,
    1.70, 1.62, 1.51, 1.44, 1.41, 1.36, 1.36, 1.32, 1.45, 1.46, 1.48, 1.40, 1.50, 1.50, 2.60, 2.21, 2.15, 2.06,
    2.00, 1.96, 1.90, 1.87, 1.80, 1.69,
];

const FALLBACK_RADIUS: f64 = 1.50;

/// Atomic number for a symbol. Matching is case-insensitive so that PDB's
/// upper-case element columns (`CL`, `FE`) resolve. `D` and `T` map to hydrogen.
pub fn atomic_number(symbol: &str) -> Option<u8> {
    let s = symbol.trim();
    if s.eq_ignore_ascii_case("D") || s.eq_ignore_ascii_case("T") {
        return Some(1);
    }
    SYMBOLS.iter().skip(1).position(|e| e.eq_ignore_ascii_case(s)).map(|i| (i + 1) as u8)
}

pub fn symbol(z: u8) -> &'static str {
    SYMBOLS.get(z as usize).copied().unwrap_or("*")
}

pub fn covalent_radius(z: u8) -> f64 {
    match z {
        1..=96 => COVALENT_RADII[z as usize - 1],
        _ => FALLBACK_RADIUS,
    }
}

/// Default valences used to estimate implicit hydrogens from an SDF
/// connection table. Returns candidate valences in increasing order.
pub(crate) fn default_valences(z: u8) -> &'static [i32] {
    match z {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3, 5],
        8 => &[2],
        9 | 17 | 35 | 53 => &[1],
        14 => &[4],
        15 => &[3, 5],
        16 | 34 => &[2, 4, 6],
        _ => &[],
    }
}

/// Main-group elements for which an all-single-bond environment is read as sp3.
pub(crate) fn is_main_group_nonmetal(z: u8) -> bool {
    matches!(z, 5..=9 | 14..=17 | 33..=35 | 52 | 53)
}
