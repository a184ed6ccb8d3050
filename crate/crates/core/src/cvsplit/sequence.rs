use rayon::prelude::*;

use super::{DistanceMatrix, SplitError};

const ALPHABET: &[u8] = b"ACDEFGHIKLMNPQRSTVWYX";

fn normalize(seq: &str) -> Result<Vec<u8>, SplitError> {
    if seq.is_empty() {
        return Err(SplitError::Sequence("empty sequence".into()));
    }
    seq.bytes()
        .map(|b| {
            let u = b.to_ascii_uppercase();
            if ALPHABET.contains(&u) {
                Ok(u)
            } else {
                Err(SplitError::Sequence(format!("illegal residue {:?}", b as char)))
            }
        })
        .collect()
}

/// Global alignment identity: Needleman-Wunsch with match +1, mismatch 0 and
/// linear gap −1. Among optimal-score alignments the one with most matches,
/// then the shortest, is used; identity is `matches / alignment length`.
pub fn sequence_identity(a: &str, b: &str) -> Result<f64, SplitError> {
    let a = normalize(a)?;
    let b = normalize(b)?;
    Ok(identity_of(&a, &b))
}

/// DP cell: (score, matches, -length), compared lexicographically.
type Cell = (i64, i64, i64);

fn identity_of(a: &[u8], b: &[u8]) -> f64 {
    let m = b.len();
    let mut prev: Vec<Cell> = (0..=m as i64).map(|j| (-j, 0, -j)).collect();
    let mut cur = vec![(0, 0, 0); m + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = (-(i as i64 + 1), 0, -(i as i64 + 1));
        for j in 1..=m {
            let hit = (ca == b[j - 1]) as i64;
            let diag = (prev[j - 1].0 + hit, prev[j - 1].1 + hit, prev[j - 1].2 - 1);
            let up = (prev[j].0 - 1, prev[j].1, prev[j].2 - 1);
            let left = (cur[j - 1].0 - 1, cur[j - 1].1, cur[j - 1].2 - 1);
            cur[j] = diag.max(up).max(left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (_, matches, neg_len) = prev[m];
    matches as f64 / (-neg_len) as f64
}

/// Records of a FASTA file as `(id, sequence)`; the id is the first word of
/// the header line.
pub fn parse_fasta(text: &str) -> Result<Vec<(String, String)>, SplitError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(SplitError::Parse { line: k + 1, msg: "FASTA header without id".into() });
            }
            if out.iter().any(|(existing, _)| existing == id) {
                return Err(SplitError::Parse { line: k + 1, msg: format!("duplicate id {id:?}") });
            }
            out.push((id.to_string(), String::new()));
        } else {
            let Some(last) = out.last_mut() else {
                return Err(SplitError::Parse { line: k + 1, msg: "sequence before first header".into() });
            };
            let residues: String = line.chars().filter(|c| !c.is_whitespace() && *c != '*').collect();
            normalize(&residues).map_err(|e| SplitError::Parse { line: k + 1, msg: e.to_string() })?;
            last.1.push_str(&residues);
        }
    }
    if let Some((id, _)) = out.iter().find(|(_, s)| s.is_empty()) {
        return Err(SplitError::Sequence(format!("record {id:?} has no residues")));
    }
    Ok(out)
}

/// `1 − identity` for every pair, computed in parallel.
pub fn identity_distances(records: &[(String, String)]) -> Result<DistanceMatrix, SplitError> {
    let seqs: Vec<Vec<u8>> = records.iter().map(|(_, s)| normalize(s)).collect::<Result<_, _>>()?;
    let n = seqs.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j <= i { 0.0 } else { 1.0 - identity_of(&seqs[i], &seqs[j]) }).collect())
        .collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            data[i * n + j] = rows[i][j];
            data[j * n + i] = rows[i][j];
        }
    }
    DistanceMatrix::new(records.iter().map(|(id, _)| id.clone()).collect(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_examples() {
        assert_eq!(sequence_identity("MKTAYIAK", "MKTAYIAK").unwrap(), 1.0);
        assert_eq!(sequence_identity("AAAA", "CCCC").unwrap(), 0.0);
        assert!((sequence_identity("ACDEFG", "ACDFG").unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(sequence_identity("", "A").is_err());
        assert!(sequence_identity("AB", "A").is_err());
    }

    #[test]
    fn identity_is_symmetric_and_bounded() {
        let seqs = ["ACDKLMNW", "ACKLMW", "WWWW", "MACDEFGHIK", "KIHGFEDCAM", "X"];
        for a in seqs {
            for b in seqs {
                let ab = sequence_identity(a, b).unwrap();
                assert_eq!(ab, sequence_identity(b, a).unwrap());
                assert!((0.0..=1.0).contains(&ab));
            }
        }
    }

    #[test]
    fn fasta_records() {
        let recs = parse_fasta(">p1 kinase\nACDE\nFG\n\n>p2\nacdfg*\n").unwrap();
        assert_eq!(recs, vec![("p1".into(), "ACDEFG".into()), ("p2".into(), "acdfg".into())]);
        let d = identity_distances(&recs).unwrap();
        assert!((d.get(0, 1) - 1.0 / 6.0).abs() < 1e-12);
        assert!(parse_fasta("ACDE\n").is_err());
        assert!(parse_fasta(">a\nAC1\n").is_err());
        assert!(parse_fasta(">a\n>b\nAC\n").is_err());
        assert!(parse_fasta(">a\nA\n>a\nC\n").is_err());
    }
}
