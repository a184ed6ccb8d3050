use serde::{Deserialize, Serialize};

use super::{DistanceMatrix, SplitError};

/// Where to stop merging.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cut {
    /// Merge until this many clusters remain.
    Clusters(usize),
    /// Perform every merge whose height is at most this value.
    Threshold(f64),
}

/// One agglomeration step. Clusters are named by their smallest member index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// `sqrt` of the Lance-Williams Ward dissimilarity; equals `D[a][b]` for two singletons.
    pub height: f64,
    pub size: usize,
}

/// Full Ward dendrogram (N − 1 merges) via the Lance-Williams recurrence on
/// squared distances:
///
/// `d²(k, i∪j) = ((n_i + n_k) d²(k,i) + (n_j + n_k) d²(k,j) − n_k d²(i,j)) / (n_i + n_j + n_k)`
///
/// Ties are broken by the smallest `(min, max)` cluster pair.
pub fn ward_linkage(d: &DistanceMatrix) -> Vec<Merge> {
    let n = d.len();
    let mut sq: Vec<f64> = d.data().iter().map(|v| v * v).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // nearest neighbour of each active slot under (distance, min, max) order
    let better = |dist: f64, i: usize, j: usize, best: (f64, usize)| -> bool {
        let (bd, bj) = best;
        if bj == usize::MAX {
            return true;
        }
        match dist.total_cmp(&bd) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => (i.min(j), i.max(j)) < (i.min(bj), i.max(bj)),
        }
    };
    let nearest = |sq: &[f64], active: &[bool], i: usize| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..n {
            if j != i && active[j] && better(sq[i * n + j], i, j, best) {
                best = (sq[i * n + j], j);
            }
        }
        best
    };
    let mut nn: Vec<(f64, usize)> = (0..n).map(|i| nearest(&sq, &active, i)).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let (dist, j) = nn[i];
            let (lo, hi) = (i.min(j), i.max(j));
            let take = match pick {
                None => true,
                Some((pd, pa, pb)) => match dist.total_cmp(&pd) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => (lo, hi) < (pa, pb),
                },
            };
            if take {
                pick = Some((dist, lo, hi));
            }
        }
        let (dist, a, b) = pick.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((na + nk) * sq[k * n + a] + (nb + nk) * sq[k * n + b] - nk * dist) / (na + nb + nk);
            let v = v.max(0.0);
            sq[k * n + a] = v;
            sq[a * n + k] = v;
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge { a, b, height: dist.max(0.0).sqrt(), size: size[a] });
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if i == a || nn[i].1 == a || nn[i].1 == b {
                nn[i] = nearest(&sq, &active, i);
            } else if better(sq[i * n + a], i, a, nn[i]) {
                nn[i] = (sq[i * n + a], a);
            }
        }
    }
    merges
}

/// Flat cluster labels `0..k`, numbered by smallest member.
pub fn ward_cluster(d: &DistanceMatrix, cut: Cut) -> Result<Vec<usize>, SplitError> {
    let n = d.len();
    let merges = ward_linkage(d);
    let applied = match cut {
        Cut::Clusters(k) => {
            if k == 0 || k > n {
                return Err(SplitError::Cut(format!("cannot cut {n} samples into {k} clusters")));
            }
            n - k
        }
        Cut::Threshold(t) => {
            if !(t.is_finite() && t >= 0.0) {
                return Err(SplitError::Cut(format!("threshold {t} must be finite and non-negative")));
            }
            merges.iter().take_while(|m| m.height <= t).count()
        }
    };
    // union-find over the applied merges
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in &merges[..applied] {
        let (ra, rb) = (root(&mut parent, m.a), root(&mut parent, m.b));
        parent[rb.max(ra)] = rb.min(ra);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = vec![0; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        labels[i] = label_of_root[r];
    }
    Ok(labels)
}
