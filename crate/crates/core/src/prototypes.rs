//! Prototype selection by agglomerative clustering with minimax linkage.
//!
//! For a cluster `C`, `dmax(x, C)` is the distance from `x` to the farthest
//! member of `C` and the minimax radius `r(C)` is the smallest `dmax` over the
//! members; the minimizing member is the cluster's prototype. Two clusters are
//! linked at `r(G ∪ H)`, so cutting the tree at height `h` yields clusters each
//! covered by its prototype within `h`.

use itertools::Itertools;

use crate::dendrogram::{merge_sorted, Dendrogram, Merge};
use crate::error::{Error, Result};
use crate::metrics::DistanceMatrix;

/// Largest population accepted by [`brute_force_minimax`].
pub const BRUTE_FORCE_LIMIT: usize = 15;

pub fn dmax(i: usize, cluster: &[usize], d: &DistanceMatrix) -> Result<f64> {
    if !cluster.contains(&i) {
        return Err(Error::NotAMember(i));
    }
    check_indices(cluster, d)?;
    Ok(cluster.iter().map(|&j| d.get(i, j)).fold(0.0, f64::max))
}

/// `(r(C), prototype)`; ties go to the lowest object index.
pub fn minimax_radius(cluster: &[usize], d: &DistanceMatrix) -> Result<(f64, usize)> {
    if cluster.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    check_indices(cluster, d)?;
    let mut sorted = cluster.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best = (f64::INFINITY, sorted[0]);
    for &i in &sorted {
        let r = sorted.iter().map(|&j| d.get(i, j)).fold(0.0, f64::max);
        if r < best.0 {
            best = (r, i);
        }
    }
    Ok(best)
}

fn check_indices(cluster: &[usize], d: &DistanceMatrix) -> Result<()> {
    match cluster.iter().find(|&&j| j >= d.n()) {
        Some(&bad) => Err(Error::IndexOutOfRange {
            index: bad,
            size: d.n(),
        }),
        None => Ok(()),
    }
}

struct ActiveCluster {
    id: usize,
    members: Vec<usize>,
    /// `dmax(x, C)` for every object `x` of the population.
    far: Vec<f64>,
}

/// Radius and prototype of `G ∪ H` from the cached `dmax` rows.
fn merged_radius(g: &ActiveCluster, h: &ActiveCluster) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    let (mut i, mut j) = (0, 0);
    // walk both member lists in ascending object order so ties pick the lowest index
    while i < g.members.len() || j < h.members.len() {
        let x = if j >= h.members.len() || (i < g.members.len() && g.members[i] < h.members[j]) {
            i += 1;
            g.members[i - 1]
        } else {
            j += 1;
            h.members[j - 1]
        };
        let r = g.far[x].max(h.far[x]);
        if r < best.0 {
            best = (r, x);
        }
    }
    best
}

/// Agglomerative clustering with minimax linkage. Ties between candidate
/// merges go to the lexicographically smallest pair of cluster ids.
pub fn minimax_linkage_cluster(d: &DistanceMatrix) -> Result<Dendrogram> {
    let n = d.n();
    if n == 0 {
        return Err(Error::MalformedDistance("empty distance matrix".into()));
    }
    let mut slots: Vec<Option<ActiveCluster>> = (0..n)
        .map(|i| {
            Some(ActiveCluster {
                id: i,
                members: vec![i],
                far: (0..n).map(|x| d.get(x, i)).collect(),
            })
        })
        .collect();
    // link[i][j] (i < j) holds (height, prototype) between slot i and slot j
    let mut link = vec![vec![(f64::INFINITY, 0usize); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (g, h) = (slots[i].as_ref().unwrap(), slots[j].as_ref().unwrap());
            link[i][j] = merged_radius(g, h);
        }
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n.saturating_sub(1) {
        let active: Vec<usize> = (0..n).filter(|&s| slots[s].is_some()).collect();
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (p, &si) in active.iter().enumerate() {
            let id_i = slots[si].as_ref().unwrap().id;
            for &sj in &active[p + 1..] {
                let id_j = slots[sj].as_ref().unwrap().id;
                let h = link[si][sj].0;
                let (a, b) = (id_i.min(id_j), id_i.max(id_j));
                let better = match best {
                    None => true,
                    Some((bh, ba, bb, _, _)) => h < bh || (h == bh && (a, b) < (ba, bb)),
                };
                if better {
                    best = Some((h, a, b, si, sj));
                }
            }
        }
        let (height, a, b, si, sj) = best.expect("at least two active clusters");
        let prototype = link[si][sj].1;
        let g = slots[si].take().unwrap();
        let h = slots[sj].take().unwrap();
        let merged = ActiveCluster {
            id: n + t,
            members: merge_sorted(&g.members, &h.members),
            far: g.far.iter().zip(&h.far).map(|(x, y)| x.max(*y)).collect(),
        };
        merges.push(Merge {
            a,
            b,
            height,
            prototype: Some(prototype),
            size: merged.members.len(),
        });
        slots[si] = Some(merged);
        for s in 0..n {
            if s == si || slots[s].is_none() {
                continue;
            }
            let (lo, hi) = (s.min(si), s.max(si));
            link[lo][hi] = merged_radius(slots[si].as_ref().unwrap(), slots[s].as_ref().unwrap());
        }
    }
    Dendrogram::new(n, merges)
}

/// Prototypes with nearest-prototype assignment of every object.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    /// Distinct prototype object indices, ascending.
    pub prototypes: Vec<usize>,
    /// For each object, the object index of its nearest prototype
    /// (ties to the lower index).
    pub assignment: Vec<usize>,
    pub radius: f64,
}

impl PrototypeSet {
    pub fn from_prototypes(mut prototypes: Vec<usize>, d: &DistanceMatrix) -> Result<Self> {
        prototypes.sort_unstable();
        prototypes.dedup();
        if prototypes.is_empty() {
            return Err(Error::InvalidArgument("no prototypes".into()));
        }
        check_indices(&prototypes, d)?;
        let (assignment, radius) = coverage(d, &prototypes);
        Ok(Self {
            prototypes,
            assignment,
            radius,
        })
    }

    pub fn k(&self) -> usize {
        self.prototypes.len()
    }

    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = String::from("id\n");
        for &p in &self.prototypes {
            out.push_str(&ids[p]);
            out.push('\n');
        }
        out
    }
}

/// Nearest-prototype assignment (prototypes sorted ascending) and the
/// covering radius.
fn coverage(d: &DistanceMatrix, prototypes: &[usize]) -> (Vec<usize>, f64) {
    let mut radius: f64 = 0.0;
    let assignment = (0..d.n())
        .map(|x| {
            let mut best = (f64::INFINITY, prototypes[0]);
            for &p in prototypes {
                let v = d.get(x, p);
                if v < best.0 {
                    best = (v, p);
                }
            }
            radius = radius.max(best.0);
            best.1
        })
        .collect();
    (assignment, radius)
}

/// Cut a minimax-linkage dendrogram into `k` clusters and use their recorded
/// prototypes.
pub fn select_prototypes(dend: &Dendrogram, k: usize, d: &DistanceMatrix) -> Result<PrototypeSet> {
    if dend.n_leaves() != d.n() {
        return Err(Error::DimensionMismatch {
            expected: dend.n_leaves(),
            actual: d.n(),
        });
    }
    let nodes = dend.cut_nodes(k)?;
    let prototypes = nodes
        .iter()
        .map(|&c| {
            dend.prototype(c).ok_or_else(|| {
                Error::InvalidArgument("dendrogram carries no prototypes".into())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::from_prototypes(prototypes, d)
}

/// Default training-subset size: `ceil(fraction * n)`, clamped to `1..=n`.
pub fn training_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// Exact minimax prototypes by enumerating all `k`-subsets.
pub fn brute_force_minimax(d: &DistanceMatrix, k: usize) -> Result<PrototypeSet> {
    let n = d.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "brute force limited to n <= {BRUTE_FORCE_LIMIT}, got {n}"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in (0..n).combinations(k) {
        let r = (0..n)
            .map(|x| subset.iter().map(|&p| d.get(x, p)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(br, _)| r < *br) {
            best = Some((r, subset));
        }
    }
    let (_, subset) = best.expect("at least one subset");
    PrototypeSet::from_prototypes(subset, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_points_1d(points)
    }

    #[test]
    fn dmax_examples() {
        let d = line(&[0.0, 1.0, 10.0]);
        assert_eq!(dmax(2, &[2], &d).unwrap(), 0.0);
        assert_eq!(dmax(1, &[0, 1, 2], &d).unwrap(), 9.0);
        assert_eq!(dmax(0, &[0, 1, 2], &d).unwrap(), 10.0);
        assert!(matches!(dmax(0, &[1, 2], &d), Err(Error::NotAMember(0))));
    }

    #[test]
    fn minimax_radius_examples() {
        let d = line(&[0.0, 1.0, 10.0]);
        assert_eq!(minimax_radius(&[0, 1, 2], &d).unwrap(), (9.0, 1));
        assert_eq!(minimax_radius(&[2], &d).unwrap(), (0.0, 2));
        let d2 = line(&[0.0, 3.0]);
        assert_eq!(minimax_radius(&[1, 0], &d2).unwrap(), (3.0, 0));
        assert!(minimax_radius(&[], &d).is_err());
    }

    #[test]
    fn linkage_on_two_pairs() {
        let d = line(&[0.0, 1.0, 10.0, 11.0]);
        let dend = minimax_linkage_cluster(&d).unwrap();
        let m = dend.merges();
        assert_eq!((m[0].a, m[0].b, m[0].height), (0, 1, 1.0));
        assert_eq!((m[1].a, m[1].b, m[1].height), (2, 3, 1.0));
        // r of all four: dmax values {11, 10, 10, 11}
        assert_eq!((m[2].height, m[2].prototype), (10.0, Some(1)));
    }

    #[test]
    fn tiny_populations() {
        let d1 = line(&[4.0]);
        assert!(minimax_linkage_cluster(&d1).unwrap().merges().is_empty());
        let d2 = line(&[0.0, 2.5]);
        let dend = minimax_linkage_cluster(&d2).unwrap();
        assert_eq!(dend.merges().len(), 1);
        assert_eq!(dend.merges()[0].height, 2.5);
    }

    #[test]
    fn select_prototypes_examples() {
        let d = line(&[0.0, 1.0, 10.0, 11.0]);
        let dend = minimax_linkage_cluster(&d).unwrap();
        let all = select_prototypes(&dend, 4, &d).unwrap();
        assert_eq!(all.prototypes, vec![0, 1, 2, 3]);
        assert_eq!(all.radius, 0.0);
        let root = select_prototypes(&dend, 1, &d).unwrap();
        assert_eq!(root.prototypes, vec![1]);
        let two = select_prototypes(&dend, 2, &d).unwrap();
        assert_eq!(two.radius, 1.0);
        assert!(two.prototypes.iter().any(|&p| p < 2) && two.prototypes.iter().any(|&p| p >= 2));
        assert!(select_prototypes(&dend, 0, &d).is_err());
        assert!(select_prototypes(&dend, 5, &d).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let d = line(&[0.0, 1.0, 10.0, 11.0]);
        assert_eq!(brute_force_minimax(&d, 2).unwrap().radius, 1.0);
        assert_eq!(brute_force_minimax(&d, 4).unwrap().radius, 0.0);
        let d3 = line(&[0.0, 5.0, 10.0]);
        let one = brute_force_minimax(&d3, 1).unwrap();
        assert_eq!((one.prototypes.clone(), one.radius), (vec![1], 5.0));
        let big = line(&(0..16).map(f64::from).collect::<Vec<_>>());
        assert!(brute_force_minimax(&big, 2).is_err());
    }

    #[test]
    fn training_size_rounds_up() {
        assert_eq!(training_size(214, 0.4), 86);
        assert_eq!(training_size(200, 0.4), 80);
        assert_eq!(training_size(3, 0.01), 1);
    }
}
