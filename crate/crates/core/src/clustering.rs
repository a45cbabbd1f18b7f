//! Average-linkage agglomerative clustering and dendrogram cuts.

use crate::dataset::FeatureMatrix;
use crate::dendrogram::{Dendrogram, Merge};
use crate::error::{Error, Result};
use crate::metrics::{pairwise_distances, DistanceMatrix, DistanceSpec};

/// Average linkage: `d(G, H)` is the mean distance over cross pairs, kept up
/// to date with the Lance–Williams recurrence. Ties between candidate merges
/// go to the lexicographically smallest pair of cluster ids.
pub fn average_linkage_cluster(d: &DistanceMatrix) -> Result<Dendrogram> {
    let n = d.n();
    if n == 0 {
        return Err(Error::MalformedDistance("empty distance matrix".into()));
    }
    // slot s holds cluster ids[s] of size sizes[s]; link is indexed by slots
    let mut link = d.matrix().clone();
    let mut ids: Vec<Option<usize>> = (0..n).map(Some).collect();
    let mut sizes = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for t in 0..n.saturating_sub(1) {
        let active: Vec<usize> = (0..n).filter(|&s| ids[s].is_some()).collect();
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (p, &si) in active.iter().enumerate() {
            let id_i = ids[si].unwrap();
            for &sj in &active[p + 1..] {
                let id_j = ids[sj].unwrap();
                let h = link[(si, sj)];
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
        let (ng, nh) = (sizes[si] as f64, sizes[sj] as f64);
        for &s in &active {
            if s == si || s == sj {
                continue;
            }
            let v = (ng * link[(si, s)] + nh * link[(sj, s)]) / (ng + nh);
            link[(si, s)] = v;
            link[(s, si)] = v;
        }
        sizes[si] += sizes[sj];
        ids[si] = Some(n + t);
        ids[sj] = None;
        merges.push(Merge {
            a,
            b,
            height,
            prototype: None,
            size: sizes[si],
        });
    }
    Dendrogram::new(n, merges)
}

/// A flat partition of `n` objects into `k` clusters. Label 0 is the largest
/// cluster; equal sizes are ordered by smallest member index.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Distance the partition was computed under.
    pub descriptor: String,
}

impl Clustering {
    /// Build from arbitrary groups, relabelling by the size rule.
    pub fn from_groups(mut groups: Vec<Vec<usize>>, n: usize, descriptor: impl Into<String>) -> Result<Self> {
        for g in groups.iter_mut() {
            g.sort_unstable();
        }
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::InvalidArgument("empty cluster".into()));
        }
        groups.sort_by(|x, y| y.len().cmp(&x.len()).then(x[0].cmp(&y[0])));
        let mut labels = vec![usize::MAX; n];
        for (label, g) in groups.iter().enumerate() {
            for &i in g {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, size: n });
                }
                if labels[i] != usize::MAX {
                    return Err(Error::InvalidArgument(format!("object {i} in two clusters")));
                }
                labels[i] = label;
            }
        }
        if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::InvalidArgument(format!("object {i} unassigned")));
        }
        Ok(Self {
            k: groups.len(),
            labels,
            descriptor: descriptor.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Members of every cluster, indexed by label.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// `id,cluster` CSV.
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = format!("# {} k={}\nid,cluster\n", self.descriptor, self.k);
        for (id, l) in ids.iter().zip(&self.labels) {
            out.push_str(&format!("{id},{l}\n"));
        }
        out
    }
}

pub fn cut(dend: &Dendrogram, k: usize, descriptor: &str) -> Result<Clustering> {
    Clustering::from_groups(dend.partition(k)?, dend.n_leaves(), descriptor)
}

/// One dendrogram over a precomputed distance matrix, cut at every `k`.
pub fn segment_distances(
    d: &DistanceMatrix,
    descriptor: &str,
    ks: &[usize],
) -> Result<(Dendrogram, Vec<Clustering>)> {
    let n = d.n();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::InvalidArgument(format!("k = {bad} outside 1..={n}")));
    }
    let dend = average_linkage_cluster(d)?;
    let cuts = ks.iter().map(|&k| cut(&dend, k, descriptor)).collect::<Result<_>>()?;
    Ok((dend, cuts))
}

pub fn segment(x: &FeatureMatrix, spec: &DistanceSpec, ks: &[usize]) -> Result<Vec<Clustering>> {
    let d = pairwise_distances(x, spec)?;
    Ok(segment_distances(&d, &spec.descriptor(), ks)?.1)
}
