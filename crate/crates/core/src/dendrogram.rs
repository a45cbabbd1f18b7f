//! Merge trees produced by agglomerative clustering.
//!
//! Leaves are clusters `0..n`; the `t`-th merge creates cluster `n + t`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    /// Smaller of the two merged cluster ids.
    pub a: usize,
    pub b: usize,
    pub height: f64,
    /// Prototype object of the merged cluster (minimax linkage only).
    pub prototype: Option<usize>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn new(n: usize, merges: Vec<Merge>) -> Result<Self> {
        if merges.len() != n.saturating_sub(1) {
            return Err(Error::InvalidArgument(format!(
                "{} merges for {n} leaves",
                merges.len()
            )));
        }
        let mut used = vec![false; n + merges.len()];
        let mut sizes = vec![1usize; n];
        for (t, m) in merges.iter().enumerate() {
            let created = n + t;
            for c in [m.a, m.b] {
                if c >= created || used[c] {
                    return Err(Error::InvalidArgument(format!(
                        "merge {t} references invalid or reused cluster {c}"
                    )));
                }
                used[c] = true;
            }
            if m.a >= m.b || !m.height.is_finite() || m.height < 0.0 {
                return Err(Error::InvalidArgument(format!("merge {t} is malformed")));
            }
            let size = sizes[m.a] + sizes[m.b];
            if size != m.size {
                return Err(Error::InvalidArgument(format!("merge {t} has wrong size")));
            }
            sizes.push(size);
        }
        let dend = Self { n, merges };
        for t in 0..dend.merges.len() {
            if let Some(p) = dend.merges[t].prototype {
                if !dend.members(n + t).contains(&p) {
                    return Err(Error::InvalidArgument(format!(
                        "prototype {p} of merge {t} is not a member"
                    )));
                }
            }
        }
        Ok(dend)
    }

    pub fn n_leaves(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Sorted object indices under cluster `node`.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(c) = stack.pop() {
            if c < self.n {
                out.push(c);
            } else {
                let m = &self.merges[c - self.n];
                stack.push(m.a);
                stack.push(m.b);
            }
        }
        out.sort_unstable();
        out
    }

    /// Prototype of a cluster node, if recorded. Leaves are their own prototype.
    pub fn prototype(&self, node: usize) -> Option<usize> {
        if node < self.n {
            Some(node)
        } else {
            self.merges[node - self.n].prototype
        }
    }

    /// Cluster nodes remaining after the first `n_merges` merges, in
    /// ascending id order.
    pub fn nodes_after(&self, n_merges: usize) -> Vec<usize> {
        let n_merges = n_merges.min(self.merges.len());
        let mut active = vec![true; self.n + n_merges];
        for m in &self.merges[..n_merges] {
            active[m.a] = false;
            active[m.b] = false;
        }
        (0..self.n + n_merges).filter(|&c| active[c]).collect()
    }

    /// Cluster nodes of the `k`-cluster cut (the last `n - k` merges undone).
    pub fn cut_nodes(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.n {
            return Err(Error::InvalidArgument(format!(
                "k = {k} outside 1..={}",
                self.n
            )));
        }
        Ok(self.nodes_after(self.n - k))
    }

    /// Partition for the `k`-cluster cut; each part sorted, parts in node order.
    pub fn partition(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        Ok(self
            .cut_nodes(k)?
            .into_iter()
            .map(|c| self.members(c))
            .collect())
    }

    /// Number of merges performed when cutting at height `h`: the longest
    /// prefix of merges whose heights are all `<= h`.
    pub fn merges_below(&self, h: f64) -> usize {
        self.merges.iter().take_while(|m| m.height <= h).count()
    }

    pub fn is_monotone(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }

    /// Text export: a leaf table then one merge per line `a b height prototype`
    /// (`-` when no prototype is recorded).
    pub fn to_text(&self, ids: &[String]) -> String {
        let mut out = format!("# dendrogram leaves={} merges={}\n# leaf id\n", self.n, self.merges.len());
        for (i, id) in ids.iter().enumerate() {
            out.push_str(&format!("{i} {id}\n"));
        }
        out.push_str("# a b height prototype\n");
        for m in &self.merges {
            let p = m.prototype.map_or_else(|| "-".to_string(), |p| p.to_string());
            out.push_str(&format!("{} {} {} {}\n", m.a, m.b, m.height, p));
        }
        out
    }
}

/// Union of two sorted, disjoint index lists.
pub(crate) fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dendrogram {
        Dendrogram::new(
            4,
            vec![
                Merge { a: 0, b: 1, height: 1.0, prototype: Some(0), size: 2 },
                Merge { a: 2, b: 3, height: 1.0, prototype: Some(2), size: 2 },
                Merge { a: 4, b: 5, height: 10.0, prototype: Some(1), size: 4 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn cuts_partition_all_leaves() {
        let d = sample();
        assert_eq!(d.partition(1).unwrap(), vec![vec![0, 1, 2, 3]]);
        assert_eq!(d.partition(2).unwrap(), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(d.partition(4).unwrap(), vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!(d.partition(0).is_err());
        assert!(d.partition(5).is_err());
        assert_eq!(d.merges_below(1.0), 2);
        assert_eq!(d.merges_below(0.5), 0);
    }

    #[test]
    fn rejects_bad_prototype() {
        let bad = Dendrogram::new(
            2,
            vec![Merge { a: 0, b: 1, height: 1.0, prototype: Some(5), size: 2 }],
        );
        assert!(bad.is_err());
        assert!(Dendrogram::new(3, vec![]).is_err());
    }

    #[test]
    fn merge_sorted_works() {
        assert_eq!(merge_sorted(&[0, 4, 9], &[1, 5]), vec![0, 1, 4, 5, 9]);
    }
}
