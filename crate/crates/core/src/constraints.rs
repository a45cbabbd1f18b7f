//! Statistical identification of weak-supervision constraints on a training
//! scope.
//!
//! `D` holds standardized pairwise Euclidean feature distances, `E` the
//! standardized absolute output differences and `F = E - D`. Pairs in the low
//! tail of `F` (close outputs, distant features) become similar pairs; pairs in
//! the high tail become dissimilar pairs. Relative triplets come from windows
//! of three consecutive objects after ordering by output and thinning the
//! sequence at two granularities.

use indexmap::IndexSet;
use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::metrics::{pairwise_distances_rows, DistanceSpec};
use crate::stats;

/// Upper-triangle index of `(i, j)`, `i < j`, in row-major order.
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Standardized pair matrices over `N` objects, stored as upper triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrices {
    n: usize,
    d: Vec<f64>,
    e: Vec<f64>,
    f: Vec<f64>,
}

impl PairMatrices {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_pairs(&self) -> usize {
        self.f.len()
    }

    /// Unordered pairs `(i, j)`, `i < j`, in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
    }

    fn at(&self, v: &[f64], i: usize, j: usize) -> Option<f64> {
        if i == j || i >= self.n || j >= self.n {
            return None;
        }
        let (a, b) = (i.min(j), i.max(j));
        Some(v[tri_index(self.n, a, b)])
    }

    pub fn d(&self, i: usize, j: usize) -> Option<f64> {
        self.at(&self.d, i, j)
    }

    pub fn e(&self, i: usize, j: usize) -> Option<f64> {
        self.at(&self.e, i, j)
    }

    pub fn f(&self, i: usize, j: usize) -> Option<f64> {
        self.at(&self.f, i, j)
    }

    pub fn d_entries(&self) -> &[f64] {
        &self.d
    }

    pub fn e_entries(&self) -> &[f64] {
        &self.e
    }

    pub fn f_entries(&self) -> &[f64] {
        &self.f
    }

    /// Build from raw (unstandardized) upper-triangle entries.
    pub fn from_raw_entries(n: usize, mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("need N >= 3 objects, got {n}")));
        }
        let expected = n * (n - 1) / 2;
        if d.len() != expected || e.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: d.len().min(e.len()),
            });
        }
        let (_, sd_d) = stats::standardize_in_place(&mut d);
        if !(sd_d > 0.0) {
            return Err(Error::Degenerate("feature distances have zero variance".into()));
        }
        let (_, sd_e) = stats::standardize_in_place(&mut e);
        if !(sd_e > 0.0) {
            return Err(Error::Degenerate("output differences have zero variance".into()));
        }
        let f = e.iter().zip(&d).map(|(a, b)| a - b).collect();
        Ok(Self { n, d, e, f })
    }
}

/// `D`, `E`, `F` over the training rows `x` (already encoded) and outputs `y`.
pub fn build_pair_matrices(x: &DMatrix<f64>, y: &[f64]) -> Result<PairMatrices> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need N >= 3 objects, got {n}")));
    }
    let dist = pairwise_distances_rows(x, &DistanceSpec::euclidean())?;
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    let mut e = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(dist.get(i, j));
            e.push((y[i] - y[j]).abs());
        }
    }
    PairMatrices::from_raw_entries(n, d, e)
}

/// Similar and dissimilar pairs from the tails of `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSets {
    pub similar: Vec<(usize, usize)>,
    pub dissimilar: Vec<(usize, usize)>,
    pub f_low: f64,
    pub f_high: f64,
}

/// Pairs with `F <= q_tail` and `F < 0` are similar; pairs with
/// `F >= q_(1-tail)` and `F > 0` are dissimilar. Percentiles interpolate
/// linearly over the upper-triangle entries of `F`.
pub fn identify_pairs(pm: &PairMatrices, tail: f64) -> Result<PairSets> {
    if !(tail > 0.0 && tail < 0.5) {
        return Err(Error::InvalidArgument(format!("tail fraction {tail} outside (0, 0.5)")));
    }
    let f_low = stats::percentile(&pm.f, tail);
    let f_high = stats::percentile(&pm.f, 1.0 - tail);
    let mut similar = Vec::new();
    let mut dissimilar = Vec::new();
    for ((i, j), &f) in pm.pairs().zip(&pm.f) {
        if f <= f_low && f < 0.0 {
            similar.push((i, j));
        } else if f >= f_high && f > 0.0 {
            dissimilar.push((i, j));
        }
    }
    Ok(PairSets {
        similar,
        dissimilar,
        f_low,
        f_high,
    })
}

/// Indices sorted by ascending output; ties keep their original order.
pub fn order_by_output(y: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    order
}

/// Keep every `rho`-th element (1-based positions divisible by `rho`).
pub fn reduce_population(order: &[usize], rho: usize) -> Result<Vec<usize>> {
    if rho == 0 {
        return Err(Error::InvalidArgument("reduction ratio must be >= 1".into()));
    }
    Ok(order
        .iter()
        .enumerate()
        .filter(|(pos, _)| (pos + 1) % rho == 0)
        .map(|(_, &i)| i)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

/// `anchor` should be closer to `near` than to `far`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub near: usize,
    pub far: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedTriplet {
    pub triplet: Triplet,
    pub direction: Direction,
    pub rho: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletSet {
    pub triplets: Vec<TaggedTriplet>,
    /// Reduction ratios whose reduced sequence had fewer than three members.
    pub short_levels: Vec<usize>,
}

impl TripletSet {
    pub fn plain(&self) -> Vec<Triplet> {
        self.triplets.iter().map(|t| t.triplet).collect()
    }
}

/// Sliding windows of three over each reduced sequence, forward and backward,
/// de-duplicated across levels (first occurrence wins).
pub fn build_triplets(order: &[usize], rhos: &[usize]) -> Result<TripletSet> {
    let mut seen: IndexSet<Triplet> = IndexSet::new();
    let mut out = TripletSet::default();
    for &rho in rhos {
        let reduced = reduce_population(order, rho)?;
        if reduced.len() < 3 {
            warn!(
                "reduction ratio {rho} leaves {} objects; no triplets at this level",
                reduced.len()
            );
            out.short_levels.push(rho);
            continue;
        }
        let windows: Vec<&[usize]> = reduced.windows(3).collect();
        for (direction, make) in [
            (Direction::Forward, (|w: &[usize]| Triplet { anchor: w[0], near: w[1], far: w[2] }) as fn(&[usize]) -> Triplet),
            (Direction::Backward, |w: &[usize]| Triplet { anchor: w[2], near: w[1], far: w[0] }),
        ] {
            for w in &windows {
                let t = make(w);
                if seen.insert(t) {
                    out.triplets.push(TaggedTriplet {
                        triplet: t,
                        direction,
                        rho,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Settings for constraint identification.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintParams {
    pub tail: f64,
    pub rho_micro: usize,
    pub rho_macro: usize,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self {
            tail: 0.10,
            rho_micro: 2,
            rho_macro: 5,
        }
    }
}

/// All constraints for one output over a training scope; indices refer to
/// rows of the training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSets {
    pub similar: Vec<(usize, usize)>,
    pub dissimilar: Vec<(usize, usize)>,
    pub triplets: TripletSet,
    pub f_low: f64,
    pub f_high: f64,
    pub params: ConstraintParams,
}

impl ConstraintSets {
    pub fn triplet_list(&self) -> Vec<Triplet> {
        self.triplets.plain()
    }

    /// Three CSV sections keyed by object ids, after a header of comments.
    pub fn to_csv(&self, ids: &[String]) -> String {
        let mut out = format!(
            "# f_low={} f_high={} tail={} rho_micro={} rho_macro={}\n",
            self.f_low, self.f_high, self.params.tail, self.params.rho_micro, self.params.rho_macro
        );
        out.push_str("section,a,b,c,direction,rho\n");
        for &(i, j) in &self.similar {
            out.push_str(&format!("similar,{},{},,,\n", ids[i], ids[j]));
        }
        for &(i, j) in &self.dissimilar {
            out.push_str(&format!("dissimilar,{},{},,,\n", ids[i], ids[j]));
        }
        for t in &self.triplets.triplets {
            let dir = match t.direction {
                Direction::Forward => "forward",
                Direction::Backward => "backward",
            };
            out.push_str(&format!(
                "triplet,{},{},{},{},{}\n",
                ids[t.triplet.anchor], ids[t.triplet.near], ids[t.triplet.far], dir, t.rho
            ));
        }
        out
    }
}

pub fn identify_constraints(
    x: &DMatrix<f64>,
    y: &[f64],
    params: &ConstraintParams,
) -> Result<ConstraintSets> {
    let pm = build_pair_matrices(x, y)?;
    let pairs = identify_pairs(&pm, params.tail)?;
    let order = order_by_output(y);
    let triplets = build_triplets(&order, &[params.rho_micro, params.rho_macro])?;
    Ok(ConstraintSets {
        similar: pairs.similar,
        dissimilar: pairs.dissimilar,
        triplets,
        f_low: pairs.f_low,
        f_high: pairs.f_high,
        params: params.clone(),
    })
}
