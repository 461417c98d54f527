//! Projection-quality metrics: trustworthiness, continuity, Shepard
//! correlation, normalized stress, neighborhood hit, and distance
//! consistency, plus the shared k-nearest-neighbor machinery.
//!
//! Conventions (each isolated in one function so a correction is local):
//! distance ties break by ascending point index; stress is the Kruskal-style
//! normalized quadratic sum; Shepard correlation is Spearman rank
//! correlation with average ranks for ties.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub trustworthiness: f64,
    pub continuity: f64,
    pub shepard_correlation: f64,
    pub normalized_stress: f64,
    pub neighborhood_hit: f64,
    pub distance_consistency: f64,
    /// Neighborhood size used by the rank-based metrics.
    pub k: usize,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_points(op: &'static str, x: &Tensor) -> Result<usize> {
    if x.rank() != 2 || x.shape()[0] == 0 {
        return Err(Error::invalid(format!(
            "{op} needs a nonempty point matrix, got shape {:?}",
            x.shape()
        )));
    }
    Ok(x.shape()[0])
}

fn check_same_rows(op: &'static str, x: &Tensor, p: &Tensor) -> Result<usize> {
    let m = check_points(op, x)?;
    if check_points(op, p)? != m {
        return Err(Error::ShapeMismatch {
            op,
            left: x.shape().to_vec(),
            right: p.shape().to_vec(),
        });
    }
    Ok(m)
}

/// For every point, the indices of all other points sorted by distance then
/// index. Row i omits i itself, so each row has m − 1 entries.
pub struct NeighborIndex {
    order: Vec<Vec<usize>>,
}

impl NeighborIndex {
    pub fn build(points: &Tensor) -> Result<Self> {
        let m = check_points("neighbor_index", points)?;
        let mut order = Vec::with_capacity(m);
        for i in 0..m {
            let pi = points.row(i);
            let mut others: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (euclid(pi, points.row(j)), j))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            order.push(others.into_iter().map(|(_, j)| j).collect());
        }
        Ok(Self { order })
    }

    pub fn neighbors(&self, i: usize, k: usize) -> &[usize] {
        &self.order[i][..k]
    }

    /// 1-based rank of j among i's neighbors.
    fn rank_table(&self) -> Vec<Vec<usize>> {
        let m = self.order.len();
        let mut rank = vec![vec![0usize; m]; m];
        for (i, row) in self.order.iter().enumerate() {
            for (pos, &j) in row.iter().enumerate() {
                rank[i][j] = pos + 1;
            }
        }
        rank
    }
}

fn check_rank_k(op: &'static str, m: usize, k: usize) -> Result<()> {
    // k < (2m − 1)/3 keeps the normalizer m·k·(2m − 3k − 1) positive.
    if k < 1 || 3 * k + 1 >= 2 * m {
        return Err(Error::invalid(format!(
            "{op} needs 1 <= k < (2m-1)/3, got k {k} with m {m}"
        )));
    }
    Ok(())
}

/// Shared body of trustworthiness and continuity: penalizes points that are
/// k-neighbors in `near` but not in `truth`, weighted by their `truth` rank.
fn rank_penalty(truth: &Tensor, near: &Tensor, k: usize) -> Result<f64> {
    let m = truth.shape()[0];
    let truth_idx = NeighborIndex::build(truth)?;
    let near_idx = NeighborIndex::build(near)?;
    let rank = truth_idx.rank_table();
    let mut total = 0usize;
    for i in 0..m {
        let truth_set = truth_idx.neighbors(i, k);
        for &j in near_idx.neighbors(i, k) {
            if !truth_set.contains(&j) {
                total += rank[i][j] - k;
            }
        }
    }
    let norm = (m * k * (2 * m - 3 * k - 1)) as f64;
    Ok(1.0 - 2.0 * total as f64 / norm)
}

/// 1 − (2/(mk(2m−3k−1))) Σ_i Σ_{j ∈ U_i^k} (r(i,j) − k), where U_i^k holds
/// projected-space neighbors absent from the data-space neighborhood and
/// r(i,j) is the data-space rank. 1 iff the projection invents no neighbors.
pub fn trustworthiness(x: &Tensor, p: &Tensor, k: usize) -> Result<f64> {
    let m = check_same_rows("trustworthiness", x, p)?;
    check_rank_k("trustworthiness", m, k)?;
    rank_penalty(x, p, k)
}

/// The symmetric counterpart of trustworthiness: penalizes data-space
/// neighbors missing from the projection, with ranks taken in projection
/// space. 1 iff the projection loses no neighbors.
pub fn continuity(x: &Tensor, p: &Tensor, k: usize) -> Result<f64> {
    let m = check_same_rows("continuity", x, p)?;
    check_rank_k("continuity", m, k)?;
    rank_penalty(p, x, k)
}

/// All m(m−1)/2 pairwise distances, pairs in (i, j < i) row order.
fn pair_distances(points: &Tensor) -> Vec<f64> {
    let m = points.shape()[0];
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in 0..i {
            out.push(euclid(points.row(i), points.row(j)));
        }
    }
    out
}

/// Average ranks (1-based, ties share the mean of their positions).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start..end (0-based) share the average 1-based rank
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Spearman rank correlation between data-space and projected-space pairwise
/// distances (the Shepard-diagram correlation).
pub fn shepard_correlation(x: &Tensor, p: &Tensor) -> Result<f64> {
    let m = check_same_rows("shepard_correlation", x, p)?;
    if m < 3 {
        return Err(Error::invalid(format!(
            "shepard_correlation needs at least 3 points, got {m}"
        )));
    }
    let dx = pair_distances(x);
    let dp = pair_distances(p);
    let rx = average_ranks(&dx);
    let rp = average_ranks(&dp);
    pearson(&rx, &rp).ok_or_else(|| {
        Error::numerical("shepard correlation undefined: a distance vector is constant")
    })
}

/// Σ_{i<j} (Δⁿ_ij − Δ^q_ij)² / Σ_{i<j} (Δⁿ_ij)². Zero iff every pairwise
/// distance is preserved exactly; can exceed 1 for badly scaled projections.
pub fn normalized_stress(x: &Tensor, p: &Tensor) -> Result<f64> {
    check_same_rows("normalized_stress", x, p)?;
    let dx = pair_distances(x);
    let dp = pair_distances(p);
    let denom: f64 = dx.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Err(Error::invalid(
            "normalized_stress undefined: all data points coincide",
        ));
    }
    let num: f64 = dx.iter().zip(&dp).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

fn check_labels(op: &'static str, m: usize, y: &[usize]) -> Result<usize> {
    if y.len() != m {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![m],
            right: vec![y.len()],
        });
    }
    Ok(y.iter().max().map_or(0, |&l| l + 1))
}

/// Mean over points of the fraction of their k projected-space neighbors
/// sharing the point's label.
pub fn neighborhood_hit(p: &Tensor, y: &[usize], k: usize) -> Result<f64> {
    let m = check_points("neighborhood_hit", p)?;
    check_labels("neighborhood_hit", m, y)?;
    if k < 1 || k >= m {
        return Err(Error::invalid(format!(
            "neighborhood_hit needs 1 <= k < m, got k {k} with m {m}"
        )));
    }
    let idx = NeighborIndex::build(p)?;
    let mut total = 0.0;
    for i in 0..m {
        let same = idx
            .neighbors(i, k)
            .iter()
            .filter(|&&j| y[j] == y[i])
            .count();
        total += same as f64 / k as f64;
    }
    Ok(total / m as f64)
}

/// Fraction of points whose nearest class centroid (in P) belongs to their
/// own class. 1 means perfectly separable clusters.
pub fn distance_consistency(p: &Tensor, y: &[usize]) -> Result<f64> {
    let m = check_points("distance_consistency", p)?;
    let class_count = check_labels("distance_consistency", m, y)?;
    let dim = p.shape()[1];
    let mut centroids = vec![vec![0.0; dim]; class_count];
    let mut counts = vec![0usize; class_count];
    for (i, &label) in y.iter().enumerate() {
        counts[label] += 1;
        for (c, v) in centroids[label].iter_mut().zip(p.row(i)) {
            *c += v;
        }
    }
    for (label, count) in counts.iter().enumerate() {
        if *count == 0 {
            return Err(Error::invalid(format!(
                "distance_consistency: class {label} has no points"
            )));
        }
        for c in centroids[label].iter_mut() {
            *c /= *count as f64;
        }
    }
    let mut hits = 0usize;
    for (i, &label) in y.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = euclid(p.row(i), centroid);
            // ties break toward the lower class index
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / m as f64)
}

/// All six metrics in one report. Each field matches the standalone
/// operation bitwise.
pub fn evaluate_all(x: &Tensor, p: &Tensor, y: &[usize], k: usize) -> Result<MetricsReport> {
    Ok(MetricsReport {
        trustworthiness: trustworthiness(x, p, k)?,
        continuity: continuity(x, p, k)?,
        shepard_correlation: shepard_correlation(x, p)?,
        normalized_stress: normalized_stress(x, p)?,
        neighborhood_hit: neighborhood_hit(p, y, k)?,
        distance_consistency: distance_consistency(p, y)?,
        k,
    })
}
