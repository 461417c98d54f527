//! Pseudolabel sources for training without ground truth: Lloyd's K-Means
//! with k-means++ seeding, and bottom-up agglomerative clustering under
//! Ward linkage. Both run on the row-canonicalized point multiset, so any
//! permutation of the input rows yields the identical partition.

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::Tensor;
use rand::Rng;

/// Hard ceiling for the O(m^2) distance matrix of the agglomerative path.
pub const AGGLOMERATIVE_MAX_POINTS: usize = 20_000;

/// Where training labels come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSource {
    GroundTruth,
    KMeans(usize),
    Agglomerative(usize),
}

impl LabelSource {
    /// Produce per-row labels for `x`, clustering if the source demands it.
    pub fn resolve(&self, x: &Tensor, ground_truth: Option<&[usize]>, seed: u64) -> Result<Vec<usize>> {
        match *self {
            LabelSource::GroundTruth => ground_truth
                .map(<[usize]>::to_vec)
                .ok_or_else(|| Error::invalid("label source is ground truth but the dataset has no labels")),
            LabelSource::KMeans(k) => {
                require_cluster_count(k)?;
                kmeans(x, k, seed, 100)
            }
            LabelSource::Agglomerative(k) => {
                require_cluster_count(k)?;
                agglomerative(x, k)
            }
        }
    }
}

fn require_cluster_count(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("pseudolabeling needs at least 2 clusters, got {k}")));
    }
    Ok(())
}

/// Rows sorted lexicographically by coordinates. Running the seeded parts of
/// the algorithms in this order makes them functions of the point multiset
/// rather than of the row order.
fn canonical_order(x: &Tensor) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// K-Means labels in {0..k}: k-means++ seeding, then Lloyd iterations until
/// the assignment reaches a fixpoint or `max_iter` passes.
pub fn kmeans(x: &Tensor, k: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>> {
    Ok(lloyd_full(x, k, seed, max_iter)?.labels)
}

pub(crate) struct KMeansRun {
    pub labels: Vec<usize>,
    // centroids and the WSS trace are exercised by the oracle tests
    #[cfg_attr(not(test), allow(dead_code))]
    pub centroids: Vec<Vec<f64>>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub wss_history: Vec<f64>,
}

pub(crate) fn lloyd_full(x: &Tensor, k: usize, seed: u64, max_iter: usize) -> Result<KMeansRun> {
    let m = x.rows();
    let n = x.cols();
    if k == 0 {
        return Err(Error::invalid("k-means needs at least one cluster"));
    }
    if m < k {
        return Err(Error::invalid(format!("k-means with {k} clusters needs at least {k} points, got {m}")));
    }
    let order = canonical_order(x);
    let mut rng = stream(seed, "kmeans");

    // k-means++ seeding over the canonical order: next centroid drawn with
    // probability proportional to squared distance from the nearest chosen one
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(x.row(order[rng.random_range(0..m)]).to_vec());
    let mut nearest_sq: Vec<f64> = order.iter().map(|&i| squared_distance(x.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest_sq.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = m - 1;
            for (ci, &w) in nearest_sq.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = ci;
                    break;
                }
            }
            chosen
        } else {
            // every remaining point duplicates a centroid; any choice is as good
            rng.random_range(0..m)
        };
        let c = x.row(order[pick]).to_vec();
        for (ci, d) in nearest_sq.iter_mut().enumerate() {
            *d = d.min(squared_distance(x.row(order[ci]), &c));
        }
        centroids.push(c);
    }

    let assign = |centroids: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let mut labels = vec![0usize; m];
        let mut wss = 0.0;
        for &i in &order {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_distance(x.row(i), centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            labels[i] = best;
            wss += best_d;
        }
        (labels, wss)
    };

    let (mut labels, mut wss) = assign(&centroids);
    let mut wss_history = vec![wss];
    for _ in 0..max_iter {
        // mean of each cluster; empty clusters re-seed to the point farthest
        // from its current centroid
        let mut sums = vec![vec![0.0; n]; k];
        let mut counts = vec![0usize; k];
        for &i in &order {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; m];
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let (slot, &far) = order
                    .iter()
                    .enumerate()
                    .filter(|&(ci, _)| !taken[ci])
                    .max_by(|&(_, &a), &(_, &b)| {
                        squared_distance(x.row(a), &centroids[labels[a]])
                            .total_cmp(&squared_distance(x.row(b), &centroids[labels[b]]))
                    })
                    .expect("m >= k leaves a candidate for every empty cluster");
                taken[slot] = true;
                centroids[c] = x.row(far).to_vec();
            }
        }
        let (next, next_wss) = assign(&centroids);
        assert!(
            next_wss <= wss * (1.0 + 1e-12) + 1e-12,
            "Lloyd iteration increased within-cluster sum of squares: {wss} -> {next_wss}"
        );
        wss_history.push(next_wss);
        let fixpoint = next == labels;
        labels = next;
        wss = next_wss;
        if fixpoint {
            break;
        }
    }
    Ok(KMeansRun { labels, centroids, wss_history })
}

/// Agglomerative labels in {0..k}: Ward linkage via the Lance-Williams
/// update on squared inter-cluster distances, merging greedily until k
/// clusters remain. O(m^3) time, O(m^2) memory.
pub fn agglomerative(x: &Tensor, k: usize) -> Result<Vec<usize>> {
    let m = x.rows();
    if k == 0 {
        return Err(Error::invalid("agglomerative clustering needs at least one cluster"));
    }
    if m < k {
        return Err(Error::invalid(format!(
            "agglomerative clustering into {k} clusters needs at least {k} points, got {m}"
        )));
    }
    if m > AGGLOMERATIVE_MAX_POINTS {
        return Err(Error::invalid(format!(
            "agglomerative clustering is O(m^2) memory and capped at {AGGLOMERATIVE_MAX_POINTS} points, got {m}"
        )));
    }

    // squared distances between active clusters, singletons to start with
    let mut dist = vec![0.0f64; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = squared_distance(x.row(i), x.row(j));
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let mut size = vec![1usize; m];
    let mut active: Vec<usize> = (0..m).collect();
    let mut members: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();

    while active.len() > k {
        let (mut bi, mut bj, mut best) = (0usize, 0usize, f64::INFINITY);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let d = dist[i * m + j];
                if d < best {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        // fold bj into bi, then refresh bi's distances by Lance-Williams
        let (ni, nj) = (size[bi] as f64, size[bj] as f64);
        for &h in &active {
            if h == bi || h == bj {
                continue;
            }
            let nh = size[h] as f64;
            let total = ni + nj + nh;
            let merged = ((ni + nh) * dist[bi * m + h] + (nj + nh) * dist[bj * m + h] - nh * dist[bi * m + bj]) / total;
            dist[bi * m + h] = merged;
            dist[h * m + bi] = merged;
        }
        size[bi] += size[bj];
        let moved = std::mem::take(&mut members[bj]);
        members[bi].extend(moved);
        active.retain(|&c| c != bj);
    }

    // name clusters 0..k by their smallest member row
    let mut final_clusters: Vec<&Vec<usize>> = active.iter().map(|&c| &members[c]).collect();
    final_clusters.sort_by_key(|ms| *ms.iter().min().expect("active clusters are nonempty"));
    let mut labels = vec![0usize; m];
    for (name, ms) in final_clusters.iter().enumerate() {
        for &row in ms.iter() {
            labels[row] = name;
        }
    }
    Ok(labels)
}
