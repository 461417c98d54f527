//! Synthetic datasets for tests and examples: well-separated Gaussian
//! blobs in n dimensions, scaled to [0, 1].

use crate::error::Result;
use crate::rng::stream;
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `k` spherical Gaussian blobs of `per_class` points in `dim` dimensions.
/// Centers sit on coordinate axes at distance `separation`; each blob has
/// unit-ish spread. Features are min-max scaled into [0, 1]. Returns
/// (X [m, dim], labels in 0..k).
pub fn gaussian_blobs(
    per_class: usize,
    k: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(Tensor, Vec<usize>)> {
    let mut rng = stream(seed, "synth-blobs");
    let m = per_class * k;
    let mut data = vec![0.0; m * dim];
    let mut labels = vec![0usize; m];
    for c in 0..k {
        // center: separation on axis (c mod dim), alternating sign as the
        // axis wraps so centers never collide
        let axis = c % dim;
        let sign = if (c / dim) % 2 == 0 { 1.0 } else { -1.0 };
        for i in 0..per_class {
            let row = c * per_class + i;
            labels[row] = c;
            for d in 0..dim {
                let center = if d == axis { sign * separation } else { 0.0 };
                let noise: f64 = StandardNormal.sample(&mut rng);
                data[row * dim + d] = center + noise;
            }
        }
    }
    // min-max scale to [0, 1], then interleave classes so mini-batches stay
    // mixed even unshuffled
    scale_and_shuffle(&mut rng, data, labels, m, dim)
}

/// Like [`gaussian_blobs`] but each cluster is a flattened pancake: unit
/// spread along one random cluster-specific direction, `1/elongation` of
/// that across the rest. A faithful unregularized projection reproduces the
/// elongation; a shape-regularized one suppresses it, which is what the
/// cluster-shape tests measure.
pub fn anisotropic_blobs(
    per_class: usize,
    k: usize,
    dim: usize,
    separation: f64,
    elongation: f64,
    seed: u64,
) -> Result<(Tensor, Vec<usize>)> {
    if elongation < 1.0 {
        return Err(crate::error::Error::invalid(format!(
            "elongation must be >= 1, got {elongation}"
        )));
    }
    let mut rng = stream(seed, "synth-pancakes");
    let m = per_class * k;
    let small = 1.0 / elongation;
    let mut data = vec![0.0; m * dim];
    let mut labels = vec![0usize; m];
    for c in 0..k {
        let axis = c % dim;
        let sign = if (c / dim) % 2 == 0 { 1.0 } else { -1.0 };
        // cluster-specific long direction, uniform on the sphere
        let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in dir.iter_mut() {
            *v /= norm;
        }
        for i in 0..per_class {
            let row = c * per_class + i;
            labels[row] = c;
            let along: f64 = StandardNormal.sample(&mut rng);
            for d in 0..dim {
                let center = if d == axis { sign * separation } else { 0.0 };
                let iso: f64 = StandardNormal.sample(&mut rng);
                data[row * dim + d] = center + small * iso + along * dir[d];
            }
        }
    }
    scale_and_shuffle(&mut rng, data, labels, m, dim)
}

fn scale_and_shuffle(
    rng: &mut impl Rng,
    mut data: Vec<f64>,
    labels: Vec<usize>,
    m: usize,
    dim: usize,
) -> Result<(Tensor, Vec<usize>)> {
    for d in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..m {
            lo = lo.min(data[i * dim + d]);
            hi = hi.max(data[i * dim + d]);
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        for i in 0..m {
            data[i * dim + d] = (data[i * dim + d] - lo) / span;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    let mut shuffled = vec![0.0; m * dim];
    let mut shuffled_labels = vec![0usize; m];
    for i in (1..m).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    for (new_row, &old_row) in order.iter().enumerate() {
        shuffled[new_row * dim..(new_row + 1) * dim]
            .copy_from_slice(&data[old_row * dim..(old_row + 1) * dim]);
        shuffled_labels[new_row] = labels[old_row];
    }
    Ok((Tensor::new(vec![m, dim], shuffled)?, shuffled_labels))
}
