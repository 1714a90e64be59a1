//! Lloyd's K-Means with k-means++ seeding.
//!
//! Runs `n_init` independently seeded restarts and keeps the one with the
//! lowest within-cluster sum of squares. Empty clusters are repaired by moving
//! their center onto the point currently farthest from its own center.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the summed squared center movement of one iteration drops below this.
    pub tol: f64,
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            seed: 0,
            max_iters: 300,
            tol: 1e-6,
            n_init: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub centers: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub inertia: T,
    pub iterations: usize,
}

/// Number of distinct points, comparing values (so `-0.0 == 0.0`).
pub fn distinct_count<T: Scalar>(points: &[Vec<T>]) -> usize {
    points
        .iter()
        .map(|p| {
            p.iter()
                .map(|&x| (x + T::zero()).as_f64().to_bits())
                .collect::<Vec<u64>>()
        })
        .collect::<HashSet<_>>()
        .len()
}

pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

pub fn kmeans<T: Scalar>(points: &[Vec<T>], k: usize, cfg: &KMeansConfig) -> Result<KMeansResult<T>> {
    if points.is_empty() || k == 0 {
        return Err(Error::Clustering(format!(
            "need at least one point and one cluster (points {}, k {k})",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::Clustering(
            "points must share one positive dimension".into(),
        ));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Clustering("points must be finite".into()));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::Clustering(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }

    let mut best: Option<KMeansResult<T>> = None;
    for init in 0..cfg.n_init.max(1) {
        let run = lloyd(points, k, cfg, init as u64);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd<T: Scalar>(points: &[Vec<T>], k: usize, cfg: &KMeansConfig, init: u64) -> KMeansResult<T> {
    let mut centers = plus_plus_seeds(points, k, cfg.seed, init);
    let mut labels = vec![0usize; points.len()];
    let mut dists = vec![T::zero(); points.len()];
    let tol = T::of(cfg.tol);
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        assign(points, &centers, &mut labels, &mut dists);
        let mut next = cluster_means(points, &labels, k);
        repair_empty(points, &mut next, &mut labels, &mut dists);
        let next: Vec<Vec<T>> = next.into_iter().map(|c| c.expect("repaired")).collect();
        let shift = centers
            .iter()
            .zip(&next)
            .fold(T::zero(), |acc, (a, b)| acc + squared_distance(a, b));
        centers = next;
        if shift < tol {
            break;
        }
    }
    assign(points, &centers, &mut labels, &mut dists);
    // A final assignment can in principle empty a cluster again; fix it the
    // same way so every label in 0..k stays in use.
    let mut occupied = vec![false; k];
    labels.iter().for_each(|&l| occupied[l] = true);
    if occupied.iter().any(|o| !o) {
        let mut slots: Vec<Option<Vec<T>>> = centers
            .iter()
            .zip(&occupied)
            .map(|(c, &o)| o.then(|| c.clone()))
            .collect();
        repair_empty(points, &mut slots, &mut labels, &mut dists);
        centers = slots.into_iter().map(|c| c.expect("repaired")).collect();
    }
    let inertia = dists.iter().copied().sum();
    KMeansResult {
        centers,
        labels,
        inertia,
        iterations,
    }
}

fn plus_plus_seeds<T: Scalar>(points: &[Vec<T>], k: usize, base: u64, init: u64) -> Vec<Vec<T>> {
    let mut rng = seed::rng(base, &[seed::STREAM_INIT, init]);
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points
        .par_iter()
        .map(|p| squared_distance(p, &centers[0]).as_f64())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        assert!(total > 0.0, "fewer distinct points than clusters");
        let c = points[sample_d2(&d2, total, rng.random::<f64>())].clone();
        d2.par_iter_mut().zip(points.par_iter()).for_each(|(d, p)| {
            let nd = squared_distance(p, &c).as_f64();
            if nd < *d {
                *d = nd;
            }
        });
        centers.push(c);
    }
    centers
}

/// Index drawn with probability proportional to `d2`; zero-weight points
/// (already centers) are never chosen.
fn sample_d2(d2: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    for (i, &d) in d2.iter().enumerate() {
        acc += d;
        if d > 0.0 && acc > target {
            return i;
        }
    }
    // Rounding can leave `target` just above the accumulated sum.
    d2.iter().rposition(|&d| d > 0.0).expect("positive total")
}

fn assign<T: Scalar>(points: &[Vec<T>], centers: &[Vec<T>], labels: &mut [usize], dists: &mut [T]) {
    labels
        .par_iter_mut()
        .zip(dists.par_iter_mut())
        .zip(points.par_iter())
        .for_each(|((label, dist), p)| {
            let mut best = 0;
            let mut best_d = squared_distance(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = squared_distance(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            *label = best;
            *dist = best_d;
        });
}

/// Means computed relative to each cluster's first member, so a cluster of
/// identical points reproduces that point bit-exactly.
fn cluster_means<T: Scalar>(points: &[Vec<T>], labels: &[usize], k: usize) -> Vec<Option<Vec<T>>> {
    let dim = points[0].len();
    let mut anchor: Vec<Option<usize>> = vec![None; k];
    let mut sums = vec![vec![T::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (i, (p, &l)) in points.iter().zip(labels).enumerate() {
        let a = *anchor[l].get_or_insert(i);
        for (s, (&x, &r)) in sums[l].iter_mut().zip(p.iter().zip(&points[a])) {
            *s = *s + (x - r);
        }
        counts[l] += 1;
    }
    (0..k)
        .map(|c| {
            anchor[c].map(|a| {
                let n = T::from_usize(counts[c]).expect("count fits");
                points[a]
                    .iter()
                    .zip(&sums[c])
                    .map(|(&r, &s)| r + s / n)
                    .collect()
            })
        })
        .collect()
}

fn repair_empty<T: Scalar>(
    points: &[Vec<T>],
    centers: &mut [Option<Vec<T>>],
    labels: &mut [usize],
    dists: &mut [T],
) {
    let mut sizes = vec![0usize; centers.len()];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for c in 0..centers.len() {
        if centers[c].is_some() {
            continue;
        }
        // Farthest point whose removal does not empty its own cluster.
        let far = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None::<usize>, |best, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            })
            .expect("k <= distinct points leaves a donor");
        sizes[labels[far]] -= 1;
        sizes[c] = 1;
        labels[far] = c;
        dists[far] = T::zero();
        centers[c] = Some(points[far].clone());
    }
}
