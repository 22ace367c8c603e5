//! Clustering evaluation: k-means over coefficient rows, majority label
//! mapping, and the ACC / NMI metrics.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{seeded, streams};
use crate::scalar::Scalar;

/// Default Lloyd-iteration cap.
pub const KMEANS_MAX_ITERS: usize = 300;

/// Integer class labels for n samples, each in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Data("label vector must not be empty".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    /// Infers the class count as `max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let max = *labels
            .iter()
            .max()
            .ok_or_else(|| Error::Data("label vector must not be empty".into()))?;
        Self::new(labels, max + 1)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Output of [`kmeans`], prior to label mapping.
#[derive(Debug, Clone)]
pub struct ClusteringResult<F> {
    /// Cluster index per sample.
    pub assignments: Vec<usize>,
    /// Cluster centroids as rows.
    pub centroids: Array2<F>,
    /// Within-cluster squared distance after each Lloyd iteration.
    pub inertia_history: Vec<F>,
}

/// ACC/NMI pair for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterMetrics {
    pub acc: f64,
    pub nmi: f64,
}

/// Lloyd k-means with distance-weighted (k-means++ style) seeding.
///
/// Points are rows. Assignment ties break toward the lowest cluster index;
/// an empty cluster is repaired by moving the point farthest from its own
/// centroid into it. Deterministic per seed.
pub fn kmeans<F: Scalar>(
    points: &Array2<F>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusteringResult<F>> {
    let n = points.nrows();
    let dim = points.ncols();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot form {k} clusters from {n} samples"
        )));
    }

    let mut rng = seeded(seed, streams::KMEANS);
    let mut centroids = Array2::<F>::zeros((k, dim));

    // k-means++ seeding: first centroid uniform, then proportional to the
    // squared distance to the nearest chosen centroid.
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut nearest_sq: Vec<F> = (0..n)
        .map(|i| row_distance_sq(points, i, &centroids, 0))
        .collect();
    for c in 1..k {
        let total: f64 = nearest_sq.iter().map(|d| d.to_f64().unwrap_or(0.0)).sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in nearest_sq.iter().enumerate() {
                acc += d.to_f64().unwrap_or(0.0);
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all remaining distances are zero (duplicated points)
            c.min(n - 1)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for i in 0..n {
            let d = row_distance_sq(points, i, &centroids, c);
            if d < nearest_sq[i] {
                nearest_sq[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; n];
    let mut inertia_history = Vec::new();
    for _ in 0..max_iters {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = row_distance_sq(points, i, &centroids, 0);
            for c in 1..k {
                let d = row_distance_sq(points, i, &centroids, c);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }

        // repair empty clusters in index order
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far_i = usize::MAX;
            let mut far_d = F::neg_infinity();
            for i in 0..n {
                if counts[assignments[i]] <= 1 {
                    continue; // do not empty a singleton donor
                }
                let d = row_distance_sq(points, i, &centroids, assignments[i]);
                if d > far_d {
                    far_d = d;
                    far_i = i;
                }
            }
            if far_i == usize::MAX {
                continue;
            }
            counts[assignments[far_i]] -= 1;
            assignments[far_i] = c;
            counts[c] = 1;
            changed = true;
        }

        // centroid update: mean of the assigned rows
        centroids.fill(F::zero());
        for (i, &a) in assignments.iter().enumerate() {
            for j in 0..dim {
                centroids[[a, j]] += points[[i, j]];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = F::one() / F::real(counts[c] as f64);
                for j in 0..dim {
                    centroids[[c, j]] *= inv;
                }
            }
        }

        let mut inertia = F::zero();
        for (i, &a) in assignments.iter().enumerate() {
            inertia += row_distance_sq(points, i, &centroids, a);
        }
        inertia_history.push(inertia);
        if !changed {
            break;
        }
    }

    Ok(ClusteringResult {
        assignments,
        centroids,
        inertia_history,
    })
}

fn row_distance_sq<F: Scalar>(
    points: &Array2<F>,
    i: usize,
    centroids: &Array2<F>,
    c: usize,
) -> F {
    let mut ss = F::zero();
    for j in 0..points.ncols() {
        let d = points[[i, j]] - centroids[[c, j]];
        ss += d * d;
    }
    ss
}

/// Maps each cluster to the true label that appears most often among its
/// members; ties break toward the smaller label value. Distinct clusters may
/// map to the same label.
pub fn majority_map(assignments: &[usize], k: usize, truth: &LabelVector) -> Result<LabelVector> {
    if assignments.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments vs {} labels",
            assignments.len(),
            truth.len()
        )));
    }
    let classes = truth.num_classes();
    let mut counts = vec![vec![0usize; classes]; k];
    for (&a, &y) in assignments.iter().zip(truth.labels()) {
        if a >= k {
            return Err(Error::Data(format!("cluster index {a} out of range for k={k}")));
        }
        counts[a][y] += 1;
    }
    let mut cluster_label = vec![0usize; k];
    for (c, row) in counts.iter().enumerate() {
        let mut best = 0usize;
        for (label, &count) in row.iter().enumerate() {
            if count > row[best] {
                best = label;
            }
        }
        cluster_label[c] = best;
    }
    let mapped = assignments.iter().map(|&a| cluster_label[a]).collect();
    LabelVector::new(mapped, classes)
}

/// Clustering accuracy: the fraction of samples whose labels agree.
pub fn acc(y: &LabelVector, c: &LabelVector) -> Result<f64> {
    if y.len() != c.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} labels",
            y.len(),
            c.len()
        )));
    }
    let hits = y
        .labels()
        .iter()
        .zip(c.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / y.len() as f64)
}

/// Normalized mutual information, `I(Y,C) / max(H(Y), H(C))` with base-2
/// logs and empirical frequencies.
///
/// When both marginal entropies are zero each side is a single block, i.e.
/// identical partitions, and the value is defined as 1.
pub fn nmi(y: &LabelVector, c: &LabelVector) -> Result<f64> {
    if y.len() != c.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} labels",
            y.len(),
            c.len()
        )));
    }
    let n = y.len() as f64;
    let ky = y.num_classes();
    let kc = c.num_classes();
    let mut joint = vec![vec![0usize; kc]; ky];
    let mut ny = vec![0usize; ky];
    let mut nc = vec![0usize; kc];
    for (&a, &b) in y.labels().iter().zip(c.labels()) {
        joint[a][b] += 1;
        ny[a] += 1;
        nc[b] += 1;
    }
    let hy = entropy(&ny, n);
    let hc = entropy(&nc, n);
    let denom = hy.max(hc);
    if denom <= 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (a, row) in joint.iter().enumerate() {
        for (b, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let p = count as f64 / n;
            let py = ny[a] as f64 / n;
            let pc = nc[b] as f64 / n;
            mi += p * (p / (py * pc)).log2();
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    let mut h = 0.0;
    for &count in counts {
        if count == 0 {
            continue;
        }
        let p = count as f64 / n;
        h -= p * p.log2();
    }
    h
}

/// Full evaluation protocol: k-means on the rows of V, majority mapping,
/// then ACC and NMI against the ground truth.
pub fn evaluate<F: Scalar>(
    v: &Array2<F>,
    truth: &LabelVector,
    k: usize,
    seed: u64,
) -> Result<ClusterMetrics> {
    if v.nrows() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "V has {} rows, truth has {} labels",
            v.nrows(),
            truth.len()
        )));
    }
    let clustering = kmeans(v, k, seed, KMEANS_MAX_ITERS)?;
    let mapped = majority_map(&clustering.assignments, k, truth)?;
    Ok(ClusterMetrics {
        acc: acc(truth, &mapped)?,
        nmi: nmi(truth, &mapped)?,
    })
}
