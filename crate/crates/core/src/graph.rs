//! p-nearest-neighbor sample graph and its weighted Laplacians.
//!
//! The graph is built once per run from the columns of the data matrix. The
//! graph-regularized solver uses the static binary weights; the L2,1 solver
//! reweights every edge by the reciprocal coefficient-row distance at each
//! iteration.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::matrix::{guarded_reciprocal, EpsilonPolicy};
use crate::scalar::Scalar;

/// Symmetric binary p-NN adjacency over n samples, stored as one sorted
/// neighbor list per row. Union symmetrization can push a row above p
/// entries; every row has between p and n-1 of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    p: usize,
    neighbors: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// Builds a graph directly from neighbor lists. Lists must be strictly
    /// sorted, self-loop free, and symmetric. Used by tests and loaders; the
    /// usual entry point is [`build_knn_graph`].
    pub fn from_neighbor_lists(neighbors: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let n = neighbors.len();
        for (i, row) in neighbors.iter().enumerate() {
            for (pos, &j) in row.iter().enumerate() {
                if j >= n {
                    return Err(Error::InvalidParameter(format!(
                        "neighbor index {j} out of range for {n} samples"
                    )));
                }
                if j == i {
                    return Err(Error::InvalidParameter(format!("self-loop at sample {i}")));
                }
                if pos > 0 && row[pos - 1] >= j {
                    return Err(Error::InvalidParameter(format!(
                        "neighbor list of sample {i} is not strictly sorted"
                    )));
                }
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency is not symmetric: {i} -> {j} has no mirror"
                    )));
                }
            }
        }
        Ok(Self { p, neighbors })
    }

    pub fn sample_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// Number of unordered edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Unordered edges (i, j) with i < j, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

/// Builds the p-nearest-neighbor graph over the columns of `x` using
/// Euclidean distance. Distance ties break toward the lower sample index;
/// neighborhoods are symmetrized by union.
pub fn build_knn_graph<F: Scalar>(x: &Array2<F>, p: usize) -> Result<NeighborGraph> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "neighbor graph needs at least 2 samples, got {n}"
        )));
    }
    if p < 1 || p >= n {
        return Err(Error::InvalidParameter(format!(
            "neighbor count p must satisfy 1 <= p < n, got p={p}, n={n}"
        )));
    }

    let cols: Vec<_> = x.columns().into_iter().collect();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dists: Vec<(F, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        for (j, col) in cols.iter().enumerate() {
            if j == i {
                continue;
            }
            let mut ss = F::zero();
            for (&a, &b) in cols[i].iter().zip(col.iter()) {
                let d = a - b;
                ss += d * d;
            }
            dists.push((ss, j));
        }
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distance").then(a.1.cmp(&b.1)));
        for &(_, j) in &dists[..p] {
            neighbors[i].push(j);
        }
    }

    // union symmetrization
    let chosen = neighbors.clone();
    for (i, row) in chosen.iter().enumerate() {
        for &j in row {
            if !neighbors[j].contains(&i) {
                neighbors[j].push(i);
            }
        }
    }
    for row in &mut neighbors {
        row.sort_unstable();
        row.dedup();
    }
    Ok(NeighborGraph { p, neighbors })
}

/// Weighted graph with its degree diagonal: L = D̄ - W with
/// `D̄_ii = Σ_{j≠i} W_ij`. Weights share the adjacency sparsity.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLaplacian<F> {
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<F>>,
    degrees: Vec<F>,
}

impl<F: Scalar> WeightedLaplacian<F> {
    fn from_weights(neighbors: Vec<Vec<usize>>, weights: Vec<Vec<F>>) -> Self {
        let degrees = weights
            .iter()
            .map(|row| row.iter().fold(F::zero(), |s, &w| s + w))
            .collect();
        Self {
            neighbors,
            weights,
            degrees,
        }
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degrees(&self) -> &[F] {
        &self.degrees
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn weight_rows(&self) -> &[Vec<F>] {
        &self.weights
    }

    /// W · V, using the sparse edge lists (O(edges · k)).
    pub fn weighted_neighbor_sum(&self, v: &Array2<F>) -> Array2<F> {
        debug_assert_eq!(v.nrows(), self.node_count());
        let k = v.ncols();
        let mut out = Array2::zeros((self.node_count(), k));
        for i in 0..self.node_count() {
            for (&j, &w) in self.neighbors[i].iter().zip(self.weights[i].iter()) {
                for c in 0..k {
                    out[[i, c]] += w * v[[j, c]];
                }
            }
        }
        out
    }

    /// D̄ · V (row scaling by degree).
    pub fn degree_scaled(&self, v: &Array2<F>) -> Array2<F> {
        debug_assert_eq!(v.nrows(), self.node_count());
        let mut out = v.clone();
        for (mut row, &d) in out.rows_mut().into_iter().zip(self.degrees.iter()) {
            row.mapv_inplace(|x| x * d);
        }
        out
    }

    /// L · V = D̄ V - W V, accumulated edgewise as Σ_j W_ij (V_i - V_j).
    /// Equal to the two-product form by the zero-row-sum construction, but
    /// stable when clamped weights multiply nearly identical rows.
    pub fn apply(&self, v: &Array2<F>) -> Array2<F> {
        debug_assert_eq!(v.nrows(), self.node_count());
        let k = v.ncols();
        let mut out = Array2::zeros((self.node_count(), k));
        for i in 0..self.node_count() {
            for (&j, &w) in self.neighbors[i].iter().zip(self.weights[i].iter()) {
                for c in 0..k {
                    out[[i, c]] += w * (v[[i, c]] - v[[j, c]]);
                }
            }
        }
        out
    }

    /// tr(Vᵀ L V) accumulated edgewise as Σ_{i<j} W_ij ‖V_i - V_j‖².
    /// Identical to the trace by construction; preferred wherever clamped
    /// weights could meet nearly identical rows.
    pub fn smoothness(&self, v: &Array2<F>) -> F {
        debug_assert_eq!(v.nrows(), self.node_count());
        let k = v.ncols();
        let mut total = F::zero();
        for i in 0..self.node_count() {
            for (&j, &w) in self.neighbors[i].iter().zip(self.weights[i].iter()) {
                if j <= i {
                    continue;
                }
                let mut ss = F::zero();
                for c in 0..k {
                    let d = v[[i, c]] - v[[j, c]];
                    ss += d * d;
                }
                total += w * ss;
            }
        }
        total
    }

    /// Row sum of L at node `i`; zero by construction up to rounding.
    pub fn laplacian_row_sum(&self, i: usize) -> F {
        self.degrees[i] - self.weights[i].iter().fold(F::zero(), |s, &w| s + w)
    }

    /// New Laplacian on the same adjacency with every edge reweighted by the
    /// guarded reciprocal distance between the coefficient rows it joins.
    pub fn reweighted(&self, v: &Array2<F>, policy: EpsilonPolicy<F>) -> Result<Self> {
        reweight_from_adjacency(self.neighbors.clone(), v, policy)
    }
}

fn reweight_from_adjacency<F: Scalar>(
    neighbors: Vec<Vec<usize>>,
    v: &Array2<F>,
    policy: EpsilonPolicy<F>,
) -> Result<WeightedLaplacian<F>> {
    let n = neighbors.len();
    if v.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "V has {} rows, graph has {n} nodes",
            v.nrows()
        )));
    }
    let k = v.ncols();
    let mut weights = Vec::with_capacity(n);
    for (i, row) in neighbors.iter().enumerate() {
        let mut wrow = Vec::with_capacity(row.len());
        for &j in row {
            let mut ss = F::zero();
            for c in 0..k {
                let d = v[[i, c]] - v[[j, c]];
                ss += d * d;
            }
            wrow.push(guarded_reciprocal(ss.sqrt(), policy));
        }
        weights.push(wrow);
    }
    Ok(WeightedLaplacian::from_weights(neighbors, weights))
}

/// Laplacian of the binary adjacency: W equals the adjacency verbatim.
pub fn static_laplacian<F: Scalar>(g: &NeighborGraph) -> WeightedLaplacian<F> {
    let weights = g
        .neighbors
        .iter()
        .map(|row| vec![F::one(); row.len()])
        .collect();
    WeightedLaplacian::from_weights(g.neighbors.clone(), weights)
}

/// Per-iteration weights `W_ij = w_ij / max(||V_i - V_j||, ε)` on the static
/// adjacency, with the matching degrees and Laplacian.
pub fn reweight_laplacian<F: Scalar>(
    g: &NeighborGraph,
    v: &Array2<F>,
    policy: EpsilonPolicy<F>,
) -> Result<WeightedLaplacian<F>> {
    reweight_from_adjacency(g.neighbors.clone(), v, policy)
}

/// tr(Vᵀ L V) = Σ_i D̄_ii ⟨V_i, V_i⟩ - Σ_{i,j} W_ij ⟨V_i, V_j⟩.
pub fn graph_smoothness_l2<F: Scalar>(v: &Array2<F>, lap: &WeightedLaplacian<F>) -> F {
    debug_assert_eq!(v.nrows(), lap.node_count());
    let k = v.ncols();
    let mut total = F::zero();
    for i in 0..lap.node_count() {
        let mut self_ip = F::zero();
        for c in 0..k {
            self_ip += v[[i, c]] * v[[i, c]];
        }
        total += lap.degrees[i] * self_ip;
        for (&j, &w) in lap.neighbors[i].iter().zip(lap.weights[i].iter()) {
            let mut ip = F::zero();
            for c in 0..k {
                ip += v[[i, c]] * v[[j, c]];
            }
            total -= w * ip;
        }
    }
    total
}

/// Σ over unordered edges of ||V_i - V_j||₂ on the binary adjacency.
pub fn graph_smoothness_l21<F: Scalar>(v: &Array2<F>, g: &NeighborGraph) -> F {
    debug_assert_eq!(v.nrows(), g.sample_count());
    let k = v.ncols();
    let mut total = F::zero();
    for (i, j) in g.edges() {
        let mut ss = F::zero();
        for c in 0..k {
            let d = v[[i, c]] - v[[j, c]];
            ss += d * d;
        }
        total += ss.sqrt();
    }
    total
}

/// Dense n×n Laplacian matrix, for tests and small diagnostics.
pub fn dense_laplacian<F: Scalar>(lap: &WeightedLaplacian<F>) -> Array2<F> {
    let n = lap.node_count();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        out[[i, i]] = lap.degrees[i];
        for (&j, &w) in lap.neighbors[i].iter().zip(lap.weights[i].iter()) {
            out[[i, j]] = -w;
        }
    }
    out
}

/// Degree vector as an owned array (diagnostics).
pub fn degree_vector<F: Scalar>(lap: &WeightedLaplacian<F>) -> Array1<F> {
    Array1::from_vec(lap.degrees.clone())
}
