//! Dense-matrix primitives shared by every solver: norms, sign splitting,
//! epsilon-guarded reciprocals, and validation.
//!
//! Matrices follow the columns-as-samples convention: a data matrix is
//! m features by n samples. All reductions run in a fixed sequential order so
//! results are bit-identical regardless of caller threading.

use ndarray::{Array1, Array2, ArrayBase, Data, Ix2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default guard threshold for reciprocals of near-zero denominators.
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// Guard policy for reciprocals: a denominator below `epsilon` is reset to
/// `epsilon` before dividing. Applied at reciprocal time only; stored norms
/// and weights are never mutated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonPolicy<F> {
    epsilon: F,
}

impl<F: Scalar> EpsilonPolicy<F> {
    pub fn new(epsilon: F) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= F::zero() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> F {
        self.epsilon
    }
}

impl<F: Scalar> Default for EpsilonPolicy<F> {
    fn default() -> Self {
        Self {
            epsilon: F::real(DEFAULT_EPSILON),
        }
    }
}

/// `1 / max(x, epsilon)` for `x >= 0`.
pub fn guarded_reciprocal<F: Scalar>(x: F, policy: EpsilonPolicy<F>) -> F {
    F::one() / x.max(policy.epsilon())
}

/// Nonnegative parts of a mixed-sign matrix: `positive - negative`
/// reconstructs the source and `positive + negative` is its absolute value.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSplit<F> {
    pub positive: Array2<F>,
    pub negative: Array2<F>,
}

/// Splits a matrix into its elementwise positive and negative parts.
pub fn split_signs<F: Scalar>(m: &Array2<F>) -> SignSplit<F> {
    let positive = m.mapv(|x| x.max(F::zero()));
    let negative = m.mapv(|x| (-x).max(F::zero()));
    SignSplit { positive, negative }
}

/// L2,1 norm: the sum over columns of Euclidean column norms.
pub fn l21_norm<F, S>(m: &ArrayBase<S, Ix2>) -> F
where
    F: Scalar,
    S: Data<Elem = F>,
{
    let mut total = F::zero();
    for col in m.columns() {
        let mut ss = F::zero();
        for &x in col.iter() {
            ss += x * x;
        }
        total += ss.sqrt();
    }
    total
}

/// Frobenius norm: square root of the sum of squared entries.
pub fn frobenius_norm<F, S>(m: &ArrayBase<S, Ix2>) -> F
where
    F: Scalar,
    S: Data<Elem = F>,
{
    sum_of_squares(m).sqrt()
}

/// Sum of squared entries in row-major order.
pub(crate) fn sum_of_squares<F, S>(m: &ArrayBase<S, Ix2>) -> F
where
    F: Scalar,
    S: Data<Elem = F>,
{
    let mut total = F::zero();
    for &x in m.iter() {
        total += x * x;
    }
    total
}

/// Euclidean norm of each column.
pub fn column_norms<F, S>(m: &ArrayBase<S, Ix2>) -> Array1<F>
where
    F: Scalar,
    S: Data<Elem = F>,
{
    let mut out = Array1::zeros(m.ncols());
    for (j, col) in m.columns().into_iter().enumerate() {
        let mut ss = F::zero();
        for &x in col.iter() {
            ss += x * x;
        }
        out[j] = ss.sqrt();
    }
    out
}

/// Returns a copy of `m` with row `i` scaled by `d[i]`.
pub fn scale_rows<F: Scalar>(m: &Array2<F>, d: &Array1<F>) -> Array2<F> {
    debug_assert_eq!(m.nrows(), d.len());
    let mut out = m.clone();
    for (mut row, &s) in out.rows_mut().into_iter().zip(d.iter()) {
        row.mapv_inplace(|x| x * s);
    }
    out
}

/// Relative reconstruction error `||X - U Vᵀ||_{2,1} / ||X||_{2,1}`.
///
/// Errors when X is the zero matrix (the denominator degenerates).
pub fn relative_error<F: Scalar>(x: &Array2<F>, u: &Array2<F>, v: &Array2<F>) -> Result<F> {
    if u.nrows() != x.nrows() || v.nrows() != x.ncols() || u.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "X is {}x{}, U is {}x{}, V is {}x{}",
            x.nrows(),
            x.ncols(),
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let denom = l21_norm(x);
    if denom == F::zero() {
        return Err(Error::Degenerate(
            "relative error is undefined for the zero matrix".into(),
        ));
    }
    let residual = x - &u.dot(&v.t());
    Ok(l21_norm(&residual) / denom)
}

/// Checks that a matrix is non-empty and all entries are finite.
pub fn validate_matrix<F: Scalar>(m: &Array2<F>, name: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Data(format!("{name} must have at least one row and one column")));
    }
    for ((i, j), &x) in m.indexed_iter() {
        if !x.is_finite() {
            return Err(Error::Data(format!("{name} has non-finite entry {x} at ({i}, {j})")));
        }
    }
    Ok(())
}
