//! Direct dense solve for the small k×k Gram systems in the U updates.
//!
//! The weighted Gram matrices VᵀDV span many orders of magnitude once the
//! residual weights D grow, so a naive LU solve can pass a pivot test and
//! still return garbage. The solve therefore symmetrically equilibrates the
//! system to a correlation matrix first, verifies the residual, applies one
//! step of iterative refinement, and falls back to an escalating ridge on
//! the equilibrated diagonal when the matrix is singular to working
//! precision.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ridge applied to the equilibrated (unit-diagonal) Gram matrix when it is
/// singular to working precision; `1e-12 · trace/k` of that matrix.
const RIDGE_SCALE: f64 = 1e-12;

/// Relative residual above which a computed solution is rejected.
const RESIDUAL_TOL: f64 = 1e-8;

/// Solves `Z · A = B` for Z (B: m×k, A: symmetric PSD k×k).
///
/// Returns the solution and a flag reporting whether the ridge fallback was
/// needed.
pub fn solve_right<F: Scalar>(b: &Array2<F>, a: &Array2<F>) -> Result<(Array2<F>, bool)> {
    let k = a.nrows();
    if a.ncols() != k || b.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "solve_right: B is {}x{}, A is {}x{}",
            b.nrows(),
            b.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }

    // symmetric Jacobi equilibration: As = S A S with unit diagonal
    let mut max_diag = F::zero();
    for i in 0..k {
        max_diag = max_diag.max(a[[i, i]].abs());
    }
    let scale: Array1<F> = (0..k)
        .map(|i| {
            let d = a[[i, i]];
            if d > F::zero() {
                F::one() / d.sqrt()
            } else if max_diag > F::zero() {
                F::one() / max_diag.sqrt()
            } else {
                F::one()
            }
        })
        .collect();
    let mut a_eq = a.clone();
    for i in 0..k {
        for j in 0..k {
            a_eq[[i, j]] = a[[i, j]] * scale[i] * scale[j];
        }
    }
    // column j of B pairs with solution column j, scaled by S_jj
    let mut b_eq = b.clone();
    for j in 0..k {
        let s = scale[j];
        for i in 0..b.nrows() {
            b_eq[[i, j]] = b[[i, j]] * s;
        }
    }

    let b_scale = b_eq.iter().fold(F::zero(), |s: F, &x| s.max(x.abs()));
    let tol = F::real(RESIDUAL_TOL) * (F::one() + b_scale);

    if let Some(y) = refined_lu_solve(&b_eq, &a_eq) {
        if residual_norm(&y, &a_eq, &b_eq) <= tol {
            return Ok((rescale_solution(&y, &scale), false));
        }
    }

    let mut ridge = F::real(RIDGE_SCALE);
    for _ in 0..8 {
        let mut regularized = a_eq.clone();
        for i in 0..k {
            regularized[[i, i]] += ridge;
        }
        if let Some(y) = refined_lu_solve(&b_eq, &regularized) {
            if residual_norm(&y, &regularized, &b_eq) <= tol {
                return Ok((rescale_solution(&y, &scale), true));
            }
        }
        ridge *= F::real(1e4);
    }
    Err(Error::Degenerate(
        "Gram matrix stayed singular after ridge regularization".into(),
    ))
}

/// Z = Y · S, undoing the equilibration on the solution columns.
fn rescale_solution<F: Scalar>(y: &Array2<F>, scale: &Array1<F>) -> Array2<F> {
    let mut z = y.clone();
    for (j, &s) in scale.iter().enumerate() {
        for i in 0..z.nrows() {
            z[[i, j]] *= s;
        }
    }
    z
}

/// Max-abs entry of `Y·A - B`.
fn residual_norm<F: Scalar>(y: &Array2<F>, a: &Array2<F>, b: &Array2<F>) -> F {
    let product = y.dot(a);
    let mut worst = F::zero();
    for (p, q) in product.iter().zip(b.iter()) {
        let diff = (*p - *q).abs();
        if diff > worst {
            worst = diff;
        }
    }
    worst
}

/// LU solve of `Y · A = B` with one round of iterative refinement.
fn refined_lu_solve<F: Scalar>(b: &Array2<F>, a: &Array2<F>) -> Option<Array2<F>> {
    let lu = LuFactors::factor(a)?;
    let mut y = lu.solve_right(b);
    let residual = b - &y.dot(a);
    let correction = lu.solve_right(&residual);
    y += &correction;
    Some(y)
}

/// Partial-pivot LU factorization of Aᵀ, for right-hand solves `Y·A = B`.
struct LuFactors<F> {
    lu: Array2<F>,
    piv: Vec<usize>,
}

impl<F: Scalar> LuFactors<F> {
    fn factor(a: &Array2<F>) -> Option<Self> {
        let k = a.nrows();
        let mut lu = a.t().to_owned();
        let mut piv = vec![0usize; k];
        let scale = lu.iter().fold(F::zero(), |s: F, &x| s.max(x.abs()));
        let tol = scale * F::epsilon() * F::real(k as f64);

        for col in 0..k {
            let mut pivot_row = col;
            let mut pivot_val = lu[[col, col]].abs();
            for r in col + 1..k {
                let v = lu[[r, col]].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if !(pivot_val > tol) {
                return None;
            }
            piv[col] = pivot_row;
            if pivot_row != col {
                for c in 0..k {
                    let tmp = lu[[col, c]];
                    lu[[col, c]] = lu[[pivot_row, c]];
                    lu[[pivot_row, c]] = tmp;
                }
            }
            for r in col + 1..k {
                let factor = lu[[r, col]] / lu[[col, col]];
                lu[[r, col]] = factor;
                for c in col + 1..k {
                    lu[[r, c]] = lu[[r, c]] - factor * lu[[col, c]];
                }
            }
        }
        Some(Self { lu, piv })
    }

    fn solve_right(&self, b: &Array2<F>) -> Array2<F> {
        let k = self.lu.nrows();
        let m = b.nrows();
        let mut z = Array2::zeros((m, k));
        let mut y = vec![F::zero(); k];
        for row in 0..m {
            for (i, slot) in y.iter_mut().enumerate() {
                *slot = b[[row, i]];
            }
            // rows of the factors were swapped wholesale, so the permutation
            // applies to the RHS up front, then clean triangular solves
            for col in 0..k {
                if self.piv[col] != col {
                    y.swap(col, self.piv[col]);
                }
            }
            for col in 0..k {
                for r in col + 1..k {
                    let factor = self.lu[[r, col]] * y[col];
                    y[r] -= factor;
                }
            }
            for col in (0..k).rev() {
                let mut s = y[col];
                for c in col + 1..k {
                    s -= self.lu[[col, c]] * y[c];
                }
                y[col] = s / self.lu[[col, col]];
            }
            for (i, &value) in y.iter().enumerate() {
                z[[row, i]] = value;
            }
        }
        z
    }
}
