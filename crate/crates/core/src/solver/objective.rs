//! Objective evaluation and the convergence diagnostics built around the
//! proxy loss: the truncated loss with held weights, the auxiliary
//! upper-bound function, and the KKT stationarity residual.

use ndarray::{Array1, Array2};

use super::{Algorithm, FactorPair, UpdateWorkspace};
use crate::error::{Error, Result};
use crate::graph::{
    graph_smoothness_l2, graph_smoothness_l21, reweight_laplacian, static_laplacian,
    NeighborGraph, WeightedLaplacian,
};
use crate::matrix::{
    column_norms, guarded_reciprocal, l21_norm, scale_rows, sum_of_squares, EpsilonPolicy,
};
use crate::scalar::Scalar;

/// The algorithm's own objective at the given factors.
///
/// A graph is required whenever `alpha > 0` for the graph-aware algorithms.
pub fn objective<F: Scalar>(
    algorithm: Algorithm,
    x: &Array2<F>,
    factors: &FactorPair<F>,
    graph: Option<&NeighborGraph>,
    alpha: F,
    beta: F,
) -> F {
    let residual = x - &factors.u.dot(&factors.v.t());
    match algorithm {
        Algorithm::Nmf | Algorithm::Snf => sum_of_squares(&residual),
        Algorithm::GrSnf => {
            let mut value = sum_of_squares(&residual);
            if alpha > F::zero() {
                let g = graph.expect("graph required when alpha > 0");
                value += alpha * graph_smoothness_l2(&factors.v, &static_laplacian(g));
            }
            if beta > F::zero() {
                value += beta * l21_norm(&factors.u);
            }
            value
        }
        Algorithm::L21Snf => {
            let mut value = l21_norm(&residual);
            if alpha > F::zero() {
                let g = graph.expect("graph required when alpha > 0");
                value += alpha * graph_smoothness_l21(&factors.v, g);
            }
            if beta > F::zero() {
                value += beta * l21_norm(&factors.u);
            }
            value
        }
    }
}

/// Proxy loss `tr[(X-UVᵀ)D(X-UVᵀ)ᵀ] + α tr[VᵀLV] + β tr[UD̂Uᵀ]` with D, D̂
/// and the edge weights all computed at the given factors (ε-guarded).
pub fn proxy_loss<F: Scalar>(
    x: &Array2<F>,
    factors: &FactorPair<F>,
    graph: Option<&NeighborGraph>,
    alpha: F,
    beta: F,
    policy: EpsilonPolicy<F>,
) -> F {
    let residual = x - &factors.u.dot(&factors.v.t());
    let mut value = F::zero();
    for col in residual.columns() {
        let mut ss = F::zero();
        for &e in col.iter() {
            ss += e * e;
        }
        value += guarded_reciprocal(ss.sqrt(), policy) * ss;
    }
    if alpha > F::zero() {
        let g = graph.expect("graph required when alpha > 0");
        let lap = reweight_laplacian(g, &factors.v, policy).expect("V rows match the graph");
        value += alpha * lap.smoothness(&factors.v);
    }
    if beta > F::zero() {
        let mut basis = F::zero();
        for col in factors.u.columns() {
            let mut ss = F::zero();
            for &e in col.iter() {
                ss += e * e;
            }
            basis += guarded_reciprocal(ss.sqrt(), policy) * ss;
        }
        value += beta * basis;
    }
    value
}

/// Proxy loss with D, D̂, L held fixed (supplied by the caller), evaluated
/// at arbitrary factors. This is the quantity whose per-step decrease bounds
/// twice the objective decrease.
pub fn proxy_loss_held<F: Scalar>(
    x: &Array2<F>,
    factors: &FactorPair<F>,
    alpha: F,
    beta: F,
    d: &Array1<F>,
    dhat: &Array1<F>,
    lap: Option<&WeightedLaplacian<F>>,
) -> F {
    let residual = x - &factors.u.dot(&factors.v.t());
    let mut value = F::zero();
    for (j, col) in residual.columns().into_iter().enumerate() {
        let mut ss = F::zero();
        for &e in col.iter() {
            ss += e * e;
        }
        value += d[j] * ss;
    }
    if alpha > F::zero() {
        value += alpha * lap.expect("held Laplacian required").smoothness(&factors.v);
    }
    if beta > F::zero() {
        let mut basis = F::zero();
        for (i, col) in factors.u.columns().into_iter().enumerate() {
            let mut ss = F::zero();
            for &e in col.iter() {
                ss += e * e;
            }
            basis += dhat[i] * ss;
        }
        value += beta * basis;
    }
    value
}

/// Truncated proxy loss F(V) with D and L held:
/// `tr[XDXᵀ] - 2tr[VᵀDXᵀU] + tr[UᵀUVᵀDV] + α tr[VᵀLV]`.
pub fn truncated_proxy<F: Scalar>(
    x: &Array2<F>,
    u: &Array2<F>,
    v: &Array2<F>,
    alpha: F,
    d: &Array1<F>,
    lap: Option<&WeightedLaplacian<F>>,
) -> F {
    let mut t1 = F::zero();
    for (j, col) in x.columns().into_iter().enumerate() {
        let mut ss = F::zero();
        for &e in col.iter() {
            ss += e * e;
        }
        t1 += d[j] * ss;
    }

    let phi = x.t().dot(u);
    let mut t2 = F::zero();
    for ((i, j), &value) in phi.indexed_iter() {
        t2 += d[i] * value * v[[i, j]];
    }

    let omega = u.t().dot(u);
    let vdv = v.t().dot(&scale_rows(v, d));
    let mut t3 = F::zero();
    for (o, w) in omega.iter().zip(vdv.iter()) {
        t3 += *o * *w;
    }

    let mut value = t1 - F::real(2.0) * t2 + t3;
    if alpha > F::zero() {
        value += alpha * lap.expect("held Laplacian required").smoothness(v);
    }
    value
}

/// The auxiliary upper bound A(V, V′) for the truncated proxy, with D and
/// the edge weights held. Test oracle for the majorize-minimize argument:
/// `A(V, V′) ≥ F(V)` and `A(V, V) = F(V)` on a shared positive support.
pub fn auxiliary_value<F: Scalar>(
    v: &Array2<F>,
    v_prev: &Array2<F>,
    x: &Array2<F>,
    u: &Array2<F>,
    alpha: F,
    d: &Array1<F>,
    lap: Option<&WeightedLaplacian<F>>,
) -> Result<F> {
    if v.dim() != v_prev.dim() {
        return Err(Error::DimensionMismatch(format!(
            "V is {:?}, V' is {:?}",
            v.dim(),
            v_prev.dim()
        )));
    }
    for ((i, j), &vp) in v_prev.indexed_iter() {
        let vv = v[[i, j]];
        if vp < F::zero() || vv < F::zero() {
            return Err(Error::Domain(
                "auxiliary function requires nonnegative factors".into(),
            ));
        }
        if (vp == F::zero()) != (vv == F::zero()) {
            return Err(Error::Domain(
                "log of a nonpositive ratio: V and V' must share a positive support".into(),
            ));
        }
    }

    let (n, kdim) = v.dim();
    let ws = UpdateWorkspace::new(x, u);
    let one = F::one();

    let mut total = F::zero();
    for (j, col) in x.columns().into_iter().enumerate() {
        let mut ss = F::zero();
        for &e in col.iter() {
            ss += e * e;
        }
        total += d[j] * ss;
    }

    let dvp_omega_pos = scale_rows(v_prev, d).dot(&ws.omega.positive);
    for i in 0..n {
        for j in 0..kdim {
            let vp = v_prev[[i, j]];
            if vp == F::zero() {
                continue;
            }
            let vv = v[[i, j]];
            // upper bound of 2 tr[VᵀDΦ⁻]
            total += d[i] * ws.phi.negative[[i, j]] * (vv * vv + vp * vp) / vp;
            // upper bound of tr[Ω⁺VᵀDV]
            total += dvp_omega_pos[[i, j]] * vv * vv / vp;
            // lower bound of 2 tr[VᵀDΦ⁺], subtracted
            total -= F::real(2.0) * d[i] * ws.phi.positive[[i, j]] * vp * (one + (vv / vp).ln());
        }
    }

    // lower bound of tr[Ω⁻VᵀDV], subtracted
    for i in 0..n {
        for a in 0..kdim {
            let vpa = v_prev[[i, a]];
            if vpa == F::zero() {
                continue;
            }
            for b in 0..kdim {
                let vpb = v_prev[[i, b]];
                if vpb == F::zero() {
                    continue;
                }
                let ratio = (v[[i, a]] * v[[i, b]]) / (vpa * vpb);
                total -= d[i] * vpa * ws.omega.negative[[a, b]] * vpb * (one + ratio.ln());
            }
        }
    }

    if alpha > F::zero() {
        let lap = lap.expect("held Laplacian required when alpha > 0");
        let degrees = lap.degrees();
        for i in 0..n {
            for j in 0..kdim {
                let vp = v_prev[[i, j]];
                if vp == F::zero() {
                    continue;
                }
                let vv = v[[i, j]];
                // upper bound of α tr[VᵀD̄V]
                total += alpha * degrees[i] * vp * vv * vv / vp;
            }
        }
        // lower bound of α tr[VᵀWV], subtracted
        let neighbors = lap.neighbor_lists();
        let weights = lap.weight_rows();
        for i in 0..n {
            for (&kn, &w) in neighbors[i].iter().zip(weights[i].iter()) {
                for j in 0..kdim {
                    let vpk = v_prev[[kn, j]];
                    let vpi = v_prev[[i, j]];
                    if vpk == F::zero() || vpi == F::zero() {
                        continue;
                    }
                    let ratio = (v[[kn, j]] * v[[i, j]]) / (vpk * vpi);
                    total -= alpha * w * vpk * vpi * (one + ratio.ln());
                }
            }
        }
    }

    Ok(total)
}

/// KKT stationarity residual for the V subproblem:
/// `max_ij |(-DXᵀU + DVUᵀU + αLV)_ij · V²_ij|` with D and L computed at the
/// given factors.
pub fn kkt_residual<F: Scalar>(
    x: &Array2<F>,
    factors: &FactorPair<F>,
    graph: Option<&NeighborGraph>,
    alpha: F,
    policy: EpsilonPolicy<F>,
) -> F {
    let residual = x - &factors.u.dot(&factors.v.t());
    let d = column_norms(&residual).mapv(|nrm| guarded_reciprocal(nrm, policy));
    let phi = x.t().dot(&factors.u);
    let vomega = factors.v.dot(&factors.u.t().dot(&factors.u));
    let mut grad = scale_rows(&(&vomega - &phi), &d);
    if alpha > F::zero() {
        let g = graph.expect("graph required when alpha > 0");
        let lap = reweight_laplacian(g, &factors.v, policy).expect("V rows match the graph");
        grad += &(lap.apply(&factors.v) * alpha);
    }
    let mut worst = F::zero();
    for (gv, &vv) in grad.iter().zip(factors.v.iter()) {
        let value = (*gv * vv * vv).abs();
        if value > worst {
            worst = value;
        }
    }
    worst
}

/// Gap of the positive-array inequality
/// `Σy - Σx ≤ (Σ y²/x - Σ x) / 2`; nonnegative for positive inputs.
pub fn majorization_gap<F: Scalar>(x: &[F], y: &[F]) -> F {
    debug_assert_eq!(x.len(), y.len());
    let mut lhs = F::zero();
    let mut rhs = F::zero();
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        lhs += yi - xi;
        rhs += yi * yi / xi - xi;
    }
    rhs * F::real(0.5) - lhs
}
