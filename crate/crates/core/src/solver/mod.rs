//! The four iterative factorization algorithms and the run loop around them.
//!
//! Every step function is pure: state in, new state out. One iteration
//! updates U first (using the D, D̂, and edge weights held in the state),
//! then V with the new U (the L2,1 solver reweights the residual columns at
//! that new U, the anchor of the V majorizer, while edge weights stay held),
//! and only then recomputes every held quantity from the new factors.

mod linsolve;
mod objective;

pub use linsolve::solve_right;
pub use objective::{
    auxiliary_value, kkt_residual, majorization_gap, objective, proxy_loss, proxy_loss_held,
    truncated_proxy,
};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, Zip};
use rand::distr::{Distribution, Uniform};

use crate::cluster::{evaluate, ClusterMetrics, LabelVector};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, reweight_laplacian, static_laplacian, NeighborGraph, WeightedLaplacian};
use crate::matrix::{
    column_norms, guarded_reciprocal, l21_norm, relative_error, scale_rows, split_signs,
    validate_matrix, EpsilonPolicy, SignSplit,
};
use crate::rng::{seeded, streams};
use crate::scalar::Scalar;

/// Relative slack when checking that objectives never increase.
pub const MONOTONICITY_REL_SLACK: f64 = 1e-12;
/// Absolute slack when checking that objectives never increase.
pub const MONOTONICITY_ABS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Nmf,
    Snf,
    GrSnf,
    L21Snf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Nmf,
        Algorithm::Snf,
        Algorithm::GrSnf,
        Algorithm::L21Snf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Nmf => "nmf",
            Algorithm::Snf => "snf",
            Algorithm::GrSnf => "grsnf",
            Algorithm::L21Snf => "l21snf",
        }
    }

    /// Whether the algorithm consumes a neighbor graph.
    pub fn uses_graph(self) -> bool {
        matches!(self, Algorithm::GrSnf | Algorithm::L21Snf)
    }

    /// NMF constrains both factors and the input to be nonnegative.
    pub fn requires_nonnegative_input(self) -> bool {
        matches!(self, Algorithm::Nmf)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nmf" => Ok(Algorithm::Nmf),
            "snf" => Ok(Algorithm::Snf),
            "grsnf" => Ok(Algorithm::GrSnf),
            "l21snf" => Ok(Algorithm::L21Snf),
            other => Err(Error::InvalidParameter(format!(
                "unknown algorithm {other:?}; expected nmf|snf|grsnf|l21snf"
            ))),
        }
    }
}

/// Full configuration of one solver run.
#[derive(Debug, Clone)]
pub struct SolverConfig<F> {
    pub algorithm: Algorithm,
    pub k: usize,
    pub alpha: F,
    pub beta: F,
    /// Neighbor count for the sample graph.
    pub p: usize,
    pub max_iters: usize,
    pub epsilon: EpsilonPolicy<F>,
    pub seed: u64,
    pub init_u_range: (F, F),
    pub init_v_range: (F, F),
    /// Optional early stop on relative objective change; off by default.
    pub early_stop_tol: Option<F>,
}

impl<F: Scalar> SolverConfig<F> {
    pub fn new(algorithm: Algorithm, k: usize) -> Self {
        let init_u_range = if algorithm == Algorithm::Nmf {
            (F::zero(), F::one())
        } else {
            (-F::one(), F::one())
        };
        Self {
            algorithm,
            k,
            alpha: F::zero(),
            beta: F::zero(),
            p: 5,
            max_iters: 500,
            epsilon: EpsilonPolicy::default(),
            seed: 0,
            init_u_range,
            init_v_range: (F::zero(), F::one()),
            early_stop_tol: None,
        }
    }

    pub fn with_alpha(mut self, alpha: F) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: F) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_p(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_early_stop_tol(mut self, tol: Option<F>) -> Self {
        self.early_stop_tol = tol;
        self
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= m.min(n) {
            return Err(Error::InvalidParameter(format!(
                "k must satisfy 1 <= k < min(m, n); got k={}, m={m}, n={n}",
                self.k
            )));
        }
        if !self.alpha.is_finite() || self.alpha < F::zero() {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !self.beta.is_finite() || self.beta < F::zero() {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.algorithm.uses_graph() && (self.p < 1 || self.p >= n) {
            return Err(Error::InvalidParameter(format!(
                "p must satisfy 1 <= p < n; got p={}, n={n}",
                self.p
            )));
        }
        let (ulo, uhi) = self.init_u_range;
        let (vlo, vhi) = self.init_v_range;
        if !(ulo < uhi) || !(vlo < vhi) {
            return Err(Error::InvalidParameter("initialization ranges must be nonempty".into()));
        }
        if vlo < F::zero() {
            return Err(Error::InvalidParameter("V initialization must be nonnegative".into()));
        }
        if self.algorithm == Algorithm::Nmf && ulo < F::zero() {
            return Err(Error::InvalidParameter(
                "nmf requires a nonnegative U initialization".into(),
            ));
        }
        if let Some(tol) = self.early_stop_tol {
            if !(tol > F::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "early-stop tolerance must be positive, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Basis U (m×k) and nonnegative coefficients V (n×k).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair<F> {
    pub u: Array2<F>,
    pub v: Array2<F>,
}

impl<F: Scalar> FactorPair<F> {
    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|x| x.is_finite()) && self.v.iter().all(|x| x.is_finite())
    }
}

/// Sign-split products shared by every multiplicative V update:
/// Ω = UᵀU and Φ = XᵀU with their nonnegative parts.
#[derive(Debug, Clone)]
pub struct UpdateWorkspace<F> {
    pub omega: SignSplit<F>,
    pub phi: SignSplit<F>,
}

impl<F: Scalar> UpdateWorkspace<F> {
    pub fn new(x: &Array2<F>, u: &Array2<F>) -> Self {
        Self {
            omega: split_signs(&u.t().dot(u)),
            phi: split_signs(&x.t().dot(u)),
        }
    }
}

/// Iteration state: factors plus the held diagonal and graph weights.
///
/// `d` holds the column-residual reciprocals (ones for solvers that do not
/// use them); `dhat` the basis-column reciprocals (0.5/‖U_i‖ for the
/// graph-regularized solver, 1/‖U_i‖ for the L2,1 solver, ones otherwise);
/// `lap` the static binary weights for the graph-regularized solver or the
/// per-iteration reweighted ones for the L2,1 solver.
#[derive(Debug, Clone)]
pub struct SolverState<F> {
    pub t: usize,
    pub factors: FactorPair<F>,
    pub d: Array1<F>,
    pub dhat: Array1<F>,
    pub lap: Option<WeightedLaplacian<F>>,
    pub objective_history: Vec<F>,
    pub proxy_history: Vec<F>,
    pub ridge_events: usize,
}

impl<F: Scalar> SolverState<F> {
    /// Builds the initial state, computing the held quantities from the
    /// starting factors according to the algorithm.
    pub fn initialize(
        x: &Array2<F>,
        factors: FactorPair<F>,
        cfg: &SolverConfig<F>,
        graph: Option<&NeighborGraph>,
    ) -> Result<Self> {
        let (m, n) = (x.nrows(), x.ncols());
        if factors.u.nrows() != m || factors.v.nrows() != n || factors.u.ncols() != factors.v.ncols()
        {
            return Err(Error::DimensionMismatch(format!(
                "X is {m}x{n}, U is {}x{}, V is {}x{}",
                factors.u.nrows(),
                factors.u.ncols(),
                factors.v.nrows(),
                factors.v.ncols()
            )));
        }
        let k = factors.u.ncols();
        let policy = cfg.epsilon;
        let (d, dhat, lap) = match cfg.algorithm {
            Algorithm::Nmf | Algorithm::Snf => (Array1::ones(n), Array1::ones(k), None),
            Algorithm::GrSnf => {
                let g = graph.ok_or_else(|| {
                    Error::InvalidParameter("graph-regularized solver needs a neighbor graph".into())
                })?;
                (
                    Array1::ones(n),
                    basis_reciprocals(&factors.u, F::real(0.5), policy),
                    Some(static_laplacian(g)),
                )
            }
            Algorithm::L21Snf => {
                let g = graph.ok_or_else(|| {
                    Error::InvalidParameter("the L2,1 solver needs a neighbor graph".into())
                })?;
                (
                    residual_reciprocals(x, &factors.u, &factors.v, policy),
                    basis_reciprocals(&factors.u, F::one(), policy),
                    Some(reweight_laplacian(g, &factors.v, policy)?),
                )
            }
        };
        Ok(Self {
            t: 0,
            factors,
            d,
            dhat,
            lap,
            objective_history: Vec::new(),
            proxy_history: Vec::new(),
            ridge_events: 0,
        })
    }

    fn advance(
        &self,
        factors: FactorPair<F>,
        d: Array1<F>,
        dhat: Array1<F>,
        lap: Option<WeightedLaplacian<F>>,
        ridge: bool,
    ) -> Self {
        Self {
            t: self.t + 1,
            factors,
            d,
            dhat,
            lap,
            objective_history: self.objective_history.clone(),
            proxy_history: self.proxy_history.clone(),
            ridge_events: self.ridge_events + usize::from(ridge),
        }
    }
}

/// D_ii = 1 / max(‖X_i - U V_iᵀ‖, ε) over sample columns.
fn residual_reciprocals<F: Scalar>(
    x: &Array2<F>,
    u: &Array2<F>,
    v: &Array2<F>,
    policy: EpsilonPolicy<F>,
) -> Array1<F> {
    let residual = x - &u.dot(&v.t());
    column_norms(&residual).mapv(|nrm| guarded_reciprocal(nrm, policy))
}

/// D̂_ii = coeff / max(‖U_i‖, ε) over basis columns.
fn basis_reciprocals<F: Scalar>(u: &Array2<F>, coeff: F, policy: EpsilonPolicy<F>) -> Array1<F> {
    column_norms(u).mapv(|nrm| coeff * guarded_reciprocal(nrm, policy))
}

/// Draws factors uniformly from the configured ranges; deterministic per seed.
pub fn init_factors<F: Scalar>(cfg: &SolverConfig<F>, m: usize, n: usize) -> FactorPair<F> {
    let mut rng = seeded(cfg.seed, streams::INIT_FACTORS);
    let u = uniform_array(&mut rng, m, cfg.k, cfg.init_u_range);
    let v = uniform_array(&mut rng, n, cfg.k, cfg.init_v_range);
    FactorPair { u, v }
}

fn uniform_array<F: Scalar>(
    rng: &mut rand_chacha::ChaCha8Rng,
    rows: usize,
    cols: usize,
    range: (F, F),
) -> Array2<F> {
    let dist = Uniform::new_inclusive(
        range.0.to_f64().expect("finite range"),
        range.1.to_f64().expect("finite range"),
    )
    .expect("validated range");
    let values: Vec<F> = (0..rows * cols).map(|_| F::real(dist.sample(rng))).collect();
    Array2::from_shape_vec((rows, cols), values).expect("shape matches length")
}

/// base ∘ (numer / max(denom, ε)), elementwise.
fn multiplicative_update<F: Scalar>(
    base: &Array2<F>,
    numer: &Array2<F>,
    denom: &Array2<F>,
    policy: EpsilonPolicy<F>,
) -> Array2<F> {
    let mut out = base.clone();
    Zip::from(&mut out)
        .and(numer)
        .and(denom)
        .for_each(|o, &nu, &de| {
            *o = *o * (nu * guarded_reciprocal(de, policy));
        });
    out
}

/// base ∘ sqrt(numer / max(denom, ε)), elementwise.
fn sqrt_multiplicative_update<F: Scalar>(
    base: &Array2<F>,
    numer: &Array2<F>,
    denom: &Array2<F>,
    policy: EpsilonPolicy<F>,
) -> Array2<F> {
    let mut out = base.clone();
    Zip::from(&mut out)
        .and(numer)
        .and(denom)
        .for_each(|o, &nu, &de| {
            *o = *o * (nu * guarded_reciprocal(de, policy)).sqrt();
        });
    out
}

/// Multiplicative V update of the semi-NMF family:
/// `V ∘ sqrt((Φ⁺ + VΩ⁻ [+ αWV]) / (Φ⁻ + VΩ⁺ [+ αD̄V]))`.
pub fn semi_v_update<F: Scalar>(
    x: &Array2<F>,
    u_next: &Array2<F>,
    v: &Array2<F>,
    graph: Option<(F, &WeightedLaplacian<F>)>,
    policy: EpsilonPolicy<F>,
) -> Array2<F> {
    let ws = UpdateWorkspace::new(x, u_next);
    let mut numer = &ws.phi.positive + &v.dot(&ws.omega.negative);
    let mut denom = &ws.phi.negative + &v.dot(&ws.omega.positive);
    if let Some((alpha, lap)) = graph {
        numer += &(lap.weighted_neighbor_sum(v) * alpha);
        denom += &(lap.degree_scaled(v) * alpha);
    }
    sqrt_multiplicative_update(v, &numer, &denom, policy)
}

/// Multiplicative V update of the L2,1 solver with the held D:
/// `V ∘ sqrt((DΦ⁺ + (DV)Ω⁻ [+ αWV]) / (DΦ⁻ + (DV)Ω⁺ [+ αD̄V]))`.
pub fn l21_v_update<F: Scalar>(
    x: &Array2<F>,
    u_next: &Array2<F>,
    v: &Array2<F>,
    d: &Array1<F>,
    graph: Option<(F, &WeightedLaplacian<F>)>,
    policy: EpsilonPolicy<F>,
) -> Array2<F> {
    let ws = UpdateWorkspace::new(x, u_next);
    let dv = scale_rows(v, d);
    let mut numer = &scale_rows(&ws.phi.positive, d) + &dv.dot(&ws.omega.negative);
    let mut denom = &scale_rows(&ws.phi.negative, d) + &dv.dot(&ws.omega.positive);
    if let Some((alpha, lap)) = graph {
        numer += &(lap.weighted_neighbor_sum(v) * alpha);
        denom += &(lap.degree_scaled(v) * alpha);
    }
    sqrt_multiplicative_update(v, &numer, &denom, policy)
}

/// One multiplicative NMF iteration: U then V, each rescaled by the ratio of
/// its factorization products.
pub fn nmf_step<F: Scalar>(
    x: &Array2<F>,
    state: &SolverState<F>,
    policy: EpsilonPolicy<F>,
) -> SolverState<F> {
    let u = &state.factors.u;
    let v = &state.factors.v;
    let u_next = multiplicative_update(u, &x.dot(v), &u.dot(&v.t().dot(v)), policy);
    let v_next = multiplicative_update(
        v,
        &x.t().dot(&u_next),
        &v.dot(&u_next.t().dot(&u_next)),
        policy,
    );
    state.advance(
        FactorPair { u: u_next, v: v_next },
        state.d.clone(),
        state.dhat.clone(),
        state.lap.clone(),
        false,
    )
}

/// One semi-NMF iteration: closed-form U = XV(VᵀV)⁻¹, then the sign-split
/// square-root V update.
pub fn snf_step<F: Scalar>(
    x: &Array2<F>,
    state: &SolverState<F>,
    policy: EpsilonPolicy<F>,
) -> Result<SolverState<F>> {
    let v = &state.factors.v;
    let gram = v.t().dot(v);
    let (u_next, ridge) = solve_right(&x.dot(v), &gram)?;
    let v_next = semi_v_update(x, &u_next, v, None, policy);
    Ok(state.advance(
        FactorPair { u: u_next, v: v_next },
        state.d.clone(),
        state.dhat.clone(),
        state.lap.clone(),
        ridge,
    ))
}

/// One graph-regularized semi-NMF iteration: U = XV(βD̂ + VᵀV)⁻¹ with
/// D̂ = 0.5/‖U_i‖ held from the current state, then the V update with the
/// static binary graph terms.
pub fn grsnf_step<F: Scalar>(
    x: &Array2<F>,
    state: &SolverState<F>,
    alpha: F,
    beta: F,
    policy: EpsilonPolicy<F>,
) -> Result<SolverState<F>> {
    let v = &state.factors.v;
    let mut gram = v.t().dot(v);
    if beta > F::zero() {
        for i in 0..gram.nrows() {
            gram[[i, i]] += beta * state.dhat[i];
        }
    }
    let (u_next, ridge) = solve_right(&x.dot(v), &gram)?;
    let graph_terms = graph_terms(state, alpha)?;
    let v_next = semi_v_update(x, &u_next, v, graph_terms, policy);
    let dhat_next = basis_reciprocals(&u_next, F::real(0.5), policy);
    Ok(state.advance(
        FactorPair { u: u_next, v: v_next },
        state.d.clone(),
        dhat_next,
        state.lap.clone(),
        ridge,
    ))
}

/// One L2,1 semi-NMF iteration.
///
/// U = XDV(βD̂ + VᵀDV)⁻¹ with D, D̂ and the reweighted edge weights held
/// from the current state. The V update then reweights its residual columns
/// at the new U (the anchor point of its majorizer) while keeping the edge
/// weights held at V(t); afterwards D, D̂ and the edge weights are all
/// refreshed at the new factors. Refreshing D between the two half-steps is
/// what makes both the objective descent and the half-decrease relation of
/// the V phase hold.
pub fn l21snf_step<F: Scalar>(
    x: &Array2<F>,
    state: &SolverState<F>,
    alpha: F,
    beta: F,
    policy: EpsilonPolicy<F>,
) -> Result<SolverState<F>> {
    let v = &state.factors.v;
    let dv = scale_rows(v, &state.d);
    let mut gram = v.t().dot(&dv);
    if beta > F::zero() {
        for i in 0..gram.nrows() {
            gram[[i, i]] += beta * state.dhat[i];
        }
    }
    let (u_next, ridge) = solve_right(&x.dot(&dv), &gram)?;
    let terms = graph_terms(state, alpha)?;
    let d_mid = residual_reciprocals(x, &u_next, v, policy);
    let v_next = l21_v_update(x, &u_next, v, &d_mid, terms, policy);

    let d_next = residual_reciprocals(x, &u_next, &v_next, policy);
    let dhat_next = basis_reciprocals(&u_next, F::one(), policy);
    let lap_next = match &state.lap {
        Some(lap) => Some(lap.reweighted(&v_next, policy)?),
        None => None,
    };
    Ok(state.advance(
        FactorPair { u: u_next, v: v_next },
        d_next,
        dhat_next,
        lap_next,
        ridge,
    ))
}

fn graph_terms<F: Scalar>(
    state: &SolverState<F>,
    alpha: F,
) -> Result<Option<(F, &WeightedLaplacian<F>)>> {
    if alpha > F::zero() {
        let lap = state.lap.as_ref().ok_or_else(|| {
            Error::InvalidParameter("graph term requested without a neighbor graph".into())
        })?;
        Ok(Some((alpha, lap)))
    } else {
        Ok(None)
    }
}

/// Dispatches one iteration of the configured algorithm.
pub fn step<F: Scalar>(
    x: &Array2<F>,
    state: &SolverState<F>,
    cfg: &SolverConfig<F>,
) -> Result<SolverState<F>> {
    match cfg.algorithm {
        Algorithm::Nmf => Ok(nmf_step(x, state, cfg.epsilon)),
        Algorithm::Snf => snf_step(x, state, cfg.epsilon),
        Algorithm::GrSnf => grsnf_step(x, state, cfg.alpha, cfg.beta, cfg.epsilon),
        Algorithm::L21Snf => l21snf_step(x, state, cfg.alpha, cfg.beta, cfg.epsilon),
    }
}

/// Outcome of a full run: final factors plus per-iteration diagnostics.
/// Wall-time fields are the only nondeterministic ones.
#[derive(Debug, Clone)]
pub struct SolverResult<F> {
    pub algorithm: Algorithm,
    pub factors: FactorPair<F>,
    pub objective_history: Vec<F>,
    pub proxy_history: Vec<F>,
    pub kkt_history: Vec<F>,
    pub relative_error_history: Vec<F>,
    /// Cumulative wall-clock milliseconds at each recorded iteration.
    pub elapsed_ms_history: Vec<f64>,
    /// Completed iterations (history length minus the t = 0 entry).
    pub iterations: usize,
    pub wall_time_ms: f64,
    /// Time spent inside update steps, excluding history evaluation.
    pub step_time_ms: f64,
    pub monotone: bool,
    pub monotonicity_violations: usize,
    pub ridge_events: usize,
    pub graph_builds: usize,
    /// Unordered edge count of the sample graph (0 when none is built).
    pub graph_edges: usize,
    /// Clustering metrics against the provided labels, when any.
    pub metrics: Option<ClusterMetrics>,
}

/// Runs the configured solver for `max_iters` iterations (or until the
/// optional early-stop tolerance triggers), recording the objective, proxy,
/// KKT residual, and relative error at t = 0 and after every step.
pub fn run<F: Scalar>(
    x: &Array2<F>,
    cfg: &SolverConfig<F>,
    labels: Option<&LabelVector>,
) -> Result<SolverResult<F>> {
    validate_matrix(x, "X")?;
    let (m, n) = (x.nrows(), x.ncols());
    cfg.validate(m, n)?;
    if cfg.algorithm.requires_nonnegative_input() && x.iter().any(|&e| e < F::zero()) {
        return Err(Error::Data("nmf requires a nonnegative data matrix".into()));
    }
    if let Some(lv) = labels {
        if lv.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {n} samples",
                lv.len()
            )));
        }
    }
    if l21_norm(x) == F::zero() {
        return Err(Error::Degenerate("cannot factorize the zero matrix".into()));
    }

    let start = Instant::now();
    let graph = if cfg.algorithm.uses_graph() {
        Some(build_knn_graph(x, cfg.p)?)
    } else {
        None
    };
    let graph_builds = usize::from(graph.is_some());
    let graph_edges = graph.as_ref().map_or(0, NeighborGraph::edge_count);
    let factors = init_factors(cfg, m, n);
    let mut state = SolverState::initialize(x, factors, cfg, graph.as_ref())?;

    // The proxy and KKT diagnostics only carry the graph terms for the
    // graph-aware algorithms.
    let (diag_alpha, diag_beta) = if cfg.algorithm.uses_graph() {
        (cfg.alpha, cfg.beta)
    } else {
        (F::zero(), F::zero())
    };
    let record = |state: &SolverState<F>| -> Result<(F, F, F, F)> {
        let obj = objective(cfg.algorithm, x, &state.factors, graph.as_ref(), cfg.alpha, cfg.beta);
        let proxy = proxy_loss(x, &state.factors, graph.as_ref(), diag_alpha, diag_beta, cfg.epsilon);
        let kkt = kkt_residual(x, &state.factors, graph.as_ref(), diag_alpha, cfg.epsilon);
        let rel = relative_error(x, &state.factors.u, &state.factors.v)?;
        Ok((obj, proxy, kkt, rel))
    };

    let mut kkt_history = Vec::with_capacity(cfg.max_iters + 1);
    let mut relative_error_history = Vec::with_capacity(cfg.max_iters + 1);
    let mut elapsed_ms_history = Vec::with_capacity(cfg.max_iters + 1);

    let (obj, proxy, kkt, rel) = record(&state)?;
    state.objective_history.push(obj);
    state.proxy_history.push(proxy);
    kkt_history.push(kkt);
    relative_error_history.push(rel);
    elapsed_ms_history.push(start.elapsed().as_secs_f64() * 1e3);

    let rel_slack = F::real(MONOTONICITY_REL_SLACK);
    let abs_slack = F::real(MONOTONICITY_ABS_SLACK);
    let mut monotone = true;
    let mut monotonicity_violations = 0usize;
    let mut step_time_ms = 0.0f64;

    for iteration in 1..=cfg.max_iters {
        let step_start = Instant::now();
        state = step(x, &state, cfg)?;
        step_time_ms += step_start.elapsed().as_secs_f64() * 1e3;
        if !state.factors.is_finite() {
            return Err(Error::NonFinite { iteration });
        }

        let prev = *state.objective_history.last().expect("seeded above");
        let (obj, proxy, kkt, rel) = record(&state)?;
        state.objective_history.push(obj);
        state.proxy_history.push(proxy);
        kkt_history.push(kkt);
        relative_error_history.push(rel);
        elapsed_ms_history.push(start.elapsed().as_secs_f64() * 1e3);

        if obj > prev * (F::one() + rel_slack) + abs_slack {
            monotone = false;
            monotonicity_violations += 1;
        }
        if let Some(tol) = cfg.early_stop_tol {
            let denom = prev.abs().max(F::min_positive_value());
            if (prev - obj).abs() / denom < tol {
                break;
            }
        }
    }

    let metrics = match labels {
        Some(lv) => Some(evaluate(&state.factors.v, lv, cfg.k, cfg.seed)?),
        None => None,
    };

    let iterations = state.objective_history.len() - 1;
    Ok(SolverResult {
        algorithm: cfg.algorithm,
        factors: state.factors,
        objective_history: state.objective_history,
        proxy_history: state.proxy_history,
        kkt_history,
        relative_error_history,
        elapsed_ms_history,
        iterations,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        step_time_ms,
        monotone,
        monotonicity_violations,
        ridge_events: state.ridge_events,
        graph_builds,
        graph_edges,
        metrics,
    })
}
