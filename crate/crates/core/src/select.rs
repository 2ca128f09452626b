//! Regularization-parameter selection with worst-case optimality
//! certificates.
//!
//! [`solve_global`] finds multipliers `(c♭, d♭)` minimizing
//! `c·eps² + d·eta²` subject to `c·L + d·Λ*Λ ⪰ Q*Q`; the parameter
//! `tau♭ = d♭/(c♭+d♭)` then makes `Q ∘ Δ_{tau♭}` a globally optimal
//! recovery map with squared worst-case error exactly `c♭·eps² + d♭·eta²`.
//! The two-variable semidefinite program is solved by spectral reduction:
//! along every ray direction `t = d/(c+d)` the minimal feasible scale is a
//! single generalized-eigenvalue computation, so the program collapses to a
//! one-dimensional minimization, cross-checked against a logarithmic grid
//! in the original `(c, d)` plane.
//!
//! [`solve_local`] finds the unique `tau♮` balancing
//! `‖L^{1/2} Δ_tau(y)‖₂ = (eps/eta)·‖Λ Δ_tau(y) − y‖₂` by bisection; the
//! resulting estimate minimizes `max{‖L^{1/2}f‖₂², (eps²/eta²)‖Λf−y‖₂²}`
//! and its local worst-case error is within a factor two of the best
//! achievable at the observed data.

use crate::graph::{validate_observability, GraphError, LaplacianBundle};
use crate::recovery::{
    limit_tau_zero, regularize, regularizer_matrix, ModelParams, Observation, QuantityOfInterest,
    RecoveryError,
};
use crate::spectral::{PencilReduction, SpectralError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Recovery(#[from] RecoveryError),

    #[error(transparent)]
    Spectral(#[from] SpectralError),

    #[error("semidefinite program is infeasible within the scale cap {cap:e}")]
    InfeasibleSdp { cap: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Scale cap beyond which the feasibility search declares the program
/// infeasible.
const SCALE_CAP: f64 = 1e12;

const GOLDEN_RATIO: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal scalar function on `[lo, hi]`.
/// Returns the best evaluated point and value.
fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let mut x1 = hi - GOLDEN_RATIO * (hi - lo);
    let mut x2 = lo + GOLDEN_RATIO * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..max_iter {
        if (hi - lo) <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN_RATIO * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN_RATIO * (hi - lo);
            f2 = f(x2);
        }
        let (bx, bf) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if bf < best.1 {
            best = (bx, bf);
        }
    }
    best
}

/// Solution of the global parameter-selection program.
#[derive(Debug, Clone)]
pub struct GlobalSolution {
    /// Multiplier on the smoothness form.
    pub c_flat: f64,
    /// Multiplier on the observation form.
    pub d_flat: f64,
    /// `d♭ / (c♭ + d♭)`.
    pub tau_flat: f64,
    /// Certified squared worst-case error `c♭·eps² + d♭·eta²`.
    pub gwce_sq_bound: f64,
    /// The optimal linear recovery map `Q ∘ Δ_{tau♭}` as an `n × n_ℓ` matrix.
    pub recovery_matrix: DMatrix<f64>,
}

/// Solves the global program by one-dimensional spectral reduction with a
/// logarithmic grid cross-check in the `(c, d)` plane.
pub fn solve_global(
    bundle: &LaplacianBundle,
    labeled: &[usize],
    q: &QuantityOfInterest,
    params: ModelParams,
) -> Result<GlobalSolution, SelectError> {
    validate_observability(bundle, labeled)?;
    let n = bundle.num_vertices();
    let qq = q.gram(n, labeled)?;
    let eps_sq = params.epsilon * params.epsilon;
    let eta_sq = params.eta * params.eta;

    // A zero quantity of interest needs no regularization at all.
    if qq.amax() <= 1e-300 {
        let n_l = labeled.len();
        return Ok(GlobalSolution {
            c_flat: 0.0,
            d_flat: 0.0,
            tau_flat: 0.5,
            gwce_sq_bound: 0.0,
            recovery_matrix: DMatrix::zeros(q.output_dim(n, labeled), n_l),
        });
    }

    let reduction = PencilReduction::new(bundle, labeled, &qq)?;
    let objective = |t: f64| -> f64 {
        let s = reduction.min_scale(t);
        if !s.is_finite() || s > SCALE_CAP {
            f64::INFINITY
        } else {
            s * ((1.0 - t) * eps_sq + t * eta_sq)
        }
    };

    // Seed with a coarse grid plus near-boundary candidates, then refine the
    // best bracket by golden section.
    const SEED_POINTS: usize = 64;
    let t_min = 1e-9;
    let t_max = 1.0 - 1e-9;
    let mut seeds: Vec<f64> = (1..=SEED_POINTS)
        .map(|i| i as f64 / (SEED_POINTS as f64 + 1.0))
        .collect();
    seeds.insert(0, t_min);
    seeds.push(t_max);
    let mut best_idx = 0;
    let mut best_val = f64::INFINITY;
    let values: Vec<f64> = seeds.iter().map(|&t| objective(t)).collect();
    for (i, &v) in values.iter().enumerate() {
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    if !best_val.is_finite() {
        return Err(SelectError::InfeasibleSdp { cap: SCALE_CAP });
    }
    let lo = if best_idx == 0 { t_min } else { seeds[best_idx - 1] };
    let hi = if best_idx + 1 == seeds.len() {
        t_max
    } else {
        seeds[best_idx + 1]
    };
    let (t_golden, v_golden) = golden_section(objective, lo, hi, 1e-12, 120);
    let (mut t_star, mut v_star) = if v_golden < best_val {
        (t_golden, v_golden)
    } else {
        (seeds[best_idx], best_val)
    };

    // Cross-check against a 200×200 logarithmic grid refinement around the
    // candidate. On a log grid with a shared step, the ray direction
    // t = d/(c+d) is constant along diagonals, so one min-scale computation
    // per diagonal prices the whole grid.
    let s_star = reduction.min_scale(t_star);
    let c_star = (1.0 - t_star) * s_star;
    let d_star = t_star * s_star;
    const GRID: usize = 200;
    const SPAN_DECADES: f64 = 1.0;
    let floor = 1e-12 * (c_star + d_star).max(1e-300);
    let c_lo = c_star.max(floor) * 10f64.powf(-SPAN_DECADES / 2.0);
    let d_lo = d_star.max(floor) * 10f64.powf(-SPAN_DECADES / 2.0);
    let rho = 10f64.powf(SPAN_DECADES / (GRID as f64 - 1.0));
    let mut grid_best: Option<(f64, f64, f64)> = None; // (objective, c, d)
    for k in -(GRID as isize - 1)..=(GRID as isize - 1) {
        let ratio = (c_lo / d_lo) * rho.powi(k as i32);
        let t_k = 1.0 / (1.0 + ratio);
        let s_k = reduction.min_scale(t_k);
        if !s_k.is_finite() || s_k > SCALE_CAP {
            continue;
        }
        // Along the diagonal i − j = k, both the scale c+d and the objective
        // grow geometrically with j, so the best feasible point is the
        // smallest admissible j.
        let base = c_lo * rho.powi(k as i32) + d_lo;
        let j_min = if k >= 0 { 0 } else { (-k) as usize };
        let j_max = if k >= 0 { GRID - 1 - k as usize } else { GRID - 1 };
        let needed = (s_k / base).max(1e-300);
        let mut j = needed.ln() / rho.ln();
        if !j.is_finite() {
            continue;
        }
        j = j.ceil().max(j_min as f64);
        let j_idx = j as usize;
        if j_idx > j_max {
            continue;
        }
        let c = c_lo * rho.powi((j_idx as isize + k) as i32);
        let d = d_lo * rho.powi(j_idx as i32);
        let obj = c * eps_sq + d * eta_sq;
        if grid_best.is_none_or(|(b, _, _)| obj < b) {
            grid_best = Some((obj, c, d));
        }
    }
    if let Some((obj, c, d)) = grid_best {
        if obj < v_star {
            v_star = obj;
            t_star = d / (c + d);
        }
    }

    let s = reduction.min_scale(t_star);
    if !s.is_finite() || s > SCALE_CAP {
        return Err(SelectError::InfeasibleSdp { cap: SCALE_CAP });
    }
    let c_flat = (1.0 - t_star) * s;
    let d_flat = t_star * s;
    let tau_flat = d_flat / (c_flat + d_flat);
    // Re-solving on the chosen ray can only shrink the objective (a winning
    // grid point sits above the feasibility boundary).
    let gwce_sq_bound = c_flat * eps_sq + d_flat * eta_sq;
    debug_assert!(v_star.is_finite() && gwce_sq_bound <= v_star * (1.0 + 1e-9) + 1e-12);

    // Assemble Q·Δ_{tau♭}; the regularizer needs tau strictly inside (0,1).
    let tau_for_matrix = tau_flat.clamp(1e-9, 1.0 - 1e-9);
    let placeholder = Observation::new(
        labeled.to_vec(),
        DVector::zeros(labeled.len()),
        n,
    )?;
    let delta = regularizer_matrix(bundle, &placeholder, tau_for_matrix)?;
    let q_mat = q.materialize(n, labeled)?;
    let recovery_matrix = q_mat * delta;

    Ok(GlobalSolution {
        c_flat,
        d_flat,
        tau_flat,
        gwce_sq_bound,
        recovery_matrix,
    })
}

/// Solution of the local balance equation.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub tau_natural: f64,
    /// `Δ_{tau♮}(y)`, the minimizer of the max of the two scaled terms.
    pub f_hat: DVector<f64>,
    /// Signed residual `‖L^{1/2} f̂‖₂ − (eps/eta)·‖Λf̂ − y‖₂` at the output.
    pub balance_residual: f64,
    /// `max{ ‖L^{1/2} f̂‖₂², (eps²/eta²)·‖Λf̂ − y‖₂² }`.
    pub minimax_value: f64,
    /// Set for the `y = 0` and exactly-interpolable conventions, where the
    /// balance equation degenerates and `tau = 0.5` is reported.
    pub degenerate: bool,
}

/// Finds `tau♮` by bisection on the balance function
/// `g(tau) = ‖L^{1/2} Δ_tau(y)‖₂ − (eps/eta)·‖Λ Δ_tau(y) − y‖₂`.
pub fn solve_local(
    bundle: &LaplacianBundle,
    obs: &Observation,
    params: ModelParams,
) -> Result<LocalSolution, SelectError> {
    validate_observability(bundle, obs.labeled())?;
    let n = bundle.num_vertices();
    let y_norm = obs.values().norm();
    if y_norm == 0.0 {
        return Ok(LocalSolution {
            tau_natural: 0.5,
            f_hat: DVector::zeros(n),
            balance_residual: 0.0,
            minimax_value: 0.0,
            degenerate: true,
        });
    }
    // Labels that extend to a component-constant signal are reproduced for
    // every tau, making the balance identically zero.
    let f0 = limit_tau_zero(bundle, obs)?;
    if obs.misfit(&f0) <= 1e-12 * y_norm.max(1.0) {
        return Ok(LocalSolution {
            tau_natural: 0.5,
            f_hat: f0,
            balance_residual: 0.0,
            minimax_value: 0.0,
            degenerate: true,
        });
    }

    let ratio = params.epsilon / params.eta;
    let balance = |tau: f64| -> Result<(f64, DVector<f64>), SelectError> {
        let f = regularize(bundle, obs, tau)?;
        let g = bundle.dirichlet_seminorm(&f) - ratio * obs.misfit(&f);
        Ok((g, f))
    };

    let mut lo = 1e-9;
    let mut hi = 1.0 - 1e-9;
    let g_tol = 1e-10 * (params.epsilon + params.eta);
    let (g_lo, f_lo) = balance(lo)?;
    if g_lo >= 0.0 {
        let minimax = minimax_objective(bundle, obs, ratio, &f_lo);
        return Ok(LocalSolution {
            tau_natural: lo,
            f_hat: f_lo,
            balance_residual: g_lo,
            minimax_value: minimax,
            degenerate: false,
        });
    }
    let (g_hi, f_hi) = balance(hi)?;
    if g_hi <= 0.0 {
        let minimax = minimax_objective(bundle, obs, ratio, &f_hi);
        return Ok(LocalSolution {
            tau_natural: hi,
            f_hat: f_hi,
            balance_residual: g_hi,
            minimax_value: minimax,
            degenerate: false,
        });
    }
    let mut result = None;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let (g_mid, f_mid) = balance(mid)?;
        if g_mid.abs() <= g_tol {
            result = Some((mid, g_mid, f_mid));
            break;
        }
        if g_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (tau, g, f_hat) = match result {
        Some(r) => r,
        None => {
            let mid = 0.5 * (lo + hi);
            let (g_mid, f_mid) = balance(mid)?;
            (mid, g_mid, f_mid)
        }
    };
    let minimax_value = minimax_objective(bundle, obs, ratio, &f_hat);
    Ok(LocalSolution {
        tau_natural: tau,
        f_hat,
        balance_residual: g,
        minimax_value,
        degenerate: false,
    })
}

fn minimax_objective(
    bundle: &LaplacianBundle,
    obs: &Observation,
    ratio: f64,
    f: &DVector<f64>,
) -> f64 {
    let energy = bundle.dirichlet_seminorm(f);
    let misfit = obs.misfit(f);
    (energy * energy).max(ratio * ratio * misfit * misfit)
}

/// Global worst-case error of an arbitrary linear recovery map given as its
/// `n × n_ℓ` matrix (observations in, estimate of `Q f` out).
///
/// With `B = Q − R·Λ`, the error over independent model-consistent `f` and
/// admissible `e` is
///
/// `sup ‖Bf − Re‖₂ = max_{‖w‖=1} ( eps·‖G1^{1/2} w‖ + eta·‖G2^{1/2} w‖ )`
///
/// with `G1 = B L⁺ Bᵀ` and `G2 = R Rᵀ`, which by the S-procedure equals
/// `min_{t∈(0,1)} λ_max( eps²·G1/t + eta²·G2/(1−t) )^{1/2}`, a convex
/// one-dimensional minimization. Returns infinity when `B` does not vanish
/// on `ker(L)`.
pub fn evaluate_gwce_linear(
    map_matrix: &DMatrix<f64>,
    bundle: &LaplacianBundle,
    labeled: &[usize],
    q: &QuantityOfInterest,
    params: ModelParams,
) -> Result<f64, SelectError> {
    let n = bundle.num_vertices();
    let n_out = q.output_dim(n, labeled);
    if map_matrix.nrows() != n_out || map_matrix.ncols() != labeled.len() {
        return Err(SelectError::DimensionMismatch(format!(
            "map is {}x{}, expected {}x{}",
            map_matrix.nrows(),
            map_matrix.ncols(),
            n_out,
            labeled.len()
        )));
    }
    let q_mat = q.materialize(n, labeled)?;
    let mut b = q_mat;
    for (k, &v) in labeled.iter().enumerate() {
        let col = b.column(v) - map_matrix.column(k);
        b.set_column(v, &col);
    }

    // The worst case is infinite if B sees the Laplacian kernel.
    let scale = 1.0 + b.amax();
    let kernel_dim = bundle.kernel_dim();
    for k in 0..kernel_dim {
        if (&b * bundle.eigenvectors.column(k)).norm() > 1e-8 * scale {
            return Ok(f64::INFINITY);
        }
    }

    // G1 = (B χ₊ diag(λ^{-1/2})) (·)ᵀ, G2 = R Rᵀ.
    let positive = n - kernel_dim;
    let mut whitened = DMatrix::zeros(n_out, positive);
    for (col, k) in (kernel_dim..n).enumerate() {
        let bv = &b * bundle.eigenvectors.column(k);
        whitened.set_column(col, &(bv / bundle.eigenvalues[k].sqrt()));
    }
    let g1 = &whitened * whitened.transpose();
    let g2 = map_matrix * map_matrix.transpose();
    let eps_sq = params.epsilon * params.epsilon;
    let eta_sq = params.eta * params.eta;

    if n_out == 1 {
        // Scalar quantity of interest: the decomposition is exact.
        let value = params.epsilon * g1[(0, 0)].max(0.0).sqrt()
            + params.eta * g2[(0, 0)].max(0.0).sqrt();
        return Ok(value);
    }

    let lam_max = |t: f64| -> f64 {
        let m = &g1 * (eps_sq / t) + &g2 * (eta_sq / (1.0 - t));
        let sym = (&m + m.transpose()) * 0.5;
        let (vals, _) = crate::graph::sorted_symmetric_eigen(&sym);
        vals[vals.len() - 1].max(0.0)
    };
    let (_, v) = golden_section(lam_max, 1e-9, 1.0 - 1e-9, 1e-13, 140);
    Ok(v.sqrt())
}

/// Globally optimal estimation of a scalar functional `⟨q, ·⟩` without the
/// full semidefinite program: finds weights `a` minimizing
///
/// `eps·( Σ_{λ_k>0} ⟨q − Λ*a, v_k⟩²/λ_k )^{1/2} + eta·‖a‖₂`
///
/// subject to `⟨q − Λ*a, v_k⟩ = 0` on the kernel eigenvectors. The optimum
/// lies on the constrained ridge path `argmin ‖residual‖² + μ‖a‖²`, so the
/// problem reduces to a scalar search over the trade-off `μ` with an inner
/// regularized least-squares solve. Returns the weights and the achieved
/// objective, which is the worst-case error of the functional estimate.
pub fn estimate_functional(
    q_vec: &DVector<f64>,
    bundle: &LaplacianBundle,
    labeled: &[usize],
    params: ModelParams,
) -> Result<(DVector<f64>, f64), SelectError> {
    validate_observability(bundle, labeled)?;
    let n = bundle.num_vertices();
    if q_vec.len() != n {
        return Err(SelectError::DimensionMismatch(format!(
            "q has {} entries, expected {n}",
            q_vec.len()
        )));
    }
    let n_l = labeled.len();
    let kernel_dim = bundle.kernel_dim();
    let positive = n - kernel_dim;

    // Whitened residual map: row r is ⟨·, v_{K+r}⟩ / √λ_{K+r}.
    let mut p_mat = DMatrix::zeros(positive, n_l);
    let mut p_vec = DVector::zeros(positive);
    for r in 0..positive {
        let k = kernel_dim + r;
        let v = bundle.eigenvectors.column(k);
        let scale = 1.0 / bundle.eigenvalues[k].sqrt();
        for (c, &vert) in labeled.iter().enumerate() {
            p_mat[(r, c)] = v[vert] * scale;
        }
        p_vec[r] = q_vec.dot(&v.into_owned()) * scale;
    }

    // Kernel constraints C a = b.
    let mut c_mat = DMatrix::zeros(kernel_dim, n_l);
    let mut b_vec = DVector::zeros(kernel_dim);
    for k in 0..kernel_dim {
        let v = bundle.eigenvectors.column(k);
        for (c, &vert) in labeled.iter().enumerate() {
            c_mat[(k, c)] = v[vert];
        }
        b_vec[k] = q_vec.dot(&v.into_owned());
    }

    // Particular solution and an orthonormal null-space basis of C.
    let (a_particular, null_basis) = affine_constraint_basis(&c_mat, &b_vec)?;

    let objective_of = |a: &DVector<f64>| -> f64 {
        params.epsilon * (&p_vec - &p_mat * a).norm() + params.eta * a.norm()
    };

    let free_dims = null_basis.ncols();
    if free_dims == 0 {
        let value = objective_of(&a_particular);
        return Ok((a_particular, value));
    }

    let pz = &p_mat * &null_basis;
    let r0 = &p_vec - &p_mat * &a_particular;
    let gram = pz.transpose() * &pz;
    let solve_ridge = |mu: f64| -> DVector<f64> {
        let mut lhs = gram.clone();
        for i in 0..free_dims {
            lhs[(i, i)] += mu;
        }
        let rhs = pz.transpose() * &r0 - null_basis.transpose() * &a_particular * mu;
        let w = lhs
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .unwrap_or_else(|| lhs.svd(true, true).solve(&rhs, 1e-14).unwrap());
        &a_particular + &null_basis * w
    };

    // Coarse scan over the trade-off, then golden refinement in log space.
    let mu_scale = (gram.trace() / free_dims as f64).max(1e-300);
    let log_lo = mu_scale.ln() - 30.0;
    let log_hi = mu_scale.ln() + 30.0;
    const SCAN: usize = 65;
    let mut best_log_mu = log_lo;
    let mut best_val = f64::INFINITY;
    for i in 0..SCAN {
        let log_mu = log_lo + (log_hi - log_lo) * i as f64 / (SCAN - 1) as f64;
        let val = objective_of(&solve_ridge(log_mu.exp()));
        if val < best_val {
            best_val = val;
            best_log_mu = log_mu;
        }
    }
    let step = (log_hi - log_lo) / (SCAN - 1) as f64;
    let (log_mu_star, value) = golden_section(
        |lm| objective_of(&solve_ridge(lm.exp())),
        best_log_mu - step,
        best_log_mu + step,
        1e-11,
        120,
    );
    let (value, a_star) = if value < best_val {
        (value, solve_ridge(log_mu_star.exp()))
    } else {
        (best_val, solve_ridge(best_log_mu.exp()))
    };
    Ok((a_star, value))
}

/// Minimum-norm particular solution of `C a = b` and an orthonormal basis
/// of `ker(C)`. `C` has full row rank under observability, so the
/// particular solution is `Cᵀ(CCᵀ)⁻¹ b`; the kernel basis comes from the
/// null eigenvectors of `CᵀC`.
fn affine_constraint_basis(
    c_mat: &DMatrix<f64>,
    b_vec: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), SelectError> {
    let rows = c_mat.nrows();
    let cols = c_mat.ncols();
    if rows == 0 {
        return Ok((DVector::zeros(cols), DMatrix::identity(cols, cols)));
    }
    let gram_rows = c_mat * c_mat.transpose();
    let chol = gram_rows.cholesky().ok_or_else(|| {
        SelectError::DimensionMismatch("kernel constraints are rank deficient".into())
    })?;
    let particular = c_mat.transpose() * chol.solve(b_vec);

    let gram_cols = c_mat.transpose() * c_mat;
    let (vals, vecs) = crate::graph::sorted_symmetric_eigen(&gram_cols);
    let scale = vals[cols - 1].abs().max(1.0);
    let null_dim = vals.iter().filter(|&&l| l <= 1e-12 * scale).count();
    let mut basis = DMatrix::zeros(cols, null_dim);
    for k in 0..null_dim {
        basis.set_column(k, &vecs.column(k));
    }
    Ok((particular, basis))
}
