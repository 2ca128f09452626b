//! Certified upper bounds on the local worst-case error of an estimate.
//!
//! For a candidate estimate `z` of `Q f`, the squared local worst-case
//! error `sup { ‖Qf − z‖₂² : ‖L^{1/2}f‖ ≤ eps, ‖Λf − y‖ ≤ eta }` is
//! upper-bounded by the optimal value of a three-variable semidefinite
//! program in `(c, d, γ)`. For fixed multipliers with
//! `S(c,d) = c·L + d·Λ*Λ − Q*Q ≻ 0`, the minimal `γ` is closed-form by
//! Schur complement:
//!
//! `γ(c,d) = ‖z‖² + c·eps² − d·(‖y‖² − eta²) + wᵀ S(c,d)⁻¹ w`,
//! `w = Q*z − d·Λ*y`,
//!
//! which is convex on the positive definite cone, so a coarse logarithmic
//! grid followed by coordinate descent finds the minimum.

use crate::graph::{validate_observability, LaplacianBundle};
use crate::recovery::{regularize, ModelParams, Observation, QuantityOfInterest};
use crate::select::SelectError;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Multiplier search box, per coordinate.
const MULTIPLIER_LO: f64 = 1e-6;
const MULTIPLIER_HI: f64 = 1e6;
const COARSE_GRID: usize = 40;
const DESCENT_SWEEPS: usize = 20;

/// Certified bound on the squared local worst-case error.
#[derive(Debug, Clone, Copy)]
pub struct LwceBoundResult {
    /// The bound on `lwce²` (infinite when no feasible multipliers found).
    pub gamma: f64,
    pub c_star: f64,
    pub d_star: f64,
    pub feasible: bool,
}

/// One point of the bound-versus-tau curve.
#[derive(Debug, Clone, Copy)]
pub struct LwceCurvePoint {
    pub tau: f64,
    pub gamma: f64,
    pub c: f64,
    pub d: f64,
}

struct LwceProblem<'a> {
    bundle: &'a LaplacianBundle,
    obs: &'a Observation,
    qq: DMatrix<f64>,
    q_mat: DMatrix<f64>,
    lambda_star_y: DVector<f64>,
    y_norm_sq: f64,
    eps_sq: f64,
    eta_sq: f64,
}

impl<'a> LwceProblem<'a> {
    fn new(
        bundle: &'a LaplacianBundle,
        obs: &'a Observation,
        q: &QuantityOfInterest,
        params: ModelParams,
    ) -> Result<Self, SelectError> {
        validate_observability(bundle, obs.labeled())?;
        let n = bundle.num_vertices();
        let q_mat = q.materialize(n, obs.labeled())?;
        let qq = q_mat.transpose() * &q_mat;
        Ok(LwceProblem {
            bundle,
            obs,
            qq,
            q_mat,
            lambda_star_y: obs.scatter(obs.values(), n),
            y_norm_sq: obs.values().norm_squared(),
            eps_sq: params.epsilon * params.epsilon,
            eta_sq: params.eta * params.eta,
        })
    }

    fn constraint_matrix(&self, c: f64, d: f64) -> DMatrix<f64> {
        let mut s = &self.bundle.laplacian * c - &self.qq;
        for &v in self.obs.labeled() {
            s[(v, v)] += d;
        }
        s
    }

    fn factorize(&self, c: f64, d: f64) -> Option<Cholesky<f64, Dyn>> {
        Cholesky::new(self.constraint_matrix(c, d))
    }

    /// Affine part of `γ(c, d)` plus the Schur term for a given factor;
    /// `qz = Q*z` and `z_sq = ‖z‖²` are hoisted out of the search loops.
    fn gamma_with_factor(
        &self,
        c: f64,
        d: f64,
        qz: &DVector<f64>,
        z_sq: f64,
        factor: &Cholesky<f64, Dyn>,
    ) -> f64 {
        let w = qz - &self.lambda_star_y * d;
        let schur = factor.solve(&w).dot(&w);
        z_sq + c * self.eps_sq - d * (self.y_norm_sq - self.eta_sq) + schur
    }

    fn gamma_hoisted(&self, c: f64, d: f64, qz: &DVector<f64>, z_sq: f64) -> f64 {
        match self.factorize(c, d) {
            Some(factor) => self.gamma_with_factor(c, d, qz, z_sq, &factor),
            None => self.gamma_singular_hoisted(c, d, qz, z_sq),
        }
    }

    fn gamma(&self, c: f64, d: f64, z: &DVector<f64>) -> f64 {
        let qz = self.q_mat.transpose() * z;
        self.gamma_hoisted(c, d, &qz, z.norm_squared())
    }

    /// Boundary case: `S` positive semidefinite but singular. Uses the
    /// pseudoinverse, valid only when `w` lies in the range of `S`.
    fn gamma_singular_hoisted(&self, c: f64, d: f64, qz: &DVector<f64>, z_sq: f64) -> f64 {
        let s = self.constraint_matrix(c, d);
        let (vals, vecs) = crate::graph::sorted_symmetric_eigen(&s);
        let n = vals.len();
        let scale = vals[n - 1].abs().max(1.0);
        if vals[0] < -1e-10 * scale {
            return f64::INFINITY;
        }
        let w = qz - &self.lambda_star_y * d;
        let cut = 1e-10 * scale;
        let mut schur = 0.0;
        let mut range_norm_sq = 0.0;
        for k in 0..n {
            let coeff = vecs.column(k).dot(&w);
            if vals[k] > cut {
                schur += coeff * coeff / vals[k];
                range_norm_sq += coeff * coeff;
            }
        }
        // w must lie in range(S); otherwise gamma is unbounded at (c, d).
        let out_of_range = (w.norm_squared() - range_norm_sq).max(0.0).sqrt();
        if out_of_range > 1e-8 * (1.0 + w.norm()) {
            return f64::INFINITY;
        }
        z_sq + c * self.eps_sq - d * (self.y_norm_sq - self.eta_sq) + schur
    }

    fn minimize(
        &self,
        z: &DVector<f64>,
        cache: Option<&GridCache>,
        warm_start: Option<(f64, f64)>,
    ) -> LwceBoundResult {
        let qz = self.q_mat.transpose() * z;
        let z_sq = z.norm_squared();

        // Coarse grid over the multiplier box.
        let mut best: Option<(f64, f64, f64)> = None;
        match cache {
            Some(cache) => {
                for cell in &cache.cells {
                    if let Some(factor) = &cell.factor {
                        let g = self.gamma_with_factor(cell.c, cell.d, &qz, z_sq, factor);
                        if g.is_finite() && best.is_none_or(|(b, _, _)| g < b) {
                            best = Some((g, cell.c, cell.d));
                        }
                    }
                }
            }
            None => {
                for i in 0..COARSE_GRID {
                    let c = log_grid_point(i, COARSE_GRID);
                    for j in 0..COARSE_GRID {
                        let d = log_grid_point(j, COARSE_GRID);
                        if let Some(factor) = self.factorize(c, d) {
                            let g = self.gamma_with_factor(c, d, &qz, z_sq, &factor);
                            if g.is_finite() && best.is_none_or(|(b, _, _)| g < b) {
                                best = Some((g, c, d));
                            }
                        }
                    }
                }
            }
        }
        let mut warm_won = false;
        if let Some((c, d)) = warm_start {
            let g = self.gamma_hoisted(c, d, &qz, z_sq);
            if g.is_finite() && best.is_none_or(|(b, _, _)| g < b) {
                best = Some((g, c, d));
                warm_won = true;
            }
        }
        let (mut g_best, mut c_best, mut d_best) = match best {
            Some(b) => b,
            None => {
                return LwceBoundResult {
                    gamma: f64::INFINITY,
                    c_star: f64::NAN,
                    d_star: f64::NAN,
                    feasible: false,
                }
            }
        };

        // Coordinate descent on the convex objective: golden-section per
        // coordinate in log space, wide bracket on the first sweep and a
        // tighter one once near the minimum, stopping when a sweep stalls.
        for sweep in 0..DESCENT_SWEEPS {
            let before = g_best;
            let half_decades = if warm_won && sweep == 0 {
                0.5
            } else if sweep == 0 {
                2.0
            } else {
                1.0
            };
            let (c_new, g_c) = golden_log(
                |c| self.gamma_hoisted(c, d_best, &qz, z_sq),
                c_best,
                half_decades,
            );
            if g_c < g_best {
                g_best = g_c;
                c_best = c_new;
            }
            let (d_new, g_d) = golden_log(
                |d| self.gamma_hoisted(c_best, d, &qz, z_sq),
                d_best,
                half_decades,
            );
            if g_d < g_best {
                g_best = g_d;
                d_best = d_new;
            }
            if before - g_best <= 1e-9 * (1.0 + g_best.abs()) {
                break;
            }
        }
        LwceBoundResult {
            gamma: g_best,
            c_star: c_best,
            d_star: d_best,
            feasible: true,
        }
    }
}

fn log_grid_point(i: usize, grid: usize) -> f64 {
    MULTIPLIER_LO * (MULTIPLIER_HI / MULTIPLIER_LO).powf(i as f64 / (grid - 1) as f64)
}

/// Golden-section on a log-spaced bracket of `± half_decades` around
/// `center`, clamped to the multiplier box.
fn golden_log<F: FnMut(f64) -> f64>(mut f: F, center: f64, half_decades: f64) -> (f64, f64) {
    const RATIO: f64 = 0.618_033_988_749_894_9;
    let width = half_decades * std::f64::consts::LN_10;
    let mut lo = (center.ln() - width).max(MULTIPLIER_LO.ln());
    let mut hi = (center.ln() + width).min(MULTIPLIER_HI.ln());
    let mut x1 = hi - RATIO * (hi - lo);
    let mut x2 = lo + RATIO * (hi - lo);
    let mut f1 = f(x1.exp());
    let mut f2 = f(x2.exp());
    let mut best = if f1 <= f2 { (x1.exp(), f1) } else { (x2.exp(), f2) };
    for _ in 0..60 {
        if hi - lo < 3e-5 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - RATIO * (hi - lo);
            f1 = f(x1.exp());
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + RATIO * (hi - lo);
            f2 = f(x2.exp());
        }
        let (bx, bf) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if bf < best.1 {
            best = (bx.exp(), bf);
        }
    }
    best
}

/// Cached Cholesky factors of `S(c, d)` on the coarse grid; the factors do
/// not depend on the estimate `z`, so a curve sweep reuses them.
struct GridCache {
    cells: Vec<GridCell>,
}

struct GridCell {
    c: f64,
    d: f64,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl GridCache {
    fn build(problem: &LwceProblem<'_>) -> Self {
        let mut cells = Vec::with_capacity(COARSE_GRID * COARSE_GRID);
        for i in 0..COARSE_GRID {
            let c = log_grid_point(i, COARSE_GRID);
            for j in 0..COARSE_GRID {
                let d = log_grid_point(j, COARSE_GRID);
                cells.push(GridCell {
                    c,
                    d,
                    factor: problem.factorize(c, d),
                });
            }
        }
        GridCache { cells }
    }
}

/// Minimizes the certified upper bound on `lwce²` at the estimate `z`.
pub fn lwce_upper_bound(
    bundle: &LaplacianBundle,
    obs: &Observation,
    q: &QuantityOfInterest,
    z: &DVector<f64>,
    params: ModelParams,
) -> Result<LwceBoundResult, SelectError> {
    let problem = LwceProblem::new(bundle, obs, q, params)?;
    if z.len() != problem.q_mat.nrows() {
        return Err(SelectError::DimensionMismatch(format!(
            "estimate has {} entries, Q maps into dimension {}",
            z.len(),
            problem.q_mat.nrows()
        )));
    }
    Ok(problem.minimize(z, None, None))
}

/// Evaluates the closed-form `γ(c, d)` at fixed multipliers (infinite when
/// `S(c,d)` is not positive semidefinite or the range condition fails).
pub fn lwce_gamma_at(
    bundle: &LaplacianBundle,
    obs: &Observation,
    q: &QuantityOfInterest,
    z: &DVector<f64>,
    params: ModelParams,
    c: f64,
    d: f64,
) -> Result<f64, SelectError> {
    let problem = LwceProblem::new(bundle, obs, q, params)?;
    Ok(problem.gamma(c, d, z))
}

/// The block matrix of the certificate at `(c, d, γ)`; positive
/// semidefiniteness of this matrix is exactly the bound condition.
#[allow(clippy::too_many_arguments)]
pub fn lwce_certificate_matrix(
    bundle: &LaplacianBundle,
    obs: &Observation,
    q: &QuantityOfInterest,
    z: &DVector<f64>,
    params: ModelParams,
    c: f64,
    d: f64,
    gamma: f64,
) -> Result<DMatrix<f64>, SelectError> {
    let problem = LwceProblem::new(bundle, obs, q, params)?;
    let n = bundle.num_vertices();
    let s = problem.constraint_matrix(c, d);
    let w = problem.q_mat.transpose() * z - &problem.lambda_star_y * d;
    let corner =
        gamma - z.norm_squared() - c * problem.eps_sq + d * (problem.y_norm_sq - problem.eta_sq);
    let mut block = DMatrix::zeros(n + 1, n + 1);
    block.view_mut((0, 0), (n, n)).copy_from(&s);
    for i in 0..n {
        block[(i, n)] = w[i];
        block[(n, i)] = w[i];
    }
    block[(n, n)] = corner;
    Ok(block)
}

/// Sweeps the bound along a grid of regularization parameters: at each
/// `tau`, the candidate estimate is `z = Q(Δ_tau(y))`.
pub fn lwce_curve(
    bundle: &LaplacianBundle,
    obs: &Observation,
    q: &QuantityOfInterest,
    params: ModelParams,
    tau_grid: &[f64],
) -> Result<Vec<LwceCurvePoint>, SelectError> {
    let problem = LwceProblem::new(bundle, obs, q, params)?;
    let cache = GridCache::build(&problem);
    let mut points = Vec::with_capacity(tau_grid.len());
    let mut taus = tau_grid.to_vec();
    taus.sort_by(f64::total_cmp);
    // Neighboring tau values have nearby optimal multipliers; warm-start
    // the descent from the previous point.
    let mut warm: Option<(f64, f64)> = None;
    for tau in taus {
        let f = regularize(bundle, obs, tau)?;
        let z = q.apply(&f, obs.labeled())?;
        let result = problem.minimize(&z, Some(&cache), warm);
        if result.feasible {
            warm = Some((result.c_star, result.d_star));
        }
        points.push(LwceCurvePoint {
            tau,
            gamma: result.gamma,
            c: result.c_star,
            d: result.d_star,
        });
    }
    Ok(points)
}

/// Serializes curve points as `tau,gamma,c,d` CSV.
pub fn write_curve_csv(points: &[LwceCurvePoint]) -> String {
    let mut out = String::from("tau,gamma,c,d\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            crate::io::format_float(p.tau),
            crate::io::format_float(p.gamma),
            crate::io::format_float(p.c),
            crate::io::format_float(p.d),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, Graph};
    use crate::sampling::FeasibleSampler;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn path_bundle(n: usize) -> LaplacianBundle {
        let edges: Vec<(usize, usize, f64)> = (1..n).map(|v| (v - 1, v, 1.0)).collect();
        build_laplacian(&Graph::from_edges(n, edges).unwrap()).unwrap()
    }

    #[test]
    fn gamma_is_exact_when_schur_term_vanishes() {
        // With Q = Full, w = z − d·Λ*y vanishes for z = d·Λ*y, leaving the
        // affine part only.
        let b = path_bundle(3);
        let y = DVector::from_column_slice(&[1.0, -0.5]);
        let obs = Observation::new(vec![0, 2], y.clone(), 3).unwrap();
        let params = ModelParams::new(1.0, 0.8).unwrap();
        let (c, d) = (3.0, 2.0);
        let z = obs.scatter(&y, 3) * d;
        let q = QuantityOfInterest::Full;
        let gamma = lwce_gamma_at(&b, &obs, &q, &z, params, c, d).unwrap();
        let expected = z.norm_squared() + c * 1.0 - d * (y.norm_squared() - 0.64);
        assert_abs_diff_eq!(gamma, expected, epsilon = 1e-9);
    }

    #[test]
    fn bound_dominates_sampled_errors_on_tiny_instance() {
        let mut rng = StdRng::seed_from_u64(7);
        for trial in 0..10 {
            let b = path_bundle(3);
            let f_true = DVector::from_fn(3, |_, _| rng.random_range(0.0..1.0));
            let eps = (b.dirichlet_seminorm(&f_true) + 0.2) * 1.3;
            let eta = 0.5;
            let labeled = vec![0, 2];
            let mut e = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            e *= 0.8 * eta / e.norm();
            let y = DVector::from_iterator(2, labeled.iter().enumerate().map(|(k, &v)| f_true[v] + e[k]));
            let obs = Observation::new(labeled, y, 3).unwrap();
            let params = ModelParams::new(eps, eta).unwrap();
            let q = QuantityOfInterest::Unlabeled;
            let f_est = regularize(&b, &obs, 0.5).unwrap();
            let z = q.apply(&f_est, obs.labeled()).unwrap();
            let bound = lwce_upper_bound(&b, &obs, &q, &z, params).unwrap();
            assert!(bound.feasible, "trial {trial}: no feasible multipliers");

            let mut sampler = FeasibleSampler::new(&b, &obs, params, f_true.clone()).unwrap();
            let mut worst = 0.0f64;
            for _ in 0..20_000 {
                let f = sampler.step(&mut rng).clone();
                let err = (q.apply(&f, obs.labeled()).unwrap() - &z).norm_squared();
                worst = worst.max(err);
            }
            assert!(
                worst <= bound.gamma + 1e-6,
                "trial {trial}: sampled error {worst} exceeds bound {}",
                bound.gamma
            );
        }
    }

    #[test]
    fn certificate_matrix_is_psd_at_solution() {
        let mut rng = StdRng::seed_from_u64(19);
        let b = path_bundle(4);
        let labeled = vec![0, 3];
        let f_true = DVector::from_fn(4, |_, _| rng.random_range(0.0..1.0));
        let y = DVector::from_iterator(2, labeled.iter().map(|&v| f_true[v] + 0.05));
        let obs = Observation::new(labeled, y, 4).unwrap();
        let params = ModelParams::new(2.0, 0.5).unwrap();
        let q = QuantityOfInterest::Unlabeled;
        let f_est = regularize(&b, &obs, 0.4).unwrap();
        let z = q.apply(&f_est, obs.labeled()).unwrap();
        let bound = lwce_upper_bound(&b, &obs, &q, &z, params).unwrap();
        let block = lwce_certificate_matrix(
            &b, &obs, &q, &z, params, bound.c_star, bound.d_star, bound.gamma,
        )
        .unwrap();
        let (vals, _) = crate::graph::sorted_symmetric_eigen(&block);
        assert!(vals[0] >= -1e-8 * (1.0 + block.amax()));
    }

    #[test]
    fn bound_is_monotone_in_eta() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.random_range(3..7);
            let b = path_bundle(n);
            let labeled: Vec<usize> = vec![0, n - 1];
            let y = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let obs = Observation::new(labeled, y, n).unwrap();
            let q = QuantityOfInterest::Unlabeled;
            let f_est = regularize(&b, &obs, 0.5).unwrap();
            let z = q.apply(&f_est, obs.labeled()).unwrap();
            let eps = 1.5;
            let small = lwce_upper_bound(&b, &obs, &q, &z, ModelParams::new(eps, 0.4).unwrap())
                .unwrap();
            let large = lwce_upper_bound(&b, &obs, &q, &z, ModelParams::new(eps, 0.9).unwrap())
                .unwrap();
            if small.feasible && large.feasible {
                assert!(
                    large.gamma >= small.gamma - 1e-9 * (1.0 + small.gamma.abs()),
                    "bound decreased when eta grew: {} -> {}",
                    small.gamma,
                    large.gamma
                );
            }
        }
    }

    #[test]
    fn curve_is_flat_for_interpolable_constant_labels() {
        let b = path_bundle(4);
        let obs = Observation::new(vec![0, 3], DVector::from_element(2, 2.0), 4).unwrap();
        let params = ModelParams::new(1.0, 1.0).unwrap();
        let taus: Vec<f64> = (1..=5).map(|i| i as f64 / 6.0).collect();
        let points =
            lwce_curve(&b, &obs, &QuantityOfInterest::Unlabeled, params, &taus).unwrap();
        assert_eq!(points.len(), 5);
        let first = points[0].gamma;
        for p in &points {
            assert_abs_diff_eq!(p.gamma, first, epsilon = 1e-6 * (1.0 + first.abs()));
        }
    }

    #[test]
    fn singleton_grid_gives_singleton_curve() {
        let b = path_bundle(3);
        let obs =
            Observation::new(vec![0, 2], DVector::from_column_slice(&[0.0, 1.0]), 3).unwrap();
        let params = ModelParams::new(1.0, 0.5).unwrap();
        let points = lwce_curve(
            &b,
            &obs,
            &QuantityOfInterest::Unlabeled,
            params,
            &[0.5],
        )
        .unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].tau, 0.5);
        assert!(points[0].gamma.is_finite());
    }

    #[test]
    fn curve_value_near_balance_parameter_is_near_minimum() {
        let mut rng = StdRng::seed_from_u64(31);
        let b = path_bundle(6);
        let labeled = vec![0, 2, 5];
        let f_true = DVector::from_fn(6, |i, _| 0.2 + 0.1 * i as f64);
        let eps = b.dirichlet_seminorm(&f_true) * 1.5 + 0.05;
        let eta = 0.3;
        let mut e = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        e *= 0.9 * eta / e.norm();
        let y =
            DVector::from_iterator(3, labeled.iter().enumerate().map(|(k, &v)| f_true[v] + e[k]));
        let obs = Observation::new(labeled, y, 6).unwrap();
        let params = ModelParams::new(eps, eta).unwrap();
        let q = QuantityOfInterest::Unlabeled;
        let local = crate::select::solve_local(&b, &obs, params).unwrap();
        let taus: Vec<f64> = (1..=50).map(|i| i as f64 / 51.0).collect();
        let curve = lwce_curve(&b, &obs, &q, params, &taus).unwrap();
        let curve_min = curve.iter().map(|p| p.gamma).fold(f64::INFINITY, f64::min);
        let z_local = q.apply(&local.f_hat, obs.labeled()).unwrap();
        let at_local = lwce_upper_bound(&b, &obs, &q, &z_local, params).unwrap();
        assert!(at_local.gamma <= 4.0 * curve_min + 1e-6);
    }
}
