//! Eigenvalue oracles behind the semidefinite feasibility reductions.
//!
//! All checks here boil down to smallest/largest eigenvalues of dense
//! symmetric matrices. The central helper is [`PencilReduction`]: because
//! `L + Λ*Λ` is positive definite under observability, the pencil
//! `(L, Λ*Λ)` can be simultaneously diagonalized by one congruence, after
//! which feasibility of `c·L + d·Λ*Λ ⪰ Q*Q` for any `(c, d)` reduces to a
//! diagonal-versus-dense comparison and the minimal feasible scale along a
//! ray reduces to one scaled largest-eigenvalue computation.

use crate::graph::{sorted_symmetric_eigen, LaplacianBundle};
use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix must be symmetric: max asymmetry {0}")]
    NotSymmetric(f64),

    #[error("matrix must be positive definite: min eigenvalue {0}")]
    NotPositiveDefinite(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Constraint data for the two-multiplier feasibility problem
/// `c·L + d·Λ*Λ − Q*Q ⪰ 0`.
pub struct FeasibilityContext<'a> {
    bundle: &'a LaplacianBundle,
    selector_diag: DVector<f64>,
    qq: DMatrix<f64>,
}

impl<'a> FeasibilityContext<'a> {
    pub fn new(
        bundle: &'a LaplacianBundle,
        labeled: &[usize],
        qq: DMatrix<f64>,
    ) -> Result<Self, SpectralError> {
        let n = bundle.num_vertices();
        if qq.nrows() != n || qq.ncols() != n {
            return Err(SpectralError::DimensionMismatch(format!(
                "Q*Q is {}x{}, expected {n}x{n}",
                qq.nrows(),
                qq.ncols()
            )));
        }
        let asym = (&qq - qq.transpose()).amax();
        if asym > 1e-10 * (1.0 + qq.amax()) {
            return Err(SpectralError::NotSymmetric(asym));
        }
        let (qq_vals, _) = sorted_symmetric_eigen(&qq);
        if qq_vals[0] < -1e-12 * qq_vals[n - 1].abs().max(1.0) {
            return Err(SpectralError::NotPositiveDefinite(qq_vals[0]));
        }
        let mut selector_diag = DVector::zeros(n);
        for &v in labeled {
            selector_diag[v] = 1.0;
        }
        Ok(FeasibilityContext {
            bundle,
            selector_diag,
            qq,
        })
    }

    pub fn qq(&self) -> &DMatrix<f64> {
        &self.qq
    }

    /// `c·L + d·Λ*Λ − Q*Q`.
    pub fn constraint_matrix(&self, c: f64, d: f64) -> DMatrix<f64> {
        let mut m = &self.bundle.laplacian * c - &self.qq;
        for v in 0..self.selector_diag.len() {
            m[(v, v)] += d * self.selector_diag[v];
        }
        m
    }

    /// Feasibility tolerance `1e−9 · (1 + c·λ_max(L) + d)`.
    pub fn feasibility_tol(&self, c: f64, d: f64) -> f64 {
        1e-9 * (1.0 + c * self.bundle.max_eigenvalue() + d)
    }
}

/// Smallest eigenvalue of `c·L + d·Λ*Λ − Q*Q`; the pair `(c, d)` is
/// feasible when this is at least `−feasibility_tol(c, d)`.
pub fn min_eig_constraint(ctx: &FeasibilityContext<'_>, c: f64, d: f64) -> f64 {
    let m = ctx.constraint_matrix(c, d);
    let (vals, _) = sorted_symmetric_eigen(&m);
    vals[0]
}

/// Largest generalized eigenvalue `λ` with `A v = λ M v` for symmetric PSD
/// `A` and symmetric positive definite `M`, via whitening
/// `λ_max(M^{−1/2} A M^{−1/2})`.
pub fn max_generalized_eig(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(SpectralError::DimensionMismatch(format!(
            "A is {}x{}, M is {}x{}",
            a.nrows(),
            a.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    let (m_vals, m_vecs) = sorted_symmetric_eigen(m);
    let tol = 1e-12 * m_vals[n - 1].abs().max(1.0);
    if m_vals[0] <= tol {
        return Err(SpectralError::NotPositiveDefinite(m_vals[0]));
    }
    let mut half = m_vecs.clone();
    for k in 0..n {
        half.column_mut(k).scale_mut(1.0 / m_vals[k].sqrt());
    }
    // W = M^{−1/2} = V diag(λ^{−1/2}) Vᵀ.
    let w = &half * m_vecs.transpose();
    let h = &w * a * &w;
    let h_sym = (&h + h.transpose()) * 0.5;
    let (vals, _) = sorted_symmetric_eigen(&h_sym);
    Ok(vals[n - 1])
}

/// Operator norm of `B` over the smoothness ball:
/// `sup { ‖Bf‖₂ : ‖L^{1/2} f‖₂ ≤ 1 }`.
///
/// Finite only when `B` vanishes on `ker(L)`; otherwise returns
/// `f64::INFINITY`. Computed as the largest singular value of
/// `B · χ₊ · diag(λ_k^{−1/2})` over eigenpairs above the zero threshold.
pub fn constrained_opnorm(b: &DMatrix<f64>, bundle: &LaplacianBundle) -> f64 {
    let n = bundle.num_vertices();
    assert_eq!(b.ncols(), n, "B has {} columns, expected {n}", b.ncols());
    let kernel_dim = bundle.kernel_dim();
    let scale = 1.0 + b.amax();
    for k in 0..kernel_dim {
        let bv = b * bundle.eigenvectors.column(k);
        if bv.norm() > 1e-8 * scale {
            return f64::INFINITY;
        }
    }
    let positive = n - kernel_dim;
    if positive == 0 {
        return 0.0;
    }
    let mut whitened = DMatrix::zeros(b.nrows(), positive);
    for (col, k) in (kernel_dim..n).enumerate() {
        let lam = bundle.eigenvalues[k];
        let bv = b * bundle.eigenvectors.column(k);
        whitened.set_column(col, &(bv / lam.sqrt()));
    }
    largest_singular_value(&whitened)
}

pub(crate) fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    // σ_max via the smaller Gram matrix; avoids full SVD.
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let sym = (&gram + gram.transpose()) * 0.5;
    let (vals, _) = sorted_symmetric_eigen(&sym);
    vals[vals.len() - 1].max(0.0).sqrt()
}

/// Simultaneous diagonalization of the pencil `(L, Λ*Λ)` by congruence.
///
/// With `S = L + Λ*Λ ≻ 0` and `W = S^{−1/2}`, the matrices `W L W` and
/// `W Λ*Λ W` sum to the identity and therefore commute; one orthogonal
/// eigendecomposition `W L W = U diag(μ) Uᵀ` diagonalizes both. In the
/// congruent basis `M = W U`,
///
/// `c·L + d·Λ*Λ − Q*Q ⪰ 0   ⟺   c·diag(μ) + d·diag(1−μ) − G ⪰ 0`
///
/// with `G = Mᵀ Q*Q M`, and for a fixed ray direction `t = d/(c+d)` the
/// minimal feasible scale `s = c + d` is the largest eigenvalue of `G`
/// scaled by `D_t^{−1/2}` on both sides.
pub struct PencilReduction {
    mu: DVector<f64>,
    basis: DMatrix<f64>,
    g: DMatrix<f64>,
    g_scale: f64,
}

impl PencilReduction {
    pub fn new(
        bundle: &LaplacianBundle,
        labeled: &[usize],
        qq: &DMatrix<f64>,
    ) -> Result<Self, SpectralError> {
        let n = bundle.num_vertices();
        if qq.nrows() != n || qq.ncols() != n {
            return Err(SpectralError::DimensionMismatch(format!(
                "Q*Q is {}x{}, expected {n}x{n}",
                qq.nrows(),
                qq.ncols()
            )));
        }
        let mut s = bundle.laplacian.clone();
        for &v in labeled {
            s[(v, v)] += 1.0;
        }
        let (s_vals, s_vecs) = sorted_symmetric_eigen(&s);
        if s_vals[0] <= 1e-13 * s_vals[n - 1].max(1.0) {
            return Err(SpectralError::NotPositiveDefinite(s_vals[0]));
        }
        let mut half = s_vecs.clone();
        for k in 0..n {
            half.column_mut(k).scale_mut(1.0 / s_vals[k].sqrt());
        }
        let w = &half * s_vecs.transpose();
        let wlw = &w * &bundle.laplacian * &w;
        let wlw_sym = (&wlw + wlw.transpose()) * 0.5;
        let (mu, u) = sorted_symmetric_eigen(&wlw_sym);
        let basis = &w * &u;
        let g_raw = basis.transpose() * qq * &basis;
        let g = (&g_raw + g_raw.transpose()) * 0.5;
        let g_scale = g.amax();
        Ok(PencilReduction {
            mu: mu.map(|m| m.clamp(0.0, 1.0)),
            basis,
            g,
            g_scale,
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    fn diag_at(&self, t: f64) -> DVector<f64> {
        self.mu.map(|m| (1.0 - t) * m + t * (1.0 - m))
    }

    /// Minimal `s ≥ 0` with `s·((1−t)·L + t·Λ*Λ) ⪰ Q*Q`, or infinity when
    /// the ray direction cannot dominate `Q*Q` (only possible at `t ∈ {0,1}`).
    pub fn min_scale(&self, t: f64) -> f64 {
        let n = self.mu.len();
        let d = self.diag_at(t);
        let drop_tol = 1e-12;
        let active: Vec<usize> = (0..n).filter(|&i| d[i] > drop_tol).collect();
        // A PSD matrix dominated by a diagonal with zero entries must vanish
        // on those coordinates entirely.
        let g_tol = 1e-10 * self.g_scale.max(1.0);
        for i in 0..n {
            if d[i] <= drop_tol && self.g[(i, i)] > g_tol {
                return f64::INFINITY;
            }
        }
        if active.is_empty() {
            return 0.0;
        }
        let mut h = DMatrix::zeros(active.len(), active.len());
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                h[(r, c)] = self.g[(i, j)] / (d[i] * d[j]).sqrt();
            }
        }
        let (vals, _) = sorted_symmetric_eigen(&h);
        vals[vals.len() - 1].max(0.0)
    }

    /// Feasibility of `(c, d)` tested by Cholesky of the congruent
    /// constraint matrix shifted by `tol`.
    pub fn is_feasible(&self, c: f64, d: f64, tol: f64) -> bool {
        let n = self.mu.len();
        let mut m = -&self.g;
        for i in 0..n {
            m[(i, i)] += c * self.mu[i] + d * (1.0 - self.mu[i]) + tol;
        }
        Cholesky::new(m).is_some()
    }
}
