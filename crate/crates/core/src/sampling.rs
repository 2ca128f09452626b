//! Hit-and-run sampling of the data-consistent signal set
//! `{ f : ‖L^{1/2} f‖₂ ≤ eps, ‖Λf − y‖₂ ≤ eta }`.
//!
//! The set is an intersection of two centered/offset ellipsoidal cylinders,
//! so the feasible segment along any line is available in closed form from
//! two quadratics. Used by the validation suites to probe worst-case error
//! claims by sampling; not needed on the recovery path itself.

use crate::graph::LaplacianBundle;
use crate::recovery::{ModelParams, Observation};
use nalgebra::DVector;
use rand::Rng;

/// Markov-chain sampler over the feasible signal set.
pub struct FeasibleSampler<'a> {
    bundle: &'a LaplacianBundle,
    obs: &'a Observation,
    params: ModelParams,
    state: DVector<f64>,
}

#[derive(Debug, thiserror::Error)]
#[error("starting point violates the constraints: energy {energy} vs eps {eps}, misfit {misfit} vs eta {eta}")]
pub struct InfeasibleStart {
    pub energy: f64,
    pub eps: f64,
    pub misfit: f64,
    pub eta: f64,
}

impl<'a> FeasibleSampler<'a> {
    /// Starts the chain at `start`, which must already satisfy both
    /// constraints (up to a hair of slack).
    pub fn new(
        bundle: &'a LaplacianBundle,
        obs: &'a Observation,
        params: ModelParams,
        start: DVector<f64>,
    ) -> Result<Self, InfeasibleStart> {
        let energy = bundle.dirichlet_seminorm(&start);
        let misfit = obs.misfit(&start);
        if energy > params.epsilon * (1.0 + 1e-9) || misfit > params.eta * (1.0 + 1e-9) {
            return Err(InfeasibleStart {
                energy,
                eps: params.epsilon,
                misfit,
                eta: params.eta,
            });
        }
        Ok(FeasibleSampler {
            bundle,
            obs,
            params,
            state: start,
        })
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.state
    }

    /// One hit-and-run move: a uniform random direction, the exact feasible
    /// segment along it, and a uniform point on that segment.
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> &DVector<f64> {
        let n = self.state.len();
        let dir = random_direction(n, rng);

        // Quadratic for the smoothness constraint along x + t·u:
        // a t² + b t + c ≤ 0.
        let lu = &self.bundle.laplacian * &dir;
        let a1 = lu.dot(&dir);
        let b1 = 2.0 * lu.dot(&self.state);
        let c1 = self.bundle.laplacian_quadratic_form(&self.state)
            - self.params.epsilon * self.params.epsilon;

        // Same for the misfit constraint.
        let ru = self.obs.restrict(&dir);
        let res = self.obs.restrict(&self.state) - self.obs.values();
        let a2 = ru.dot(&ru);
        let b2 = 2.0 * ru.dot(&res);
        let c2 = res.dot(&res) - self.params.eta * self.params.eta;

        let (lo1, hi1) = quadratic_segment(a1, b1, c1);
        let (lo2, hi2) = quadratic_segment(a2, b2, c2);
        let lo = lo1.max(lo2);
        let hi = hi1.min(hi2);
        if lo.is_finite() && hi.is_finite() && hi > lo {
            // Tiny shrink keeps the chain strictly inside.
            let t = lo + (hi - lo) * rng.random::<f64>();
            let t = t * (1.0 - 1e-12);
            self.state += dir * t;
        }
        &self.state
    }
}

fn random_direction<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        // Gaussian via the polar method keeps the dependency surface small.
        let mut v = DVector::zeros(n);
        for i in 0..n {
            v[i] = polar_gaussian(rng);
        }
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// One standard Gaussian draw by the Marsaglia polar method.
pub fn polar_gaussian<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let v: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Solution interval of `a t² + b t + c ≤ 0`, given that `t = 0` is
/// (approximately) a solution. Returns `(−∞, +∞)` when unconstrained.
fn quadratic_segment(a: f64, b: f64, c: f64) -> (f64, f64) {
    if a <= 1e-300 {
        // Linear or trivial constraint.
        if b.abs() <= 1e-300 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let root = -c / b;
        return if b > 0.0 {
            (f64::NEG_INFINITY, root)
        } else {
            (root, f64::INFINITY)
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        // Numerically on the boundary: stay put.
        return (0.0, 0.0);
    }
    let sq = disc.sqrt();
    ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))
}
