//! Semi-synthetic experiment harness: smooth random signals, bounded-noise
//! models, and label-growth sweeps comparing the parameter-selection
//! methods against grid search and harmonic interpolation.
//!
//! Reproducibility contract: all randomness flows through `ChaCha12`
//! streams seeded as `base_seed XOR trial_index`; Gaussian draws use the
//! Marsaglia polar method on top of those streams. Within a trial, draws
//! happen in a fixed order (signal, then per-step label additions, then
//! per-step noise), so identical configurations give identical output.

use crate::graph::{build_laplacian, Graph, LaplacianBundle};
use crate::io::{Method, NoiseModel, ResultRow, RunConfig};
use crate::recovery::{
    harmonic_interpolate, regularize, ModelParams, Observation, QuantityOfInterest, RecoveryError,
};
use crate::sampling::polar_gaussian;
use crate::select::{solve_global, solve_local, SelectError};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Recovery(#[from] RecoveryError),

    #[error(transparent)]
    Select(#[from] SelectError),

    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),

    #[error("n_labeled_grid entry {requested} exceeds the number of vertices {available}")]
    GridTooLarge { requested: usize, available: usize },
}

/// One (trial, label-count) snapshot of the protocol.
#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    pub trial_index: usize,
    pub n_labeled: usize,
    pub signal: DVector<f64>,
    pub noise: DVector<f64>,
    /// Dirichlet seminorm of the realized signal.
    pub signal_seminorm: f64,
    pub realized_eps: f64,
    pub eta: f64,
    pub labeled: Vec<usize>,
}

/// Draws the smooth synthetic signal before normalization: coefficients on
/// eigenvectors with `c_k ~ N(0, 1/λ_k)` above the zero threshold and zero
/// on the kernel, so `f = χ c` and `E‖L^{1/2} f‖² = N − K`.
pub fn synth_signal_raw<R: Rng>(bundle: &LaplacianBundle, rng: &mut R) -> DVector<f64> {
    let n = bundle.num_vertices();
    let kernel = bundle.kernel_dim();
    let mut coeffs = DVector::zeros(n);
    for k in kernel..n {
        coeffs[k] = polar_gaussian(rng) / bundle.eigenvalues[k].sqrt();
    }
    &bundle.eigenvectors * coeffs
}

/// Seeded smooth signal, min-max normalized into `[0, 1]`.
pub fn synth_signal(bundle: &LaplacianBundle, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    normalize_unit_interval(synth_signal_raw(bundle, &mut rng))
}

fn normalize_unit_interval(f: DVector<f64>) -> DVector<f64> {
    let min = f.min();
    let max = f.max();
    let range = max - min;
    if range <= 0.0 {
        return DVector::from_element(f.len(), 0.5);
    }
    f.map(|v| (v - min) / range)
}

/// Noise vector on the labeled vertices with `‖e‖₂ = eta` exactly, or zero
/// with `degenerate = true` if the pre-scaling vector vanishes.
pub fn gen_noise(
    model: NoiseModel,
    eta: f64,
    seed: u64,
    labeled: &[usize],
    degrees: &DVector<f64>,
) -> (DVector<f64>, bool) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    gen_noise_with_rng(model, eta, &mut rng, labeled, degrees)
}

/// Same as [`gen_noise`] but drawing from a caller-owned stream.
pub fn gen_noise_with_rng<R: Rng>(
    model: NoiseModel,
    eta: f64,
    rng: &mut R,
    labeled: &[usize],
    degrees: &DVector<f64>,
) -> (DVector<f64>, bool) {
    let n_l = labeled.len();
    let mut e = match model {
        NoiseModel::UniformCentered => {
            let mut v = DVector::from_fn(n_l, |_, _| rng.random::<f64>());
            let mean = v.mean();
            v.apply(|x| *x -= mean);
            v
        }
        NoiseModel::DegreeProportional => {
            DVector::from_iterator(n_l, labeled.iter().map(|&v| degrees[v]))
        }
        NoiseModel::InverseDegreeProportional => DVector::from_iterator(
            n_l,
            labeled.iter().map(|&v| {
                // Isolated labeled vertices carry no noise weight.
                if degrees[v] > 0.0 {
                    1.0 / degrees[v]
                } else {
                    0.0
                }
            }),
        ),
    };
    let norm = e.norm();
    if norm <= 1e-300 {
        return (DVector::zeros(n_l), true);
    }
    e *= eta / norm;
    (e, false)
}

/// Best regularization parameter by exhaustive search against the ground
/// truth: minimizes `‖truth − Q(Δ_tau(y))‖₂` over the grid, ties broken
/// toward smaller `tau`.
pub fn grid_search_best(
    bundle: &LaplacianBundle,
    obs: &Observation,
    q: &QuantityOfInterest,
    truth: &DVector<f64>,
    tau_grid: &[f64],
) -> Result<(f64, f64), RecoveryError> {
    assert!(!tau_grid.is_empty(), "tau grid must be nonempty");
    let mut best: Option<(f64, f64)> = None;
    for &tau in tau_grid {
        let f = regularize(bundle, obs, tau)?;
        let err = (q.apply(&f, obs.labeled())? - truth).norm();
        match best {
            Some((_, b)) if err >= b => {}
            _ => best = Some((tau, err)),
        }
    }
    Ok(best.expect("nonempty grid"))
}

/// Uniform interior grid of `size` regularization parameters.
pub fn default_tau_grid(size: usize) -> Vec<f64> {
    (1..=size).map(|i| i as f64 / (size as f64 + 1.0)).collect()
}

/// Runs the label-growth protocol and returns result rows plus per-step
/// trial records (for certificate audits).
pub fn run_label_growth_full(
    config: &RunConfig,
    graph: &Graph,
) -> Result<(Vec<ResultRow>, Vec<Trial>), ExperimentError> {
    let bundle = build_laplacian(graph)?;
    let n = bundle.num_vertices();
    for &n_l in &config.n_labeled_grid {
        if n_l > n {
            return Err(ExperimentError::GridTooLarge {
                requested: n_l,
                available: n,
            });
        }
    }
    let tau_grid = default_tau_grid(config.tau_grid_size);
    let q = QuantityOfInterest::Unlabeled;
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();

    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for trial_index in 0..config.trials {
        let trial_seed = config.seed ^ trial_index as u64;
        let mut rng = ChaCha12Rng::seed_from_u64(trial_seed);

        let signal = normalize_unit_interval(synth_signal_raw(&bundle, &mut rng));
        let seminorm = bundle.dirichlet_seminorm(&signal);
        let eps = config.eps_rule.epsilon_for(seminorm);
        let eta_bar = config.eta * config.overestimation_factor;
        let params = ModelParams::new(eps, eta_bar).map_err(SelectError::Recovery)?;

        let mut labeled: Vec<usize> = Vec::new();
        for &n_l in &config.n_labeled_grid {
            grow_labeled_set(&mut labeled, n_l, n, &mut rng);
            let (noise, _) = gen_noise_with_rng(
                config.noise_model,
                config.eta,
                &mut rng,
                &labeled,
                &bundle.degrees,
            );
            let y = DVector::from_iterator(
                labeled.len(),
                labeled.iter().enumerate().map(|(k, &v)| signal[v] + noise[k]),
            );
            let obs = Observation::new(labeled.clone(), y, n).map_err(SelectError::Recovery)?;
            let truth = q.apply(&signal, &labeled).map_err(SelectError::Recovery)?;

            trials.push(Trial {
                seed: trial_seed,
                trial_index,
                n_labeled: n_l,
                signal: signal.clone(),
                noise: noise.clone(),
                signal_seminorm: seminorm,
                realized_eps: eps,
                eta: config.eta,
                labeled: labeled.clone(),
            });

            for &method in &methods {
                let started = std::time::Instant::now();
                let (tau, error, bound) = match method {
                    Method::GlobalOpt => {
                        let sol = solve_global(&bundle, &labeled, &q, params)?;
                        let estimate = &sol.recovery_matrix * obs.values();
                        (
                            sol.tau_flat,
                            (&estimate - &truth).norm(),
                            Some(sol.gwce_sq_bound.max(0.0).sqrt()),
                        )
                    }
                    Method::LocalOpt => {
                        let sol = solve_local(&bundle, &obs, params)?;
                        let estimate =
                            q.apply(&sol.f_hat, &labeled).map_err(SelectError::Recovery)?;
                        (sol.tau_natural, (&estimate - &truth).norm(), None)
                    }
                    Method::GridSearch => {
                        let (tau, error) =
                            grid_search_best(&bundle, &obs, &q, &truth, &tau_grid)
                                .map_err(SelectError::Recovery)?;
                        (tau, error, None)
                    }
                    Method::Harmonic => {
                        let f1 =
                            harmonic_interpolate(&bundle, &obs).map_err(SelectError::Recovery)?;
                        let estimate = q.apply(&f1, &labeled).map_err(SelectError::Recovery)?;
                        (1.0, (&estimate - &truth).norm(), None)
                    }
                };
                let runtime_ms = if config.record_runtimes {
                    started.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                rows.push(ResultRow {
                    n_labeled: n_l,
                    method,
                    trial: trial_index,
                    seed: trial_seed,
                    tau,
                    prediction_error: error,
                    certified_bound: bound,
                    runtime_ms,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.n_labeled, a.method.name(), a.trial).cmp(&(b.n_labeled, b.method.name(), b.trial))
    });
    Ok((rows, trials))
}

/// Runs the label-growth protocol, returning result rows only.
pub fn run_label_growth(
    config: &RunConfig,
    graph: &Graph,
) -> Result<Vec<ResultRow>, ExperimentError> {
    run_label_growth_full(config, graph).map(|(rows, _)| rows)
}

fn grow_labeled_set<R: Rng>(labeled: &mut Vec<usize>, target: usize, n: usize, rng: &mut R) {
    let mut unlabeled: Vec<usize> = {
        let mut mask = vec![true; n];
        for &v in labeled.iter() {
            mask[v] = false;
        }
        (0..n).filter(|&v| mask[v]).collect()
    };
    while labeled.len() < target {
        let pick = rng.random_range(0..unlabeled.len());
        labeled.push(unlabeled.swap_remove(pick));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_clique_union;
    use crate::io::write_results_csv;
    use approx::assert_abs_diff_eq;

    fn path_graph(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|v| (v - 1, v, 1.0))).unwrap()
    }

    #[test]
    fn raw_signal_energy_matches_expectation() {
        // E‖L^{1/2} f‖² = N − K termwise, so the Monte-Carlo mean over many
        // draws must sit within a few percent.
        for (graph, label) in [
            (path_graph(10), "path"),
            (build_clique_union(2, 4), "cliques"),
            (
                Graph::from_edges(
                    12,
                    [
                        (0, 1, 1.0),
                        (1, 2, 2.0),
                        (2, 3, 0.5),
                        (3, 4, 1.0),
                        (4, 5, 1.5),
                        (0, 5, 1.0),
                        (5, 6, 1.0),
                        (6, 7, 2.0),
                        (7, 8, 1.0),
                        (8, 9, 0.7),
                        (9, 10, 1.0),
                        (10, 11, 1.2),
                    ],
                )
                .unwrap(),
                "ring-tail",
            ),
        ] {
            let bundle = build_laplacian(&graph).unwrap();
            let expected = (bundle.num_vertices() - bundle.num_components) as f64;
            let mut rng = ChaCha12Rng::seed_from_u64(1234);
            let draws = 2000;
            let mut total = 0.0;
            for _ in 0..draws {
                let f = synth_signal_raw(&bundle, &mut rng);
                total += bundle.laplacian_quadratic_form(&f);
            }
            let mean = total / draws as f64;
            assert!(
                (mean - expected).abs() <= 0.05 * expected,
                "{label}: Monte-Carlo mean {mean} vs expected {expected}"
            );
        }
    }

    #[test]
    fn raw_signal_has_no_kernel_component() {
        let bundle = build_laplacian(&build_clique_union(3, 3)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let f = synth_signal_raw(&bundle, &mut rng);
        for k in 0..bundle.kernel_dim() {
            let inner = f.dot(&bundle.eigenvectors.column(k).into_owned());
            assert_abs_diff_eq!(inner, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn synth_signal_is_deterministic_and_normalized() {
        let bundle = build_laplacian(&path_graph(3)).unwrap();
        let a = synth_signal(&bundle, 42);
        let b = synth_signal(&bundle, 42);
        assert_eq!(a, b, "same seed must give identical bytes");
        let c = synth_signal(&bundle, 43);
        assert_ne!(a, c);
        assert!(a.min() >= 0.0 && a.max() <= 1.0);
        assert_abs_diff_eq!(a.min(), 0.0);
        assert_abs_diff_eq!(a.max(), 1.0);
    }

    #[test]
    fn noise_norm_is_exact() {
        let bundle = build_laplacian(&path_graph(6)).unwrap();
        let labeled = vec![0, 2, 4];
        for model in [
            NoiseModel::UniformCentered,
            NoiseModel::DegreeProportional,
            NoiseModel::InverseDegreeProportional,
        ] {
            let (e, degenerate) = gen_noise(model, 2.0, 9, &labeled, &bundle.degrees);
            assert!(!degenerate);
            assert_abs_diff_eq!(e.norm(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_noise_is_mean_centered_before_scaling() {
        let bundle = build_laplacian(&path_graph(8)).unwrap();
        let labeled: Vec<usize> = (0..6).collect();
        let (e, _) = gen_noise(NoiseModel::UniformCentered, 3.0, 11, &labeled, &bundle.degrees);
        // Rescaling preserves a zero mean.
        assert_abs_diff_eq!(e.mean(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn degree_noise_follows_star_degrees() {
        // Star on 4 vertices: hub 0 has degree 3, leaves have degree 1.
        let g = Graph::from_edges(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let bundle = build_laplacian(&g).unwrap();
        let (e, _) = gen_noise(
            NoiseModel::DegreeProportional,
            1.0,
            3,
            &[0, 1],
            &bundle.degrees,
        );
        assert_abs_diff_eq!(e[0] / e[1], 3.0, epsilon = 1e-12);
        let (e_inv, _) = gen_noise(
            NoiseModel::InverseDegreeProportional,
            1.0,
            3,
            &[0, 1],
            &bundle.degrees,
        );
        assert_abs_diff_eq!(e_inv[1] / e_inv[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_label_uniform_noise_falls_back_to_zero() {
        let bundle = build_laplacian(&path_graph(3)).unwrap();
        let (e, degenerate) =
            gen_noise(NoiseModel::UniformCentered, 1.0, 7, &[1], &bundle.degrees);
        assert!(degenerate);
        assert_eq!(e.norm(), 0.0);
    }

    #[test]
    fn grid_search_on_singleton_grid() {
        let bundle = build_laplacian(&path_graph(4)).unwrap();
        let obs = Observation::new(vec![0, 3], DVector::from_column_slice(&[0.1, 0.9]), 4)
            .unwrap();
        let truth = DVector::from_column_slice(&[0.3, 0.6]);
        let (tau, _) = grid_search_best(
            &bundle,
            &obs,
            &QuantityOfInterest::Unlabeled,
            &truth,
            &[0.25],
        )
        .unwrap();
        assert_eq!(tau, 0.25);
    }

    #[test]
    fn refining_the_grid_never_hurts() {
        let bundle = build_laplacian(&path_graph(6)).unwrap();
        let obs = Observation::new(
            vec![0, 2, 5],
            DVector::from_column_slice(&[0.2, 0.8, 0.5]),
            6,
        )
        .unwrap();
        let truth = DVector::from_column_slice(&[0.4, 0.6, 0.55]);
        let coarse = default_tau_grid(20);
        let fine = default_tau_grid(200);
        let q = QuantityOfInterest::Unlabeled;
        let (_, err_coarse) = grid_search_best(&bundle, &obs, &q, &truth, &coarse).unwrap();
        let (_, err_fine) = grid_search_best(&bundle, &obs, &q, &truth, &fine).unwrap();
        // Not strictly nested grids, but 10x refinement must not lose.
        assert!(err_fine <= err_coarse + 1e-12);
    }

    fn small_config(dataset: &str) -> RunConfig {
        crate::io::read_config(&format!(
            r#"{{"dataset_path":"{dataset}","eta":0.5,"seed":7,"n_labeled_grid":[3,5],
                "tau_grid_size":60,"trials":2}}"#
        ))
        .unwrap()
    }

    #[test]
    fn label_growth_rows_have_expected_shape_and_ordering() {
        let graph = path_graph(10);
        let config = small_config("unused");
        let (rows, trials) = run_label_growth_full(&config, &graph).unwrap();
        // 2 label counts × 4 methods × 2 trials.
        assert_eq!(rows.len(), 16);
        assert_eq!(trials.len(), 4);
        for pair in rows.windows(2) {
            let a = (pair[0].n_labeled, pair[0].method.name(), pair[0].trial);
            let b = (pair[1].n_labeled, pair[1].method.name(), pair[1].trial);
            assert!(a <= b, "rows must be sorted");
        }
        // Labeled sets grow incrementally across the grid.
        assert!(trials[0].labeled.iter().all(|v| trials[1].labeled.contains(v)));
        // Runtime column is pinned to zero unless requested.
        assert!(rows.iter().all(|r| r.runtime_ms == 0.0));
    }

    #[test]
    fn grid_search_is_at_least_as_good_as_every_method() {
        let graph = path_graph(12);
        let config = small_config("unused");
        let (rows, _) = run_label_growth_full(&config, &graph).unwrap();
        for row in rows.iter().filter(|r| r.method != Method::GridSearch) {
            let best = rows
                .iter()
                .find(|r| {
                    r.method == Method::GridSearch
                        && r.n_labeled == row.n_labeled
                        && r.trial == row.trial
                })
                .unwrap();
            assert!(
                best.prediction_error <= row.prediction_error + 1e-12,
                "grid search lost to {} at n={} trial={}",
                row.method.name(),
                row.n_labeled,
                row.trial
            );
        }
    }

    #[test]
    fn certificate_holds_on_model_consistent_trials() {
        let graph = path_graph(12);
        let config = small_config("unused");
        let (rows, trials) = run_label_growth_full(&config, &graph).unwrap();
        let bundle = build_laplacian(&graph).unwrap();
        for trial in &trials {
            let consistent = trial.signal_seminorm <= trial.realized_eps
                && trial.noise.norm() <= trial.eta * config.overestimation_factor;
            if !consistent {
                continue;
            }
            let row = rows
                .iter()
                .find(|r| {
                    r.method == Method::GlobalOpt
                        && r.n_labeled == trial.n_labeled
                        && r.trial == trial.trial_index
                })
                .unwrap();
            let bound = row.certified_bound.unwrap();
            assert!(
                row.prediction_error <= bound + 1e-8,
                "certificate violated: {} > {}",
                row.prediction_error,
                bound
            );
            assert!(bundle.dirichlet_seminorm(&trial.signal) <= trial.realized_eps + 1e-12);
        }
    }

    #[test]
    fn identical_configs_give_byte_identical_csv() {
        let graph = path_graph(10);
        let config = small_config("unused");
        let rows_a = run_label_growth(&config, &graph).unwrap();
        let rows_b = run_label_growth(&config, &graph).unwrap();
        assert_eq!(write_results_csv(&rows_a), write_results_csv(&rows_b));
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let graph = path_graph(4);
        let config = small_config("unused");
        assert!(matches!(
            run_label_growth(&config, &graph),
            Err(ExperimentError::GridTooLarge { .. })
        ));
    }
}
