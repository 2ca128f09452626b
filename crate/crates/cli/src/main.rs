//! Command-line front end: recovery, parameter selection, error-bound
//! curves, the experiment harness, and synthetic signal generation.
//!
//! Exit codes: 0 on success, 1 on any validation or usage error, 2 when a
//! semidefinite feasibility search comes back empty.

use clap::{Parser, Subcommand};
use graph_recovery::experiments::{run_label_growth, synth_signal};
use graph_recovery::io::{format_float, parse_matrix_market, read_config, write_results_csv};
use graph_recovery::lwce::{lwce_curve, write_curve_csv};
use graph_recovery::select::estimate_functional;
use graph_recovery::{
    apply_qoi, build_laplacian, regularize, solve_global, solve_local, Graph, ModelParams,
    Observation, QuantityOfInterest, SelectError,
};
use nalgebra::DVector;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "graph-recovery",
    about = "Worst-case optimal recovery of smooth graph signals from noisy partial labels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tikhonov regularization estimate at a fixed parameter tau.
    Recover {
        /// Graph file in Matrix Market coordinate format.
        #[arg(long)]
        graph: PathBuf,
        /// Labels CSV with header `vertex_index,value`.
        #[arg(long)]
        labels: PathBuf,
        /// Regularization parameter in (0, 1).
        #[arg(long)]
        tau: f64,
        /// Quantity of interest: unlabeled | full | average | vertex:<i>.
        #[arg(long, default_value = "unlabeled")]
        qoi: String,
    },
    /// Globally optimal parameter via the two-multiplier program.
    SelectGlobal {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Smoothness budget on ||L^{1/2} f||.
        #[arg(long)]
        eps: f64,
        /// Noise budget on ||e||.
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value = "unlabeled")]
        qoi: String,
    },
    /// Locally near-optimal parameter via the balance equation.
    SelectLocal {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        eta: f64,
    },
    /// Certified local worst-case error bound along a tau grid (CSV).
    LwceCurve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value = "unlabeled")]
        qoi: String,
        /// Number of interior grid points.
        #[arg(long, default_value_t = 200)]
        tau_grid: usize,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label-growth experiment protocol driven by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded smooth synthetic signal, normalized to [0, 1].
    Synth {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Globally optimal weights for estimating a single-vertex value
    /// without the full semidefinite program.
    EstimateFunctional {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        eta: f64,
        /// Target vertex of the linear functional.
        #[arg(long)]
        vertex: usize,
    },
}

enum CliError {
    Validation(String),
    Infeasible(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Infeasible(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Infeasible(m) => m,
        }
    }
}

fn validation<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Validation(err.to_string())
}

fn from_select(err: SelectError) -> CliError {
    match err {
        SelectError::InfeasibleSdp { .. } => CliError::Infeasible(err.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1 regardless of clap's default.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(output) => {
            // Tolerate downstream consumers closing the pipe early.
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(output.as_bytes()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn load_graph(path: &Path) -> Result<Graph, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
    let (graph, warnings) = parse_matrix_market(BufReader::new(file)).map_err(validation)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(graph)
}

fn load_labels(path: &Path, num_vertices: usize) -> Result<Observation, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == "vertex_index,value" => {}
        _ => {
            return Err(CliError::Validation(format!(
                "{}: labels CSV must start with header 'vertex_index,value'",
                path.display()
            )))
        }
    }
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>, what: &str| -> Result<String, CliError> {
            s.map(|v| v.trim().to_string()).ok_or_else(|| {
                CliError::Validation(format!(
                    "{} line {}: missing {what}",
                    path.display(),
                    lineno + 2
                ))
            })
        };
        let idx: usize = parse(parts.next(), "vertex index")?.parse().map_err(|e| {
            CliError::Validation(format!("{} line {}: {e}", path.display(), lineno + 2))
        })?;
        let value: f64 = parse(parts.next(), "value")?.parse().map_err(|e| {
            CliError::Validation(format!("{} line {}: {e}", path.display(), lineno + 2))
        })?;
        if parts.next().is_some() {
            return Err(CliError::Validation(format!(
                "{} line {}: expected exactly two columns",
                path.display(),
                lineno + 2
            )));
        }
        indices.push(idx);
        values.push(value);
    }
    Observation::new(indices, DVector::from_vec(values), num_vertices).map_err(validation)
}

fn parse_qoi(spec: &str) -> Result<QuantityOfInterest, CliError> {
    match spec {
        "unlabeled" => Ok(QuantityOfInterest::Unlabeled),
        "full" => Ok(QuantityOfInterest::Full),
        "average" => Ok(QuantityOfInterest::Average),
        other => match other.strip_prefix("vertex:") {
            Some(i) => i
                .parse()
                .map(QuantityOfInterest::Vertex)
                .map_err(|e| CliError::Validation(format!("bad vertex index in --qoi: {e}"))),
            None => Err(CliError::Validation(format!(
                "unknown --qoi '{other}' (expected unlabeled | full | average | vertex:<i>)"
            ))),
        },
    }
}

/// Output coordinates of a quantity of interest, for labeling estimate rows.
fn qoi_output_indices(q: &QuantityOfInterest, n: usize, labeled: &[usize]) -> Vec<usize> {
    match q {
        QuantityOfInterest::Unlabeled => {
            let mut mask = vec![true; n];
            for &v in labeled {
                mask[v] = false;
            }
            (0..n).filter(|&v| mask[v]).collect()
        }
        QuantityOfInterest::Full => (0..n).collect(),
        QuantityOfInterest::Average => vec![0],
        QuantityOfInterest::Vertex(i) => vec![*i],
        QuantityOfInterest::Matrix(m) => (0..m.nrows()).collect(),
    }
}

fn format_estimate(
    q: &QuantityOfInterest,
    n: usize,
    labeled: &[usize],
    estimate: &DVector<f64>,
) -> String {
    let indices = qoi_output_indices(q, n, labeled);
    let mut out = String::from("index,estimate\n");
    for (row, &idx) in indices.iter().enumerate() {
        out.push_str(&format!("{},{}\n", idx, format_float(estimate[row])));
    }
    out
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Recover {
            graph,
            labels,
            tau,
            qoi,
        } => {
            let graph = load_graph(&graph)?;
            let bundle = build_laplacian(&graph).map_err(validation)?;
            let obs = load_labels(&labels, graph.num_vertices())?;
            let q = parse_qoi(&qoi)?;
            let f = regularize(&bundle, &obs, tau).map_err(validation)?;
            let estimate = apply_qoi(&q, &f, obs.labeled()).map_err(validation)?;
            Ok(format_estimate(&q, graph.num_vertices(), obs.labeled(), &estimate))
        }
        Command::SelectGlobal {
            graph,
            labels,
            eps,
            eta,
            qoi,
        } => {
            let graph = load_graph(&graph)?;
            let bundle = build_laplacian(&graph).map_err(validation)?;
            let obs = load_labels(&labels, graph.num_vertices())?;
            let q = parse_qoi(&qoi)?;
            let params = ModelParams::new(eps, eta).map_err(validation)?;
            let sol = solve_global(&bundle, obs.labeled(), &q, params).map_err(from_select)?;
            let mut out = String::new();
            out.push_str(&format!("c_flat={}\n", format_float(sol.c_flat)));
            out.push_str(&format!("d_flat={}\n", format_float(sol.d_flat)));
            out.push_str(&format!("tau_flat={}\n", format_float(sol.tau_flat)));
            out.push_str(&format!(
                "gwce_sq_bound={}\n",
                format_float(sol.gwce_sq_bound)
            ));
            out.push_str(&format!(
                "gwce_bound={}\n",
                format_float(sol.gwce_sq_bound.max(0.0).sqrt())
            ));
            let estimate = &sol.recovery_matrix * obs.values();
            out.push_str(&format_estimate(
                &q,
                graph.num_vertices(),
                obs.labeled(),
                &estimate,
            ));
            Ok(out)
        }
        Command::SelectLocal {
            graph,
            labels,
            eps,
            eta,
        } => {
            let graph = load_graph(&graph)?;
            let bundle = build_laplacian(&graph).map_err(validation)?;
            let obs = load_labels(&labels, graph.num_vertices())?;
            let params = ModelParams::new(eps, eta).map_err(validation)?;
            let sol = solve_local(&bundle, &obs, params).map_err(from_select)?;
            let mut out = String::new();
            out.push_str(&format!("tau_natural={}\n", format_float(sol.tau_natural)));
            out.push_str(&format!(
                "balance_residual={}\n",
                format_float(sol.balance_residual)
            ));
            out.push_str(&format!(
                "minimax_value={}\n",
                format_float(sol.minimax_value)
            ));
            out.push_str(&format!("degenerate={}\n", sol.degenerate));
            out.push_str(&format_estimate(
                &QuantityOfInterest::Full,
                graph.num_vertices(),
                obs.labeled(),
                &sol.f_hat,
            ));
            Ok(out)
        }
        Command::LwceCurve {
            graph,
            labels,
            eps,
            eta,
            qoi,
            tau_grid,
            out,
        } => {
            if tau_grid == 0 {
                return Err(CliError::Validation("--tau-grid must be at least 1".into()));
            }
            let graph = load_graph(&graph)?;
            let bundle = build_laplacian(&graph).map_err(validation)?;
            let obs = load_labels(&labels, graph.num_vertices())?;
            let q = parse_qoi(&qoi)?;
            let params = ModelParams::new(eps, eta).map_err(validation)?;
            let taus: Vec<f64> = (1..=tau_grid)
                .map(|i| i as f64 / (tau_grid as f64 + 1.0))
                .collect();
            let curve = lwce_curve(&bundle, &obs, &q, params, &taus).map_err(from_select)?;
            let csv = write_curve_csv(&curve);
            match out {
                Some(path) => {
                    std::fs::write(&path, csv).map_err(validation)?;
                    Ok(String::new())
                }
                None => Ok(csv),
            }
        }
        Command::Experiment { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| {
                CliError::Validation(format!("cannot open {}: {e}", config.display()))
            })?;
            let run_config = read_config(&text).map_err(validation)?;
            let dataset = resolve_dataset(&run_config.dataset_path, &config)?;
            let graph = load_graph(&dataset)?;
            let rows = run_label_growth(&run_config, &graph).map_err(validation)?;
            std::fs::write(&out, write_results_csv(&rows)).map_err(validation)?;
            Ok(String::new())
        }
        Command::Synth { graph, seed } => {
            let graph = load_graph(&graph)?;
            let bundle = build_laplacian(&graph).map_err(validation)?;
            let f = synth_signal(&bundle, seed);
            let mut out = String::from("vertex,value\n");
            for v in 0..f.len() {
                out.push_str(&format!("{},{}\n", v, format_float(f[v])));
            }
            Ok(out)
        }
        Command::EstimateFunctional {
            graph,
            labels,
            eps,
            eta,
            vertex,
        } => {
            let graph = load_graph(&graph)?;
            let bundle = build_laplacian(&graph).map_err(validation)?;
            let obs = load_labels(&labels, graph.num_vertices())?;
            if vertex >= graph.num_vertices() {
                return Err(CliError::Validation(format!(
                    "--vertex {vertex} out of range for {} vertices",
                    graph.num_vertices()
                )));
            }
            let params = ModelParams::new(eps, eta).map_err(validation)?;
            let mut q_vec = DVector::zeros(graph.num_vertices());
            q_vec[vertex] = 1.0;
            let (weights, gwce) =
                estimate_functional(&q_vec, &bundle, obs.labeled(), params).map_err(from_select)?;
            let mut out = String::new();
            out.push_str(&format!("gwce={}\n", format_float(gwce)));
            out.push_str(&format!(
                "estimate={}\n",
                format_float(weights.dot(obs.values()))
            ));
            out.push_str("labeled_vertex,weight\n");
            for (k, &v) in obs.labeled().iter().enumerate() {
                out.push_str(&format!("{},{}\n", v, format_float(weights[k])));
            }
            Ok(out)
        }
    }
}

/// Dataset paths resolve against the working directory first, then against
/// the config file's directory.
fn resolve_dataset(dataset_path: &str, config_path: &Path) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(dataset_path);
    if direct.exists() {
        return Ok(direct);
    }
    if let Some(dir) = config_path.parent() {
        let relative = dir.join(dataset_path);
        if relative.exists() {
            return Ok(relative);
        }
    }
    Err(CliError::Validation(format!(
        "dataset '{dataset_path}' not found (tried the working directory and the config directory)"
    )))
}
