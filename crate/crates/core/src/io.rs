//! File formats: Matrix Market graph files, JSON run configuration, and the
//! results CSV emitted by the experiment harness.

use crate::graph::{Graph, GraphError};
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },

    #[error("unsupported matrix type at line {line}: {what}")]
    Unsupported { line: usize, what: String },

    #[error("malformed size line at line {line}: {reason}")]
    MalformedSize { line: usize, reason: String },

    #[error("matrix must be square, got {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("malformed entry at line {line}: {reason}")]
    MalformedEntry { line: usize, reason: String },

    #[error("index out of bounds at line {line}")]
    IndexOutOfBounds { line: usize },

    #[error("negative weight {value} at line {line}")]
    NegativeWeight { line: usize, value: f64 },

    #[error("nnz mismatch: header declares {declared} entries, found {found}")]
    NnzMismatch { declared: usize, found: usize },

    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parses a Matrix Market coordinate file into a graph, with warnings for
/// dropped diagonals, symmetrized general matrices, and the usual edge
/// canonicalization.
///
/// Accepted headers: `%%MatrixMarket matrix coordinate <field> <symmetry>`
/// with field in {real, integer, pattern} and symmetry in
/// {symmetric, general}. Indices are 1-based; pattern entries get weight 1;
/// general matrices are symmetrized as `(A + Aᵀ)/2`.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<(Graph, Vec<String>), ParseError> {
    let mut warnings = Vec::new();
    let mut lines = reader.lines().enumerate();

    let (header_line_no, header) = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break (idx + 1, line);
            }
            None => {
                return Err(ParseError::MalformedHeader {
                    line: 1,
                    reason: "empty input".into(),
                })
            }
        }
    };

    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" {
        return Err(ParseError::MalformedHeader {
            line: header_line_no,
            reason: "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'".into(),
        });
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(ParseError::Unsupported {
            line: header_line_no,
            what: format!("{} {}", tokens[1], tokens[2]),
        });
    }
    let field = tokens[3].as_str();
    if !matches!(field, "real" | "integer" | "pattern") {
        return Err(ParseError::Unsupported {
            line: header_line_no,
            what: format!("field '{field}'"),
        });
    }
    let symmetry = tokens[4].as_str();
    if !matches!(symmetry, "symmetric" | "general") {
        return Err(ParseError::Unsupported {
            line: header_line_no,
            what: format!("symmetry '{symmetry}'"),
        });
    }
    let pattern = field == "pattern";
    let general = symmetry == "general";

    // Size line: first non-comment, non-blank line after the header.
    let (size_line_no, size_line) = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('%') {
                    continue;
                }
                break (idx + 1, line);
            }
            None => {
                return Err(ParseError::MalformedSize {
                    line: header_line_no + 1,
                    reason: "missing size line".into(),
                })
            }
        }
    };
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(ParseError::MalformedSize {
            line: size_line_no,
            reason: format!("expected 'rows cols nnz', got {} fields", dims.len()),
        });
    }
    let parse_dim = |s: &str| -> Result<usize, ParseError> {
        s.parse().map_err(|_| ParseError::MalformedSize {
            line: size_line_no,
            reason: format!("'{s}' is not a nonnegative integer"),
        })
    };
    let rows = parse_dim(dims[0])?;
    let cols = parse_dim(dims[1])?;
    let declared_nnz = parse_dim(dims[2])?;
    if rows != cols {
        return Err(ParseError::NotSquare { rows, cols });
    }
    let n = rows;

    let mut found = 0usize;
    let mut dropped_diagonals = 0usize;
    // For general matrices, keep directed accumulators to symmetrize later.
    let mut directed: std::collections::BTreeMap<(usize, usize), f64> =
        std::collections::BTreeMap::new();
    let mut undirected: Vec<(usize, usize, f64)> = Vec::new();

    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        let expected_fields = if pattern { 2 } else { 3 };
        if parts.len() != expected_fields {
            return Err(ParseError::MalformedEntry {
                line: line_no,
                reason: format!("expected {expected_fields} fields, got {}", parts.len()),
            });
        }
        let parse_index = |s: &str| -> Result<usize, ParseError> {
            s.parse().map_err(|_| ParseError::MalformedEntry {
                line: line_no,
                reason: format!("'{s}' is not an index"),
            })
        };
        let i = parse_index(parts[0])?;
        let j = parse_index(parts[1])?;
        if i < 1 || i > n || j < 1 || j > n {
            return Err(ParseError::IndexOutOfBounds { line: line_no });
        }
        let w = if pattern {
            1.0
        } else {
            parts[2].parse::<f64>().map_err(|_| ParseError::MalformedEntry {
                line: line_no,
                reason: format!("'{}' is not a number", parts[2]),
            })?
        };
        if w < 0.0 {
            return Err(ParseError::NegativeWeight {
                line: line_no,
                value: w,
            });
        }
        found += 1;
        let (i, j) = (i - 1, j - 1);
        if i == j {
            dropped_diagonals += 1;
            continue;
        }
        if general {
            *directed.entry((i, j)).or_insert(0.0) += w;
        } else {
            undirected.push((i, j, w));
        }
    }

    if found != declared_nnz {
        return Err(ParseError::NnzMismatch {
            declared: declared_nnz,
            found,
        });
    }
    if dropped_diagonals > 0 {
        warnings.push(format!("dropped {dropped_diagonals} diagonal entries"));
    }

    if general {
        // Symmetrize by averaging, warning when the two triangles disagree.
        let mut asymmetric = false;
        let mut merged: std::collections::BTreeMap<(usize, usize), f64> =
            std::collections::BTreeMap::new();
        for (&(i, j), &w) in &directed {
            let key = (i.min(j), i.max(j));
            let mirrored = directed.get(&(j, i)).copied().unwrap_or(0.0);
            if (w - mirrored).abs() > 1e-12 * (1.0 + w.abs().max(mirrored.abs())) {
                asymmetric = true;
            }
            merged.entry(key).or_insert((w + mirrored) / 2.0);
        }
        if asymmetric {
            warnings.push("asymmetric general matrix symmetrized by averaging".into());
        }
        undirected = merged.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    }

    let (graph, graph_warnings) = Graph::from_edges_with_warnings(n, undirected)?;
    warnings.extend(graph_warnings);
    Ok((graph, warnings))
}

/// Rule for deriving the smoothness budget from a realized signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsRule {
    /// `eps = 2·‖L^{1/2} f‖₂²` (squared seminorm, the accompanying
    /// experiment protocol taken literally).
    #[default]
    LiteralSquared,
    /// `eps = 2·‖L^{1/2} f‖₂` (unsquared, matching the model-set units).
    Linear2x,
    /// A fixed value independent of the signal.
    Explicit(f64),
}

impl EpsRule {
    pub fn epsilon_for(&self, dirichlet_seminorm: f64) -> f64 {
        match self {
            EpsRule::LiteralSquared => 2.0 * dirichlet_seminorm * dirichlet_seminorm,
            EpsRule::Linear2x => 2.0 * dirichlet_seminorm,
            EpsRule::Explicit(v) => *v,
        }
    }
}

/// Additive-noise generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Uniform entries, mean-centered, rescaled to `‖e‖₂ = eta`.
    #[default]
    UniformCentered,
    /// Entries proportional to vertex degree, rescaled to `‖e‖₂ = eta`.
    DegreeProportional,
    /// Entries proportional to inverse degree, rescaled to `‖e‖₂ = eta`.
    InverseDegreeProportional,
}

/// Recovery methods the experiment harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GlobalOpt,
    GridSearch,
    Harmonic,
    LocalOpt,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::GlobalOpt => "global_opt",
            Method::GridSearch => "grid_search",
            Method::Harmonic => "harmonic",
            Method::LocalOpt => "local_opt",
        }
    }

    pub fn all() -> Vec<Method> {
        vec![
            Method::GlobalOpt,
            Method::GridSearch,
            Method::Harmonic,
            Method::LocalOpt,
        ]
    }
}

fn default_methods() -> Vec<Method> {
    Method::all()
}

fn default_tau_grid_size() -> usize {
    200
}

fn default_overestimation() -> f64 {
    1.0
}

fn default_trials() -> usize {
    10
}

/// Configuration of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_path: String,
    pub eta: f64,
    #[serde(default)]
    pub eps_rule: EpsRule,
    #[serde(default)]
    pub noise_model: NoiseModel,
    pub seed: u64,
    pub n_labeled_grid: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_tau_grid_size")]
    pub tau_grid_size: usize,
    #[serde(default = "default_overestimation")]
    pub overestimation_factor: f64,
    /// Random trials per configuration point.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// When set, rows carry measured wall-clock runtimes. Off by default so
    /// that identical configurations produce byte-identical output.
    #[serde(default)]
    pub record_runtimes: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(String),

    #[error("eta must be positive, got {0}")]
    EtaNotPositive(f64),

    #[error("overestimation_factor must be at least 1, got {0}")]
    OverestimationTooSmall(f64),

    #[error("n_labeled_grid must be nonempty, positive and strictly increasing")]
    BadLabeledGrid,

    #[error("tau_grid_size must be at least 1")]
    BadTauGridSize,

    #[error("trials must be at least 1")]
    BadTrials,

    #[error("methods list must be nonempty")]
    NoMethods,

    #[error("explicit eps must be positive, got {0}")]
    BadExplicitEps(f64),
}

/// Parses and validates a JSON run configuration. Unknown keys are
/// rejected; type errors name the offending key.
pub fn read_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| ConfigError::Json(format!("{} (at {})", e.inner(), e.path())))?;
    validate_config(&config)?;
    Ok(config)
}

fn validate_config(config: &RunConfig) -> Result<(), ConfigError> {
    if !(config.eta > 0.0 && config.eta.is_finite()) {
        return Err(ConfigError::EtaNotPositive(config.eta));
    }
    if !(config.overestimation_factor >= 1.0 && config.overestimation_factor.is_finite()) {
        return Err(ConfigError::OverestimationTooSmall(config.overestimation_factor));
    }
    if config.n_labeled_grid.is_empty()
        || config.n_labeled_grid[0] == 0
        || config.n_labeled_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(ConfigError::BadLabeledGrid);
    }
    if config.tau_grid_size == 0 {
        return Err(ConfigError::BadTauGridSize);
    }
    if config.trials == 0 {
        return Err(ConfigError::BadTrials);
    }
    if config.methods.is_empty() {
        return Err(ConfigError::NoMethods);
    }
    if let EpsRule::Explicit(v) = config.eps_rule {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConfigError::BadExplicitEps(v));
        }
    }
    Ok(())
}

/// One output row of the experiment harness.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub n_labeled: usize,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub tau: f64,
    pub prediction_error: f64,
    pub certified_bound: Option<f64>,
    pub runtime_ms: f64,
}

pub const RESULTS_CSV_HEADER: &str =
    "n_labeled,method,trial,seed,tau,prediction_error,certified_bound,runtime_ms";

/// Formats a float with 17 significant digits, enough to round-trip `f64`
/// exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes result rows as CSV in deterministic order
/// (`n_labeled`, then method name, then trial).
pub fn write_results_csv(rows: &[ResultRow]) -> String {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.n_labeled, a.method.name(), a.trial).cmp(&(b.n_labeled, b.method.name(), b.trial))
    });
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for row in sorted {
        let bound = row
            .certified_bound
            .map(format_float)
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.n_labeled,
            row.method.name(),
            row.trial,
            row.seed,
            format_float(row.tau),
            format_float(row.prediction_error),
            bound,
            format_float(row.runtime_ms),
        ));
    }
    out
}
