//! Weighted undirected graphs, their Laplacians and connectivity structure.
//!
//! The Laplacian `L = D − W` is the carrier of the smoothness model: the
//! quadratic form `⟨Lf, f⟩` is the weighted Dirichlet energy of a signal
//! `f`. Everything downstream (regularization, parameter selection, error
//! bounds) consumes a [`LaplacianBundle`], which packages `L` together with
//! its full symmetric eigendecomposition, its positive square root and the
//! connected-component structure of the graph.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default cap on the number of vertices for dense-matrix construction.
pub const DEFAULT_DENSE_LIMIT: usize = 5000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    NoVertices,

    #[error("edge ({i}, {j}) out of range for {num_vertices} vertices")]
    EdgeOutOfRange { i: usize, j: usize, num_vertices: usize },

    #[error("edge ({i}, {j}) has negative weight {weight}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("edge ({i}, {j}) has non-finite weight")]
    NonFiniteWeight { i: usize, j: usize },

    #[error("graph too large for dense mode: {num_vertices} vertices exceeds limit {limit}")]
    TooLargeForDense { num_vertices: usize, limit: usize },

    #[error("labeled vertex set is empty")]
    EmptyLabeledSet,

    #[error("labeled vertex {index} out of range for {num_vertices} vertices")]
    LabeledOutOfRange { index: usize, num_vertices: usize },

    #[error("labeled vertex {index} listed more than once")]
    DuplicateLabel { index: usize },

    #[error("unobserved component(s): no labeled vertex in component(s) {components:?}")]
    UnobservedComponents { components: Vec<usize> },
}

/// One undirected edge in canonical orientation (`i < j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// A weighted undirected graph on vertices `0..num_vertices`.
///
/// Edges are stored once each in canonical orientation; the adjacency
/// matrix is the symmetric expansion. Self-loops are dropped and duplicate
/// edges have their weights summed at construction time, each with a
/// warning.
#[derive(Debug, Clone)]
pub struct Graph {
    num_vertices: usize,
    edges: Vec<Edge>,
    vertex_names: Option<Vec<String>>,
}

impl Graph {
    /// Builds a graph from an edge list, discarding canonicalization warnings.
    pub fn from_edges<I>(num_vertices: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::from_edges_with_warnings(num_vertices, edges).map(|(g, _)| g)
    }

    /// Builds a graph from an edge list, reporting canonicalization warnings
    /// (dropped self-loops, summed duplicate edges).
    pub fn from_edges_with_warnings<I>(
        num_vertices: usize,
        edges: I,
    ) -> Result<(Self, Vec<String>), GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if num_vertices == 0 {
            return Err(GraphError::NoVertices);
        }
        let mut warnings = Vec::new();
        let mut canonical: std::collections::BTreeMap<(usize, usize), f64> =
            std::collections::BTreeMap::new();
        for (i, j, w) in edges {
            if i >= num_vertices || j >= num_vertices {
                return Err(GraphError::EdgeOutOfRange { i, j, num_vertices });
            }
            if !w.is_finite() {
                return Err(GraphError::NonFiniteWeight { i, j });
            }
            if w < 0.0 {
                return Err(GraphError::NegativeWeight { i, j, weight: w });
            }
            if i == j {
                warnings.push(format!("dropped self-loop at vertex {i}"));
                continue;
            }
            let key = (i.min(j), i.max(j));
            match canonical.entry(key) {
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    warnings.push(format!(
                        "duplicate edge ({}, {}): weights summed",
                        key.0, key.1
                    ));
                    *e.get_mut() += w;
                }
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(w);
                }
            }
        }
        let edges = canonical
            .into_iter()
            .map(|((i, j), weight)| Edge { i, j, weight })
            .collect();
        Ok((
            Graph {
                num_vertices,
                edges,
                vertex_names: None,
            },
            warnings,
        ))
    }

    pub fn with_vertex_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.num_vertices);
        self.vertex_names = Some(names);
        self
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_names(&self) -> Option<&[String]> {
        self.vertex_names.as_deref()
    }

    /// Dense symmetric adjacency matrix `W`.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.num_vertices;
        let mut w = DMatrix::zeros(n, n);
        for e in &self.edges {
            w[(e.i, e.j)] += e.weight;
            w[(e.j, e.i)] += e.weight;
        }
        w
    }

    /// Weighted degrees `D_ii = Σ_j W_ij`.
    pub fn weighted_degrees(&self) -> DVector<f64> {
        let mut deg = DVector::zeros(self.num_vertices);
        for e in &self.edges {
            deg[e.i] += e.weight;
            deg[e.j] += e.weight;
        }
        deg
    }
}

/// Connected-component labeling of a graph.
///
/// Components are numbered `0..num_components` in order of their smallest
/// vertex index. Only edges with strictly positive weight connect.
#[derive(Debug, Clone)]
pub struct ComponentStructure {
    pub num_components: usize,
    pub component_of: Vec<usize>,
}

impl ComponentStructure {
    /// Vertex lists per component, in increasing vertex order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_components];
        for (v, &c) in self.component_of.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

/// Labels connected components by breadth-first search over positive-weight edges.
pub fn connected_components(graph: &Graph) -> ComponentStructure {
    let n = graph.num_vertices();
    let mut adj = vec![Vec::new(); n];
    for e in graph.edges() {
        if e.weight > 0.0 {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
    }
    let mut component_of = vec![usize::MAX; n];
    let mut num_components = 0;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if component_of[start] != usize::MAX {
            continue;
        }
        component_of[start] = num_components;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if component_of[u] == usize::MAX {
                    component_of[u] = num_components;
                    queue.push_back(u);
                }
            }
        }
        num_components += 1;
    }
    ComponentStructure {
        num_components,
        component_of,
    }
}

/// The graph Laplacian together with its spectral and connectivity data.
#[derive(Debug, Clone)]
pub struct LaplacianBundle {
    /// `L = D − W`, symmetric positive semidefinite.
    pub laplacian: DMatrix<f64>,
    /// Eigenvalues of `L` in nondecreasing order.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Symmetric PSD square root `L^{1/2}`.
    pub sqrt_laplacian: DMatrix<f64>,
    /// Number of connected components (from the graph scan, not the spectrum).
    pub num_components: usize,
    /// Component index of each vertex.
    pub component_of: Vec<usize>,
    /// Weighted degrees `D_ii`.
    pub degrees: DVector<f64>,
    zero_threshold: f64,
}

impl LaplacianBundle {
    pub fn num_vertices(&self) -> usize {
        self.laplacian.nrows()
    }

    /// Threshold below which an eigenvalue is treated as zero:
    /// `N · machine_epsilon · λ_max`.
    pub fn zero_threshold(&self) -> f64 {
        self.zero_threshold
    }

    /// Number of eigenvalues at or below the zero threshold.
    pub fn kernel_dim(&self) -> usize {
        self.eigenvalues
            .iter()
            .take_while(|&&l| l <= self.zero_threshold)
            .count()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn components(&self) -> ComponentStructure {
        ComponentStructure {
            num_components: self.num_components,
            component_of: self.component_of.clone(),
        }
    }

    /// `‖L^{1/2} f‖₂` as the plain norm of `L^{1/2} f`; unlike
    /// `sqrt(⟨Lf, f⟩)`, this does not amplify cancellation noise when the
    /// true energy is zero.
    pub fn dirichlet_seminorm(&self, f: &DVector<f64>) -> f64 {
        (&self.sqrt_laplacian * f).norm()
    }

    /// `⟨Lf, f⟩`.
    pub fn laplacian_quadratic_form(&self, f: &DVector<f64>) -> f64 {
        (&self.laplacian * f).dot(f)
    }
}

/// Builds the Laplacian bundle of a graph with the default dense-size cap.
pub fn build_laplacian(graph: &Graph) -> Result<LaplacianBundle, GraphError> {
    build_laplacian_with_limit(graph, DEFAULT_DENSE_LIMIT)
}

/// Builds the Laplacian bundle, rejecting graphs above `limit` vertices.
pub fn build_laplacian_with_limit(
    graph: &Graph,
    limit: usize,
) -> Result<LaplacianBundle, GraphError> {
    let n = graph.num_vertices();
    if n > limit {
        return Err(GraphError::TooLargeForDense {
            num_vertices: n,
            limit,
        });
    }
    let degrees = graph.weighted_degrees();
    let mut laplacian = DMatrix::zeros(n, n);
    for v in 0..n {
        laplacian[(v, v)] = degrees[v];
    }
    for e in graph.edges() {
        laplacian[(e.i, e.j)] -= e.weight;
        laplacian[(e.j, e.i)] -= e.weight;
    }

    let (eigenvalues, eigenvectors) = sorted_symmetric_eigen(&laplacian);
    let lambda_max = eigenvalues[n - 1].max(0.0);
    let zero_threshold = n as f64 * f64::EPSILON * lambda_max;

    // L^{1/2} = χ diag(√λ⁺) χᵀ, clamping the numerically negative tail to 0.
    let sqrt_vals = eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut scaled = eigenvectors.clone();
    for k in 0..n {
        scaled.column_mut(k).scale_mut(sqrt_vals[k]);
    }
    let sqrt_laplacian = &scaled * eigenvectors.transpose();

    let comps = connected_components(graph);
    Ok(LaplacianBundle {
        laplacian,
        eigenvalues,
        eigenvectors,
        sqrt_laplacian,
        num_components: comps.num_components,
        component_of: comps.component_of,
        degrees,
        zero_threshold,
    })
}

/// Symmetric eigendecomposition with eigenvalues sorted nondecreasing and
/// eigenvector columns permuted to match.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Checks that every connected component contains at least one labeled
/// vertex, which is exactly `ker(L) ∩ ker(Λ) = {0}`.
pub fn validate_observability(
    bundle: &LaplacianBundle,
    labeled: &[usize],
) -> Result<(), GraphError> {
    if labeled.is_empty() {
        return Err(GraphError::EmptyLabeledSet);
    }
    let n = bundle.num_vertices();
    let mut seen = vec![false; n];
    for &v in labeled {
        if v >= n {
            return Err(GraphError::LabeledOutOfRange {
                index: v,
                num_vertices: n,
            });
        }
        if seen[v] {
            return Err(GraphError::DuplicateLabel { index: v });
        }
        seen[v] = true;
    }
    let mut observed = vec![false; bundle.num_components];
    for &v in labeled {
        observed[bundle.component_of[v]] = true;
    }
    let missing: Vec<usize> = (0..bundle.num_components)
        .filter(|&c| !observed[c])
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(GraphError::UnobservedComponents { components: missing })
    }
}

/// Union of `num_cliques` disjoint complete graphs on `clique_size` vertices
/// each, with unit weights. The renormalized Laplacian `L / clique_size` of
/// this family is an orthogonal projector, which makes it a useful fixture.
pub fn build_clique_union(num_cliques: usize, clique_size: usize) -> Graph {
    assert!(num_cliques >= 1, "need at least one clique");
    assert!(clique_size >= 2, "cliques must have at least two vertices");
    let n = num_cliques * clique_size;
    let mut edges = Vec::new();
    for c in 0..num_cliques {
        let base = c * clique_size;
        for a in 0..clique_size {
            for b in (a + 1)..clique_size {
                edges.push((base + a, base + b, 1.0));
            }
        }
    }
    Graph::from_edges(n, edges).expect("clique union edges are valid by construction")
}
