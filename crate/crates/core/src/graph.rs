//! Dense directed graphs, strong-connectivity repair and stationary
//! distributions.
//!
//! Graphs here are small (tens of vertices), so everything is stored as a
//! dense row-major matrix. `adjust` turns an arbitrary non-negative digraph
//! into an irreducible row-stochastic chain and attaches its stationary
//! distribution.

use thiserror::Error;

/// Residual bound a stationary vector must satisfy before it is handed out.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-8;

/// Repair weight used when a graph has no positive edge at all.
pub const FALLBACK_REPAIR_WEIGHT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("weight matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("invalid weight {value} at ({i}, {j}): weights must be finite and non-negative")]
    InvalidWeight { i: usize, j: usize, value: f64 },
    #[error("self-loop of weight {value} at vertex {vertex}")]
    SelfLoop { vertex: usize, value: f64 },
    #[error("{labels} labels given for {n} vertices")]
    LabelCount { labels: usize, n: usize },
    #[error("permutation of length {len} does not match {n} vertices or is not a bijection")]
    BadPermutation { len: usize, n: usize },
    #[error("stationary iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("chain is reducible or numerically pathological (residual {residual:e})")]
    Reducible { residual: f64 },
}

/// Square dense matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(GraphError::NotSquare {
                    row,
                    len: r.len(),
                    n,
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        check_permutation(perm, self.n)?;
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(perm[i], perm[j], self.get(i, j));
            }
        }
        Ok(out)
    }

    /// `(A + I) / 2`, the lazy version of a stochastic matrix.
    pub fn lazy(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                let id = if i == j { 1.0 } else { 0.0 };
                out.set(i, j, 0.5 * (self.get(i, j) + id));
            }
        }
        out
    }

    /// `‖xᵀA − xᵀ‖∞`.
    pub fn left_residual(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|j| {
                let y: f64 = (0..self.n).map(|i| x[i] * self.get(i, j)).sum();
                (y - x[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<(), GraphError> {
    let bad = GraphError::BadPermutation { len: perm.len(), n };
    if perm.len() != n {
        return Err(bad);
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(bad);
        }
        seen[p] = true;
    }
    Ok(())
}

/// Non-negative weighted digraph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    weights: SquareMatrix,
    labels: Option<Vec<String>>,
}

impl DirectedGraph {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        Self::from_matrix(SquareMatrix::from_rows(&rows)?)
    }

    pub fn from_matrix(weights: SquareMatrix) -> Result<Self, GraphError> {
        let n = weights.n();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..n {
            for j in 0..n {
                let value = weights.get(i, j);
                if !value.is_finite() || value < 0.0 {
                    return Err(GraphError::InvalidWeight { i, j, value });
                }
            }
            if weights.get(i, i) != 0.0 {
                return Err(GraphError::SelfLoop {
                    vertex: i,
                    value: weights.get(i, i),
                });
            }
        }
        Ok(Self {
            weights,
            labels: None,
        })
    }

    /// Edgeless graph on `n` vertices.
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        Self::from_matrix(SquareMatrix::zeros(n))
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GraphError> {
        if labels.len() != self.n() {
            return Err(GraphError::LabelCount {
                labels: labels.len(),
                n: self.n(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.weights.n()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn weights(&self) -> &SquareMatrix {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn out_degree(&self, v: usize) -> f64 {
        self.weights.row_sum(v)
    }

    pub fn in_degree(&self, v: usize) -> f64 {
        self.weights.col_sum(v)
    }

    /// Total weight on all edges.
    pub fn total_weight(&self) -> f64 {
        (0..self.n()).map(|v| self.out_degree(v)).sum()
    }

    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .row(v)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, _)| j)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|i| (i + 1..n).all(|j| (self.weight(i, j) - self.weight(j, i)).abs() <= tol))
    }

    /// Smallest strictly positive weight, if any.
    pub fn min_positive_weight(&self) -> Option<f64> {
        self.weights
            .data
            .iter()
            .copied()
            .filter(|&w| w > 0.0)
            .min_by(f64::total_cmp)
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let weights = self.weights.permuted(perm)?;
        let labels = self.labels.as_ref().map(|ls| {
            let mut out = vec![String::new(); ls.len()];
            for (i, l) in ls.iter().enumerate() {
                out[perm[i]] = l.clone();
            }
            out
        });
        Ok(Self { weights, labels })
    }
}

/// Strongly connected components over positive-weight edges, emitted in
/// reverse topological order of the condensation (sink components first).
/// Vertices inside each component are sorted ascending.
pub fn tarjan_scc(g: &DirectedGraph) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = g.n();
    let succ: Vec<Vec<usize>> = (0..n).map(|v| g.successors(v).collect()).collect();

    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut components = Vec::new();
    // (vertex, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for start in 0..n {
        if index[start] != UNVISITED {
            continue;
        }
        call.push((start, 0));
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components
}

/// How the weight of repair edges is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EpsPolicy {
    /// Smallest positive weight in the graph, or [`FALLBACK_REPAIR_WEIGHT`].
    #[default]
    MinPositive,
    Fixed(f64),
}

impl EpsPolicy {
    fn resolve(self, g: &DirectedGraph) -> f64 {
        match self {
            EpsPolicy::MinPositive => g.min_positive_weight().unwrap_or(FALLBACK_REPAIR_WEIGHT),
            EpsPolicy::Fixed(eps) => eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Irreducible row-stochastic graph together with its stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGraph {
    graph: DirectedGraph,
    pi: Vec<f64>,
    volume: f64,
    added_edges: Vec<RepairEdge>,
}

impl StochasticGraph {
    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Sum of in- and out-degrees over all vertices.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn added_edges(&self) -> &[RepairEdge] {
        &self.added_edges
    }

    pub fn into_graph(self) -> DirectedGraph {
        self.graph
    }
}

/// Makes `g` strongly connected and row-stochastic, then solves for its
/// stationary distribution.
///
/// Every sink component of the condensation is wired to every source
/// component. The ε of one (sink, source) pair is spread evenly over all
/// `|sink| · |source|` vertex pairs, so a large component does not receive
/// more repair mass than a singleton. In the condensation of the input a sink
/// reaches nothing but itself, so the only pair skipped is a component that is
/// both sink and source. Afterwards every sink reaches every source, which makes the whole
/// graph one component. Rows are then divided by their sums.
///
/// A single vertex has no edges; it is returned as the trivial chain with
/// `π = [1]`, an all-zero weight row and volume 2.
pub fn adjust(g: &DirectedGraph, eps_policy: EpsPolicy) -> Result<StochasticGraph, GraphError> {
    let n = g.n();
    let mut weights = g.weights().clone();
    let mut added_edges = Vec::new();

    if n == 1 {
        return Ok(StochasticGraph {
            graph: g.clone(),
            pi: vec![1.0],
            volume: 2.0,
            added_edges,
        });
    }

    let components = tarjan_scc(g);
    if components.len() > 1 {
        let mut comp_of = vec![0; n];
        for (c, comp) in components.iter().enumerate() {
            for &v in comp {
                comp_of[v] = c;
            }
        }
        let mut has_in = vec![false; components.len()];
        let mut has_out = vec![false; components.len()];
        for i in 0..n {
            for j in g.successors(i) {
                if comp_of[i] != comp_of[j] {
                    has_out[comp_of[i]] = true;
                    has_in[comp_of[j]] = true;
                }
            }
        }
        // Components are ordered by their smallest vertex so the repair list
        // is independent of Tarjan's traversal order.
        let mut order: Vec<usize> = (0..components.len()).collect();
        order.sort_by_key(|&c| components[c][0]);
        let sources: Vec<usize> = order.iter().copied().filter(|&c| !has_in[c]).collect();
        let sinks: Vec<usize> = order.iter().copied().filter(|&c| !has_out[c]).collect();

        let eps = eps_policy.resolve(g);
        if !(eps.is_finite() && eps > 0.0) {
            return Err(GraphError::InvalidWeight {
                i: 0,
                j: 0,
                value: eps,
            });
        }
        for &sink in &sinks {
            for &source in &sources {
                if sink == source {
                    continue;
                }
                let share = eps / (components[sink].len() * components[source].len()) as f64;
                for &from in &components[sink] {
                    for &to in &components[source] {
                        weights.set(from, to, share);
                        added_edges.push(RepairEdge {
                            from,
                            to,
                            weight: share,
                        });
                    }
                }
            }
        }
    }

    for i in 0..n {
        let sum = weights.row_sum(i);
        let row = weights.row_mut(i);
        if sum > 0.0 {
            row.iter_mut().for_each(|w| *w /= sum);
        } else {
            // Uninformative walker: uniform over the other vertices.
            let u = 1.0 / (n - 1) as f64;
            for (j, w) in row.iter_mut().enumerate() {
                *w = if j == i { 0.0 } else { u };
            }
        }
    }

    let pi = stationary_distribution(&weights)?;
    let graph = DirectedGraph {
        weights,
        labels: g.labels.clone(),
    };
    let volume = (0..n).map(|v| graph.out_degree(v) + graph.in_degree(v)).sum();
    Ok(StochasticGraph {
        graph,
        pi,
        volume,
        added_edges,
    })
}

/// Stationary distribution of an irreducible row-stochastic matrix.
///
/// Uses Grassmann–Taksar–Heyman state reduction: a direct elimination that
/// only adds and multiplies non-negative quantities, so it is exact to
/// rounding regardless of periodicity or how weakly the chain mixes. The
/// diagonal is never read, hence `A` and `(A + I) / 2` give the same answer.
pub fn stationary_distribution(a: &SquareMatrix) -> Result<Vec<f64>, GraphError> {
    let n = a.n();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut p = a.clone();
    for k in (1..n).rev() {
        let s: f64 = p.row(k)[..k].iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(GraphError::Reducible {
                residual: f64::INFINITY,
            });
        }
        for i in 0..k {
            let v = p.get(i, k) / s;
            p.set(i, k, v);
        }
        for i in 0..k {
            let pik = p.get(i, k);
            if pik == 0.0 {
                continue;
            }
            for j in 0..k {
                let v = p.get(i, j) + pik * p.get(k, j);
                p.set(i, j, v);
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        pi[j] = (0..j).map(|i| pi[i] * p.get(i, j)).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);

    let residual = a.left_residual(&pi);
    if pi.iter().any(|&x| !(x > 0.0 && x.is_finite())) || residual > STATIONARY_RESIDUAL_TOL {
        return Err(GraphError::Reducible { residual });
    }
    Ok(pi)
}

/// Power iteration on the lazy chain `(A + I) / 2`, starting from uniform.
///
/// Stops when successive iterates differ by at most `tol` in ∞-norm. The lazy
/// chain has the same stationary vector as `A` and is aperiodic, so this
/// converges for every irreducible input, but the rate is governed by the
/// spectral gap and can be very slow for weakly coupled chains.
pub fn lazy_power_iteration(
    a: &SquareMatrix,
    tol: f64,
    max_iterations: usize,
) -> Result<Vec<f64>, GraphError> {
    let n = a.n();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let lazy = a.lazy();
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iterations {
        for (j, out) in next.iter_mut().enumerate() {
            *out = (0..n).map(|i| x[i] * lazy.get(i, j)).sum();
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let diff = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if diff <= tol {
            return Ok(x);
        }
    }
    Err(GraphError::NotConverged {
        iterations: max_iterations,
        residual: a.left_residual(&x),
    })
}
