//! Directed semantic graphs built from pairwise entailment probabilities,
//! sparsified to the kNN level that minimizes one-dimensional entropy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::h1_directed;
use crate::graph::{adjust, DirectedGraph, EpsPolicy, GraphError, SquareMatrix, StochasticGraph};

/// Tolerance on the sum of each probability triple.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Weights of (entailment, neutral, contradiction) in an edge weight.
pub const CLASS_WEIGHTS: [f64; 3] = [1.0, 0.5, 0.0];

/// Tolerance used when comparing entropies across k.
const H1_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticGraphError {
    #[error("entailment matrix needs at least 2 responses, got {0}")]
    TooFewResponses(usize),
    #[error("entailment row {row} has {len} entries, expected {n}")]
    Ragged { row: usize, len: usize, n: usize },
    #[error("probabilities for pair ({i}, {j}) are not a simplex: {triple:?}")]
    NotSimplex { i: usize, j: usize, triple: [f64; 3] },
    #[error("k = {k} is outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Directional NLI probabilities `(p_e, p_n, p_c)` for every ordered pair of
/// responses. Diagonal triples are carried but never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<[f64; 3]>>", into = "Vec<Vec<[f64; 3]>>")]
pub struct EntailmentMatrix {
    n: usize,
    probs: Vec<[f64; 3]>,
}

impl EntailmentMatrix {
    pub fn new(rows: Vec<Vec<[f64; 3]>>) -> Result<Self, SemanticGraphError> {
        let n = rows.len();
        if n < 2 {
            return Err(SemanticGraphError::TooFewResponses(n));
        }
        let mut probs = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(SemanticGraphError::Ragged {
                    row: i,
                    len: row.len(),
                    n,
                });
            }
            for (j, triple) in row.into_iter().enumerate() {
                if i != j && !is_simplex(triple) {
                    return Err(SemanticGraphError::NotSimplex { i, j, triple });
                }
                probs.push(triple);
            }
        }
        Ok(Self { n, probs })
    }

    /// Builds a matrix from a closure over ordered off-diagonal pairs.
    pub fn from_fn(
        n: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self, SemanticGraphError> {
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { [1.0, 0.0, 0.0] } else { f(i, j) })
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Triple for the direction `i → j`.
    pub fn get(&self, i: usize, j: usize) -> [f64; 3] {
        self.probs[i * self.n + j]
    }

    /// Relabels response `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, SemanticGraphError> {
        crate::graph::check_permutation(perm, self.n)?;
        let mut rows = vec![vec![[0.0; 3]; self.n]; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                rows[perm[i]][perm[j]] = self.get(i, j);
            }
        }
        Self::new(rows)
    }
}

impl TryFrom<Vec<Vec<[f64; 3]>>> for EntailmentMatrix {
    type Error = SemanticGraphError;

    fn try_from(rows: Vec<Vec<[f64; 3]>>) -> Result<Self, Self::Error> {
        Self::new(rows)
    }
}

impl From<EntailmentMatrix> for Vec<Vec<[f64; 3]>> {
    fn from(m: EntailmentMatrix) -> Self {
        m.probs.chunks(m.n).map(<[_]>::to_vec).collect()
    }
}

pub fn is_simplex(t: [f64; 3]) -> bool {
    t.iter().all(|p| p.is_finite() && *p >= 0.0) && (t.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// `W(i, j) = p_e + ½·p_n` for every ordered pair `i ≠ j`.
pub fn entailment_weights(em: &EntailmentMatrix) -> DirectedGraph {
    let n = em.n();
    let mut w = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let t = em.get(i, j);
            let value: f64 = t.iter().zip(CLASS_WEIGHTS).map(|(p, c)| p * c).sum();
            w.set(i, j, value.clamp(0.0, 1.0));
        }
    }
    DirectedGraph::from_matrix(w).expect("entailment weights are finite and loop-free")
}

/// Keeps the `k` heaviest outgoing edges of every vertex; ties at the cutoff
/// go to the smaller column index.
pub fn knn_sparsify(g: &DirectedGraph, k: usize) -> Result<DirectedGraph, SemanticGraphError> {
    let n = g.n();
    let max = n.saturating_sub(1);
    if k < 1 || k > max {
        return Err(SemanticGraphError::KOutOfRange { k, max });
    }
    let mut out = SquareMatrix::zeros(n);
    for i in 0..n {
        let mut cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        cols.sort_by(|&a, &b| g.weight(i, b).total_cmp(&g.weight(i, a)).then(a.cmp(&b)));
        for &j in &cols[..k] {
            out.set(i, j, g.weight(i, j));
        }
    }
    Ok(DirectedGraph::from_matrix(out)?)
}

/// Sparsified, adjusted semantic graph with the entropy audit that chose it.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifiedGraph {
    pub graph: StochasticGraph,
    pub k_star: usize,
    /// `(k, H¹(G_k))` for every `k` in `1..n`.
    pub h1_by_k: Vec<(usize, f64)>,
}

/// Smallest `k` whose entropy is a local minimum of the sequence padded with
/// `+∞` on both ends; falls back to the (smallest) global argmin.
pub fn select_k(h1: &[f64]) -> usize {
    let le = |a: f64, b: f64| a <= b + H1_TIE_TOL;
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= h1.len() {
            f64::INFINITY
        } else {
            h1[i as usize]
        }
    };
    for i in 0..h1.len() as isize {
        if le(at(i), at(i - 1)) && le(at(i), at(i + 1)) {
            return i as usize + 1;
        }
    }
    let mut best = 0;
    for (i, &h) in h1.iter().enumerate() {
        if h < h1[best] - H1_TIE_TOL {
            best = i;
        }
    }
    best + 1
}

/// Scans every kNN level, adjusting each candidate and recording its
/// one-dimensional directed entropy, and keeps the level chosen by
/// [`select_k`].
pub fn adaptive_sparsify(g: &DirectedGraph) -> Result<SparsifiedGraph, SemanticGraphError> {
    let n = g.n();
    if n < 2 {
        return Err(SemanticGraphError::TooFewResponses(n));
    }
    let mut candidates = Vec::with_capacity(n - 1);
    for k in 1..n {
        let sg = adjust(&knn_sparsify(g, k)?, EpsPolicy::default())?;
        let h = h1_directed(&sg);
        candidates.push((sg, h));
    }
    let h1_by_k: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, (_, h))| (i + 1, *h))
        .collect();
    let values: Vec<f64> = h1_by_k.iter().map(|&(_, h)| h).collect();
    let k_star = select_k(&values);
    let graph = candidates.swap_remove(k_star - 1).0;
    Ok(SparsifiedGraph {
        graph,
        k_star,
        h1_by_k,
    })
}

/// Entailment weights followed by adaptive sparsification.
pub fn build_semantic_graph(em: &EntailmentMatrix) -> Result<SparsifiedGraph, SemanticGraphError> {
    adaptive_sparsify(&entailment_weights(em))
}
