//! Python bindings: `import sese`.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sese_core::claims::{self, ClaimRecord};
use sese_core::entropy::{self, EncodingTree as CoreTree, FlowGraph};
use sese_core::eval::{self, ScoredItem};
use sese_core::graph::{self, EpsPolicy};
use sese_core::providers::{build_entailment_matrix, MockProvider};
use sese_core::semantic_graph::{self, EntailmentMatrix as CoreMatrix};
use sese_core::sentence::{self, QueryRecord};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn items(scores: Vec<f64>, correct: Vec<bool>) -> PyResult<Vec<ScoredItem>> {
    if scores.len() != correct.len() {
        return Err(value_error(format!("{} scores for {} labels", scores.len(), correct.len())));
    }
    Ok(scores.into_iter().zip(correct).map(|(s, c)| ScoredItem::new(s, c)).collect())
}

/// Weighted directed graph without self-loops.
#[pyclass(name = "DirectedGraph", frozen)]
struct PyDirectedGraph(graph::DirectedGraph);

#[pymethods]
impl PyDirectedGraph {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        graph::DirectedGraph::new(rows).map(Self).map_err(value_error)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn weights(&self) -> Vec<Vec<f64>> {
        self.0.weights().to_rows()
    }

    /// Strongly connected components, sinks first.
    fn components(&self) -> Vec<Vec<usize>> {
        graph::tarjan_scc(&self.0)
    }

    /// Repaired, row-normalized chain with its stationary distribution.
    #[pyo3(signature = (eps = None))]
    fn adjust(&self, eps: Option<f64>) -> PyResult<PyStochasticGraph> {
        let policy = eps.map_or(EpsPolicy::MinPositive, EpsPolicy::Fixed);
        graph::adjust(&self.0, policy).map(PyStochasticGraph).map_err(value_error)
    }

    /// One-dimensional structural entropy from degrees; needs symmetric weights.
    fn h1_undirected(&self) -> PyResult<f64> {
        entropy::h1_undirected(&self.0).map_err(value_error)
    }

    /// Optimized undirected encoding tree of height at most `k`.
    fn encoding_tree(&self, k: usize) -> PyResult<PyEncodingTree> {
        let flow = FlowGraph::undirected(&self.0).map_err(value_error)?;
        Ok(PyEncodingTree(entropy::optimize_tree(flow, k.max(1))))
    }

    fn __repr__(&self) -> String {
        format!("DirectedGraph(n={})", self.0.n())
    }
}

#[pyclass(name = "StochasticGraph", frozen)]
struct PyStochasticGraph(graph::StochasticGraph);

#[pymethods]
impl PyStochasticGraph {
    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.0.pi().to_vec()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn weights(&self) -> Vec<Vec<f64>> {
        self.0.graph().weights().to_rows()
    }

    /// Repair edges as `(from, to, weight)`.
    fn added_edges(&self) -> Vec<(usize, usize, f64)> {
        self.0.added_edges().iter().map(|e| (e.from, e.to, e.weight)).collect()
    }

    fn h1(&self) -> f64 {
        entropy::h1_directed(&self.0)
    }

    /// Optimized directed encoding tree of height at most `k`.
    fn encoding_tree(&self, k: usize) -> PyEncodingTree {
        PyEncodingTree(entropy::optimize_tree(FlowGraph::directed(&self.0), k.max(1)))
    }

    fn flat_tree(&self) -> PyEncodingTree {
        PyEncodingTree(CoreTree::flat(FlowGraph::directed(&self.0)))
    }
}

#[pyclass(name = "EncodingTree", frozen)]
struct PyEncodingTree(CoreTree);

#[pymethods]
impl PyEncodingTree {
    fn entropy(&self) -> f64 {
        self.0.entropy()
    }

    fn height(&self) -> usize {
        self.0.height()
    }

    /// Summed node entropies from the root down to `vertex`'s leaf.
    fn path_entropy(&self, vertex: usize) -> PyResult<f64> {
        self.0.path_entropy(vertex).map_err(value_error)
    }

    /// Vertex sets of the root's children.
    fn partition(&self) -> Vec<Vec<usize>> {
        self.0.top_level_partition()
    }

    fn render(&self) -> String {
        self.0.render()
    }

    fn __repr__(&self) -> String {
        format!("EncodingTree(height={}, entropy={:.6})", self.0.height(), self.0.entropy())
    }
}

/// `(p_e, p_n, p_c)` triples for every ordered pair of responses.
#[pyclass(name = "EntailmentMatrix", frozen)]
struct PyEntailmentMatrix(CoreMatrix);

#[pymethods]
impl PyEntailmentMatrix {
    #[new]
    fn new(probs: Vec<Vec<[f64; 3]>>) -> PyResult<Self> {
        CoreMatrix::new(probs).map(Self).map_err(value_error)
    }

    /// Matrix from the deterministic hash-based mock provider.
    #[staticmethod]
    #[pyo3(signature = (texts, context = String::new(), seed = 0))]
    fn mock(texts: Vec<String>, context: String, seed: u64) -> PyResult<Self> {
        build_entailment_matrix(&MockProvider::new(seed), &context, &texts)
            .map(Self)
            .map_err(value_error)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<[f64; 3]> {
        if i >= self.0.n() || j >= self.0.n() {
            return Err(value_error(format!("({i}, {j}) out of range for n = {}", self.0.n())));
        }
        Ok(self.0.get(i, j))
    }

    /// Adaptive kNN sparsification: returns `(graph, k_star, [(k, H1), ...])`.
    fn semantic_graph(&self) -> PyResult<(PyStochasticGraph, usize, Vec<(usize, f64)>)> {
        let sg = semantic_graph::build_semantic_graph(&self.0).map_err(value_error)?;
        Ok((PyStochasticGraph(sg.graph), sg.k_star, sg.h1_by_k))
    }

    fn clusters(&self) -> Vec<usize> {
        sentence::cluster_responses(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("EntailmentMatrix(n={})", self.0.n())
    }
}

/// Sentence-level score report as a dict.
#[pyfunction]
#[pyo3(signature = (matrix, k = sentence::DEFAULT_SENTENCE_HEIGHT))]
fn sese_sentence<'py>(py: Python<'py>, matrix: &PyEntailmentMatrix, k: usize) -> PyResult<Bound<'py, PyDict>> {
    let q = QueryRecord {
        id: String::new(),
        question: String::new(),
        greedy_response: String::new(),
        responses: vec![String::new(); matrix.0.n()],
        entailment: matrix.0.clone(),
        label: None,
    };
    let r = sentence::sese_sentence(&q, k).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("sese", r.sese)?;
    d.set_item("k_star", r.k_star)?;
    d.set_item("tree_height_used", r.tree_height_used)?;
    d.set_item("dse", r.dse)?;
    for (key, v) in r.extras {
        d.set_item(key, v)?;
    }
    Ok(d)
}

#[pyfunction]
fn dse(matrix: &PyEntailmentMatrix) -> f64 {
    sentence::dse_from_clusters(&sentence::cluster_responses(&matrix.0))
}

/// Per-claim scores and negated centralities from an N×M support matrix.
#[pyfunction]
#[pyo3(signature = (rc_entails, k = claims::DEFAULT_CLAIM_HEIGHT))]
fn claim_sese<'py>(py: Python<'py>, rc_entails: Vec<Vec<u8>>, k: usize) -> PyResult<Bound<'py, PyDict>> {
    let m = rc_entails.first().map_or(0, Vec::len);
    let cr = ClaimRecord {
        id: String::new(),
        question: String::new(),
        claims: vec![String::new(); m],
        responses: vec![String::new(); rc_entails.len()],
        rc_entails,
        labels: None,
    };
    let s = claims::claim_sese(&cr, k).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("sese", s.sese)?;
    d.set_item("baselines", s.baselines.into_iter().collect::<BTreeMap<_, _>>())?;
    d.set_item("tree_height_used", s.tree_height_used)?;
    Ok(d)
}

#[pyfunction]
fn auroc(scores: Vec<f64>, correct: Vec<bool>) -> PyResult<f64> {
    eval::auroc(&items(scores, correct)?).map_err(value_error)
}

#[pyfunction]
fn aurac(scores: Vec<f64>, correct: Vec<bool>) -> PyResult<f64> {
    eval::aurac(&items(scores, correct)?).map_err(value_error)
}

#[pyfunction]
fn rejection_accuracy(scores: Vec<f64>, correct: Vec<bool>, fraction: f64) -> PyResult<f64> {
    eval::rejection_accuracy(&items(scores, correct)?, fraction).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (scores, correct, n_resamples = eval::DEFAULT_RESAMPLES, seed = 0))]
fn bootstrap_ci(scores: Vec<f64>, correct: Vec<bool>, n_resamples: usize, seed: u64) -> PyResult<(f64, f64)> {
    eval::bootstrap_ci(&items(scores, correct)?, n_resamples, seed).map_err(value_error)
}

/// Eigenvalue, degree and spectral-gap uncertainties of a symmetric graph.
#[pyfunction]
fn graph_uncertainty(graph: &PyDirectedGraph) -> PyResult<BTreeMap<String, f64>> {
    eval::graph_uncertainty_ablations(&graph.0).map_err(value_error)
}

#[pymodule]
fn sese(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDirectedGraph>()?;
    m.add_class::<PyStochasticGraph>()?;
    m.add_class::<PyEncodingTree>()?;
    m.add_class::<PyEntailmentMatrix>()?;
    m.add_function(wrap_pyfunction!(sese_sentence, m)?)?;
    m.add_function(wrap_pyfunction!(dse, m)?)?;
    m.add_function(wrap_pyfunction!(claim_sese, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(aurac, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(graph_uncertainty, m)?)?;
    Ok(())
}
