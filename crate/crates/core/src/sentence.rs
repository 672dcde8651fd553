//! Per-query uncertainty: structural entropy of the sparsified semantic graph
//! and the discrete semantic entropy baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::entropy::{optimize_tree, shannon_bits, EncodingTree, FlowGraph};
use crate::semantic_graph::{build_semantic_graph, EntailmentMatrix, SemanticGraphError, SparsifiedGraph};

/// Default encoding-tree height for sentence-level scoring.
pub const DEFAULT_SENTENCE_HEIGHT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub id: String,
    pub question: String,
    pub greedy_response: String,
    pub responses: Vec<String>,
    pub entailment: EntailmentMatrix,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub id: String,
    pub sese: f64,
    pub k_star: usize,
    pub tree_height_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
}

/// Intermediate results of sentence scoring, kept for inspection.
#[derive(Debug, Clone)]
pub struct SentenceAnalysis {
    pub semantic_graph: SparsifiedGraph,
    pub tree: EncodingTree,
    pub flat_entropy: f64,
}

/// Builds the semantic graph and optimizes its encoding tree up to height `k`.
pub fn analyze_sentence(em: &EntailmentMatrix, k: usize) -> Result<SentenceAnalysis, SemanticGraphError> {
    let semantic_graph = build_semantic_graph(em)?;
    let flow = FlowGraph::directed(&semantic_graph.graph);
    let flat_entropy = EncodingTree::flat(flow.clone()).entropy();
    let tree = optimize_tree(flow, k.max(1));
    Ok(SentenceAnalysis {
        semantic_graph,
        tree,
        flat_entropy,
    })
}

/// Structural entropy score of one query; higher means less certain.
///
/// The greedy response only serves as the labelled answer and is not part of
/// the graph.
pub fn sese_sentence(q: &QueryRecord, k: usize) -> Result<UncertaintyReport, SemanticGraphError> {
    let analysis = analyze_sentence(&q.entailment, k)?;
    let mut extras = BTreeMap::new();
    extras.insert("flat_entropy".to_string(), analysis.flat_entropy);
    extras.insert(
        "h1".to_string(),
        analysis.semantic_graph.h1_by_k[analysis.semantic_graph.k_star - 1].1,
    );
    Ok(UncertaintyReport {
        id: q.id.clone(),
        sese: analysis.tree.entropy(),
        k_star: analysis.semantic_graph.k_star,
        tree_height_used: analysis.tree.height(),
        dse: Some(dse_from_clusters(&cluster_responses(&q.entailment))),
        label: q.label,
        extras,
    })
}

fn entails(t: [f64; 3]) -> bool {
    t[0] >= t[1] && t[0] >= t[2]
}

/// Greedy bidirectional-entailment clustering. Each response joins the first
/// existing cluster whose founding member it entails and is entailed by
/// (entailment being the most probable class in both directions); otherwise it
/// founds a new cluster. Returns one cluster id per response.
pub fn cluster_responses(em: &EntailmentMatrix) -> Vec<usize> {
    let mut founders: Vec<usize> = Vec::new();
    let mut ids = Vec::with_capacity(em.n());
    for i in 0..em.n() {
        let found = founders
            .iter()
            .position(|&f| entails(em.get(i, f)) && entails(em.get(f, i)));
        match found {
            Some(c) => ids.push(c),
            None => {
                ids.push(founders.len());
                founders.push(i);
            }
        }
    }
    ids
}

/// Entropy in bits of the cluster-frequency distribution.
pub fn dse_from_clusters(ids: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in ids {
        *counts.entry(c).or_default() += 1;
    }
    // sorted sizes keep the float sum independent of cluster labels
    let mut sizes: Vec<usize> = counts.into_values().collect();
    sizes.sort_unstable();
    let n = ids.len() as f64;
    shannon_bits(sizes.into_iter().map(|c| c as f64 / n))
}

pub fn dse_baseline(q: &QueryRecord) -> f64 {
    dse_from_clusters(&cluster_responses(&q.entailment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const E: [f64; 3] = [1.0, 0.0, 0.0];
    const C: [f64; 3] = [0.0, 0.0, 1.0];

    fn record(em: EntailmentMatrix) -> QueryRecord {
        QueryRecord {
            id: "q".into(),
            question: String::new(),
            greedy_response: String::new(),
            responses: vec![String::new(); em.n()],
            entailment: em,
            label: None,
        }
    }

    #[test]
    fn clustering_examples() {
        let all_e = EntailmentMatrix::from_fn(4, |_, _| E).unwrap();
        assert_eq!(cluster_responses(&all_e), vec![0, 0, 0, 0]);
        let all_c = EntailmentMatrix::from_fn(4, |_, _| C).unwrap();
        assert_eq!(cluster_responses(&all_c), vec![0, 1, 2, 3]);
        let chain = EntailmentMatrix::from_fn(3, |i, j| if i + j == 1 { E } else { C }).unwrap();
        assert_eq!(cluster_responses(&chain), vec![0, 0, 1]);
    }

    #[test]
    fn dse_examples() {
        assert_eq!(dse_from_clusters(&[0; 10]), 0.0);
        assert_abs_diff_eq!(dse_from_clusters(&[0, 1, 2, 3, 4]), 5f64.log2(), epsilon = 1e-12);
        assert_eq!(dse_from_clusters(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]), 1.0);
    }

    #[test]
    fn dse_ignores_cluster_labels() {
        assert_eq!(
            dse_from_clusters(&[0, 0, 1, 2, 2, 2]),
            dse_from_clusters(&[7, 7, 3, 1, 1, 1])
        );
    }

    #[test]
    fn k1_equals_flat_entropy() {
        let em = EntailmentMatrix::from_fn(5, |i, j| {
            let pe = 0.1 + 0.15 * ((i * 3 + j) % 5) as f64;
            [pe, (1.0 - pe) * 0.5, (1.0 - pe) * 0.5]
        })
        .unwrap();
        let r = sese_sentence(&record(em), 1).unwrap();
        assert_eq!(r.tree_height_used, 1);
        assert_abs_diff_eq!(r.sese, r.extras["flat_entropy"], epsilon = 1e-15);
    }

    #[test]
    fn two_identical_vs_two_contradicting() {
        let same = sese_sentence(&record(EntailmentMatrix::from_fn(2, |_, _| E).unwrap()), 3).unwrap();
        let diff = sese_sentence(&record(EntailmentMatrix::from_fn(2, |_, _| C).unwrap()), 3).unwrap();
        // Both repair to the symmetric 2-cycle, so the structure is identical.
        assert_abs_diff_eq!(same.sese, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(diff.sese, 0.25, epsilon = 1e-12);
        assert_eq!(same.dse, Some(0.0));
        assert_eq!(diff.dse, Some(1.0));
    }
}
