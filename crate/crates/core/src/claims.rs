//! Claim-level uncertainty on the response–claim bipartite graph.
//!
//! Vertices `0..N` are responses and `N..N+M` are claims. An undirected unit
//! edge joins response `r` and claim `c` when `r` entails `c`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{optimize_tree, EntropyError, FlowGraph, TreeDump};
use crate::graph::{DirectedGraph, SquareMatrix};

/// Default encoding-tree height for claim-level scoring.
pub const DEFAULT_CLAIM_HEIGHT: usize = 2;

/// Weight of the edges that attach an isolated vertex to the other side.
pub const ISOLATED_REPAIR_WEIGHT: f64 = 1e-6;

pub const PAGERANK_DAMPING: f64 = 0.85;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClaimError {
    #[error("record needs at least one response and one claim (got {responses} responses, {claims} claims)")]
    Empty { responses: usize, claims: usize },
    #[error("entailment matrix has {rows} rows for {responses} responses")]
    RowCount { rows: usize, responses: usize },
    #[error("entailment row {row} has {len} entries for {claims} claims")]
    RowLength { row: usize, len: usize, claims: usize },
    #[error("entailment entry ({response}, {claim}) is {value}, expected 0 or 1")]
    NotBinary { response: usize, claim: usize, value: u8 },
    #[error("{labels} labels given for {claims} claims")]
    LabelCount { labels: usize, claims: usize },
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    #[serde(default)]
    pub question: String,
    pub claims: Vec<String>,
    pub responses: Vec<String>,
    /// `rc_entails[r][c] == 1` when response `r` entails claim `c`.
    pub rc_entails: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<bool>>,
}

impl ClaimRecord {
    pub fn validate(&self) -> Result<(), ClaimError> {
        let (n, m) = (self.responses.len(), self.claims.len());
        if n == 0 || m == 0 {
            return Err(ClaimError::Empty {
                responses: n,
                claims: m,
            });
        }
        if self.rc_entails.len() != n {
            return Err(ClaimError::RowCount {
                rows: self.rc_entails.len(),
                responses: n,
            });
        }
        for (r, row) in self.rc_entails.iter().enumerate() {
            if row.len() != m {
                return Err(ClaimError::RowLength {
                    row: r,
                    len: row.len(),
                    claims: m,
                });
            }
            if let Some((c, &value)) = row.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(ClaimError::NotBinary {
                    response: r,
                    claim: c,
                    value,
                });
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != m {
                return Err(ClaimError::LabelCount {
                    labels: labels.len(),
                    claims: m,
                });
            }
        }
        Ok(())
    }

    pub fn response_count(&self) -> usize {
        self.responses.len()
    }

    pub fn claim_count(&self) -> usize {
        self.claims.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimScores {
    pub id: String,
    /// One structural entropy score per claim.
    pub sese: Vec<f64>,
    /// Negated centralities keyed by metric name, one value per claim.
    pub baselines: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<bool>>,
    pub tree_height_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeDump>,
}

/// Unweighted symmetric bipartite graph, responses first.
pub fn build_bipartite(cr: &ClaimRecord) -> Result<DirectedGraph, ClaimError> {
    cr.validate()?;
    let (n, m) = (cr.response_count(), cr.claim_count());
    let mut w = SquareMatrix::zeros(n + m);
    for (r, row) in cr.rc_entails.iter().enumerate() {
        for (c, &e) in row.iter().enumerate() {
            if e == 1 {
                w.set(r, n + c, 1.0);
                w.set(n + c, r, 1.0);
            }
        }
    }
    Ok(DirectedGraph::from_matrix(w).expect("binary weights are valid"))
}

/// Connects every isolated vertex to all vertices on the opposite side with
/// weight `eps`.
pub fn repair_isolated(g: &DirectedGraph, responses: usize, eps: f64) -> DirectedGraph {
    let total = g.n();
    let mut w = g.weights().clone();
    for v in 0..total {
        if g.out_degree(v) > 0.0 {
            continue;
        }
        let opposite = if v < responses {
            responses..total
        } else {
            0..responses
        };
        for u in opposite {
            if w.get(v, u) == 0.0 {
                w.set(v, u, eps);
                w.set(u, v, eps);
            }
        }
    }
    DirectedGraph::from_matrix(w).expect("repair keeps weights valid")
}

/// Per-claim structural entropy: the node entropies summed along each claim
/// leaf's path to the root of the optimized encoding tree of height `k`.
pub fn claim_sese(cr: &ClaimRecord, k: usize) -> Result<ClaimScores, ClaimError> {
    let graph = build_bipartite(cr)?;
    let n = cr.response_count();
    let repaired = repair_isolated(&graph, n, ISOLATED_REPAIR_WEIGHT);
    let tree = optimize_tree(FlowGraph::undirected(&repaired)?, k.max(1));
    let sese = (0..cr.claim_count())
        .map(|c| tree.path_entropy(n + c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClaimScores {
        id: cr.id.clone(),
        sese,
        baselines: centrality_baselines(cr)?,
        labels: cr.labels.clone(),
        tree_height_used: tree.height(),
        tree: Some(tree.dump()),
    })
}

/// Negated betweenness, eigenvector, PageRank and closeness centralities of
/// the claim vertices on the unrepaired unweighted graph.
pub fn centrality_baselines(cr: &ClaimRecord) -> Result<BTreeMap<String, Vec<f64>>, ClaimError> {
    let g = build_bipartite(cr)?;
    let adj = adjacency(&g);
    let n = cr.response_count();
    let claims = |scores: Vec<f64>| scores[n..].iter().map(|s| -s).collect::<Vec<_>>();
    let mut out = BTreeMap::new();
    out.insert("betweenness".to_string(), claims(betweenness(&adj)));
    out.insert("closeness".to_string(), claims(closeness(&adj)));
    out.insert("eigenvector".to_string(), claims(eigenvector(&adj)));
    out.insert("pagerank".to_string(), claims(pagerank(&adj, PAGERANK_DAMPING)));
    Ok(out)
}

/// Neighbour lists over positive-weight edges.
pub fn adjacency(g: &DirectedGraph) -> Vec<Vec<usize>> {
    (0..g.n()).map(|v| g.successors(v).collect()).collect()
}

fn bfs_distances(adj: &[Vec<usize>], s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued vertices have distances");
        for &u in &adj[v] {
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Closeness with the Wasserman–Faust scaling for disconnected graphs:
/// `(r−1)/Σd · (r−1)/(n−1)` where `r` counts the vertices reachable from `v`
/// (itself included).
pub fn closeness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    (0..n)
        .map(|v| {
            let dist = bfs_distances(adj, v);
            let reach: Vec<usize> = dist.iter().flatten().copied().collect();
            let total: usize = reach.iter().sum();
            let r = reach.len() as f64;
            if total == 0 || n < 2 {
                0.0
            } else {
                ((r - 1.0) / total as f64) * ((r - 1.0) / (n as f64 - 1.0))
            }
        })
        .collect()
}

/// Brandes betweenness for an unweighted undirected graph, normalized by
/// `2/((n−1)(n−2))`.
pub fn betweenness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::new();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![-1i64; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    // each undirected pair was counted from both ends
    let scale = if n > 2 {
        1.0 / ((n - 1) * (n - 2)) as f64
    } else {
        0.5
    };
    cb.iter().map(|c| c * scale).collect()
}

/// Principal eigenvector of the adjacency matrix, unit Euclidean norm.
/// Iterates `x ← (A + I)x` so bipartite graphs do not oscillate.
pub fn eigenvector(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let mut next = x.clone();
        for v in 0..n {
            for &u in &adj[v] {
                next[v] += x[u];
            }
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; n];
        }
        next.iter_mut().for_each(|a| *a /= norm);
        let diff: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if diff < n as f64 * 1e-12 {
            break;
        }
    }
    x
}

/// PageRank with uniform teleportation; isolated vertices spread their mass
/// uniformly.
pub fn pagerank(adj: &[Vec<usize>], damping: f64) -> Vec<f64> {
    let n = adj.len();
    let uniform = 1.0 / n as f64;
    let mut x = vec![uniform; n];
    for _ in 0..10_000 {
        let dangling: f64 = (0..n).filter(|&v| adj[v].is_empty()).map(|v| x[v]).sum();
        let base = (1.0 - damping) * uniform + damping * dangling * uniform;
        let mut next = vec![base; n];
        for v in 0..n {
            if adj[v].is_empty() {
                continue;
            }
            let share = damping * x[v] / adj[v].len() as f64;
            for &u in &adj[v] {
                next[u] += share;
            }
        }
        let diff: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if diff < n as f64 * 1e-14 {
            break;
        }
    }
    x
}
