//! Structural entropy of graphs under encoding trees, and the greedy
//! merge/combine optimizer that searches for a low-entropy tree of bounded
//! height.
//!
//! Both directed and undirected graphs are reduced to a [`FlowGraph`]: a
//! matrix of edge flows plus a normalizing volume. For a directed stochastic
//! graph the flow on `i → j` is `π(i)·W(i, j)` and the normalizer is the sum of
//! in- and out-degrees; for an undirected graph the flow is the edge weight
//! itself and the normalizer is the total degree. A tree node's volume is the
//! flow entering its vertex set from anywhere, its cut is the flow entering
//! from outside.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DirectedGraph, SquareMatrix, StochasticGraph};

/// Smallest entropy decrease the optimizer accepts.
pub const MIN_DELTA: f64 = 1e-12;

/// Accepted operations between full recomputations of node statistics.
const REFRESH_INTERVAL: usize = 64;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("graph is not symmetric")]
    NotSymmetric,
    #[error("graph has zero volume")]
    ZeroVolume,
    #[error("the root node carries no entropy term")]
    RootNode,
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("nodes {0} and {1} are not distinct siblings")]
    NotSiblings(NodeId, NodeId),
    #[error("node {node} has non-positive volume {volume} (parent volume {parent_volume})")]
    NonPositiveVolume {
        node: NodeId,
        volume: f64,
        parent_volume: f64,
    },
    #[error("vertex {0} is out of range")]
    UnknownVertex(usize),
    #[error("encoding tree is malformed: {0}")]
    Malformed(String),
}

/// `0·log 0 = 0` Shannon entropy in bits of a probability vector.
pub fn shannon_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    let h: f64 = probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    // -0.0 for degenerate inputs
    h.max(0.0)
}

/// One-dimensional entropy of a stochastic graph: Shannon entropy of `π`.
pub fn h1_directed(sg: &StochasticGraph) -> f64 {
    shannon_bits(sg.pi().iter().copied())
}

/// One-dimensional entropy of an undirected graph from its degree
/// distribution.
pub fn h1_undirected(g: &DirectedGraph) -> Result<f64, EntropyError> {
    if !g.is_symmetric(SYMMETRY_TOL) {
        return Err(EntropyError::NotSymmetric);
    }
    let vol = g.total_weight();
    if !(vol > 0.0) {
        return Err(EntropyError::ZeroVolume);
    }
    Ok(shannon_bits((0..g.n()).map(|v| g.out_degree(v) / vol)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Directed,
    Undirected,
}

/// Edge flows and normalizing volume an encoding tree is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    mode: Mode,
    flow: SquareMatrix,
    vertex_volume: Vec<f64>,
    volume: f64,
}

impl FlowGraph {
    pub fn directed(sg: &StochasticGraph) -> Self {
        let n = sg.n();
        let w = sg.graph().weights();
        let mut flow = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                flow.set(i, j, sg.pi()[i] * w.get(i, j));
            }
        }
        Self::from_flow(Mode::Directed, flow, sg.volume())
    }

    pub fn undirected(g: &DirectedGraph) -> Result<Self, EntropyError> {
        if !g.is_symmetric(SYMMETRY_TOL) {
            return Err(EntropyError::NotSymmetric);
        }
        let vol = g.total_weight();
        if !(vol > 0.0) {
            return Err(EntropyError::ZeroVolume);
        }
        Ok(Self::from_flow(Mode::Undirected, g.weights().clone(), vol))
    }

    fn from_flow(mode: Mode, flow: SquareMatrix, volume: f64) -> Self {
        let vertex_volume = (0..flow.n()).map(|j| flow.col_sum(j)).collect();
        Self {
            mode,
            flow,
            vertex_volume,
            volume,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.flow.n()
    }

    /// Normalizer of every node term (`vol(G)`).
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn vertex_volume(&self, v: usize) -> f64 {
        self.vertex_volume[v]
    }

    pub fn flow(&self, i: usize, j: usize) -> f64 {
        self.flow.get(i, j)
    }

    fn set_volume(&self, set: &[usize]) -> f64 {
        set.iter().map(|&v| self.vertex_volume[v]).sum()
    }

    /// Flow entering `set` from outside it.
    fn set_cut(&self, set: &[usize]) -> f64 {
        let n = self.n();
        let mut inside = vec![false; n];
        for &v in set {
            inside[v] = true;
        }
        let mut cut = 0.0;
        for i in (0..n).filter(|&i| !inside[i]) {
            for &j in set {
                cut += self.flow.get(i, j);
            }
        }
        cut
    }

    /// Flow from `a` to `b` plus flow from `b` to `a`.
    fn cross_flow(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut f = 0.0;
        for &i in a {
            for &j in b {
                f += self.flow.get(i, j) + self.flow.get(j, i);
            }
        }
        f
    }

    /// `−(g/vol)·log₂(V/V_parent)`, zero when the cut is zero.
    fn term(&self, cut: f64, volume: f64, parent_volume: f64) -> f64 {
        if cut <= 0.0 {
            return 0.0;
        }
        -(cut / self.volume) * (volume / parent_volume).log2()
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    vertices: Vec<usize>,
    volume: f64,
    cut: f64,
}

impl TreeNode {
    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    /// Sorted graph vertices covered by this node.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn cut(&self) -> f64 {
        self.cut
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn min_vertex(&self) -> usize {
        self.vertices[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    /// Replace two siblings by one node holding both of their member lists.
    Merge,
    /// Hang two siblings under a fresh common parent, subtrees intact.
    Combine,
}

/// Rooted partition hierarchy over the vertices of a [`FlowGraph`].
#[derive(Debug, Clone)]
pub struct EncodingTree {
    graph: FlowGraph,
    nodes: Vec<Option<TreeNode>>,
    root: NodeId,
    leaf_of: Vec<NodeId>,
    ops_since_refresh: usize,
}

impl EncodingTree {
    /// Root with one leaf child per vertex.
    pub fn flat(graph: FlowGraph) -> Self {
        let n = graph.n();
        let mut nodes = Vec::with_capacity(n + 1);
        let root = 0;
        nodes.push(Some(TreeNode {
            parent: None,
            children: (1..=n).collect(),
            vertices: (0..n).collect(),
            volume: 0.0,
            cut: 0.0,
        }));
        for v in 0..n {
            nodes.push(Some(TreeNode {
                parent: Some(root),
                children: Vec::new(),
                vertices: vec![v],
                volume: 0.0,
                cut: 0.0,
            }));
        }
        let mut tree = Self {
            graph,
            nodes,
            root,
            leaf_of: (1..=n).collect(),
            ops_since_refresh: 0,
        };
        tree.refresh_statistics();
        tree
    }

    pub fn graph(&self) -> &FlowGraph {
        &self.graph
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Option<&TreeNode> {
        self.nodes.get(id).and_then(Option::as_ref)
    }

    fn get(&self, id: NodeId) -> Result<&TreeNode, EntropyError> {
        self.node(id).ok_or(EntropyError::UnknownNode(id))
    }

    fn get_mut(&mut self, id: NodeId) -> &mut TreeNode {
        self.nodes[id].as_mut().expect("live node")
    }

    /// Ids of all live nodes in arena order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_some())
            .map(|(i, _)| i)
    }

    pub fn leaf_of(&self, vertex: usize) -> Result<NodeId, EntropyError> {
        self.leaf_of
            .get(vertex)
            .copied()
            .ok_or(EntropyError::UnknownVertex(vertex))
    }

    pub fn depth(&self, id: NodeId) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur].as_ref().and_then(|n| n.parent) {
            d += 1;
            cur = p;
        }
        d
    }

    /// Maximum leaf depth.
    pub fn height(&self) -> usize {
        self.leaf_of.iter().map(|&l| self.depth(l)).max().unwrap_or(0)
    }

    fn subtree_heights(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.nodes.len()];
        self.fill_heights(self.root, &mut h);
        h
    }

    fn fill_heights(&self, id: NodeId, h: &mut [usize]) -> usize {
        let node = self.nodes[id].as_ref().expect("live node");
        let mut best = 0;
        for &c in &node.children {
            best = best.max(1 + self.fill_heights(c, h));
        }
        h[id] = best;
        best
    }

    /// Number of vertices in the underlying graph.
    pub fn vertex_count(&self) -> usize {
        self.graph.n()
    }

    /// Entropy contribution of a non-root node.
    pub fn node_entropy(&self, id: NodeId) -> Result<f64, EntropyError> {
        let node = self.get(id)?;
        let parent = node.parent.ok_or(EntropyError::RootNode)?;
        let parent_volume = self.get(parent)?.volume;
        if node.cut <= 0.0 {
            return Ok(0.0);
        }
        if !(node.volume > 0.0 && parent_volume > 0.0) {
            return Err(EntropyError::NonPositiveVolume {
                node: id,
                volume: node.volume,
                parent_volume,
            });
        }
        Ok(self.graph.term(node.cut, node.volume, parent_volume))
    }

    /// Sum of node entropies over all non-root nodes.
    pub fn entropy(&self) -> f64 {
        self.node_ids()
            .filter(|&id| id != self.root)
            .map(|id| self.node_entropy(id).unwrap_or(0.0))
            .sum()
    }

    /// Sum of node entropies on the path from `vertex`'s leaf up to (not
    /// including) the root.
    pub fn path_entropy(&self, vertex: usize) -> Result<f64, EntropyError> {
        let mut cur = self.leaf_of(vertex)?;
        let mut total = 0.0;
        while cur != self.root {
            total += self.node_entropy(cur)?;
            cur = self.get(cur)?.parent.expect("non-root has parent");
        }
        Ok(total)
    }

    /// Recomputes every node's volume and cut from the graph.
    pub fn refresh_statistics(&mut self) {
        for slot in 0..self.nodes.len() {
            if let Some(node) = self.nodes[slot].as_ref() {
                let volume = self.graph.set_volume(&node.vertices);
                let cut = self.graph.set_cut(&node.vertices);
                let node = self.nodes[slot].as_mut().expect("live node");
                node.volume = volume;
                node.cut = cut;
            }
        }
        self.ops_since_refresh = 0;
    }

    fn check_siblings(&self, a: NodeId, b: NodeId) -> Result<NodeId, EntropyError> {
        let na = self.get(a)?;
        let nb = self.get(b)?;
        match (na.parent, nb.parent) {
            (Some(pa), Some(pb)) if pa == pb && a != b => Ok(pa),
            _ => Err(EntropyError::NotSiblings(a, b)),
        }
    }

    /// Members `δ` would adopt when `id` is merged: its children if it is
    /// internal, the node itself if it is a leaf.
    fn merge_members(&self, id: NodeId) -> Vec<NodeId> {
        let node = self.nodes[id].as_ref().expect("live node");
        if node.is_leaf() {
            vec![id]
        } else {
            node.children.clone()
        }
    }

    /// Entropy before minus entropy after applying `op` to siblings `a`, `b`.
    /// The tree is left untouched.
    pub fn delta(&self, a: NodeId, b: NodeId, op: OpKind) -> Result<f64, EntropyError> {
        let parent = self.check_siblings(a, b)?;
        let pv = self.get(parent)?.volume;
        let (na, nb) = (self.get(a)?, self.get(b)?);
        let g = &self.graph;

        let merged_volume = na.volume + nb.volume;
        let merged_cut = na.cut + nb.cut - g.cross_flow(&na.vertices, &nb.vertices);

        let mut before = g.term(na.cut, na.volume, pv) + g.term(nb.cut, nb.volume, pv);
        let mut after = g.term(merged_cut, merged_volume, pv);
        match op {
            OpKind::Merge => {
                for (x, nx) in [(a, na), (b, nb)] {
                    for m in self.merge_members(x) {
                        let nm = self.get(m)?;
                        if m != x {
                            before += g.term(nm.cut, nm.volume, nx.volume);
                        }
                        after += g.term(nm.cut, nm.volume, merged_volume);
                    }
                }
            }
            OpKind::Combine => {
                after += g.term(na.cut, na.volume, merged_volume)
                    + g.term(nb.cut, nb.volume, merged_volume);
            }
        }
        Ok(before - after)
    }

    /// Tree height after applying `op` to siblings `a`, `b`.
    pub fn height_after(&self, a: NodeId, b: NodeId, op: OpKind) -> Result<usize, EntropyError> {
        let parent = self.check_siblings(a, b)?;
        let heights = self.subtree_heights();
        Ok(self
            .height()
            .max(self.depth(parent) + 1 + self.new_subtree_height(&heights, a, b, op)))
    }

    fn new_subtree_height(&self, heights: &[usize], a: NodeId, b: NodeId, op: OpKind) -> usize {
        match op {
            OpKind::Merge => {
                let members = self.merge_members(a).into_iter().chain(self.merge_members(b));
                1 + members.map(|m| heights[m]).max().unwrap_or(0)
            }
            OpKind::Combine => 1 + heights[a].max(heights[b]),
        }
    }

    pub fn apply(&mut self, a: NodeId, b: NodeId, op: OpKind) -> Result<NodeId, EntropyError> {
        match op {
            OpKind::Merge => self.merge(a, b),
            OpKind::Combine => self.combine(a, b),
        }
    }

    /// Replaces siblings `a` and `b` with a new node whose children are the
    /// members of both (leaves are adopted directly, internal nodes hand over
    /// their children). Two leaves `{x}`, `{y}` become `δ = {x, y}` with leaf
    /// children `{x}` and `{y}`.
    pub fn merge(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, EntropyError> {
        let parent = self.check_siblings(a, b)?;
        let members: Vec<NodeId> = self
            .merge_members(a)
            .into_iter()
            .chain(self.merge_members(b))
            .collect();
        let delta = self.attach(parent, a, b, members);
        for x in [a, b] {
            if !self.nodes[x].as_ref().expect("live node").is_leaf() {
                self.nodes[x] = None;
            }
        }
        Ok(delta)
    }

    /// Hangs siblings `a` and `b`, with their subtrees, under a new node.
    pub fn combine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, EntropyError> {
        let parent = self.check_siblings(a, b)?;
        Ok(self.attach(parent, a, b, vec![a, b]))
    }

    /// Creates `δ` under `parent` in place of `a` and `b`, adopting `members`.
    fn attach(&mut self, parent: NodeId, a: NodeId, b: NodeId, mut members: Vec<NodeId>) -> NodeId {
        let (na, nb) = (
            self.nodes[a].as_ref().expect("live node"),
            self.nodes[b].as_ref().expect("live node"),
        );
        let mut vertices: Vec<usize> = na.vertices.iter().chain(&nb.vertices).copied().collect();
        vertices.sort_unstable();
        let volume = na.volume + nb.volume;
        let cut = na.cut + nb.cut - self.graph.cross_flow(&na.vertices, &nb.vertices);

        members.sort_by_key(|&m| self.nodes[m].as_ref().expect("live node").min_vertex());
        let id = self.nodes.len();
        self.nodes.push(Some(TreeNode {
            parent: Some(parent),
            children: members.clone(),
            vertices,
            volume,
            cut: cut.max(0.0),
        }));
        for m in members {
            self.get_mut(m).parent = Some(id);
        }
        let siblings = &mut self.get_mut(parent).children;
        siblings.retain(|&c| c != a && c != b);
        siblings.push(id);
        let keys: Vec<(usize, NodeId)> = self.nodes[parent]
            .as_ref()
            .expect("live node")
            .children
            .iter()
            .map(|&c| (self.nodes[c].as_ref().expect("live node").min_vertex(), c))
            .collect();
        let mut keys = keys;
        keys.sort_unstable();
        self.get_mut(parent).children = keys.into_iter().map(|(_, c)| c).collect();

        self.ops_since_refresh += 1;
        if self.ops_since_refresh >= REFRESH_INTERVAL {
            self.refresh_statistics();
        }
        id
    }

    /// Checks the partition axioms: the root covers every vertex, children
    /// partition their parent, and leaves are singletons.
    pub fn validate(&self) -> Result<(), EntropyError> {
        let bad = |msg: String| Err(EntropyError::Malformed(msg));
        let n = self.graph.n();
        let root = self.get(self.root)?;
        if root.parent.is_some() || root.vertices != (0..n).collect::<Vec<_>>() {
            return bad("root must cover every vertex".into());
        }
        let mut seen_leaves = vec![false; n];
        for id in self.node_ids() {
            let node = self.get(id)?;
            if node.is_leaf() {
                if node.vertices.len() != 1 {
                    return bad(format!("leaf {id} holds {} vertices", node.vertices.len()));
                }
                let v = node.vertices[0];
                if seen_leaves[v] || self.leaf_of[v] != id {
                    return bad(format!("vertex {v} has inconsistent leaves"));
                }
                seen_leaves[v] = true;
                continue;
            }
            let mut union = Vec::new();
            for &c in &node.children {
                let child = self.get(c)?;
                if child.parent != Some(id) {
                    return bad(format!("child {c} does not point back to {id}"));
                }
                union.extend_from_slice(&child.vertices);
            }
            union.sort_unstable();
            if union != node.vertices {
                return bad(format!("children of {id} do not partition it"));
            }
        }
        if seen_leaves.iter().any(|s| !s) {
            return bad("some vertex has no leaf".into());
        }
        Ok(())
    }

    /// Indented text rendering, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(self.root, 0, &mut out);
        out
    }

    fn render_into(&self, id: NodeId, depth: usize, out: &mut String) {
        let node = self.nodes[id].as_ref().expect("live node");
        let h = if id == self.root {
            0.0
        } else {
            self.node_entropy(id).unwrap_or(f64::NAN)
        };
        let label = if node.is_leaf() { "leaf" } else { "node" };
        out.push_str(&format!(
            "{:indent$}{label} {:?} vol={:.6} cut={:.6} h={:.6}\n",
            "",
            node.vertices,
            node.volume,
            node.cut,
            h,
            indent = depth * 2
        ));
        for &c in &node.children {
            self.render_into(c, depth + 1, out);
        }
    }

    /// Nested snapshot suitable for JSON reports.
    pub fn dump(&self) -> TreeDump {
        self.dump_node(self.root)
    }

    fn dump_node(&self, id: NodeId) -> TreeDump {
        let node = self.nodes[id].as_ref().expect("live node");
        TreeDump {
            vertices: node.vertices.clone(),
            entropy: if id == self.root {
                0.0
            } else {
                self.node_entropy(id).unwrap_or(f64::NAN)
            },
            children: node.children.iter().map(|&c| self.dump_node(c)).collect(),
        }
    }

    /// Vertex sets of the root's children, ordered by smallest vertex.
    pub fn top_level_partition(&self) -> Vec<Vec<usize>> {
        self.nodes[self.root]
            .as_ref()
            .expect("live root")
            .children
            .iter()
            .map(|&c| self.nodes[c].as_ref().expect("live node").vertices.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub vertices: Vec<usize>,
    pub entropy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeDump>,
}

/// One accepted optimizer move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub iteration: usize,
    pub op: OpKind,
    pub delta: f64,
    pub entropy_before: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    key: (usize, usize),
    a: NodeId,
    b: NodeId,
    delta: f64,
}

/// Greedy search for a low-entropy encoding tree of height at most `max_height`.
pub fn optimize_tree(graph: FlowGraph, max_height: usize) -> EncodingTree {
    optimize_tree_with(graph, max_height, |_, _| {})
}

/// Like [`optimize_tree`], calling `observer` after every accepted move.
///
/// Each round first looks for the best merge; only when no merge lowers the
/// entropy by more than [`MIN_DELTA`] are combines considered. Moves that
/// would push the tree past `max_height` are never candidates. Among equal
/// gains the pair with the lexicographically smallest
/// `(min vertex, max vertex)` key wins, where each node is identified by its
/// smallest vertex.
pub fn optimize_tree_with<F>(graph: FlowGraph, max_height: usize, mut observer: F) -> EncodingTree
where
    F: FnMut(&EncodingTree, &Step),
{
    let mut tree = EncodingTree::flat(graph);
    let mut iteration = 0;
    loop {
        let mut chosen = None;
        for op in [OpKind::Merge, OpKind::Combine] {
            if let Some(c) = best_candidate(&tree, op, max_height) {
                chosen = Some((op, c));
                break;
            }
        }
        let Some((op, c)) = chosen else { break };
        let entropy_before = tree.entropy();
        tree.apply(c.a, c.b, op).expect("candidate pairs are siblings");
        iteration += 1;
        observer(
            &tree,
            &Step {
                iteration,
                op,
                delta: c.delta,
                entropy_before,
            },
        );
    }
    tree.refresh_statistics();
    tree
}

fn best_candidate(tree: &EncodingTree, op: OpKind, max_height: usize) -> Option<Candidate> {
    let heights = tree.subtree_heights();
    let mut candidates = Vec::new();
    for parent in tree.node_ids() {
        let node = tree.nodes[parent].as_ref().expect("live node");
        if node.children.len() < 2 {
            continue;
        }
        let depth = tree.depth(parent);
        for (x, &a) in node.children.iter().enumerate() {
            for &b in &node.children[x + 1..] {
                if depth + 1 + tree.new_subtree_height(&heights, a, b, op) > max_height {
                    continue;
                }
                let ka = tree.nodes[a].as_ref().expect("live node").min_vertex();
                let kb = tree.nodes[b].as_ref().expect("live node").min_vertex();
                candidates.push(Candidate {
                    key: (ka.min(kb), ka.max(kb)),
                    a,
                    b,
                    delta: 0.0,
                });
            }
        }
    }
    candidates.sort_by_key(|c| c.key);
    let mut best: Option<Candidate> = None;
    for mut c in candidates {
        c.delta = tree.delta(c.a, c.b, op).expect("siblings");
        if c.delta <= MIN_DELTA {
            continue;
        }
        match best {
            Some(b) if c.delta <= b.delta + MIN_DELTA => {}
            _ => best = Some(c),
        }
    }
    best
}
