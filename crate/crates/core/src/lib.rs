//! Structural-entropy uncertainty scores for sampled LLM responses.
//!
//! The pipeline turns pairwise NLI probabilities into a weighted directed
//! graph ([`semantic_graph`]), makes it strongly connected and stochastic
//! ([`graph::adjust`]), and compresses it into an optimal encoding tree whose
//! total entropy is the query's uncertainty ([`sentence`]). Long-form answers
//! are scored per claim on a response–claim bipartite graph ([`claims`]).

pub mod claims;
pub mod entropy;
pub mod eval;
pub mod graph;
pub mod providers;
pub mod records;
pub mod semantic_graph;
pub mod sentence;

pub use claims::{claim_sese, ClaimRecord, ClaimScores};
pub use entropy::{optimize_tree, EncodingTree, FlowGraph, Mode, TreeDump};
pub use eval::{auroc, aurac, bootstrap_ci, EvalResult, ScoredItem};
pub use graph::{adjust, stationary_distribution, DirectedGraph, EpsPolicy, StochasticGraph};
pub use providers::{EntailmentProvider, MockProvider, ProviderConfig, ProviderKind};
pub use records::{ClaimInput, QueryInput};
pub use semantic_graph::{build_semantic_graph, EntailmentMatrix, SparsifiedGraph};
pub use sentence::{sese_sentence, QueryRecord, UncertaintyReport};
