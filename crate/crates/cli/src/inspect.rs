use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use serde::Deserialize;
use sese_core::claims::{build_bipartite, claim_sese, repair_isolated, ISOLATED_REPAIR_WEIGHT};
use sese_core::entropy::{optimize_tree, FlowGraph};
use sese_core::graph::DirectedGraph;
use sese_core::sentence::analyze_sentence;
use sese_core::{ClaimInput, QueryInput};

use crate::input::JsonLines;
use crate::{ProviderArgs, RunMode};

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long, value_enum, default_value_t = RunMode::Sentence)]
    mode: RunMode,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    #[arg(long)]
    input: PathBuf,
    /// Record to inspect.
    #[arg(long)]
    id: String,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Deserialize)]
struct IdOnly {
    id: String,
}

fn find(args: &InspectArgs) -> anyhow::Result<String> {
    for entry in JsonLines::open(&args.input)? {
        let (number, text) = entry?;
        let rec: IdOnly = serde_json::from_str(&text).with_context(|| format!("line {number}"))?;
        if rec.id == args.id {
            return Ok(text);
        }
    }
    bail!("no record with id {:?} in {}", args.id, args.input.display())
}

/// Weight matrix with two decimals; zeros shown as dots.
fn heat_table(g: &DirectedGraph, labels: &[String]) -> String {
    let width = labels.iter().map(String::len).max().unwrap_or(1).max(4);
    let mut out = format!("{:width$}", "");
    for l in labels {
        write!(out, " {l:>width$}").unwrap();
    }
    out.push('\n');
    for (i, li) in labels.iter().enumerate() {
        write!(out, "{li:>width$}").unwrap();
        for j in 0..g.n() {
            let w = g.weight(i, j);
            if w == 0.0 {
                write!(out, " {:>width$}", ".").unwrap();
            } else {
                write!(out, " {w:>width$.2}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn run(args: &InspectArgs) -> anyhow::Result<ExitCode> {
    let text = find(args)?;
    let k = args.k.map_or(args.mode.default_k(), |k| k as usize);
    let provider = args.provider.build()?;
    match args.mode {
        RunMode::Sentence => {
            let q = serde_json::from_str::<QueryInput>(&text)?.resolve(Some(provider.as_ref()))?;
            let a = analyze_sentence(&q.entailment, k)?;
            println!("record {} ({} responses)", q.id, q.responses.len());
            println!();
            println!("   k  H1");
            for &(kk, h) in &a.semantic_graph.h1_by_k {
                let mark = if kk == a.semantic_graph.k_star { "  <- k*" } else { "" };
                println!("{kk:>4}  {h:.6}{mark}");
            }
            println!("k* = {}", a.semantic_graph.k_star);
            println!();
            println!("transition matrix after sparsification and repair:");
            let labels: Vec<String> = (0..q.responses.len()).map(|i| format!("r{i}")).collect();
            print!("{}", heat_table(a.semantic_graph.graph.graph(), &labels));
            println!();
            println!(
                "encoding tree (K = {k}, height {}, entropy {:.6}, flat {:.6}):",
                a.tree.height(),
                a.tree.entropy(),
                a.flat_entropy
            );
            print!("{}", a.tree.render());
        }
        RunMode::Claims => {
            let cr = serde_json::from_str::<ClaimInput>(&text)?.resolve(Some(provider.as_ref()))?;
            let n = cr.responses.len();
            let graph = build_bipartite(&cr)?;
            let labels: Vec<String> = (0..n)
                .map(|r| format!("r{r}"))
                .chain((0..cr.claims.len()).map(|c| format!("c{c}")))
                .collect();
            println!("record {} ({} responses, {} claims)", cr.id, n, cr.claims.len());
            println!();
            println!("bipartite adjacency:");
            print!("{}", heat_table(&graph, &labels));
            let repaired = repair_isolated(&graph, n, ISOLATED_REPAIR_WEIGHT);
            let tree = optimize_tree(FlowGraph::undirected(&repaired)?, k);
            println!();
            println!("encoding tree (K = {k}, height {}, entropy {:.6}):", tree.height(), tree.entropy());
            print!("{}", tree.render());
            let scores = claim_sese(&cr, k)?;
            println!();
            println!("claim  sese      claim text");
            for (c, s) in scores.sese.iter().enumerate() {
                println!("c{c:<5} {s:.6}  {}", cr.claims[c]);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
