use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use sese_core::providers::EntailmentProvider;
use sese_core::{claim_sese, sese_sentence, ClaimInput, QueryInput};

use crate::input::JsonLines;
use crate::output::to_line;
use crate::{ProviderArgs, RunMode};

/// Records read ahead and scored in parallel before their output is written.
const CHUNK: usize = 256;

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long, value_enum, default_value_t = RunMode::Sentence)]
    mode: RunMode,
    /// Maximum encoding-tree height (default 3 for sentence, 2 for claims).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    #[arg(long)]
    input: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Include the optimized encoding tree in claim reports.
    #[arg(long)]
    tree: bool,
    #[command(flatten)]
    provider: ProviderArgs,
}

struct Scored {
    line: String,
    scores: Vec<f64>,
}

fn score_line(args: &ScoreArgs, k: usize, provider: &dyn EntailmentProvider, text: &str) -> anyhow::Result<Scored> {
    match args.mode {
        RunMode::Sentence => {
            let q = serde_json::from_str::<QueryInput>(text)?.resolve(Some(provider))?;
            let report = sese_sentence(&q, k)?;
            Ok(Scored {
                line: to_line(&report)?,
                scores: vec![report.sese],
            })
        }
        RunMode::Claims => {
            let cr = serde_json::from_str::<ClaimInput>(text)?.resolve(Some(provider))?;
            let mut scores = claim_sese(&cr, k)?;
            if !args.tree {
                scores.tree = None;
            }
            Ok(Scored {
                line: to_line(&scores)?,
                scores: scores.sese,
            })
        }
    }
}

pub fn run(args: &ScoreArgs) -> anyhow::Result<ExitCode> {
    let k = args.k.map_or(args.mode.default_k(), |k| k as usize);
    let provider = args.provider.build()?;
    let lines = JsonLines::open(&args.input)?;
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot write {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs as usize)
        .build()?;

    let (mut ok, mut failed, mut sum, mut count) = (0usize, 0usize, 0.0, 0usize);
    let mut chunk: Vec<(usize, String)> = Vec::with_capacity(CHUNK);
    let mut lines = lines.peekable();
    while lines.peek().is_some() {
        chunk.clear();
        while chunk.len() < CHUNK {
            match lines.next() {
                Some(item) => chunk.push(item.with_context(|| format!("reading {}", args.input.display()))?),
                None => break,
            }
        }
        let results: Vec<anyhow::Result<Scored>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(_, text)| score_line(args, k, provider.as_ref(), text))
                .collect()
        });
        for ((number, _), result) in chunk.iter().zip(results) {
            match result {
                Ok(s) => {
                    writeln!(out, "{}", s.line)?;
                    sum += s.scores.iter().sum::<f64>();
                    count += s.scores.len();
                    ok += 1;
                }
                Err(e) => {
                    eprintln!("line {number}: {e:#}");
                    failed += 1;
                }
            }
        }
    }
    out.flush()?;
    let mean = if count > 0 { sum / count as f64 } else { f64::NAN };
    eprintln!("scored {ok} records ({failed} failed), mean sese {mean:.6}");
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}
