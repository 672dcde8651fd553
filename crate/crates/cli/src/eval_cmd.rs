use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use sese_core::eval::{evaluate, EvalError, ScoredItem, DEFAULT_RESAMPLES};
use sese_core::{ClaimScores, UncertaintyReport};

use crate::input::JsonLines;
use crate::output::to_line;
use crate::RunMode;

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value_t = RunMode::Sentence)]
    mode: RunMode,
    /// Reports written by `sese score`, labels included.
    #[arg(long)]
    input: PathBuf,
    /// Score to evaluate: `sese`, `dse`, an extras key, or a claim baseline.
    #[arg(long, default_value = "sese")]
    method: String,
    /// Add a 95% bootstrap interval for AUROC.
    #[arg(long)]
    ci: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    /// Print the rejection-accuracy curve as CSV.
    #[arg(long)]
    curve: bool,
    /// Also write the full result as one JSON line.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn sentence_score(report: &UncertaintyReport, method: &str) -> Option<f64> {
    match method {
        "sese" => Some(report.sese),
        "dse" => report.dse,
        other => report.extras.get(other).copied(),
    }
}

fn collect(args: &EvalArgs) -> anyhow::Result<(Vec<ScoredItem>, usize)> {
    let mut items = Vec::new();
    let mut unlabeled = 0;
    for entry in JsonLines::open(&args.input)? {
        let (number, text) = entry?;
        let at = || format!("line {number}");
        match args.mode {
            RunMode::Sentence => {
                let r: UncertaintyReport = serde_json::from_str(&text).with_context(at)?;
                let Some(correct) = r.label else {
                    unlabeled += 1;
                    continue;
                };
                let score = sentence_score(&r, &args.method)
                    .with_context(|| format!("line {number}: no score named {:?}", args.method))?;
                items.push(ScoredItem::new(score, correct));
            }
            RunMode::Claims => {
                let s: ClaimScores = serde_json::from_str(&text).with_context(at)?;
                let Some(labels) = &s.labels else {
                    unlabeled += s.sese.len();
                    continue;
                };
                let scores = if args.method == "sese" {
                    &s.sese
                } else {
                    s.baselines
                        .get(&args.method)
                        .with_context(|| format!("line {number}: no score named {:?}", args.method))?
                };
                if scores.len() != labels.len() {
                    bail!("line {number}: {} scores for {} labels", scores.len(), labels.len());
                }
                items.extend(scores.iter().zip(labels).map(|(&sc, &c)| ScoredItem::new(sc, c)));
            }
        }
    }
    Ok((items, unlabeled))
}

pub fn run(args: &EvalArgs) -> anyhow::Result<ExitCode> {
    let (items, unlabeled) = collect(args)?;
    if unlabeled > 0 {
        eprintln!("skipped {unlabeled} unlabeled items");
    }
    let ci = args.ci.then_some((args.resamples, args.seed));
    let result = match evaluate(&items, ci) {
        Ok(r) => r,
        Err(e @ EvalError::SingleClass { .. }) => {
            bail!("{e}; AUROC needs both correct and incorrect items")
        }
        Err(e) => return Err(e.into()),
    };
    println!("items  {}", result.n_items);
    println!("AUROC  {:.4}", result.auroc);
    println!("AURAC  {:.4}", result.aurac);
    if let Some((lo, hi)) = result.bootstrap_ci {
        println!("AUROC 95% CI  [{lo:.4}, {hi:.4}] ({} resamples, seed {})", args.resamples, args.seed);
    }
    if args.curve {
        println!("fraction,accuracy");
        for (x, a) in &result.rejection_curve {
            println!("{x:.2},{a:.4}");
        }
    }
    if let Some(path) = &args.output {
        fs::write(path, to_line(&result)? + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}
