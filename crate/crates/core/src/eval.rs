//! Discrimination metrics for uncertainty scores.
//!
//! Labels follow "correct = positive"; scores are uncertainties, so AUROC
//! measures how well a high score flags an incorrect item.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::DirectedGraph;

/// Rejection fractions 0.00, 0.05, ..., 0.95.
pub const AURAC_GRID_POINTS: usize = 20;
pub const AURAC_GRID_STEP: f64 = 0.05;
pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no items to evaluate")]
    Empty,
    #[error("metric undefined for a single class ({correct} correct, {incorrect} incorrect)")]
    SingleClass { correct: usize, incorrect: usize },
    #[error("score of item {index} is not finite")]
    NonFinite { index: usize },
    #[error("rejection fraction {0} outside [0, 1)")]
    Fraction(f64),
    #[error("every bootstrap resample was single-class")]
    DegenerateBootstrap,
    #[error("ablation metrics need a symmetric graph")]
    NotSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub score: f64,
    pub correct: bool,
}

impl ScoredItem {
    pub fn new(score: f64, correct: bool) -> Self {
        ScoredItem { score, correct }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub auroc: f64,
    pub aurac: f64,
    pub rejection_curve: Vec<(f64, f64)>,
    pub n_items: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_ci: Option<(f64, f64)>,
}

fn check_finite(items: &[ScoredItem]) -> Result<(), EvalError> {
    if items.is_empty() {
        return Err(EvalError::Empty);
    }
    match items.iter().position(|it| !it.score.is_finite()) {
        Some(index) => Err(EvalError::NonFinite { index }),
        None => Ok(()),
    }
}

fn class_counts(items: &[ScoredItem]) -> Result<(usize, usize), EvalError> {
    check_finite(items)?;
    let correct = items.iter().filter(|it| it.correct).count();
    let incorrect = items.len() - correct;
    if correct == 0 || incorrect == 0 {
        return Err(EvalError::SingleClass { correct, incorrect });
    }
    Ok((correct, incorrect))
}

/// Twice the Mann–Whitney statistic: 2 per (incorrect, correct) pair where
/// the incorrect item scores higher, 1 per tie.
fn doubled_u(items: &[ScoredItem]) -> u128 {
    let mut sorted: Vec<ScoredItem> = items.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let mut below_correct: u128 = 0;
    let mut total: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        let group = &sorted[i..j];
        let tied_correct = group.iter().filter(|it| it.correct).count() as u128;
        let tied_incorrect = group.len() as u128 - tied_correct;
        total += tied_incorrect * (2 * below_correct + tied_correct);
        below_correct += tied_correct;
        i = j;
    }
    total
}

/// Probability that a random incorrect item outscores a random correct one,
/// ties counted ½.
pub fn auroc(items: &[ScoredItem]) -> Result<f64, EvalError> {
    let (correct, incorrect) = class_counts(items)?;
    let pairs = 2 * correct as u128 * incorrect as u128;
    Ok(doubled_u(items) as f64 / pairs as f64)
}

/// Accuracy over the `⌈(1−x)·n⌉` lowest-score items, stable in input order.
pub fn rejection_accuracy(items: &[ScoredItem], x: f64) -> Result<f64, EvalError> {
    check_finite(items)?;
    if !(0.0..1.0).contains(&x) {
        return Err(EvalError::Fraction(x));
    }
    let n = items.len();
    let keep = (((1.0 - x) * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| items[a].score.total_cmp(&items[b].score));
    let hits = order[..keep.min(n)].iter().filter(|&&i| items[i].correct).count();
    Ok(hits as f64 / keep as f64)
}

pub fn rejection_curve(items: &[ScoredItem]) -> Result<Vec<(f64, f64)>, EvalError> {
    (0..AURAC_GRID_POINTS)
        .map(|i| {
            let x = i as f64 * AURAC_GRID_STEP;
            rejection_accuracy(items, x).map(|a| (x, a))
        })
        .collect()
}

/// Trapezoidal mean of the rejection-accuracy curve over the 5% grid.
pub fn aurac(items: &[ScoredItem]) -> Result<f64, EvalError> {
    Ok(trapezoid_mean(&rejection_curve(items)?))
}

fn trapezoid_mean(curve: &[(f64, f64)]) -> f64 {
    if curve.len() < 2 {
        return curve.first().map_or(0.0, |p| p.1);
    }
    let area: f64 = curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    area / (curve[curve.len() - 1].0 - curve[0].0)
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// 95% percentile interval of AUROC over seeded bootstrap resamples.
/// Single-class resamples are redrawn, up to `10 · n_resamples` draws total.
pub fn bootstrap_ci(items: &[ScoredItem], n_resamples: usize, seed: u64) -> Result<(f64, f64), EvalError> {
    class_counts(items)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = items.len();
    let mut stats = Vec::with_capacity(n_resamples);
    let mut sample = Vec::with_capacity(n);
    for _ in 0..n_resamples.saturating_mul(10) {
        if stats.len() == n_resamples {
            break;
        }
        sample.clear();
        sample.extend((0..n).map(|_| items[rng.random_range(0..n)]));
        match auroc(&sample) {
            Ok(a) => stats.push(a),
            Err(EvalError::SingleClass { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if stats.is_empty() {
        return Err(EvalError::DegenerateBootstrap);
    }
    stats.sort_by(f64::total_cmp);
    Ok((percentile(&stats, 0.025), percentile(&stats, 0.975)))
}

/// AUROC, AURAC and the rejection curve; `ci` is `(n_resamples, seed)`.
pub fn evaluate(items: &[ScoredItem], ci: Option<(usize, u64)>) -> Result<EvalResult, EvalError> {
    let rejection_curve = rejection_curve(items)?;
    Ok(EvalResult {
        auroc: auroc(items)?,
        aurac: trapezoid_mean(&rejection_curve),
        rejection_curve,
        n_items: items.len(),
        bootstrap_ci: ci
            .map(|(n, seed)| bootstrap_ci(items, n, seed))
            .transpose()?,
    })
}

/// Eigenvalues of the symmetric normalized Laplacian, ascending. Isolated
/// vertices give zero rows.
pub fn normalized_laplacian_spectrum(g: &DirectedGraph) -> Vec<f64> {
    let n = g.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| {
            let d = g.out_degree(v);
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j && inv_sqrt[i] > 0.0 { 1.0 } else { 0.0 };
        diag - inv_sqrt[i] * g.weight(i, j) * inv_sqrt[j]
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Graph-spectral uncertainty baselines keyed `eigenvalue`, `degree` and
/// `spectral_gap`.
pub fn graph_uncertainty_ablations(g: &DirectedGraph) -> Result<BTreeMap<String, f64>, EvalError> {
    if !g.is_symmetric(1e-12) {
        return Err(EvalError::NotSymmetric);
    }
    let n = g.n() as f64;
    let eig = normalized_laplacian_spectrum(g);
    let u_eigv: f64 = eig.iter().map(|l| (1.0 - l).max(0.0)).sum();
    let degree_sum: f64 = (0..g.n()).map(|v| g.out_degree(v)).sum();
    let u_deg = (n * n - degree_sum) / (n * n);
    let lambda2 = eig.get(1).copied().unwrap_or(0.0);
    let u_gap = (1.0 - lambda2).clamp(0.0, 1.0);
    Ok(BTreeMap::from([
        ("degree".to_string(), u_deg),
        ("eigenvalue".to_string(), u_eigv),
        ("spectral_gap".to_string(), u_gap),
    ]))
}
