//! Evidence-aggregated classification over retrieved neighbors.
//!
//! The evidence score is the unweighted mean of the top-K neighbor labels; a
//! query is positive when the score reaches the voting threshold γ
//! (inclusive). K and γ come from a grid search maximizing balanced accuracy
//! on a held-out validation set.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::Embedding;
use crate::eval::{balanced_accuracy, confusion, EvalError};
use crate::index::{IndexError, NeighborList, VectorIndex};

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("k = {k} but only {available} neighbors available")]
    NotEnoughNeighbors { k: usize, available: usize },
    #[error("invalid detector config: k = {k}, gamma = {gamma}")]
    BadConfig { k: usize, gamma: f64 },
    #[error("empty validation set or grid")]
    EmptyGrid,
    #[error("validation set contains a single class; balanced accuracy is degenerate")]
    OneClassValidation,
    #[error("no grid point was evaluable against this index")]
    NothingEvaluable,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Voting parameters: neighbor count K ≥ 1 and threshold γ ∈ (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub k: usize,
    pub gamma: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.k >= 1 && self.gamma > 0.0 && self.gamma <= 1.0 {
            Ok(())
        } else {
            Err(DetectError::BadConfig {
                k: self.k,
                gamma: self.gamma,
            })
        }
    }
}

/// One classified query with its evidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub query_id: String,
    pub evidence_score: f64,
    pub label_hat: u8,
}

/// Mean of the top-K neighbor labels. Depends only on the label multiset of
/// those K hits, never on their order.
pub fn evidence_score(neighbors: &NeighborList, k: usize) -> Result<f64, DetectError> {
    if k == 0 || neighbors.hits.len() < k {
        return Err(DetectError::NotEnoughNeighbors {
            k,
            available: neighbors.hits.len(),
        });
    }
    let positives = neighbors.hits[..k].iter().filter(|h| h.label == 1).count();
    Ok(positives as f64 / k as f64)
}

/// 1 iff the evidence score reaches γ (the comparison is inclusive).
pub fn classify(evidence: f64, cfg: &DetectorConfig) -> u8 {
    debug_assert!((0.0..=1.0).contains(&evidence));
    u8::from(evidence >= cfg.gamma)
}

/// Scores and classifies one query from its neighbor list.
pub fn predict(neighbors: &NeighborList, cfg: &DetectorConfig) -> Result<Prediction, DetectError> {
    cfg.validate()?;
    let evidence = evidence_score(neighbors, cfg.k)?;
    Ok(Prediction {
        query_id: neighbors.query_id.clone(),
        evidence_score: evidence,
        label_hat: classify(evidence, cfg),
    })
}

pub fn default_k_grid() -> Vec<usize> {
    alloc::vec![1, 3, 5, 7, 9, 15, 25]
}

pub fn default_gamma_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Grid search over (K, γ) maximizing balanced accuracy on the validation
/// set. Ties prefer smaller K, then larger γ. K values the index cannot
/// serve (fewer than K entries) are skipped rather than failing the search.
pub fn tune(
    validation: &[(Embedding, u8)],
    index: &VectorIndex,
    k_grid: &[usize],
    gamma_grid: &[f64],
) -> Result<DetectorConfig, DetectError> {
    if validation.is_empty() || k_grid.is_empty() || gamma_grid.is_empty() {
        return Err(DetectError::EmptyGrid);
    }
    let labels: Vec<u8> = validation.iter().map(|(_, y)| *y).collect();
    if labels.iter().all(|&y| y == 1) || labels.iter().all(|&y| y == 0) {
        return Err(DetectError::OneClassValidation);
    }

    // One retrieval per query at the deepest feasible K serves every grid point.
    let k_max = k_grid
        .iter()
        .copied()
        .filter(|&k| k <= index.len())
        .max()
        .ok_or(DetectError::NothingEvaluable)?;
    let mut rankings = Vec::with_capacity(validation.len());
    for (q, _) in validation {
        rankings.push(index.search(q, k_max)?);
    }

    let mut best: Option<(f64, DetectorConfig)> = None;
    for &k in k_grid {
        if k > index.len() {
            continue;
        }
        let scores: Vec<f64> = rankings
            .iter()
            .map(|r| evidence_score(r, k))
            .collect::<Result<_, _>>()?;
        for &gamma in gamma_grid {
            let cfg = DetectorConfig { k, gamma };
            cfg.validate()?;
            let preds: Vec<u8> = scores.iter().map(|&e| classify(e, &cfg)).collect();
            let ba = balanced_accuracy(&confusion(&preds, &labels)?)?;
            let better = match &best {
                None => true,
                Some((best_ba, best_cfg)) => {
                    ba > *best_ba
                        || (ba == *best_ba
                            && (k < best_cfg.k || (k == best_cfg.k && gamma > best_cfg.gamma)))
                }
            };
            if better {
                best = Some((ba, cfg));
            }
        }
    }
    best.map(|(_, cfg)| cfg).ok_or(DetectError::NothingEvaluable)
}
