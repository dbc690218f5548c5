//! Detection, retrieval-ranking, and text-overlap metrics.
//!
//! Detection: confusion counts, balanced accuracy, support-weighted P/R/F1.
//! Retrieval: P@K, Hit@K, MAP, MRR over label-consistency relevance.
//! Generation: BLEU with brevity penalty, ROUGE-n recall, ROUGE-L recall.
//! Everything returns values in [0, 1] and is plain deterministic arithmetic.

#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("class {0} absent: balanced accuracy undefined")]
    DegenerateClass(u8),
    #[error("k = {k} exceeds ranking depth {depth}")]
    DepthExceeded { k: usize, depth: usize },
    #[error("empty reference text")]
    EmptyReference,
    #[error("reference has {len} tokens, too short for {n}-grams")]
    ReferenceTooShort { n: usize, len: usize },
}

/// Metric tokenizer: lowercase, punctuation split into standalone tokens,
/// then whitespace splitting. Distinct from the encoder tokenizer, which
/// drops punctuation entirely.
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                let mut p = String::new();
                p.push(ch);
                out.push(p);
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Standard 2×2 counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (1, 1) => c.true_pos += 1,
            (0, 0) => c.true_neg += 1,
            (1, 0) => c.false_pos += 1,
            _ => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Mean of sensitivity and specificity. Errors when either class is absent.
pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64, EvalError> {
    let pos = c.true_pos + c.false_neg;
    let neg = c.true_neg + c.false_pos;
    if pos == 0 {
        return Err(EvalError::DegenerateClass(1));
    }
    if neg == 0 {
        return Err(EvalError::DegenerateClass(0));
    }
    Ok(0.5 * (c.true_pos as f64 / pos as f64 + c.true_neg as f64 / neg as f64))
}

/// Per-class precision/recall/F1 averaged with weights equal to the true
/// label support fractions. Zero-denominator per-class values count as 0.
pub fn weighted_prf(preds: &[u8], labels: &[u8]) -> Result<(f64, f64, f64), EvalError> {
    let c = confusion(preds, labels)?;
    let n = c.total() as f64;
    let mut wp = 0.0;
    let mut wr = 0.0;
    let mut wf1 = 0.0;
    for class in [0u8, 1u8] {
        let (tp, fp, fn_) = if class == 1 {
            (c.true_pos, c.false_pos, c.false_neg)
        } else {
            (c.true_neg, c.false_neg, c.false_pos)
        };
        let support = (tp + fn_) as f64;
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 { tp as f64 / support } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let w = support / n;
        wp += w * precision;
        wr += w * recall;
        wf1 += w * f1;
    }
    Ok((wp, wr, wf1))
}

/// Query label plus the labels of its ranked neighbors out to the evaluation
/// depth. A neighbor is relevant iff its label matches the query's.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRelevance {
    pub query_label: u8,
    pub neighbor_labels: Vec<u8>,
}

impl RankedRelevance {
    fn relevant(&self, rank0: usize) -> bool {
        self.neighbor_labels[rank0] == self.query_label
    }
}

/// Fraction of label-matching neighbors among the top K.
pub fn precision_at_k(r: &RankedRelevance, k: usize) -> Result<f64, EvalError> {
    if k == 0 || k > r.neighbor_labels.len() {
        return Err(EvalError::DepthExceeded {
            k,
            depth: r.neighbor_labels.len(),
        });
    }
    let hits = (0..k).filter(|&i| r.relevant(i)).count();
    Ok(hits as f64 / k as f64)
}

/// 1 if at least one of the top K neighbors is label-consistent.
pub fn hit_at_k(r: &RankedRelevance, k: usize) -> Result<u8, EvalError> {
    if k == 0 || k > r.neighbor_labels.len() {
        return Err(EvalError::DepthExceeded {
            k,
            depth: r.neighbor_labels.len(),
        });
    }
    Ok(u8::from((0..k).any(|i| r.relevant(i))))
}

/// Macro-averaged MAP and MRR at the given depth. Per query, AP is the mean
/// of P@r over relevant ranks r ≤ depth (0 when nothing relevant shows up)
/// and RR is the reciprocal of the first relevant rank within depth.
pub fn map_mrr(rankings: &[RankedRelevance], depth: usize) -> Result<(f64, f64), EvalError> {
    if rankings.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut map = 0.0;
    let mut mrr = 0.0;
    for r in rankings {
        if depth == 0 || r.neighbor_labels.len() < depth {
            return Err(EvalError::DepthExceeded {
                k: depth,
                depth: r.neighbor_labels.len(),
            });
        }
        let mut hits = 0usize;
        let mut ap = 0.0;
        let mut rr = 0.0;
        for rank in 1..=depth {
            if r.relevant(rank - 1) {
                hits += 1;
                ap += hits as f64 / rank as f64;
                if rr == 0.0 {
                    rr = 1.0 / rank as f64;
                }
            }
        }
        if hits > 0 {
            ap /= hits as f64;
        }
        map += ap;
        mrr += rr;
    }
    Ok((map / rankings.len() as f64, mrr / rankings.len() as f64))
}

/// BLEU components: modified n-gram precisions, the weights actually used
/// (uniform over included orders), the brevity penalty, and the score.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuBreakdown {
    pub precisions: [f64; 4],
    pub weights: [f64; 4],
    pub brevity_penalty: f64,
    pub score: f64,
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> BTreeMap<&'a [String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *counts.entry(&tokens[i..i + n]).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU with clipped n-gram precisions for n = 1..4. Orders where
/// the candidate has no n-grams are excluded and the uniform weights are
/// renormalized over the rest; any included precision of zero makes the
/// score zero (no smoothing). BP = 1 when the candidate is longer than the
/// reference, else exp(1 − r/c).
pub fn bleu(candidate: &[String], reference: &[String]) -> Result<BleuBreakdown, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let c = candidate.len();
    let r = reference.len();
    let mut precisions = [0.0f64; 4];
    let mut included = [false; 4];
    for n in 1..=4usize {
        let total = if c >= n { c - n + 1 } else { 0 };
        if total == 0 {
            continue;
        }
        included[n - 1] = true;
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let clipped: usize = cand
            .iter()
            .map(|(g, &cnt)| cnt.min(refc.get(g).copied().unwrap_or(0)))
            .sum();
        precisions[n - 1] = clipped as f64 / total as f64;
    }
    let n_included = included.iter().filter(|&&b| b).count();
    let mut weights = [0.0f64; 4];
    for (w, &inc) in weights.iter_mut().zip(&included) {
        if inc {
            *w = 1.0 / n_included as f64;
        }
    }
    // An empty candidate has no length signal; report BP = 1 and score 0.
    let brevity_penalty = if c == 0 || c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let score = if n_included == 0 || precisions.iter().zip(&included).any(|(&p, &i)| i && p == 0.0)
    {
        0.0
    } else {
        let log_sum: f64 = precisions
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&p, &w)| w * p.ln())
            .sum();
        brevity_penalty * log_sum.exp()
    };
    Ok(BleuBreakdown {
        precisions,
        weights,
        brevity_penalty,
        score,
    })
}

/// ROUGE-n recall: clipped n-gram counts over the reference's n-grams.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Result<f64, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if reference.len() < n {
        return Err(EvalError::ReferenceTooShort {
            n,
            len: reference.len(),
        });
    }
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let total: usize = refc.values().sum();
    let matched: usize = refc
        .iter()
        .map(|(g, &cnt)| cnt.min(cand.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(matched as f64 / total as f64)
}

/// ROUGE-L recall: token-level longest common subsequence divided by the
/// reference length.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<f64, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(lcs_len(candidate, reference) as f64 / reference.len() as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
