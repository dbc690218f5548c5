//! Deterministic reference-guided report generation.
//!
//! Generated text is never free-form: a positive prediction replicates the
//! report of the highest-ranked label-consistent neighbor byte for byte, and
//! a negative prediction replicates the corpus's normal-template record. The
//! prompt template exists for the optional remote selector; local generation
//! never renders it. Every output carries the neighbor list that produced it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{Corpus, Embedding, NORMAL_TEMPLATE_ID};
use crate::detect::{predict, DetectError, DetectorConfig};
use crate::index::{IndexError, NeighborList, VectorIndex};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("no references to inject")]
    NoReferences,
    #[error("empty neighbor list")]
    EmptyNeighbors,
    #[error("corpus has no record for retrieved case {0}")]
    UnknownCase(String),
    #[error("corpus lacks the {NORMAL_TEMPLATE_ID} record")]
    MissingNormalTemplate,
    #[error("template: {0}")]
    BadTemplate(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Constraint-aware prompt template. Rendering K references always produces
/// exactly K `REFERENCE {rank}:` blocks numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub system_role: String,
    pub context_header: String,
    pub reference_slot_format: String,
    pub constraint_lines: Vec<String>,
    pub output_instruction: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system_role: "You are an expert EEG diagnostician. Your task is to output an EEG \
                          report that is identical to the most relevant reference provided below."
                .to_string(),
            context_header: "Retrieved evidence from the vector database (Top-K reports):"
                .to_string(),
            reference_slot_format: "REFERENCE {rank}: {report}".to_string(),
            constraint_lines: alloc::vec![
                "(1) Select the most relevant reference from the provided context.".to_string(),
                "(2) Output the exact same text as the selected reference.".to_string(),
                "(3) Do not change any words, medical terms, punctuation, or formatting."
                    .to_string(),
                "(4) Do not add any titles, labels, prefixes, notes, comments, or explanations."
                    .to_string(),
                "(5) Copy the selected reference verbatim (word-for-word).".to_string(),
            ],
            output_instruction: "Output: one paragraph containing the verbatim reference text."
                .to_string(),
        }
    }
}

const TEMPLATE_HEADER: &str = "evidexr-template 1";

impl PromptTemplate {
    /// Parses the versioned sectioned text format produced by
    /// [`Self::to_text`].
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TEMPLATE_HEADER => {}
            other => {
                return Err(ReportError::BadTemplate(format!(
                    "expected header '{TEMPLATE_HEADER}', found {other:?}"
                )))
            }
        }
        let mut section: Option<&str> = None;
        let mut buckets: [Vec<&str>; 5] = Default::default();
        for line in lines {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name {
                    "system" => "system",
                    "context-header" => "context-header",
                    "reference-format" => "reference-format",
                    "constraints" => "constraints",
                    "output" => "output",
                    other => {
                        return Err(ReportError::BadTemplate(format!(
                            "unknown section [{other}]"
                        )))
                    }
                });
                continue;
            }
            let Some(sec) = section else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(ReportError::BadTemplate("text before first section".to_string()));
            };
            let slot = match sec {
                "system" => 0,
                "context-header" => 1,
                "reference-format" => 2,
                "constraints" => 3,
                _ => 4,
            };
            buckets[slot].push(line);
        }
        let joined = |b: &Vec<&str>| b.join("\n").trim().to_string();
        let tpl = PromptTemplate {
            system_role: joined(&buckets[0]),
            context_header: joined(&buckets[1]),
            reference_slot_format: joined(&buckets[2]),
            constraint_lines: buckets[3]
                .iter()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty())
                .map(|l| l.to_string())
                .collect(),
            output_instruction: joined(&buckets[4]),
        };
        if tpl.reference_slot_format.is_empty() {
            return Err(ReportError::BadTemplate("empty reference format".to_string()));
        }
        Ok(tpl)
    }

    /// Serializes to the versioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TEMPLATE_HEADER);
        out.push_str("\n[system]\n");
        out.push_str(&self.system_role);
        out.push_str("\n[context-header]\n");
        out.push_str(&self.context_header);
        out.push_str("\n[reference-format]\n");
        out.push_str(&self.reference_slot_format);
        out.push_str("\n[constraints]\n");
        for line in &self.constraint_lines {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("[output]\n");
        out.push_str(&self.output_instruction);
        out.push('\n');
        out
    }
}

/// Renders the prompt: system role, context header, one numbered reference
/// block per injected report (rank order preserved), the constraint lines
/// verbatim, and the output instruction. Byte-deterministic.
pub fn assemble_prompt(
    template: &PromptTemplate,
    references: &[&str],
) -> Result<String, ReportError> {
    if references.is_empty() {
        return Err(ReportError::NoReferences);
    }
    let mut out = String::new();
    out.push_str(&template.system_role);
    out.push_str("\n\n");
    out.push_str(&template.context_header);
    out.push('\n');
    for (i, report) in references.iter().enumerate() {
        let block = template
            .reference_slot_format
            .replace("{rank}", &(i + 1).to_string())
            .replace("{report}", report);
        out.push_str(&block);
        out.push('\n');
    }
    out.push('\n');
    for line in &template.constraint_lines {
        out.push_str(line);
        out.push('\n');
    }
    out.push('\n');
    out.push_str(&template.output_instruction);
    out.push('\n');
    Ok(out)
}

/// Which reference the deterministic selector picked.
#[derive(Debug, Clone, PartialEq)]
pub struct RefSelection {
    pub case_id: String,
    /// 1-based retrieval rank of the selected neighbor.
    pub rank: usize,
    /// Set when no neighbor matched the predicted label and rank 1 was used.
    pub fallback: bool,
}

/// Picks the highest-ranked neighbor whose label equals the predicted label;
/// falls back to the rank-1 neighbor (flagged) when none matches.
pub fn select_reference(
    neighbors: &NeighborList,
    predicted_label: u8,
) -> Result<RefSelection, ReportError> {
    if neighbors.hits.is_empty() {
        return Err(ReportError::EmptyNeighbors);
    }
    for (i, hit) in neighbors.hits.iter().enumerate() {
        if hit.label == predicted_label {
            return Ok(RefSelection {
                case_id: hit.case_id.clone(),
                rank: i + 1,
                fallback: false,
            });
        }
    }
    Ok(RefSelection {
        case_id: neighbors.hits[0].case_id.clone(),
        rank: 1,
        fallback: true,
    })
}

/// A generated report with full evidence tracing. The text always byte-equals
/// either a retrieved reference's report or the normal template.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedReport {
    pub query_id: String,
    pub text: String,
    /// Case id of the replicated record, or `normal-template`.
    pub source_case_id: String,
    pub evidence_score: f64,
    pub label_hat: u8,
    pub fallback_used: bool,
    pub evidence: NeighborList,
}

/// Local-mode generation: retrieve, vote, then replicate. `retrieve_depth`
/// hits are kept as evidence (at least `cfg.k` are fetched so the vote is
/// always served).
pub fn generate(
    query_id: &str,
    query: &Embedding,
    index: &VectorIndex,
    corpus: &Corpus,
    cfg: &DetectorConfig,
    retrieve_depth: usize,
) -> Result<GeneratedReport, ReportError> {
    let neighbors = index
        .search(query, cfg.k.max(retrieve_depth))?
        .with_query_id(query_id);
    let prediction = predict(&neighbors, cfg)?;
    let (text, source_case_id, fallback_used) = if prediction.label_hat == 0 {
        let normal = corpus
            .normal_template()
            .ok_or(ReportError::MissingNormalTemplate)?;
        (normal.report.clone(), NORMAL_TEMPLATE_ID.to_string(), false)
    } else {
        let sel = select_reference(&neighbors, prediction.label_hat)?;
        let record = corpus
            .get(&sel.case_id)
            .ok_or_else(|| ReportError::UnknownCase(sel.case_id.clone()))?;
        (record.report.clone(), sel.case_id, sel.fallback)
    };
    Ok(GeneratedReport {
        query_id: query_id.to_string(),
        text,
        source_case_id,
        evidence_score: prediction.evidence_score,
        label_hat: prediction.label_hat,
        fallback_used,
        evidence: neighbors,
    })
}
