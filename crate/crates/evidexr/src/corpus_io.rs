//! JSON Lines formats: case records, event annotations, predictions, and
//! generated reports. One record per line, no headers, UTF-8 throughout.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use evidexr_core::corpus::{CaseRecord, Corpus, CorpusError, Embedding, EventAnnotation};
use evidexr_core::detect::Prediction;
use evidexr_core::index::{NeighborHit, NeighborList};
use evidexr_core::report::GeneratedReport;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::{atomic_write, FormatError};

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] CorpusError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>, CorpusIoError> {
    let file = fs::File::open(path).map_err(|source| CorpusIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(std::io::BufReader::new(file).lines())
}

fn line_err(path: &Path, line: usize, message: impl ToString) -> CorpusIoError {
    CorpusIoError::Line {
        path: path.display().to_string(),
        line,
        message: message.to_string(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseRow {
    case_id: String,
    segment_id: String,
    label: u8,
    report: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f32>>,
}

/// Loads and validates a corpus file. Every malformed or invalid line is
/// reported with its line number; duplicate case ids are hard errors.
pub fn load_corpus(path: &Path) -> Result<Vec<CaseRecord>, CorpusIoError> {
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in open_lines(path)?.enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| line_err(path, n, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: CaseRow = serde_json::from_str(&line).map_err(|e| line_err(path, n, e))?;
        let embedding = match row.embedding {
            Some(v) => Some(Embedding::from_raw(v).map_err(|e| line_err(path, n, e))?),
            None => None,
        };
        let record = CaseRecord {
            case_id: row.case_id,
            segment_id: row.segment_id,
            embedding,
            label: row.label,
            report: row.report,
        };
        record.validate().map_err(|e| line_err(path, n, e))?;
        if !seen.insert(record.case_id.clone()) {
            return Err(line_err(
                path,
                n,
                CorpusError::DuplicateCaseId(record.case_id.clone()),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

/// Loads a corpus file straight into the validated container.
pub fn load_corpus_collection(path: &Path) -> Result<Corpus, CorpusIoError> {
    Ok(Corpus::from_records(load_corpus(path)?)?)
}

pub fn save_corpus(records: &[CaseRecord], path: &Path) -> Result<(), CorpusIoError> {
    for r in records {
        r.validate()?;
    }
    atomic_write(path, |w| {
        for r in records {
            let row = CaseRow {
                case_id: r.case_id.clone(),
                segment_id: r.segment_id.clone(),
                label: r.label,
                report: r.report.clone(),
                embedding: r.embedding.as_ref().map(|e| e.as_slice().to_vec()),
            };
            let line =
                serde_json::to_string(&row).map_err(|e| FormatError::Corrupt(e.to_string()))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    subject_id: String,
    onset_s: f64,
    offset_s: f64,
    kind: String,
}

pub fn load_events(path: &Path) -> Result<Vec<EventAnnotation>, CorpusIoError> {
    let mut events = Vec::new();
    for (i, line) in open_lines(path)?.enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| line_err(path, n, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: EventRow = serde_json::from_str(&line).map_err(|e| line_err(path, n, e))?;
        let event = EventAnnotation {
            subject_id: row.subject_id,
            onset_s: row.onset_s,
            offset_s: row.offset_s,
            kind: row.kind,
        };
        event.validate().map_err(|e| line_err(path, n, e))?;
        events.push(event);
    }
    Ok(events)
}

pub fn save_events(events: &[EventAnnotation], path: &Path) -> Result<(), CorpusIoError> {
    atomic_write(path, |w| {
        for e in events {
            let row = EventRow {
                subject_id: e.subject_id.clone(),
                onset_s: e.onset_s,
                offset_s: e.offset_s,
                kind: e.kind.clone(),
            };
            let line =
                serde_json::to_string(&row).map_err(|er| FormatError::Corrupt(er.to_string()))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    query_id: String,
    evidence_score: f64,
    label: u8,
}

pub fn save_predictions(preds: &[Prediction], path: &Path) -> Result<(), CorpusIoError> {
    atomic_write(path, |w| {
        for p in preds {
            let row = PredictionRow {
                query_id: p.query_id.clone(),
                evidence_score: p.evidence_score,
                label: p.label_hat,
            };
            let line =
                serde_json::to_string(&row).map_err(|e| FormatError::Corrupt(e.to_string()))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, CorpusIoError> {
    let mut out = Vec::new();
    for (i, line) in open_lines(path)?.enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| line_err(path, n, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PredictionRow = serde_json::from_str(&line).map_err(|e| line_err(path, n, e))?;
        out.push(Prediction {
            query_id: row.query_id,
            evidence_score: row.evidence_score,
            label_hat: row.label,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct HitRow {
    case_id: String,
    score: f64,
    label: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    query_id: String,
    text: String,
    source_case_id: String,
    evidence_score: f64,
    label: u8,
    fallback_used: bool,
    evidence: Vec<HitRow>,
}

pub fn save_reports(reports: &[GeneratedReport], path: &Path) -> Result<(), CorpusIoError> {
    atomic_write(path, |w| {
        for r in reports {
            let row = ReportRow {
                query_id: r.query_id.clone(),
                text: r.text.clone(),
                source_case_id: r.source_case_id.clone(),
                evidence_score: r.evidence_score,
                label: r.label_hat,
                fallback_used: r.fallback_used,
                evidence: r
                    .evidence
                    .hits
                    .iter()
                    .map(|h| HitRow {
                        case_id: h.case_id.clone(),
                        score: h.score,
                        label: h.label,
                    })
                    .collect(),
            };
            let line =
                serde_json::to_string(&row).map_err(|e| FormatError::Corrupt(e.to_string()))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn load_reports(path: &Path) -> Result<Vec<GeneratedReport>, CorpusIoError> {
    let mut out = Vec::new();
    for (i, line) in open_lines(path)?.enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| line_err(path, n, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ReportRow = serde_json::from_str(&line).map_err(|e| line_err(path, n, e))?;
        out.push(GeneratedReport {
            query_id: row.query_id.clone(),
            text: row.text,
            source_case_id: row.source_case_id,
            evidence_score: row.evidence_score,
            label_hat: row.label,
            fallback_used: row.fallback_used,
            evidence: NeighborList {
                query_id: row.query_id,
                hits: row
                    .evidence
                    .into_iter()
                    .map(|h| NeighborHit {
                        case_id: h.case_id,
                        score: h.score,
                        label: h.label,
                    })
                    .collect(),
            },
        });
    }
    Ok(out)
}
