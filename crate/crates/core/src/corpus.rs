//! Domain types for paired EEG–text–label records and their validation.
//!
//! A corpus is an immutable collection of [`CaseRecord`]s with unique ids.
//! Loading/saving (JSONL plus the binary signal container) lives in the std
//! companion crate; this module owns the types and every validation rule that
//! does not require file context.

#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use alloc::string::String;
use alloc::vec::Vec;

use alloc::collections::BTreeMap;
use thiserror::Error;

/// Reserved id of the standardized normal-statement record. When a query is
/// classified non-IED, the generated report replicates this record's text.
pub const NORMAL_TEMPLATE_ID: &str = "normal-template";

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("segment {id}: data has {got} values, expected {channels}x{samples}")]
    SegmentShape {
        id: String,
        got: usize,
        channels: usize,
        samples: usize,
    },
    #[error("segment {id}: non-finite sample value")]
    NonFiniteSample { id: String },
    #[error("segment {id}: negative start time {start_s}")]
    NegativeStart { id: String, start_s: f64 },
    #[error("record {id}: label {label} outside {{0,1}}")]
    InvalidLabel { id: String, label: u8 },
    #[error("record {id}: empty report")]
    EmptyReport { id: String },
    #[error("duplicate case_id {0}")]
    DuplicateCaseId(String),
    #[error("record {case_id}: label {record} does not match segment label {segment}")]
    LabelMismatch {
        case_id: String,
        record: u8,
        segment: u8,
    },
    #[error("event for {subject_id}: offset {offset_s} not after onset {onset_s}")]
    BadEventInterval {
        subject_id: String,
        onset_s: f64,
        offset_s: f64,
    },
    #[error("embedding: non-finite component")]
    NonFiniteEmbedding,
    #[error("embedding: zero norm")]
    ZeroNormEmbedding,
}

/// Unit-norm real vector in the shared EEG–text space. Inner product of two
/// embeddings equals their cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps an already-normalized vector, checking finiteness only. Norm
    /// tolerance is the consumer's business (the index enforces 1e-4).
    pub fn from_raw(values: Vec<f32>) -> Result<Self, CorpusError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::NonFiniteEmbedding);
        }
        Ok(Embedding(values))
    }

    /// Normalizes an f64 vector to unit L2 norm and stores it as f32.
    pub fn normalized(values: &[f64]) -> Result<Self, CorpusError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(CorpusError::NonFiniteEmbedding);
        }
        if norm < 1e-300 {
            return Err(CorpusError::ZeroNormEmbedding);
        }
        Ok(Embedding(values.iter().map(|v| (v / norm) as f32).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    /// Inner product accumulated in f64.
    pub fn dot(&self, other: &Embedding) -> f64 {
        dot_f32(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        dot_f32(&self.0, &self.0).sqrt()
    }
}

pub(crate) fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| *x as f64 * *y as f64)
        .sum()
}

/// A fixed-shape multichannel signal window with provenance and binary label.
/// `data` is channel-major: channel `c` occupies `data[c*samples..(c+1)*samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub subject_id: String,
    pub start_s: f64,
    pub channels: usize,
    pub samples: usize,
    pub data: Vec<f32>,
    pub label: u8,
}

impl Segment {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.data.len() != self.channels * self.samples {
            return Err(CorpusError::SegmentShape {
                id: self.id.clone(),
                got: self.data.len(),
                channels: self.channels,
                samples: self.samples,
            });
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::NonFiniteSample {
                id: self.id.clone(),
            });
        }
        if self.start_s < 0.0 {
            return Err(CorpusError::NegativeStart {
                id: self.id.clone(),
                start_s: self.start_s,
            });
        }
        if self.label > 1 {
            return Err(CorpusError::InvalidLabel {
                id: self.id.clone(),
                label: self.label,
            });
        }
        Ok(())
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }
}

/// One indexed historical case: segment reference, optional embedding, label,
/// and the expert report text.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    pub segment_id: String,
    pub embedding: Option<Embedding>,
    pub label: u8,
    pub report: String,
}

impl CaseRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.label > 1 {
            return Err(CorpusError::InvalidLabel {
                id: self.case_id.clone(),
                label: self.label,
            });
        }
        if self.report.is_empty() {
            return Err(CorpusError::EmptyReport {
                id: self.case_id.clone(),
            });
        }
        Ok(())
    }
}

/// Expert-annotated event interval on a subject's timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAnnotation {
    pub subject_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub kind: String,
}

impl EventAnnotation {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.onset_s >= 0.0 && self.offset_s > self.onset_s) {
            return Err(CorpusError::BadEventInterval {
                subject_id: self.subject_id.clone(),
                onset_s: self.onset_s,
                offset_s: self.offset_s,
            });
        }
        Ok(())
    }
}

/// Validated, immutable record collection with O(log M) lookup by case id.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<CaseRecord>,
    by_id: BTreeMap<String, usize>,
}

impl Corpus {
    /// Validates every record and rejects duplicate case ids.
    pub fn from_records(records: Vec<CaseRecord>) -> Result<Self, CorpusError> {
        let mut by_id = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            rec.validate()?;
            if by_id.insert(rec.case_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateCaseId(rec.case_id.clone()));
            }
        }
        Ok(Corpus { records, by_id })
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseRecord> {
        self.by_id.get(case_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[CaseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The standardized normal-statement record, when present.
    pub fn normal_template(&self) -> Option<&CaseRecord> {
        self.get(NORMAL_TEMPLATE_ID)
    }

    /// Checks that each record's label matches the label of its referenced
    /// segment. Records referencing segments absent from `segments` (such as
    /// the normal-template record) are skipped.
    pub fn check_against_segments(&self, segments: &[Segment]) -> Result<(), CorpusError> {
        let seg_labels: BTreeMap<&str, u8> = segments
            .iter()
            .map(|s| (s.id.as_str(), s.label))
            .collect();
        for rec in &self.records {
            if let Some(&lbl) = seg_labels.get(rec.segment_id.as_str()) {
                if lbl != rec.label {
                    return Err(CorpusError::LabelMismatch {
                        case_id: rec.case_id.clone(),
                        record: rec.label,
                        segment: lbl,
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn seg(id: &str, label: u8) -> Segment {
        Segment {
            id: id.to_string(),
            subject_id: "s1".to_string(),
            start_s: 0.0,
            channels: 2,
            samples: 3,
            data: vec![0.0; 6],
            label,
        }
    }

    #[test]
    fn segment_shape_mismatch_rejected() {
        let mut s = seg("a", 0);
        s.data.pop();
        assert!(matches!(
            s.validate(),
            Err(CorpusError::SegmentShape { .. })
        ));
    }

    #[test]
    fn segment_label_two_rejected() {
        assert!(matches!(
            seg("a", 2).validate(),
            Err(CorpusError::InvalidLabel { .. })
        ));
    }

    #[test]
    fn segment_nan_rejected() {
        let mut s = seg("a", 1);
        s.data[3] = f32::NAN;
        assert!(matches!(
            s.validate(),
            Err(CorpusError::NonFiniteSample { .. })
        ));
    }

    #[test]
    fn duplicate_case_id_is_hard_error() {
        let rec = CaseRecord {
            case_id: "c1".to_string(),
            segment_id: "a".to_string(),
            embedding: None,
            label: 0,
            report: "normal".to_string(),
        };
        let err = Corpus::from_records(vec![rec.clone(), rec]).unwrap_err();
        assert_eq!(err, CorpusError::DuplicateCaseId("c1".to_string()));
    }

    #[test]
    fn label_mismatch_against_segments() {
        let rec = CaseRecord {
            case_id: "c1".to_string(),
            segment_id: "a".to_string(),
            embedding: None,
            label: 1,
            report: "spikes".to_string(),
        };
        let corpus = Corpus::from_records(vec![rec]).unwrap();
        let err = corpus.check_against_segments(&[seg("a", 0)]).unwrap_err();
        assert!(matches!(err, CorpusError::LabelMismatch { .. }));
        // Unknown segment ids are skipped, not errors.
        corpus.check_against_segments(&[seg("b", 0)]).unwrap();
    }

    #[test]
    fn normalized_embedding_is_unit() {
        let e = Embedding::normalized(&[3.0, 4.0]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-6);
        let z = Embedding::normalized(&[0.0, 0.0]);
        assert_eq!(z.unwrap_err(), CorpusError::ZeroNormEmbedding);
    }
}
