//! Binary signal containers: raw recordings and segment blocks.
//!
//! A recording is `<stem>.f32` (16-byte header + little-endian f32 samples,
//! channel-major) plus a `<stem>.json` sidecar holding shape, sampling rate,
//! and the generating seed. Segments use the same block layout under one
//! file pair: `<prefix>.f32` for the data and `<prefix>.jsonl` with one
//! metadata row per block, in block order.

use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};

use evidexr_core::corpus::Segment;
use evidexr_core::signal::Recording;
use serde::{Deserialize, Serialize};

use crate::binio::{self, atomic_write, FormatError};

pub const RECORDING_MAGIC: &[u8; 8] = b"EVXREC\0\0";
pub const SEGMENT_MAGIC: &[u8; 8] = b"EVXSEG\0\0";

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordingSidecar {
    pub subject_id: String,
    pub fs: f64,
    pub channels: usize,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Writes `<dir>/<subject_id>.f32` and its sidecar.
pub fn save_recording(dir: &Path, rec: &Recording, seed: Option<u64>) -> Result<PathBuf, FormatError> {
    fs::create_dir_all(dir)?;
    let f32_path = dir.join(format!("{}.f32", rec.subject_id));
    atomic_write(&f32_path, |w| {
        binio::write_header(w, RECORDING_MAGIC)?;
        binio::write_f32_slice(w, &rec.data)?;
        Ok(())
    })?;
    let sidecar = RecordingSidecar {
        subject_id: rec.subject_id.clone(),
        fs: rec.fs,
        channels: rec.channels,
        samples: rec.samples(),
        seed,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| FormatError::Corrupt(e.to_string()))?;
    atomic_write(&f32_path.with_extension("json"), |w| {
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(f32_path)
}

pub fn load_recording(f32_path: &Path) -> Result<Recording, FormatError> {
    let sidecar_path = f32_path.with_extension("json");
    let sidecar: RecordingSidecar = serde_json::from_reader(fs::File::open(&sidecar_path)?)
        .map_err(|e| FormatError::Corrupt(format!("{}: {e}", sidecar_path.display())))?;
    let mut r = io::BufReader::new(fs::File::open(f32_path)?);
    binio::read_header(&mut r, RECORDING_MAGIC)?;
    let data = binio::read_f32_vec(&mut r, sidecar.channels * sidecar.samples)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(FormatError::Corrupt(format!(
            "{}: trailing bytes beyond declared shape",
            f32_path.display()
        )));
    }
    Recording::new(sidecar.subject_id, sidecar.fs, sidecar.channels, data)
        .map_err(|e| FormatError::Corrupt(e.to_string()))
}

/// Loads every `*.f32` recording in a directory, sorted by file name so the
/// result order never depends on directory iteration order.
pub fn load_recordings_dir(dir: &Path) -> Result<Vec<Recording>, FormatError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("f32"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_recording(p)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRow {
    id: String,
    subject_id: String,
    start_s: f64,
    channels: usize,
    samples: usize,
    label: u8,
}

/// Writes `<prefix>.jsonl` + `<prefix>.f32`.
pub fn save_segments(prefix: &Path, segments: &[Segment]) -> Result<(), FormatError> {
    let jsonl = prefix.with_extension("jsonl");
    atomic_write(&jsonl, |w| {
        for seg in segments {
            let row = SegmentRow {
                id: seg.id.clone(),
                subject_id: seg.subject_id.clone(),
                start_s: seg.start_s,
                channels: seg.channels,
                samples: seg.samples,
                label: seg.label,
            };
            let line = serde_json::to_string(&row).map_err(|e| FormatError::Corrupt(e.to_string()))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    atomic_write(&prefix.with_extension("f32"), |w| {
        binio::write_header(w, SEGMENT_MAGIC)?;
        for seg in segments {
            binio::write_f32_slice(w, &seg.data)?;
        }
        Ok(())
    })
}

pub fn load_segments(prefix: &Path) -> Result<Vec<Segment>, FormatError> {
    let jsonl = prefix.with_extension("jsonl");
    let reader = io::BufReader::new(fs::File::open(&jsonl)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SegmentRow = serde_json::from_str(&line)
            .map_err(|e| FormatError::Corrupt(format!("{}:{}: {e}", jsonl.display(), i + 1)))?;
        rows.push(row);
    }
    let mut r = io::BufReader::new(fs::File::open(prefix.with_extension("f32"))?);
    binio::read_header(&mut r, SEGMENT_MAGIC)?;
    let mut segments = Vec::with_capacity(rows.len());
    for row in rows {
        let data = binio::read_f32_vec(&mut r, row.channels * row.samples)?;
        let seg = Segment {
            id: row.id,
            subject_id: row.subject_id,
            start_s: row.start_s,
            channels: row.channels,
            samples: row.samples,
            data,
            label: row.label,
        };
        seg.validate()
            .map_err(|e| FormatError::Corrupt(e.to_string()))?;
        segments.push(seg);
    }
    Ok(segments)
}
