//! Versioned binary serialization of the vector index: header, id and label
//! tables, packed f32 vectors, and partition tables when present.

use std::fs;
use std::io;
use std::path::Path;

use evidexr_core::index::{IndexMode, VectorIndex};

use crate::binio::{self, atomic_write, FormatError};

pub const INDEX_MAGIC: &[u8; 8] = b"EVXIDX\0\0";

pub fn save_index(index: &VectorIndex, seed: u64, path: &Path) -> Result<(), FormatError> {
    atomic_write(path, |w| {
        binio::write_header(w, INDEX_MAGIC)?;
        binio::write_u64(w, seed)?;
        binio::write_u32(w, index.dim() as u32)?;
        binio::write_u64(w, index.len() as u64)?;
        let partitioned = index.mode() == IndexMode::Partitioned;
        binio::write_u32(w, u32::from(partitioned))?;
        binio::write_u32(w, index.nlist() as u32)?;
        for id in index.ids() {
            binio::write_string(w, id)?;
        }
        w.write_all(index.labels())?;
        binio::write_f32_slice(w, index.vectors())?;
        if partitioned {
            binio::write_f32_slice(w, index.centroids().expect("partitioned"))?;
            for a in index.assignments().expect("partitioned") {
                binio::write_u32(w, a)?;
            }
        }
        Ok(())
    })
}

/// Returns the index and the seed recorded in the header.
pub fn load_index(path: &Path) -> Result<(VectorIndex, u64), FormatError> {
    let mut r = io::BufReader::new(fs::File::open(path)?);
    binio::read_header(&mut r, INDEX_MAGIC)?;
    let seed = binio::read_u64(&mut r)?;
    let dim = binio::read_u32(&mut r)? as usize;
    let m = binio::read_u64(&mut r)? as usize;
    let partitioned = binio::read_u32(&mut r)? != 0;
    let nlist = binio::read_u32(&mut r)? as usize;
    let mut ids = Vec::with_capacity(m);
    for _ in 0..m {
        ids.push(binio::read_string(&mut r)?);
    }
    let mut labels = vec![0u8; m];
    io::Read::read_exact(&mut r, &mut labels)?;
    let vectors = binio::read_f32_vec(&mut r, m * dim)?;
    let parts = if partitioned {
        let centroids = binio::read_f32_vec(&mut r, nlist * dim)?;
        let mut assignments = Vec::with_capacity(m);
        for _ in 0..m {
            assignments.push(binio::read_u32(&mut r)?);
        }
        Some((centroids, assignments))
    } else {
        None
    };
    let index = VectorIndex::from_parts(dim, ids, labels, vectors, parts)
        .map_err(|e| FormatError::Corrupt(e.to_string()))?;
    Ok((index, seed))
}
