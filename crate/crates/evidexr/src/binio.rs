//! Little-endian binary primitives and atomic file writes shared by the
//! container, params, and index formats.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt file: {0}")]
    Corrupt(String),
}

pub fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f32(w: &mut impl Write, v: f32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_string(w: &mut impl Write, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn write_f32_slice(w: &mut impl Write, data: &[f32]) -> io::Result<()> {
    for &v in data {
        write_f32(w, v)?;
    }
    Ok(())
}

pub fn write_f64_tensor(w: &mut impl Write, data: &[f64]) -> io::Result<()> {
    write_u64(w, data.len() as u64)?;
    for &v in data {
        write_f64(w, v)?;
    }
    Ok(())
}

pub fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f32(r: &mut impl Read) -> io::Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_string(r: &mut impl Read) -> Result<String, FormatError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| FormatError::Corrupt(e.to_string()))
}

pub fn read_f32_vec(r: &mut impl Read, len: usize) -> io::Result<Vec<f32>> {
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_f64_tensor(r: &mut impl Read) -> Result<Vec<f64>, FormatError> {
    let len = read_u64(r)? as usize;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

/// 16-byte header: 8-byte magic, u32 version, u32 reserved.
pub fn write_header(w: &mut impl Write, magic: &[u8; 8]) -> io::Result<()> {
    w.write_all(magic)?;
    write_u32(w, FORMAT_VERSION)?;
    write_u32(w, 0)
}

pub fn read_header(r: &mut impl Read, magic: &'static [u8; 8]) -> Result<(), FormatError> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(FormatError::BadMagic {
            expected: std::str::from_utf8(magic).unwrap_or("?"),
        });
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    read_u32(r)?; // reserved
    Ok(())
}

/// Writes through a temp file in the target directory, then renames into
/// place, so partially written outputs are never observed.
pub fn atomic_write(
    path: &Path,
    write: impl FnOnce(&mut io::BufWriter<fs::File>) -> Result<(), FormatError>,
) -> Result<(), FormatError> {
    let tmp = path.with_extension(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{ext}.tmp"),
        None => "tmp".to_string(),
    });
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file = fs::File::create(&tmp)?;
    let mut w = io::BufWriter::new(file);
    match write(&mut w).and_then(|()| w.flush().map_err(FormatError::Io)) {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip_and_magic_check() {
        const MAGIC: &[u8; 8] = b"EVXTST\0\0";
        let mut buf = Vec::new();
        write_header(&mut buf, MAGIC).unwrap();
        assert_eq!(buf.len(), 16);
        read_header(&mut buf.as_slice(), MAGIC).unwrap();
        assert!(matches!(
            read_header(&mut buf.as_slice(), b"EVXBAD\0\0"),
            Err(FormatError::BadMagic { .. })
        ));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.bin");
        atomic_write(&path, |w| {
            write_u32(w, 7)?;
            Ok(())
        })
        .unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), vec![7, 0, 0, 0]);
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(leftovers.len(), 1);
    }
}
