//! Versioned binary serialization of encoder parameters, vocabulary
//! included, so a params file is all inference needs.

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use evidexr_core::align::{EncoderConfig, EncoderParams, ProjectionHead, Vocab};

use crate::binio::{self, atomic_write, FormatError};

pub const PARAMS_MAGIC: &[u8; 8] = b"EVXPAR\0\0";

pub fn save_params(params: &EncoderParams, seed: u64, path: &Path) -> Result<(), FormatError> {
    atomic_write(path, |w| {
        binio::write_header(w, PARAMS_MAGIC)?;
        binio::write_u64(w, seed)?;
        let c = &params.config;
        for v in [
            c.dim,
            c.channels,
            c.samples,
            c.n_filters,
            c.kernel_len,
            c.pool,
            c.hidden,
            c.text_embed_dim,
            c.max_tokens,
        ] {
            binio::write_u32(w, v as u32)?;
        }
        binio::write_f64(w, c.dropout)?;
        binio::write_f64(w, params.log_tau)?;
        binio::write_u32(w, params.vocab.len() as u32)?;
        for word in params.vocab.words() {
            binio::write_string(w, word)?;
        }
        binio::write_f64_tensor(w, &params.temporal)?;
        binio::write_f64_tensor(w, &params.spatial)?;
        write_head(w, &params.eeg_proj)?;
        binio::write_f64_tensor(w, &params.token_table)?;
        write_head(w, &params.text_proj)?;
        Ok(())
    })
}

/// Returns the parameters and the training seed recorded in the header.
pub fn load_params(path: &Path) -> Result<(EncoderParams, u64), FormatError> {
    let mut r = io::BufReader::new(fs::File::open(path)?);
    binio::read_header(&mut r, PARAMS_MAGIC)?;
    let seed = binio::read_u64(&mut r)?;
    let mut dims = [0usize; 9];
    for d in dims.iter_mut() {
        *d = binio::read_u32(&mut r)? as usize;
    }
    let dropout = binio::read_f64(&mut r)?;
    let config = EncoderConfig {
        dim: dims[0],
        channels: dims[1],
        samples: dims[2],
        n_filters: dims[3],
        kernel_len: dims[4],
        pool: dims[5],
        hidden: dims[6],
        text_embed_dim: dims[7],
        max_tokens: dims[8],
        dropout,
    };
    let log_tau = binio::read_f64(&mut r)?;
    let n_words = binio::read_u32(&mut r)? as usize;
    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        words.push(binio::read_string(&mut r)?);
    }
    let vocab = Vocab::from_words(words);
    let temporal = binio::read_f64_tensor(&mut r)?;
    let spatial = binio::read_f64_tensor(&mut r)?;
    let eeg_proj = read_head(&mut r)?;
    let token_table = binio::read_f64_tensor(&mut r)?;
    let text_proj = read_head(&mut r)?;

    let params = EncoderParams {
        config,
        temporal,
        spatial,
        eeg_proj,
        token_table,
        vocab,
        text_proj,
        log_tau,
    };
    check(&params)?;
    Ok((params, seed))
}

fn write_head(w: &mut impl io::Write, h: &ProjectionHead) -> Result<(), FormatError> {
    for dim in [h.in_dim, h.hidden, h.out_dim] {
        binio::write_u32(w, dim as u32)?;
    }
    for t in [
        &h.w1, &h.b1, &h.gamma, &h.beta, &h.run_mean, &h.run_var, &h.w2, &h.b2,
    ] {
        binio::write_f64_tensor(w, t)?;
    }
    Ok(())
}

fn read_head(r: &mut impl Read) -> Result<ProjectionHead, FormatError> {
    let in_dim = binio::read_u32(r)? as usize;
    let hidden = binio::read_u32(r)? as usize;
    let out_dim = binio::read_u32(r)? as usize;
    Ok(ProjectionHead {
        in_dim,
        hidden,
        out_dim,
        w1: binio::read_f64_tensor(r)?,
        b1: binio::read_f64_tensor(r)?,
        gamma: binio::read_f64_tensor(r)?,
        beta: binio::read_f64_tensor(r)?,
        run_mean: binio::read_f64_tensor(r)?,
        run_var: binio::read_f64_tensor(r)?,
        w2: binio::read_f64_tensor(r)?,
        b2: binio::read_f64_tensor(r)?,
    })
}

fn check(p: &EncoderParams) -> Result<(), FormatError> {
    let c = &p.config;
    let bad = |what: &str| Err(FormatError::Corrupt(format!("tensor shape mismatch: {what}")));
    if p.temporal.len() != c.n_filters * c.kernel_len {
        return bad("temporal");
    }
    if p.spatial.len() != c.n_filters * c.channels {
        return bad("spatial");
    }
    if p.eeg_proj.in_dim != c.eeg_feature_dim() || p.eeg_proj.out_dim != c.dim {
        return bad("eeg projection");
    }
    if p.token_table.len() != p.vocab.table_rows() * c.text_embed_dim {
        return bad("token table");
    }
    if p.text_proj.in_dim != c.text_embed_dim || p.text_proj.out_dim != c.dim {
        return bad("text projection");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn params_round_trip_is_exact() {
        let cfg = EncoderConfig {
            dim: 8,
            channels: 3,
            samples: 40,
            n_filters: 2,
            kernel_len: 5,
            pool: 3,
            hidden: 8,
            text_embed_dim: 8,
            max_tokens: 6,
            dropout: 0.1,
        };
        let vocab = Vocab::build(["alpha beta gamma"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = EncoderParams::init(cfg, vocab, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        save_params(&params, 42, &path).unwrap();
        let (loaded, seed) = load_params(&path).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(loaded, params);
    }
}
