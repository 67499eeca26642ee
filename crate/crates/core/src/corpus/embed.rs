use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type EmbeddingTable = BTreeMap<String, Vec<f64>>;

fn token_rng(seed: u64, token: u32) -> ChaCha8Rng {
    // the ChaCha stream is specified bit-for-bit, so the vectors are
    // identical on every platform
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&token.to_le_bytes());
    key[12..16].copy_from_slice(b"tokv");
    ChaCha8Rng::from_seed(key)
}

/// Deterministic chunk embedding: mean of per-token pseudorandom vectors in
/// `[-1, 1)^d`, rescaled to unit RMS.
pub fn toy_embed(chunk: &[u32], d: usize, seed: u64) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
    }
    let mut acc = vec![0.0; d];
    for token in chunk {
        let mut rng = token_rng(seed, *token);
        for a in acc.iter_mut() {
            *a += rng.random_range(-1.0..1.0);
        }
    }
    let count = chunk.len().max(1) as f64;
    for a in acc.iter_mut() {
        *a /= count;
    }
    let rms = (acc.iter().map(|v| v * v).sum::<f64>() / d as f64).sqrt();
    if rms > 0.0 {
        for a in acc.iter_mut() {
            *a /= rms;
        }
    }
    Ok(Matrix::row_vector(&acc))
}

/// Reads `dim <d>` followed by `<chunk_id> <v1> … <vd>` records.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, &path.display().to_string())
}

pub fn parse_embeddings(text: &str, origin: &str) -> Result<EmbeddingTable> {
    let err = |line: usize, detail: String| Error::Parse {
        path: origin.to_string(),
        line,
        detail,
    };
    let mut table = EmbeddingTable::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let Some((ln, header)) = lines.next() else {
        return Ok(table);
    };
    let dim: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["dim", d] => d
            .parse()
            .map_err(|e| err(ln, format!("bad dimension `{d}`: {e}")))?,
        _ => return Err(err(ln, "expected header `dim <d>`".into())),
    };
    if dim == 0 {
        return Err(err(ln, "dimension must be >= 1".into()));
    }
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-empty line");
        let values: Vec<f64> = fields
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| err(ln, format!("record `{id}`: bad value `{t}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(err(
                ln,
                format!("record `{id}` has {} values, header declares {dim}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(ln, format!("record `{id}` contains a non-finite value")));
        }
        if table.insert(id.to_string(), values).is_some() {
            return Err(err(ln, format!("duplicate record `{id}`")));
        }
    }
    Ok(table)
}

pub fn format_embeddings(table: &EmbeddingTable) -> Result<String> {
    let mut out = String::new();
    let Some(dim) = table.values().next().map(Vec::len) else {
        return Ok(out);
    };
    writeln!(out, "dim {dim}").unwrap();
    for (id, values) in table {
        if values.len() != dim {
            return Err(Error::shape(
                "save_embeddings",
                format!("record `{id}` has {} values, expected {dim}", values.len()),
            ));
        }
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("chunk id `{id}` must be non-empty without whitespace")));
        }
        out.push_str(id);
        for v in values {
            write!(out, " {v:?}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let text = format_embeddings(table)?;
    crate::model::checkpoint::write_atomic(path, text.as_bytes())
}
