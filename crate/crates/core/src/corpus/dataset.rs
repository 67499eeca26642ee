//! Line-delimited JSON dataset files. See `docs/schema.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{chunk, toy_embed, Bag, Document, EmbeddingTable};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::training::Target;

/// One document per line: either raw `tokens` or a list of `chunks` ids
/// resolved against an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunks: Option<Vec<String>>,
    #[serde(alias = "labels")]
    pub label: Target,
}

/// How raw token records become instance embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub chunk_size: usize,
    pub dim: usize,
    pub seed: u64,
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |detail: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            detail,
        };
        let record: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        match (&record.tokens, &record.chunks) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(err(format!("record `{}` needs exactly one of `tokens`, `chunks`", record.id))),
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}

/// Chunks and embeds every record, keeping chunk order.
pub fn build_bags(
    records: &[Record],
    options: &EmbedOptions,
    embeddings: Option<&EmbeddingTable>,
) -> Result<Vec<Bag>> {
    records
        .iter()
        .map(|record| {
            let rows: Vec<Matrix> = match (&record.tokens, &record.chunks) {
                (Some(tokens), _) => {
                    let doc = Document {
                        id: record.id.clone(),
                        tokens: tokens.clone(),
                        label: record.label.clone(),
                    };
                    chunk(&doc, options.chunk_size)?
                        .iter()
                        .map(|c| toy_embed(c, options.dim, options.seed))
                        .collect::<Result<_>>()?
                }
                (None, Some(ids)) => {
                    let table = embeddings.ok_or_else(|| {
                        Error::InvalidConfig(format!("record `{}` references chunks but no embedding file was given", record.id))
                    })?;
                    if ids.is_empty() {
                        return Err(Error::EmptyDocument(record.id.clone()));
                    }
                    ids.iter()
                        .map(|id| {
                            let v = table.get(id).ok_or_else(|| {
                                Error::InvalidConfig(format!("record `{}`: unknown chunk `{id}`", record.id))
                            })?;
                            if v.len() != options.dim {
                                return Err(Error::shape(
                                    "build_bags",
                                    format!("chunk `{id}` has dim {}, model expects {}", v.len(), options.dim),
                                ));
                            }
                            Ok(Matrix::row_vector(v))
                        })
                        .collect::<Result<_>>()?
                }
                (None, None) => return Err(Error::EmptyDocument(record.id.clone())),
            };
            Ok(Bag {
                id: record.id.clone(),
                instances: Matrix::vconcat(&rows.iter().collect::<Vec<_>>())?,
                label: record.label.clone(),
                instance_labels: None,
            })
        })
        .collect()
}
