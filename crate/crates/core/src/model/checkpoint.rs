//! Plain-text checkpoint container.
//!
//! ```text
//! laficmil-checkpoint 1
//! config model_dim=8 head_count=2 head_dim=4 landmark_count=8 pinv_iterations=6 dconv_kernel=3 layers=1 max_bag=64 num_labels=1 task=binary
//! tensor category 1 8
//! <one line of space-separated values per row>
//! ...
//! end
//! ```
//!
//! Values use the shortest representation that round-trips exactly, so
//! save → load → save reproduces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::params::{ModelConfig, ModelParams, Task};
use crate::attention::AttentionConfig;
use crate::error::{Error, Result};

const MAGIC: &str = "laficmil-checkpoint 1";

pub fn to_string(cfg: &ModelConfig, params: &ModelParams) -> Result<String> {
    params.check(cfg)?;
    let a = &cfg.attention;
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(
        out,
        "config model_dim={} head_count={} head_dim={} landmark_count={} pinv_iterations={} dconv_kernel={} layers={} max_bag={} num_labels={} task={}",
        a.model_dim,
        a.head_count,
        a.head_dim,
        a.landmark_count,
        a.pinv_iterations,
        a.dconv_kernel,
        cfg.layers,
        cfg.max_bag,
        cfg.num_labels,
        cfg.task
    )
    .unwrap();
    for (name, m) in params.named_tensors() {
        writeln!(out, "tensor {name} {} {}", m.rows(), m.cols()).unwrap();
        for i in 0..m.rows() {
            let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    Ok(out)
}

pub fn from_str(text: &str, origin: &str) -> Result<(ModelConfig, ModelParams)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, detail: String| Error::Parse {
        path: origin.to_string(),
        line,
        detail,
    };
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
    };

    let (ln, magic) = next("header")?;
    if magic != MAGIC {
        return Err(err(ln, format!("expected `{MAGIC}`")));
    }
    let (ln, config_line) = next("config")?;
    let cfg = parse_config(config_line).map_err(|d| err(ln, d))?;
    cfg.validate().map_err(|e| err(ln, e.to_string()))?;

    let mut params = ModelParams::zeros(&cfg);
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (name, tensor) in names.iter().zip(params.tensors_mut()) {
        let (ln, header) = next("tensor header")?;
        let fields: Vec<&str> = header.split(' ').collect();
        let want = [
            "tensor".to_string(),
            name.clone(),
            tensor.rows().to_string(),
            tensor.cols().to_string(),
        ];
        if fields != want {
            return Err(err(ln, format!("expected `{}`", want.join(" "))));
        }
        for i in 0..tensor.rows() {
            let (ln, row) = next("tensor row")?;
            let values: Vec<f64> = row
                .split(' ')
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(ln, format!("{name}: {e}")))?;
            if values.len() != tensor.cols() {
                return Err(err(
                    ln,
                    format!("{name}: {} values, expected {}", values.len(), tensor.cols()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err(ln, format!("{name}: non-finite value")));
            }
            tensor.row_mut(i).copy_from_slice(&values);
        }
    }
    let (ln, end) = next("end")?;
    if end != "end" {
        return Err(err(ln, "expected `end`".into()));
    }
    Ok((cfg, params))
}

fn parse_config(line: &str) -> std::result::Result<ModelConfig, String> {
    let mut fields = line.split(' ');
    if fields.next() != Some("config") {
        return Err("expected `config` line".into());
    }
    let mut values = std::collections::BTreeMap::new();
    for field in fields {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| format!("malformed field `{field}`"))?;
        if values.insert(k, v).is_some() {
            return Err(format!("duplicate key `{k}`"));
        }
    }
    let mut take = |key: &str| values.remove(key).ok_or_else(|| format!("missing key `{key}`"));
    let mut num = |key: &str| -> std::result::Result<usize, String> {
        take(key)?
            .parse()
            .map_err(|e| format!("{key}: {e}"))
    };
    let attention = AttentionConfig {
        model_dim: num("model_dim")?,
        head_count: num("head_count")?,
        head_dim: num("head_dim")?,
        landmark_count: num("landmark_count")?,
        pinv_iterations: num("pinv_iterations")?,
        dconv_kernel: num("dconv_kernel")?,
    };
    let layers = num("layers")?;
    let max_bag = num("max_bag")?;
    let num_labels = num("num_labels")?;
    let task: Task = take("task")?.parse().map_err(|e: Error| e.to_string())?;
    if let Some(extra) = values.keys().next() {
        return Err(format!("unknown key `{extra}`"));
    }
    Ok(ModelConfig {
        attention,
        layers,
        max_bag,
        num_labels,
        task,
    })
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save(path: &Path, cfg: &ModelConfig, params: &ModelParams) -> Result<()> {
    let text = to_string(cfg, params)?;
    write_atomic(path, text.as_bytes())
}

pub fn load(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text, &path.display().to_string())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
