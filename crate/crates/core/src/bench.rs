//! Time and peak-memory comparison of exact and Nyström attention.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::attention::{exact_attention, nystrom_attention, AttentionConfig};
use crate::error::{Error, Result};
use crate::linalg::MemoryProbe;
use crate::verify::gaussian_inputs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchConfig {
    pub landmarks: usize,
    pub head_dim: usize,
    pub repetitions: usize,
    /// Largest `n` for which the exact oracle still runs.
    pub exact_cap: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            landmarks: 8,
            head_dim: 16,
            repetitions: 3,
            exact_cap: 4096,
            seed: 0,
        }
    }
}

/// One table row; exact columns are `None` beyond the cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub exact_ms: Option<f64>,
    pub nystrom_ms: f64,
    pub exact_peak_elements: Option<usize>,
    pub nystrom_peak_elements: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Median wall time in milliseconds and peak live elements of `f`.
fn measure(repetitions: usize, mut f: impl FnMut() -> Result<()>) -> Result<(f64, usize)> {
    let mut times = Vec::with_capacity(repetitions);
    let mut peak = 0;
    for _ in 0..repetitions {
        let probe = MemoryProbe::start();
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        peak = peak.max(probe.peak_elements());
    }
    Ok((median(times), peak))
}

pub fn run_bench(ns: &[usize], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if ns.is_empty() {
        return Err(Error::InvalidConfig("bench needs at least one n".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::InvalidConfig("n values must be positive and strictly ascending".into()));
    }
    if cfg.repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
    }
    let attention = AttentionConfig::new(cfg.head_dim, 1)?.with_landmarks(cfg.landmarks);
    attention.validate()?;
    ns.iter()
        .map(|&n| {
            let (q, k, v) = gaussian_inputs(n, cfg.head_dim, cfg.seed);
            let (nystrom_ms, nystrom_peak_elements) =
                measure(cfg.repetitions, || nystrom_attention(&q, &k, &v, &attention).map(drop))?;
            let exact = if n <= cfg.exact_cap {
                Some(measure(cfg.repetitions, || exact_attention(&q, &k, &v).map(drop))?)
            } else {
                None
            };
            Ok(BenchRow {
                n,
                exact_ms: exact.map(|e| e.0),
                nystrom_ms,
                exact_peak_elements: exact.map(|e| e.1),
                nystrom_peak_elements,
            })
        })
        .collect()
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:>8} {:>12} {:>12} {:>14} {:>14}\n",
        "n", "exact_ms", "nystrom_ms", "exact_peak", "nystrom_peak"
    );
    for r in rows {
        let exact_ms = r.exact_ms.map_or("skipped".into(), |t| format!("{t:.3}"));
        let exact_peak = r.exact_peak_elements.map_or("skipped".into(), |p| p.to_string());
        writeln!(
            out,
            "{:>8} {:>12} {:>12.3} {:>14} {:>14}",
            r.n, exact_ms, r.nystrom_ms, exact_peak, r.nystrom_peak_elements
        )
        .unwrap();
    }
    out
}

/// One JSON object per row.
pub fn format_records(rows: &[BenchRow]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("plain data") + "\n")
        .collect()
}
