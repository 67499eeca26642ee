//! Straight-line scalar reimplementation of the model, written with plain
//! loops over `Vec<Vec<f64>>` so it shares no code with the library kernels.

#![allow(dead_code)]

use laficmil::attention::AttentionConfig;
use laficmil::linalg::Matrix;
use laficmil::model::{ModelConfig, ModelParams};

pub type Grid = Vec<Vec<f64>>;

pub fn grid(m: &Matrix) -> Grid {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn mm(a: &Grid, b: &Grid) -> Grid {
    let (n, k, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Grid) -> Grid {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn softmax(a: &Grid) -> Grid {
    a.iter()
        .map(|r| {
            let max = r.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = r.iter().map(|x| (x - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        })
        .collect()
}

pub fn scaled(a: &Grid, c: f64) -> Grid {
    a.iter().map(|r| r.iter().map(|x| x * c).collect()).collect()
}

pub fn layer_norm(a: &Grid, gamma: &[f64], beta: &[f64]) -> Grid {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-5).sqrt();
            r.iter()
                .enumerate()
                .map(|(j, x)| (x - mean) * inv * gamma[j] + beta[j])
                .collect()
        })
        .collect()
}

pub fn segment_means(a: &Grid, m: usize) -> Grid {
    let n = a.len();
    let mut out = Vec::new();
    let mut start = 0;
    for s in 0..m {
        let len = n / m + usize::from(s < n % m);
        let mut mean = vec![0.0; a[0].len()];
        for row in &a[start..start + len] {
            for (o, x) in mean.iter_mut().zip(row) {
                *o += x / len as f64;
            }
        }
        out.push(mean);
        start += len;
    }
    out
}

pub fn pinv(a: &Grid, iterations: usize) -> Grid {
    let n = a.len();
    let col_max = (0..n).map(|j| (0..n).map(|i| a[i][j].abs()).sum::<f64>()).fold(0.0, f64::max);
    let row_max = a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut z = scaled(&transpose(a), 1.0 / (col_max * row_max));
    let shift = |c: f64, x: &Grid| -> Grid {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { c - x[i][j] } else { -x[i][j] }).collect())
            .collect()
    };
    for _ in 0..iterations {
        let az = mm(a, &z);
        let inner = mm(&az, &shift(7.0, &az));
        let middle = mm(&az, &shift(15.0, &inner));
        z = scaled(&mm(&z, &shift(13.0, &middle)), 0.25);
    }
    z
}

pub fn nystrom(q: &Grid, k: &Grid, v: &Grid, landmarks: usize, iterations: usize) -> Grid {
    let m = landmarks.min(q.len());
    let s = 1.0 / (q[0].len() as f64).sqrt();
    let (ql, kl) = (segment_means(q, m), segment_means(k, m));
    let left = softmax(&scaled(&mm(q, &transpose(&kl)), s));
    let core = softmax(&scaled(&mm(&ql, &transpose(&kl)), s));
    let right = softmax(&scaled(&mm(&ql, &transpose(k)), s));
    mm(&mm(&left, &pinv(&core, iterations)), &mm(&right, v))
}

pub fn dconv(v: &Grid, kernel: &Grid) -> Grid {
    let n = v.len();
    let half = kernel[0].len() as isize / 2;
    (0..n)
        .map(|t| {
            (0..v[0].len())
                .map(|c| {
                    let mut acc = 0.0;
                    for (k, w) in kernel[c].iter().enumerate() {
                        let src = t as isize + k as isize - half;
                        if (0..n as isize).contains(&src) {
                            acc += w * v[src as usize][c];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn multi_head(x: &Grid, weights: &laficmil::attention::AttentionWeights, cfg: &AttentionConfig) -> Grid {
    let mut concat: Grid = vec![Vec::new(); x.len()];
    for head in &weights.heads {
        let q = mm(x, &grid(&head.w_q));
        let k = mm(x, &grid(&head.w_k));
        let v = mm(x, &grid(&head.w_v));
        let att = nystrom(&q, &k, &v, cfg.landmark_count, cfg.pinv_iterations);
        let skip = dconv(&v, &grid(&head.dconv));
        for (row, (a, b)) in concat.iter_mut().zip(att.iter().zip(&skip)) {
            row.extend(a.iter().zip(b).map(|(x, y)| x + y));
        }
    }
    mm(&concat, &grid(&weights.w_o))
}

/// Logits and the final `X^L` for one bag.
pub fn model_forward(instances: &Grid, params: &ModelParams, cfg: &ModelConfig) -> (Vec<f64>, Grid) {
    let pos = grid(&params.pos_embedding);
    let mut x: Grid = std::iter::once(params.category.row(0).to_vec())
        .chain(instances.iter().cloned())
        .enumerate()
        .map(|(i, r)| r.iter().zip(&pos[i]).map(|(a, b)| a + b).collect())
        .collect();
    for block in &params.blocks {
        let normed = layer_norm(&x, block.ln_gamma.data(), block.ln_beta.data());
        let delta = multi_head(&normed, &block.attention, &cfg.attention);
        for (r, d) in x.iter_mut().zip(&delta) {
            for (a, b) in r.iter_mut().zip(d) {
                *a += b;
            }
        }
    }
    let head = layer_norm(&x[..1].to_vec(), params.final_gamma.data(), params.final_beta.data());
    let logits: Vec<f64> = mm(&head, &grid(&params.mlp_w))[0]
        .iter()
        .zip(params.mlp_b.data())
        .map(|(a, b)| a + b)
        .collect();
    (logits, x)
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(1e-12, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
