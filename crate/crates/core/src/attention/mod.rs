//! Landmark-based multi-head attention.

mod dconv;
mod landmarks;
mod nystrom;

pub use dconv::depthwise_conv_skip;
pub(crate) use dconv::depthwise_conv_backward;
pub use landmarks::{segment_bounds, segment_mean_landmarks};
pub use nystrom::{nystrom_attention, nystrom_backward, nystrom_forward, NystromCache};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{softmax_rows_in_place, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub model_dim: usize,
    pub head_count: usize,
    pub head_dim: usize,
    pub landmark_count: usize,
    pub pinv_iterations: usize,
    pub dconv_kernel: usize,
}

impl AttentionConfig {
    /// `head_dim` is derived as `model_dim / head_count`; the remaining fields
    /// take their defaults (8 landmarks, 6 pseudoinverse iterations, kernel 3).
    pub fn new(model_dim: usize, head_count: usize) -> Result<Self> {
        if head_count == 0 || !model_dim.is_multiple_of(head_count) {
            return Err(Error::InvalidConfig(format!(
                "model_dim {model_dim} is not divisible by {head_count} heads"
            )));
        }
        let cfg = Self {
            model_dim,
            head_count,
            head_dim: model_dim / head_count,
            landmark_count: 8,
            pinv_iterations: 6,
            dconv_kernel: 3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_landmarks(mut self, landmark_count: usize) -> Self {
        self.landmark_count = landmark_count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.head_count == 0 || self.head_dim == 0 {
            return fail("head_count and head_dim must be positive".into());
        }
        if self.model_dim != self.head_count * self.head_dim {
            return fail(format!(
                "model_dim {} != {} heads x {}",
                self.model_dim, self.head_count, self.head_dim
            ));
        }
        if self.landmark_count == 0 {
            return fail("landmark_count must be >= 1".into());
        }
        if self.pinv_iterations == 0 {
            return fail("pinv_iterations must be >= 1".into());
        }
        if self.dconv_kernel.is_multiple_of(2) {
            return fail(format!("dconv_kernel must be odd, got {}", self.dconv_kernel));
        }
        Ok(())
    }
}

/// Projections and depth-wise kernel of a single head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    /// `head_dim × dconv_kernel`
    pub dconv: Matrix,
}

/// All heads of one block plus the shared output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub heads: Vec<HeadWeights>,
    /// `(head_count · head_dim) × model_dim`
    pub w_o: Matrix,
}

impl AttentionWeights {
    pub fn zeros(cfg: &AttentionConfig) -> Self {
        let (d, dh) = (cfg.model_dim, cfg.head_dim);
        Self {
            heads: (0..cfg.head_count)
                .map(|_| HeadWeights {
                    w_q: Matrix::zeros(d, dh),
                    w_k: Matrix::zeros(d, dh),
                    w_v: Matrix::zeros(d, dh),
                    dconv: Matrix::zeros(dh, cfg.dconv_kernel),
                })
                .collect(),
            w_o: Matrix::zeros(cfg.head_count * dh, d),
        }
    }

    /// Projections drawn from `N(0, 1/√d)`; depth-wise kernels start at zero.
    pub fn init<R: Rng + ?Sized>(cfg: &AttentionConfig, rng: &mut R) -> Self {
        let (d, dh) = (cfg.model_dim, cfg.head_dim);
        let std = 1.0 / (d as f64).sqrt();
        let heads = (0..cfg.head_count)
            .map(|_| HeadWeights {
                w_q: Matrix::random_normal(d, dh, std, rng),
                w_k: Matrix::random_normal(d, dh, std, rng),
                w_v: Matrix::random_normal(d, dh, std, rng),
                dconv: Matrix::zeros(dh, cfg.dconv_kernel),
            })
            .collect();
        Self {
            heads,
            w_o: Matrix::random_normal(cfg.head_count * dh, d, std, rng),
        }
    }

    pub fn check(&self, cfg: &AttentionConfig) -> Result<()> {
        let (d, dh) = (cfg.model_dim, cfg.head_dim);
        let ok = self.heads.len() == cfg.head_count
            && self.w_o.shape() == (cfg.head_count * dh, d)
            && self.heads.iter().all(|h| {
                h.w_q.shape() == (d, dh)
                    && h.w_k.shape() == (d, dh)
                    && h.w_v.shape() == (d, dh)
                    && h.dconv.shape() == (dh, cfg.dconv_kernel)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "multi_head_attention",
                "weights inconsistent with attention config",
            ))
        }
    }
}

/// `softmax(q kᵀ/√d_q) v`, materializing the full `n × n` score matrix.
pub fn exact_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    nystrom::check_shapes(q, k, v)?;
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut scores = q.matmul_t(k)?;
    for s in scores.data_mut() {
        *s *= scale;
    }
    softmax_rows_in_place(&mut scores);
    scores.matmul(v)
}

#[derive(Debug, Clone)]
struct HeadCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    nystrom: NystromCache,
}

/// Intermediates of [`multi_head_forward`] needed by [`multi_head_backward`].
#[derive(Debug, Clone)]
pub struct MultiHeadCache {
    heads: Vec<HeadCache>,
    concat: Matrix,
}

impl MultiHeadCache {
    pub fn head_nystrom(&self, head: usize) -> &NystromCache {
        &self.heads[head].nystrom
    }
}

/// Gradients of one attention block's weights.
pub type AttentionGrads = AttentionWeights;

pub fn multi_head_forward(
    x: &Matrix,
    weights: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<(Matrix, MultiHeadCache)> {
    cfg.validate()?;
    weights.check(cfg)?;
    if x.cols() != cfg.model_dim {
        return Err(Error::shape(
            "multi_head_attention",
            format!("input has {} columns, model_dim is {}", x.cols(), cfg.model_dim),
        ));
    }
    let mut outputs = Vec::with_capacity(cfg.head_count);
    let mut heads = Vec::with_capacity(cfg.head_count);
    for head in &weights.heads {
        let q = x.matmul(&head.w_q)?;
        let k = x.matmul(&head.w_k)?;
        let v = x.matmul(&head.w_v)?;
        let (mut out, nystrom) =
            nystrom_forward(&q, &k, &v, cfg.landmark_count, cfg.pinv_iterations)?;
        out.add_assign(&depthwise_conv_skip(&v, &head.dconv, cfg.dconv_kernel)?)?;
        outputs.push(out);
        heads.push(HeadCache { q, k, v, nystrom });
    }
    let concat = Matrix::hconcat(&outputs)?;
    let out = concat.matmul(&weights.w_o)?;
    Ok((out, MultiHeadCache { heads, concat }))
}

/// Multi-head attention: per head Nyström attention plus the depth-wise skip
/// on that head's values, concatenated and projected by `w_o`.
pub fn multi_head_attention(
    x: &Matrix,
    weights: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<Matrix> {
    multi_head_forward(x, weights, cfg).map(|(out, _)| out)
}

/// Returns `∂L/∂x` and the weight gradients.
pub fn multi_head_backward(
    x: &Matrix,
    weights: &AttentionWeights,
    cfg: &AttentionConfig,
    cache: &MultiHeadCache,
    d_out: &Matrix,
) -> Result<(Matrix, AttentionGrads)> {
    let dh = cfg.head_dim;
    let d_concat = d_out.matmul_t(&weights.w_o)?;
    let mut grads = AttentionWeights::zeros(cfg);
    grads.w_o = cache.concat.t_matmul(d_out)?;
    let mut d_x = Matrix::zeros(x.rows(), x.cols());
    for (h, (head, hc)) in weights.heads.iter().zip(&cache.heads).enumerate() {
        let d_head = d_concat.slice_cols(h * dh, (h + 1) * dh);
        let (d_q, d_k, mut d_v) = nystrom_backward(&hc.q, &hc.k, &hc.v, &hc.nystrom, &d_head)?;
        let (d_v_conv, d_kernel) = depthwise_conv_backward(&hc.v, &head.dconv, &d_head)?;
        d_v.add_assign(&d_v_conv)?;

        let g = &mut grads.heads[h];
        g.w_q = x.t_matmul(&d_q)?;
        g.w_k = x.t_matmul(&d_k)?;
        g.w_v = x.t_matmul(&d_v)?;
        g.dconv = d_kernel;
        d_x.add_assign(&d_q.matmul_t(&head.w_q)?)?;
        d_x.add_assign(&d_k.matmul_t(&head.w_k)?)?;
        d_x.add_assign(&d_v.matmul_t(&head.w_v)?)?;
    }
    Ok((d_x, grads))
}
