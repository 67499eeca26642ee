//! Nyström approximation of softmax attention.
//!
//! With landmarks `Q̃ = sMEANS(Q)` and `K̃ = sMEANS(K)`:
//!
//! ```text
//! Ŝ V = softmax(Q K̃ᵀ/√d) · Z* · softmax(Q̃ Kᵀ/√d) · V,   Z* ≈ softmax(Q̃ K̃ᵀ/√d)⁺
//! ```
//!
//! The product is evaluated right to left, so the largest intermediates are
//! the two `n × m` kernels and nothing of size `n × n` is ever formed.

use super::landmarks::{segment_mean_backward, segment_mean_landmarks};
use crate::error::{Error, Result};
use crate::linalg::{pinv_backward, pinv_iterative_traced, softmax_rows, softmax_rows_backward, Matrix, PinvTrace};

/// Intermediates of one Nyström evaluation.
#[derive(Debug, Clone)]
pub struct NystromCache {
    scale: f64,
    q_landmarks: Matrix,
    k_landmarks: Matrix,
    /// `softmax(Q K̃ᵀ s)`, n × m
    left: Matrix,
    /// `softmax(Q̃ K̃ᵀ s)`, m × m
    core: Matrix,
    /// `softmax(Q̃ Kᵀ s)`, m × n
    right: Matrix,
    pinv: PinvTrace,
    /// `right · V`, m × d_v
    right_v: Matrix,
    /// `Z* · right · V`, m × d_v
    core_right_v: Matrix,
}

impl NystromCache {
    pub fn landmark_count(&self) -> usize {
        self.core.rows()
    }

    pub fn pinv_result(&self) -> &Matrix {
        self.pinv.result()
    }

    /// Materializes `Ŝ` (n × n). Test and diagnostic use only.
    pub fn materialize_scores(&self) -> Result<Matrix> {
        self.left.matmul(self.pinv.result())?.matmul(&self.right)
    }
}

pub(crate) fn check_shapes(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<()> {
    if q.shape() != k.shape() || v.rows() != q.rows() || q.rows() == 0 {
        return Err(Error::shape(
            "attention",
            format!(
                "q {:?}, k {:?}, v {:?}",
                q.shape(),
                k.shape(),
                v.shape()
            ),
        ));
    }
    Ok(())
}

/// Forward pass; `landmarks` is clamped to the row count.
pub fn nystrom_forward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    landmarks: usize,
    pinv_iterations: usize,
) -> Result<(Matrix, NystromCache)> {
    check_shapes(q, k, v)?;
    let m = landmarks.min(q.rows());
    let scale = 1.0 / (q.cols() as f64).sqrt();

    let q_landmarks = segment_mean_landmarks(q, m)?;
    let k_landmarks = segment_mean_landmarks(k, m)?;

    let right = softmax_rows(&q_landmarks.matmul_t(k)?.scale(scale));
    let right_v = right.matmul(v)?;
    let core = softmax_rows(&q_landmarks.matmul_t(&k_landmarks)?.scale(scale));
    let (_, pinv) = pinv_iterative_traced(&core, pinv_iterations)?;
    let core_right_v = pinv.result().matmul(&right_v)?;
    let left = softmax_rows(&q.matmul_t(&k_landmarks)?.scale(scale));
    let out = left.matmul(&core_right_v)?;

    Ok((
        out,
        NystromCache {
            scale,
            q_landmarks,
            k_landmarks,
            left,
            core,
            right,
            pinv,
            right_v,
            core_right_v,
        },
    ))
}

/// Returns `(∂L/∂q, ∂L/∂k, ∂L/∂v)`.
pub fn nystrom_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cache: &NystromCache,
    d_out: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    let n = q.rows();
    let s = cache.scale;
    let z = cache.pinv.result();

    // out = left · core_right_v
    let d_left = d_out.matmul_t(&cache.core_right_v)?;
    let d_crv = cache.left.t_matmul(d_out)?;
    // core_right_v = Z · right_v
    let d_z = d_crv.matmul_t(&cache.right_v)?;
    let d_right_v = z.t_matmul(&d_crv)?;
    // right_v = right · V
    let d_right = d_right_v.matmul_t(v)?;
    let d_v = cache.right.t_matmul(&d_right_v)?;
    let d_core = pinv_backward(&cache.core, &cache.pinv, &d_z)?;

    let d_left_logits = softmax_rows_backward(&cache.left, &d_left).scale(s);
    let d_core_logits = softmax_rows_backward(&cache.core, &d_core).scale(s);
    let d_right_logits = softmax_rows_backward(&cache.right, &d_right).scale(s);

    // left logits = Q K̃ᵀ
    let mut d_q = d_left_logits.matmul(&cache.k_landmarks)?;
    let mut d_k_landmarks = d_left_logits.t_matmul(q)?;
    // core logits = Q̃ K̃ᵀ
    let mut d_q_landmarks = d_core_logits.matmul(&cache.k_landmarks)?;
    d_k_landmarks.add_assign(&d_core_logits.t_matmul(&cache.q_landmarks)?)?;
    // right logits = Q̃ Kᵀ
    d_q_landmarks.add_assign(&d_right_logits.matmul(k)?)?;
    let mut d_k = d_right_logits.t_matmul(&cache.q_landmarks)?;

    d_q.add_assign(&segment_mean_backward(&d_q_landmarks, n)?)?;
    d_k.add_assign(&segment_mean_backward(&d_k_landmarks, n)?)?;
    Ok((d_q, d_k, d_v))
}

/// Single-head Nyström attention with `min(cfg.landmark_count, n)` landmarks.
pub fn nystrom_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cfg: &super::AttentionConfig,
) -> Result<Matrix> {
    nystrom_forward(q, k, v, cfg.landmark_count, cfg.pinv_iterations).map(|(out, _)| out)
}
