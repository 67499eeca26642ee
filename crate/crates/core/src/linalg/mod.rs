//! Dense kernels: products, row softmax, layer normalization and the
//! iterative pseudoinverse, each paired with its reverse-mode derivative.

mod matrix;
mod pinv;
mod probe;

pub use matrix::Matrix;
pub(crate) use matrix::dot;
pub use pinv::{pinv_backward, pinv_iterative, pinv_iterative_traced, PinvReport, PinvTrace};
pub use probe::MemoryProbe;

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    softmax_rows_in_place(&mut out);
    out
}

pub fn softmax_rows_in_place(x: &mut Matrix) {
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

/// Given `y = softmax_rows(x)` and `∂L/∂y`, returns `∂L/∂x`.
pub fn softmax_rows_backward(y: &Matrix, d_y: &Matrix) -> Matrix {
    let mut d_x = Matrix::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        let (yr, gr) = (y.row(i), d_y.row(i));
        let inner = dot(yr, gr);
        for ((o, yv), gv) in d_x.row_mut(i).iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - inner);
        }
    }
    d_x
}

/// Normalized rows and inverse standard deviations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Matrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Matrix> {
    layer_norm_forward(x, gamma, beta, eps).map(|(y, _)| y)
}

pub fn layer_norm_forward(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Matrix, LayerNormCache)> {
    if gamma.len() != x.cols() || beta.len() != x.cols() {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "gamma/beta of length {}/{} for {} columns",
                gamma.len(),
                beta.len(),
                x.cols()
            ),
        ));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let cols = x.cols() as f64;
    let mut normalized = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = normalized.row_mut(i);
        let mean = row.iter().sum::<f64>() / cols;
        for v in row.iter_mut() {
            *v -= mean;
        }
        let var = row.iter().map(|v| v * v).sum::<f64>() / cols;
        let s = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v *= s;
        }
        inv_std.push(s);
    }
    let mut y = normalized.clone();
    for i in 0..y.rows() {
        for ((v, g), b) in y.row_mut(i).iter_mut().zip(gamma).zip(beta) {
            *v = *v * g + b;
        }
    }
    Ok((y, LayerNormCache { normalized, inv_std }))
}

/// Returns `(∂L/∂x, ∂L/∂gamma, ∂L/∂beta)`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    d_y: &Matrix,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let xhat = &cache.normalized;
    let cols = xhat.cols();
    let mut d_gamma = vec![0.0; cols];
    let mut d_beta = vec![0.0; cols];
    let mut d_x = Matrix::zeros(xhat.rows(), cols);
    let mut d_xhat = vec![0.0; cols];
    for i in 0..xhat.rows() {
        let (xr, gr) = (xhat.row(i), d_y.row(i));
        for j in 0..cols {
            d_gamma[j] += gr[j] * xr[j];
            d_beta[j] += gr[j];
            d_xhat[j] = gr[j] * gamma[j];
        }
        let mean_d = d_xhat.iter().sum::<f64>() / cols as f64;
        let mean_dx = dot(&d_xhat, xr) / cols as f64;
        let s = cache.inv_std[i];
        for (j, o) in d_x.row_mut(i).iter_mut().enumerate() {
            *o = s * (d_xhat[j] - mean_d - xr[j] * mean_dx);
        }
    }
    (d_x, d_gamma, d_beta)
}

/// `‖a − b‖_F / ‖b‖_F`
pub fn frobenius_rel_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape(
            "frobenius_rel_error",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let reference = b.frobenius_norm();
    if reference == 0.0 {
        return Err(Error::DegenerateInput {
            op: "frobenius_rel_error",
            detail: "reference matrix has zero norm".into(),
        });
    }
    Ok(a.sub(b)?.frobenius_norm() / reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for p in 0..a.cols() {
                    acc += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let m = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, 4.0], [7.0, 8.0, 9.0]]);
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[0.0], [1.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), Matrix::from_rows(&[[2.0], [4.0]]));
    }

    #[test]
    fn matmul_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::random_normal(5, 7, 1.0, &mut rng);
        let b = Matrix::random_normal(7, 3, 1.0, &mut rng);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let bt = b.transpose();
        let via_t = a.matmul_t(&bt).unwrap();
        let via_tt = a.transpose().t_matmul(&b).unwrap();
        for ((x, y), z) in via_t.data().iter().zip(slow.data()).zip(via_tt.data()) {
            assert!((x - y).abs() <= 1e-12 && (z - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::InvalidShape { .. }));
    }

    #[test]
    fn softmax_examples() {
        let y = softmax_rows(&Matrix::from_rows(&[[0.0, 0.0, 0.0]]));
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let y = softmax_rows(&Matrix::from_rows(&[[2f64.ln(), 0.0]]));
        assert!((y.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((y.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        let y = softmax_rows(&Matrix::from_rows(&[[1000.0, 1000.0]]));
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn layer_norm_examples() {
        let ones = [1.0; 4];
        let zeros = [0.0; 4];
        let y = layer_norm(&Matrix::from_rows(&[[5.0; 4]]), &ones, &zeros, 1e-5).unwrap();
        assert_eq!(y.data(), &[0.0; 4]);

        let y = layer_norm(&Matrix::from_rows(&[[1.0, -1.0]]), &[1.0; 2], &[0.0; 2], 1e-5).unwrap();
        let want = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.get(0, 0) - want).abs() < 1e-12);
        assert!((y.get(0, 1) + want).abs() < 1e-12);
        assert!((y.get(0, 0) - 0.99999).abs() < 1e-5);
    }

    #[test]
    fn layer_norm_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Matrix::random_normal(4, 8, 2.0, &mut rng);
        let gamma: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.1).collect();
        let beta: Vec<f64> = (0..8).map(|i| i as f64 * -0.2).collect();
        let y = layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
        for i in 0..4 {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            for j in 0..8 {
                let want = (row[j] - mean) / (var + 1e-5).sqrt() * gamma[j] + beta[j];
                assert!((y.get(i, j) - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn layer_norm_rejects_bad_params() {
        let x = Matrix::zeros(2, 3);
        assert!(layer_norm(&x, &[1.0; 2], &[0.0; 3], 1e-5).is_err());
        assert!(layer_norm(&x, &[1.0; 3], &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn softmax_and_layer_norm_backward_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::random_normal(3, 5, 1.0, &mut rng);
        let w = Matrix::random_normal(3, 5, 1.0, &mut rng);
        let gamma: Vec<f64> = (0..5).map(|i| 1.0 + 0.3 * i as f64).collect();
        let beta = vec![0.1; 5];
        let f_soft = |x: &Matrix| softmax_rows(x).hadamard(&w).unwrap().data().iter().sum::<f64>();
        let f_ln = |x: &Matrix| {
            layer_norm(x, &gamma, &beta, 1e-5)
                .unwrap()
                .hadamard(&w)
                .unwrap()
                .data()
                .iter()
                .sum::<f64>()
        };
        let d_soft = softmax_rows_backward(&softmax_rows(&x), &w);
        let (_, cache) = layer_norm_forward(&x, &gamma, &beta, 1e-5).unwrap();
        let (d_ln, d_gamma, d_beta) = layer_norm_backward(&cache, &gamma, &w);
        let h = 1e-6;
        for idx in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[idx] += h;
            let mut m = x.clone();
            m.data_mut()[idx] -= h;
            let fd_s = (f_soft(&p) - f_soft(&m)) / (2.0 * h);
            let fd_l = (f_ln(&p) - f_ln(&m)) / (2.0 * h);
            assert!((fd_s - d_soft.data()[idx]).abs() < 1e-7);
            assert!((fd_l - d_ln.data()[idx]).abs() < 1e-6);
        }
        let xhat = layer_norm(&x, &[1.0; 5], &[0.0; 5], 1e-5).unwrap();
        for j in 0..5 {
            let want_g: f64 = (0..3).map(|i| w.get(i, j) * xhat.get(i, j)).sum();
            let want_b: f64 = (0..3).map(|i| w.get(i, j)).sum();
            assert!((d_gamma[j] - want_g).abs() < 1e-12);
            assert!((d_beta[j] - want_b).abs() < 1e-12);
        }
    }

    #[test]
    fn frobenius_examples() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(frobenius_rel_error(&m, &m).unwrap(), 0.0);
        assert_eq!(
            frobenius_rel_error(&Matrix::from_rows(&[[2.0]]), &Matrix::from_rows(&[[1.0]])).unwrap(),
            1.0
        );
        let e = frobenius_rel_error(
            &Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]),
            &Matrix::identity(2),
        )
        .unwrap();
        assert!((e - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(frobenius_rel_error(&m, &Matrix::zeros(2, 2)).is_err());
        assert!(frobenius_rel_error(&m, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn kernels_are_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = softmax_rows(&Matrix::random_normal(6, 6, 1.0, &mut rng));
        let (z1, r1) = pinv_iterative(&a, 6).unwrap();
        let (z2, r2) = pinv_iterative(&a, 6).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(r1, r2);
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..9).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-500.0f64..500.0, r * c)
                .prop_map(move |data| Matrix::new(r, c, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(x in matrix_strategy()) {
            let y = softmax_rows(&x);
            for i in 0..y.rows() {
                let s: f64 = y.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
                prop_assert!(y.row(i).iter().all(|v| *v >= 0.0 && *v <= 1.0));
            }
        }

        #[test]
        fn layer_norm_rows_have_zero_mean(x in matrix_strategy()) {
            let c = x.cols();
            let y = layer_norm(&x, &vec![1.0; c], &vec![0.0; c], LAYER_NORM_EPS).unwrap();
            for i in 0..y.rows() {
                let mean: f64 = y.row(i).iter().sum::<f64>() / c as f64;
                prop_assert!(mean.abs() <= 1e-9);
            }
        }
    }
}
