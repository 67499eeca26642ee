use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-channel 1-D convolution along the row (sequence) axis with zero
/// padding. `kernel` holds one row of `kernel_size` taps per column of `v`.
pub fn depthwise_conv_skip(v: &Matrix, kernel: &Matrix, kernel_size: usize) -> Result<Matrix> {
    check(v, kernel, kernel_size)?;
    let (n, channels) = v.shape();
    let half = (kernel_size / 2) as isize;
    let mut out = Matrix::zeros(n, channels);
    for c in 0..channels {
        let taps = kernel.row(c);
        for t in 0..n {
            let mut acc = 0.0;
            for (k, w) in taps.iter().enumerate() {
                let src = t as isize + k as isize - half;
                if src >= 0 && (src as usize) < n {
                    acc += w * v.get(src as usize, c);
                }
            }
            out.set(t, c, acc);
        }
    }
    Ok(out)
}

/// Returns `(∂L/∂v, ∂L/∂kernel)`.
pub(crate) fn depthwise_conv_backward(
    v: &Matrix,
    kernel: &Matrix,
    d_out: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let kernel_size = kernel.cols();
    check(v, kernel, kernel_size)?;
    let (n, channels) = v.shape();
    let half = (kernel_size / 2) as isize;
    let mut d_v = Matrix::zeros(n, channels);
    let mut d_kernel = Matrix::zeros(channels, kernel_size);
    for c in 0..channels {
        for t in 0..n {
            let g = d_out.get(t, c);
            if g == 0.0 {
                continue;
            }
            for k in 0..kernel_size {
                let src = t as isize + k as isize - half;
                if src >= 0 && (src as usize) < n {
                    let src = src as usize;
                    d_v.set(src, c, d_v.get(src, c) + kernel.get(c, k) * g);
                    d_kernel.set(c, k, d_kernel.get(c, k) + v.get(src, c) * g);
                }
            }
        }
    }
    Ok((d_v, d_kernel))
}

fn check(v: &Matrix, kernel: &Matrix, kernel_size: usize) -> Result<()> {
    if kernel_size.is_multiple_of(2) {
        return Err(Error::EvenKernel(kernel_size));
    }
    if kernel.shape() != (v.cols(), kernel_size) {
        return Err(Error::shape(
            "depthwise_conv_skip",
            format!(
                "kernel {:?} for {} channels of size {kernel_size}",
                kernel.shape(),
                v.cols()
            ),
        ));
    }
    Ok(())
}
