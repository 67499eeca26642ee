use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Contiguous partition of `n` rows into `m` segments; the first `n mod m`
/// segments take one extra row.
pub fn segment_bounds(n: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    if m == 0 || m > n {
        return Err(Error::InvalidLandmarks {
            landmarks: m,
            rows: n,
        });
    }
    let base = n / m;
    let extra = n % m;
    let mut bounds = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let len = base + usize::from(i < extra);
        bounds.push((start, start + len));
        start += len;
    }
    Ok(bounds)
}

/// Segment means of `x`'s rows, one landmark row per segment, in row order.
pub fn segment_mean_landmarks(x: &Matrix, m: usize) -> Result<Matrix> {
    let bounds = segment_bounds(x.rows(), m)?;
    let mut out = Matrix::zeros(m, x.cols());
    for (i, (start, end)) in bounds.into_iter().enumerate() {
        let scale = 1.0 / (end - start) as f64;
        let row = out.row_mut(i);
        for r in start..end {
            for (o, v) in row.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        for o in row.iter_mut() {
            *o *= scale;
        }
    }
    Ok(out)
}

/// Spreads landmark gradients back over the rows of each segment.
pub(crate) fn segment_mean_backward(d_landmarks: &Matrix, n: usize) -> Result<Matrix> {
    let bounds = segment_bounds(n, d_landmarks.rows())?;
    let mut d_x = Matrix::zeros(n, d_landmarks.cols());
    for (i, (start, end)) in bounds.into_iter().enumerate() {
        let scale = 1.0 / (end - start) as f64;
        for r in start..end {
            for (o, g) in d_x.row_mut(r).iter_mut().zip(d_landmarks.row(i)) {
                *o = g * scale;
            }
        }
    }
    Ok(d_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_means() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [3.0, 3.0], [5.0, 5.0], [7.0, 7.0]]);
        let l = segment_mean_landmarks(&x, 2).unwrap();
        assert_eq!(l, Matrix::from_rows(&[[2.0, 2.0], [6.0, 6.0]]));
    }

    #[test]
    fn singleton_segments_reproduce_input() {
        let x = Matrix::from_rows(&[[1.5, -2.0], [0.25, 9.0], [3.0, 3.0]]);
        assert_eq!(segment_mean_landmarks(&x, 3).unwrap(), x);
    }

    #[test]
    fn uneven_split_front_loads_remainder() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0]]);
        assert_eq!(segment_bounds(5, 2).unwrap(), vec![(0, 3), (3, 5)]);
        assert_eq!(
            segment_mean_landmarks(&x, 2).unwrap(),
            Matrix::from_rows(&[[2.0], [4.5]])
        );
        assert_eq!(
            segment_bounds(7, 3).unwrap(),
            vec![(0, 3), (3, 5), (5, 7)]
        );
    }

    #[test]
    fn invalid_counts() {
        let x = Matrix::zeros(3, 2);
        assert!(matches!(
            segment_mean_landmarks(&x, 4),
            Err(Error::InvalidLandmarks { landmarks: 4, rows: 3 })
        ));
        assert!(segment_mean_landmarks(&x, 0).is_err());
    }

    #[test]
    fn order_matters() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [10.0]]);
        let permuted = Matrix::from_rows(&[[10.0], [2.0], [3.0], [1.0]]);
        assert_ne!(
            segment_mean_landmarks(&x, 2).unwrap(),
            segment_mean_landmarks(&permuted, 2).unwrap()
        );
    }
}
