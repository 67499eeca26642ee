//! Third-order iterative Moore–Penrose pseudoinverse.
//!
//! `Z_{j+1} = ¼ Z_j (13I − A Z_j (15I − A Z_j (7I − A Z_j)))`, started from
//! `Z_0 = Aᵀ / (‖A‖₁ ‖A‖_∞)`. The iteration count is fixed, so the whole
//! trajectory is a differentiable function of `A` and [`pinv_backward`]
//! differentiates it by unrolling.

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PinvReport {
    pub iterations_run: usize,
    /// `‖I − A·Z_j‖_∞` after each iteration.
    pub residual_history: Vec<f64>,
}

/// Everything the backward pass needs: the input scale and every iterate.
#[derive(Debug, Clone)]
pub struct PinvTrace {
    norm_one: f64,
    norm_one_col: usize,
    norm_inf: f64,
    norm_inf_row: usize,
    /// `Z_0 ..= Z_k`
    iterates: Vec<Matrix>,
}

impl PinvTrace {
    pub fn iterates(&self) -> &[Matrix] {
        &self.iterates
    }

    pub fn result(&self) -> &Matrix {
        self.iterates.last().expect("trace holds at least Z_0")
    }
}

fn validate(a: &Matrix, iterations: usize) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::shape(
            "pinv_iterative",
            format!("expected a square matrix, got {:?}", a.shape()),
        ));
    }
    if iterations == 0 {
        return Err(Error::InvalidConfig(
            "pseudoinverse needs at least one iteration".into(),
        ));
    }
    Ok(())
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// One step of the recurrence.
fn step(a: &Matrix, z: &Matrix) -> Result<Matrix> {
    let az = a.matmul(z)?;
    let inner = az.shifted_negation(7.0);
    let mid = az.matmul(&inner)?.shifted_negation(15.0);
    let outer = az.matmul(&mid)?.shifted_negation(13.0);
    Ok(z.matmul(&outer)?.scale(0.25))
}

fn residual(a: &Matrix, z: &Matrix) -> Result<f64> {
    Ok(a.matmul(z)?.shifted_negation(1.0).norm_inf())
}

/// Runs `iterations` steps and keeps every iterate for differentiation.
pub fn pinv_iterative_traced(a: &Matrix, iterations: usize) -> Result<(PinvReport, PinvTrace)> {
    validate(a, iterations)?;
    let m = a.rows();
    let (norm_one_col, norm_one) =
        argmax((0..m).map(|j| (0..m).map(|i| a.get(i, j).abs()).sum::<f64>()));
    let (norm_inf_row, norm_inf) = argmax((0..m).map(|i| a.row(i).iter().map(|v| v.abs()).sum()));
    if !(norm_one > 0.0 && norm_inf > 0.0) {
        return Err(Error::DegenerateInput {
            op: "pinv_iterative",
            detail: "matrix is all zero, initial iterate undefined".into(),
        });
    }

    let mut iterates = Vec::with_capacity(iterations + 1);
    iterates.push(a.transpose().scale(1.0 / (norm_one * norm_inf)));
    let mut residual_history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let next = step(a, iterates.last().expect("non-empty"))?;
        residual_history.push(residual(a, &next)?);
        iterates.push(next);
    }
    Ok((
        PinvReport {
            iterations_run: iterations,
            residual_history,
        },
        PinvTrace {
            norm_one,
            norm_one_col,
            norm_inf,
            norm_inf_row,
            iterates,
        },
    ))
}

/// Approximates the Moore–Penrose pseudoinverse of a square matrix.
pub fn pinv_iterative(a: &Matrix, iterations: usize) -> Result<(Matrix, PinvReport)> {
    let (report, mut trace) = pinv_iterative_traced(a, iterations)?;
    let z = trace.iterates.pop().expect("non-empty");
    Ok((z, report))
}

/// Pulls `d_result = ∂L/∂Z_k` back to `∂L/∂A` through the unrolled iteration
/// and the initial scaling.
pub fn pinv_backward(a: &Matrix, trace: &PinvTrace, d_result: &Matrix) -> Result<Matrix> {
    let mut d_a = Matrix::zeros(a.rows(), a.cols());
    let mut d_z = d_result.clone();

    for z in trace.iterates[..trace.iterates.len() - 1].iter().rev() {
        let t = a.matmul(z)?;
        let p1 = t.shifted_negation(7.0);
        let p2 = t.matmul(&p1)?.shifted_negation(15.0);
        let p3 = t.matmul(&p2)?.shifted_negation(13.0);

        // Z' = ¼ Z P3
        let mut d_z_prev = d_z.matmul_t(&p3)?.scale(0.25);
        let d_p3 = z.t_matmul(&d_z)?.scale(0.25);
        // P3 = 13I − T P2
        let mut d_t = d_p3.matmul_t(&p2)?.scale(-1.0);
        let d_p2 = t.t_matmul(&d_p3)?.scale(-1.0);
        // P2 = 15I − T P1
        d_t.add_assign(&d_p2.matmul_t(&p1)?.scale(-1.0))?;
        let d_p1 = t.t_matmul(&d_p2)?.scale(-1.0);
        // P1 = 7I − T
        d_t.add_assign(&d_p1.scale(-1.0))?;
        // T = A Z
        d_a.add_assign(&d_t.matmul_t(z)?)?;
        d_z_prev.add_assign(&a.t_matmul(&d_t)?)?;
        d_z = d_z_prev;
    }

    // Z_0 = Aᵀ / c with c = ‖A‖₁ ‖A‖_∞
    let c = trace.norm_one * trace.norm_inf;
    d_a.add_assign(&d_z.transpose().scale(1.0 / c))?;
    let z0 = &trace.iterates[0];
    let d_c = -z0
        .data()
        .iter()
        .zip(d_z.data())
        .map(|(z, g)| z * g)
        .sum::<f64>()
        / c;
    let d_norm_one = d_c * trace.norm_inf;
    let d_norm_inf = d_c * trace.norm_one;
    let m = a.rows();
    for i in 0..m {
        let v = a.get(i, trace.norm_one_col);
        let g = d_a.get(i, trace.norm_one_col) + d_norm_one * sign(v);
        d_a.set(i, trace.norm_one_col, g);
    }
    for j in 0..m {
        let v = a.get(trace.norm_inf_row, j);
        let g = d_a.get(trace.norm_inf_row, j) + d_norm_inf * sign(v);
        d_a.set(trace.norm_inf_row, j, g);
    }
    Ok(d_a)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
