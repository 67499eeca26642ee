//! Oracle suites behind `laficmil verify`, plus the seeded input generators
//! they share with the test targets.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::attention::{exact_attention, nystrom_attention, AttentionConfig};
use crate::corpus::{entropy_inequality_check, joint_entropy, JointDistribution};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_rel_error, pinv_iterative, pinv_iterative_traced, softmax_rows, Matrix, MemoryProbe};
use crate::model::{ModelConfig, ModelParams, Task};
use crate::training::{finite_diff_check, GradCheckReport, Target};

pub const PINV_ITERATIONS: usize = 6;
pub const PINV_TOL: f64 = 1e-6;
pub const PINV_MIN_PASSING: usize = 49;
pub const PINV_CASES: usize = 50;
pub const CONVERGENCE_SLOPE_MIN: f64 = 2.5;
pub const RECOVERY_TOL: f64 = 1e-3;
pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;
pub const ENTROPY_CASES: usize = 1000;
pub const NYSTROM_GROWTH_MAX: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Pinv,
    Nystrom,
    Gradcheck,
    Entropy,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pinv" => Ok(Suite::Pinv),
            "nystrom" => Ok(Suite::Nystrom),
            "gradcheck" => Ok(Suite::Gradcheck),
            "entropy" => Ok(Suite::Entropy),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidConfig(format!(
                "unknown suite `{other}` (expected pinv, nystrom, gradcheck, entropy or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, suite: &'static str, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            suite,
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{status} {}/{}: {}", c.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn to_nalgebra(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Moore–Penrose pseudoinverse from a full SVD.
pub fn svd_pinv(a: &Matrix) -> Result<Matrix> {
    let p = to_nalgebra(a)
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::DegenerateInput {
            op: "svd_pinv",
            detail: e.to_string(),
        })?;
    Ok(from_nalgebra(&p))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &Matrix) -> f64 {
    let s = to_nalgebra(a).singular_values();
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Row-stochastic softmax score matrix of a self-attention-like draw: keys
/// are queries plus N(0, 0.3²) noise, queries N(0, 1) in 16 dimensions.
pub fn stochastic_matrix(n: usize, seed: u64) -> Matrix {
    let (q, k, _) = attention_inputs(n, 16, 0, seed);
    softmax_rows(&q.matmul_t(&k).expect("matching dims").scale(0.25))
}

/// `(q, k, v)` with `k = q + N(0, 0.3²)`, the regime where a full-landmark
/// core stays well conditioned. `v` has `dv` columns (`d` when zero).
pub fn attention_inputs(n: usize, d: usize, dv: usize, seed: u64) -> (Matrix, Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Matrix::random_normal(n, d, 1.0, &mut rng);
    let k = q.add(&Matrix::random_normal(n, d, 0.3, &mut rng)).expect("same shape");
    let v = Matrix::random_normal(n, if dv == 0 { d } else { dv }, 1.0, &mut rng);
    (q, k, v)
}

/// Independent standard normal `(q, k, v)`, all `n × d`.
pub fn gaussian_inputs(n: usize, d: usize, seed: u64) -> (Matrix, Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Matrix::random_normal(n, d, 1.0, &mut rng);
    let k = Matrix::random_normal(n, d, 1.0, &mut rng);
    let v = Matrix::random_normal(n, d, 1.0, &mut rng);
    (q, k, v)
}

/// Relative Frobenius error of every iterate `Z_0..Z_iters` against the SVD
/// pseudoinverse.
pub fn pinv_error_history(a: &Matrix, iterations: usize) -> Result<Vec<f64>> {
    let oracle = svd_pinv(a)?;
    let (_, trace) = pinv_iterative_traced(a, iterations)?;
    trace.iterates().iter().map(|z| frobenius_rel_error(z, &oracle)).collect()
}

/// Consecutive error pairs `(e_j, e_{j+1})` in the convergent regime:
/// `e_j < 0.1`, and `e_{j+1}` above both 1e-12 and 100× the smallest error
/// of the history, which marks where the iteration meets its rounding floor.
pub fn convergent_pairs(history: &[f64]) -> Vec<(f64, f64)> {
    let floor = history.iter().copied().fold(f64::INFINITY, f64::min);
    let lower = (100.0 * floor).max(1e-12);
    history
        .windows(2)
        .filter(|w| w[0] < 0.1 && w[1] > lower)
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Least-squares slope of `log e_{j+1}` against `log e_j`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Tiny model for full finite-difference checks: d=8, h=2, L=1, m=4, three
/// instances. Every parameter, including the zero-initialized ones, gets
/// N(0, 0.3²) added so no gradient path is trivially zero.
pub fn tiny_gradcheck_case(task: Task, labels: usize, seed: u64) -> Result<(ModelConfig, ModelParams, Matrix, Target)> {
    let attention = AttentionConfig::new(8, 2)?.with_landmarks(4);
    let mut cfg = ModelConfig::new(attention, task, labels)?;
    cfg.max_bag = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(&cfg, &mut rng);
    let jitter = Normal::new(0.0, 0.3).expect("positive sigma");
    for tensor in params.tensors_mut() {
        for v in tensor.data_mut() {
            *v += jitter.sample(&mut rng);
        }
    }
    let instances = Matrix::random_normal(3, 8, 1.0, &mut rng);
    let target = match task {
        Task::Binary => Target::Index((seed % 2) as usize),
        Task::Multiclass => Target::Index(seed as usize % labels),
        Task::Multilabel => Target::Labels((0..labels).map(|i| ((seed as usize + i) % 2) as u8).collect()),
    };
    Ok((cfg, params, instances, target))
}

pub fn run_gradcheck(task: Task, labels: usize, seed: u64) -> Result<GradCheckReport> {
    let (cfg, params, instances, target) = tiny_gradcheck_case(task, labels, seed)?;
    finite_diff_check(&params, &instances, &target, &cfg, GRADCHECK_STEP)
}

fn pinv_suite(report: &mut VerifyReport) -> Result<()> {
    let (z, _) = pinv_iterative(&Matrix::identity(8), PINV_ITERATIONS)?;
    let exact = z == Matrix::identity(8);
    report.push("pinv", "identity", exact, format!("pinv(I_8) == I_8 exactly: {exact}"));

    let mut passing = 0;
    let mut worst: f64 = 0.0;
    let mut pairs = Vec::new();
    for seed in 0..PINV_CASES as u64 {
        let a = stochastic_matrix(8, seed);
        let history = pinv_error_history(&a, PINV_ITERATIONS)?;
        let err = *history.last().expect("non-empty");
        worst = worst.max(err);
        if err <= PINV_TOL {
            passing += 1;
            pairs.extend(convergent_pairs(&history));
        }
    }
    report.push(
        "pinv",
        "svd_oracle",
        passing >= PINV_MIN_PASSING,
        format!("{passing}/{PINV_CASES} within {PINV_TOL:e} of SVD pseudoinverse, worst {worst:.3e}"),
    );
    let slope = loglog_slope(&pairs);
    report.push(
        "pinv",
        "third_order_fit",
        slope.is_some_and(|s| s >= CONVERGENCE_SLOPE_MIN),
        format!(
            "log-log slope {} over {} pairs (need >= {CONVERGENCE_SLOPE_MIN})",
            slope.map_or("n/a".into(), |s| format!("{s:.3}")),
            pairs.len()
        ),
    );
    Ok(())
}

fn nystrom_suite(report: &mut VerifyReport) -> Result<()> {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let n = 4 + (seed as usize * 7) % 29;
        let (q, k, v) = attention_inputs(n, 32, 0, seed);
        let cfg = AttentionConfig::new(32, 1)?.with_landmarks(n);
        let err = frobenius_rel_error(&nystrom_attention(&q, &k, &v, &cfg)?, &exact_attention(&q, &k, &v)?)?;
        worst = worst.max(err);
    }
    report.push(
        "nystrom",
        "full_landmark_recovery",
        worst <= RECOVERY_TOL,
        format!("20 cases n<=32 m=n, worst rel err {worst:.3e} (tol {RECOVERY_TOL:e})"),
    );

    let mut means = [0.0; 2];
    for seed in 0..20u64 {
        let (q, k, v) = gaussian_inputs(64, 8, seed);
        let exact = exact_attention(&q, &k, &v)?;
        for (slot, m) in [4, 16].into_iter().enumerate() {
            let cfg = AttentionConfig::new(8, 1)?.with_landmarks(m);
            means[slot] += frobenius_rel_error(&nystrom_attention(&q, &k, &v, &cfg)?, &exact)? / 20.0;
        }
    }
    report.push(
        "nystrom",
        "landmark_monotonicity",
        means[1] < means[0],
        format!("n=64 mean rel err m=4 {:.4}, m=16 {:.4}", means[0], means[1]),
    );

    let peak = |n: usize| -> Result<usize> {
        let (q, k, v) = gaussian_inputs(n, 16, 0);
        let cfg = AttentionConfig::new(16, 1)?;
        let probe = MemoryProbe::start();
        nystrom_attention(&q, &k, &v, &cfg)?;
        Ok(probe.peak_elements())
    };
    let growth = peak(4096)? as f64 / peak(1024)? as f64;
    report.push(
        "nystrom",
        "linear_memory",
        growth <= NYSTROM_GROWTH_MAX,
        format!("peak elements grow {growth:.3}x from n=1024 to n=4096 at m=8"),
    );
    Ok(())
}

fn gradcheck_suite(report: &mut VerifyReport) -> Result<()> {
    let cases = [(Task::Multiclass, 2), (Task::Binary, 1), (Task::Multilabel, 3)];
    for (task, labels) in cases {
        let mut worst: f64 = 0.0;
        let mut failures = 0;
        let mut coordinates = 0;
        for seed in 0..5 {
            let r = run_gradcheck(task, labels, seed)?;
            worst = worst.max(r.max_rel_err());
            failures += r.failures(GRADCHECK_TOL);
            coordinates += r.coordinates();
        }
        report.push(
            "gradcheck",
            task.as_str(),
            failures == 0,
            format!("5 seeds, {coordinates} coordinates, {failures} above {GRADCHECK_TOL:e}, max rel err {worst:.3e}"),
        );
    }
    Ok(())
}

fn entropy_suite(report: &mut VerifyReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut holds, mut chain) = (0, 0);
    let mut max_gap: f64 = 0.0;
    for _ in 0..ENTROPY_CASES {
        let c = entropy_inequality_check(&JointDistribution::random(&mut rng));
        holds += usize::from(c.holds);
        chain += usize::from(c.chain_holds);
        max_gap = max_gap.max((c.chain_rule - c.h_joint).abs());
    }
    report.push(
        "entropy",
        "subadditivity",
        holds == ENTROPY_CASES,
        format!("{holds}/{ENTROPY_CASES} inequality holds"),
    );
    report.push(
        "entropy",
        "chain_rule",
        chain == ENTROPY_CASES,
        format!("{chain}/{ENTROPY_CASES} within 1e-9, max gap {max_gap:.2e}"),
    );
    let coins = JointDistribution::new(vec![2, 2], vec![0.25; 4])?;
    let c = entropy_inequality_check(&coins);
    let equal = joint_entropy(&coins) == 2.0 && c.sum_marginals == 2.0;
    report.push(
        "entropy",
        "independent_coins",
        equal,
        format!("H_joint {} vs sum of marginals {}", c.h_joint, c.sum_marginals),
    );
    Ok(())
}

pub fn run_suite(suite: Suite) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    match suite {
        Suite::Pinv => pinv_suite(&mut report)?,
        Suite::Nystrom => nystrom_suite(&mut report)?,
        Suite::Gradcheck => gradcheck_suite(&mut report)?,
        Suite::Entropy => entropy_suite(&mut report)?,
        Suite::All => {
            pinv_suite(&mut report)?;
            nystrom_suite(&mut report)?;
            gradcheck_suite(&mut report)?;
            entropy_suite(&mut report)?;
        }
    }
    Ok(report)
}
