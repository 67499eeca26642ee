mod common;

use common::{grid, max_rel_diff};
use laficmil::attention::{
    exact_attention, multi_head_attention, nystrom_attention, nystrom_forward, segment_mean_landmarks,
    AttentionConfig, AttentionWeights,
};
use laficmil::linalg::{frobenius_rel_error, pinv_iterative, Matrix, MemoryProbe};
use laficmil::verify::{
    attention_inputs, condition_number, gaussian_inputs, pinv_error_history, stochastic_matrix,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn multi_head_matches_scalar_oracle() {
    for (seed, n, landmarks) in [(0u64, 7usize, 3usize), (1, 12, 4), (2, 5, 8), (3, 1, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = AttentionConfig::new(8, 2).unwrap().with_landmarks(landmarks);
        let mut weights = AttentionWeights::init(&cfg, &mut rng);
        for h in &mut weights.heads {
            h.dconv = Matrix::random_normal(4, 3, 0.5, &mut rng);
        }
        let x = Matrix::random_normal(n, 8, 1.0, &mut rng);
        let fast = multi_head_attention(&x, &weights, &cfg).unwrap();
        let slow: Vec<f64> = common::multi_head(&grid(&x), &weights, &cfg).concat();
        let diff = max_rel_diff(fast.data(), &slow);
        assert!(diff < 1e-10, "seed {seed}: {diff:e}");
    }
}

#[test]
fn moore_penrose_identity_on_well_conditioned_draws() {
    let mut tested = 0;
    for seed in 0..50 {
        let a = stochastic_matrix(8, seed);
        if condition_number(&a) > 100.0 {
            continue;
        }
        let (z, _) = pinv_iterative(&a, 6).unwrap();
        let aza = a.matmul(&z).unwrap().matmul(&a).unwrap();
        let err = aza.sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(err <= 1e-6, "seed {seed}: {err:e}");
        tested += 1;
    }
    assert!(tested >= 45, "only {tested} well-conditioned draws");
}

#[test]
fn error_contracts_cubically_once_small() {
    // e_{j+1} ≤ C·e_j³ with one constant over every trajectory
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let history = pinv_error_history(&stochastic_matrix(8, seed), 6).unwrap();
        let floor = history.iter().cloned().fold(f64::INFINITY, f64::min);
        for w in history.windows(2) {
            if w[0] < 0.1 && w[1] > 100.0 * floor {
                worst = worst.max(w[1] / w[0].powi(3));
            }
        }
    }
    assert!(worst > 0.0 && worst < 10.0, "C = {worst}");
}

#[test]
fn implicit_scores_are_nearly_row_stochastic() {
    for seed in 0..10 {
        for (n, m) in [(16usize, 8usize), (64, 16), (64, 64)] {
            let (q, k, v) = attention_inputs(n, 16, 4, 500 + seed);
            let (_, cache) = nystrom_forward(&q, &k, &v, m, 6).unwrap();
            let s = cache.materialize_scores().unwrap();
            for i in 0..n {
                let total: f64 = s.row(i).iter().sum();
                assert!((0.9..=1.1).contains(&total), "seed {seed} n {n} m {m} row {i}: {total}");
            }
        }
    }
}

#[test]
fn more_landmarks_approximate_better_on_average() {
    let (mut coarse, mut fine) = (0.0, 0.0);
    for seed in 0..20 {
        let (q, k, v) = gaussian_inputs(64, 8, 700 + seed);
        let exact = exact_attention(&q, &k, &v).unwrap();
        let err = |m| {
            let cfg = AttentionConfig::new(8, 1).unwrap().with_landmarks(m);
            frobenius_rel_error(&nystrom_attention(&q, &k, &v, &cfg).unwrap(), &exact).unwrap()
        };
        coarse += err(4);
        fine += err(16);
    }
    assert!(fine < coarse, "m=16 {fine} vs m=4 {coarse}");
}

#[test]
fn peak_memory_grows_linearly_at_fixed_landmarks() {
    let peak = |n| {
        let (q, k, v) = gaussian_inputs(n, 8, 1);
        let cfg = AttentionConfig::new(8, 1).unwrap();
        let probe = MemoryProbe::start();
        drop(nystrom_attention(&q, &k, &v, &cfg).unwrap());
        probe.peak_elements() as f64
    };
    let growth = peak(1024) / peak(256);
    assert!(growth <= 4.5, "{growth}");
}

#[test]
fn permuting_rows_changes_landmarks() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Matrix::random_normal(12, 4, 1.0, &mut rng);
    let reversed = Matrix::from_fn(12, 4, |i, j| x.get(11 - i, j));
    let a = segment_mean_landmarks(&x, 3).unwrap();
    let b = segment_mean_landmarks(&reversed, 3).unwrap();
    assert!(a.sub(&b).unwrap().max_abs() > 1e-3);
}
