//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines always reach the test log.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use laficmil::attention::{exact_attention, nystrom_attention, AttentionConfig};
use laficmil::corpus::baseline::mean_pool_probe;
use laficmil::corpus::{entropy_inequality_check, generate_correlated_task, mil_label, JointDistribution};
use laficmil::linalg::{frobenius_rel_error, pinv_iterative, MemoryProbe};
use laficmil::model::{ModelConfig, ModelParams, Task};
use laficmil::training::{evaluate, finite_diff_check, train, TrainConfig};
use laficmil::verify::{
    attention_inputs, convergent_pairs, gaussian_inputs, loglog_slope, pinv_error_history,
    stochastic_matrix, svd_pinv, tiny_gradcheck_case,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PINV_ITERS: usize = 6;
const PINV_TOL: f64 = 1e-6;
const PINV_REQUIRED: usize = 49;
const SLOPE_MIN: f64 = 2.5;
const RECOVERY_TOL: f64 = 1e-3;
const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const ENTROPY_TOL: f64 = 1e-9;
const NYSTROM_GROWTH_MAX: f64 = 4.5;
const EXACT_GROWTH_MIN: f64 = 12.0;
const TASK_ACCURACY_MIN: f64 = 90.0;
const BASELINE_MARGIN: f64 = 10.0;
/// Highest mean-pool probe test accuracy tolerated on the synthetic task.
/// Measured 62.0, 57.5 and 67.5 on seeds 0..3 at first build; the order-blind
/// ceiling of the generator is 65 plus sampling noise.
const ORDER_BLIND_BASELINE: f64 = 72.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn pinv_oracle() -> Outcome {
    let mut passing = 0;
    let mut flagged = Vec::new();
    for seed in 0..50 {
        let a = stochastic_matrix(8, seed);
        let (z, _) = pinv_iterative(&a, PINV_ITERS).unwrap();
        let err = frobenius_rel_error(&z, &svd_pinv(&a).unwrap()).unwrap();
        if err <= PINV_TOL {
            passing += 1;
        } else {
            flagged.push((seed, err));
        }
    }
    outcome(
        passing >= PINV_REQUIRED,
        format!("{passing}/50 within {PINV_TOL:e}, flagged {flagged:?}"),
    )
}

fn third_order() -> Outcome {
    let mut pairs = Vec::new();
    for seed in 0..50 {
        let history = pinv_error_history(&stochastic_matrix(8, seed), PINV_ITERS).unwrap();
        if *history.last().unwrap() <= PINV_TOL {
            pairs.extend(convergent_pairs(&history));
        }
    }
    let slope = loglog_slope(&pairs).unwrap_or(f64::NAN);
    outcome(
        slope >= SLOPE_MIN,
        format!("slope {slope:.3} over {} pairs (min {SLOPE_MIN})", pairs.len()),
    )
}

fn nystrom_recovery() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut passing = 0;
    for seed in 0..20 {
        let n = 4 + (seed as usize * 7) % 29;
        let (q, k, v) = attention_inputs(n, 32, 0, 1000 + seed);
        let cfg = AttentionConfig::new(32, 1).unwrap().with_landmarks(n);
        let approx = nystrom_attention(&q, &k, &v, &cfg).unwrap();
        let err = frobenius_rel_error(&approx, &exact_attention(&q, &k, &v).unwrap()).unwrap();
        worst = worst.max(err);
        passing += usize::from(err <= RECOVERY_TOL);
    }
    outcome(passing == 20, format!("{passing}/20 within {RECOVERY_TOL:e}, worst {worst:.3e}"))
}

fn monotonicity() -> Outcome {
    let (mut m4, mut m16) = (0.0, 0.0);
    for seed in 0..20 {
        let (q, k, v) = gaussian_inputs(64, 8, 2000 + seed);
        let exact = exact_attention(&q, &k, &v).unwrap();
        let err = |m: usize| {
            let cfg = AttentionConfig::new(8, 1).unwrap().with_landmarks(m);
            frobenius_rel_error(&nystrom_attention(&q, &k, &v, &cfg).unwrap(), &exact).unwrap()
        };
        m4 += err(4) / 20.0;
        m16 += err(16) / 20.0;
    }
    outcome(m16 < m4, format!("mean rel err m=4 {m4:.4}, m=16 {m16:.4}"))
}

fn gradients() -> Outcome {
    let mut failures = 0;
    let mut coordinates = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let (cfg, params, instances, target) = tiny_gradcheck_case(Task::Multiclass, 2, seed).unwrap();
        let report = finite_diff_check(&params, &instances, &target, &cfg, GRAD_STEP).unwrap();
        failures += report.failures(GRAD_TOL);
        coordinates += report.coordinates();
        worst = worst.max(report.max_rel_err());
    }
    outcome(
        failures == 0,
        format!("{coordinates} coordinates over 5 seeds, {failures} above {GRAD_TOL:e}, max {worst:.3e}"),
    )
}

fn entropy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let mut ok = 0;
    for _ in 0..1000 {
        let c = entropy_inequality_check(&JointDistribution::random(&mut rng));
        let holds = c.h_joint <= c.sum_marginals + ENTROPY_TOL && (c.chain_rule - c.h_joint).abs() <= ENTROPY_TOL;
        ok += usize::from(holds);
    }
    let coins = entropy_inequality_check(&JointDistribution::new(vec![2, 2], vec![0.25; 4]).unwrap());
    let equality = coins.h_joint == coins.sum_marginals && coins.h_joint == 2.0;
    outcome(
        ok == 1000 && equality,
        format!("{ok}/1000 hold, coins {} vs {}", coins.h_joint, coins.sum_marginals),
    )
}

fn complexity() -> Outcome {
    let peaks = |n: usize| {
        let (q, k, v) = gaussian_inputs(n, 16, 4000);
        let cfg = AttentionConfig::new(16, 1).unwrap().with_landmarks(8);
        let probe = MemoryProbe::start();
        drop(nystrom_attention(&q, &k, &v, &cfg).unwrap());
        let nystrom = probe.peak_elements();
        let probe = MemoryProbe::start();
        drop(exact_attention(&q, &k, &v).unwrap());
        (nystrom, probe.peak_elements())
    };
    let (n1, e1) = peaks(1024);
    let (n4, e4) = peaks(4096);
    let (ng, eg) = (n4 as f64 / n1 as f64, e4 as f64 / e1 as f64);
    outcome(
        ng <= NYSTROM_GROWTH_MAX && eg >= EXACT_GROWTH_MIN,
        format!("nystrom {n1}->{n4} ({ng:.2}x), exact {e1}->{e4} ({eg:.2}x)"),
    )
}

fn synthetic_task() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let task = generate_correlated_task(600, 6, 16, seed).unwrap();
        let (train_bags, test_bags) = task.bags.split_at(400);
        let baseline = mean_pool_probe(train_bags, test_bags, 500, 0.05).unwrap().test_accuracy;

        let attention = AttentionConfig::new(16, 2).unwrap().with_landmarks(8);
        let mut cfg = ModelConfig::new(attention, Task::Binary, 1).unwrap();
        cfg.max_bag = 16;
        let mut params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let train_cfg = TrainConfig {
            learning_rate: 3e-3,
            epochs: 50,
            seed,
            ..TrainConfig::new(Task::Binary)
        };
        train(train_bags, &mut params, &cfg, &train_cfg, None).unwrap();
        let accuracy = evaluate(test_bags, &params, &cfg, Task::Binary).unwrap();
        let required = TASK_ACCURACY_MIN.max(ORDER_BLIND_BASELINE + BASELINE_MARGIN);
        passed &= accuracy >= required && baseline <= ORDER_BLIND_BASELINE;
        parts.push(format!("seed {seed}: model {accuracy:.1} probe {baseline:.1}"));
    }
    outcome(passed, format!("{} (pinned probe bound {ORDER_BLIND_BASELINE})", parts.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let ckpt = dir.path().join(format!("{tag}.ckpt"));
        let report = dir.path().join(format!("{tag}.txt"));
        let status = Command::new(env!("CARGO_BIN_EXE_laficmil"))
            .args(["train", "--synthetic", "--epochs", "2", "--seed", "11", "--checkpoint"])
            .arg(&ckpt)
            .arg("--out")
            .arg(&report)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        (std::fs::read(ckpt).unwrap(), std::fs::read(report).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    outcome(
        a == b,
        format!("checkpoint {} bytes, report {} bytes, identical: {}", a.0.len(), a.1.len(), a == b),
    )
}

fn mil_semantics() -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    for len in 1..=10u32 {
        for bits in 0u32..(1 << len) {
            let labels: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
            let expected = u8::from(labels.contains(&1));
            mismatches += usize::from(mil_label(&labels).unwrap() != expected);
            checked += 1;
        }
    }
    outcome(mismatches == 0, format!("{checked} vectors, {mismatches} mismatches"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 pinv oracle equivalence", Duration::from_secs(5), pinv_oracle),
        ("2 third-order convergence", Duration::from_secs(5), third_order),
        ("3 nystrom exact recovery", Duration::from_secs(5), nystrom_recovery),
        ("4 landmark monotonicity", Duration::from_secs(10), monotonicity),
        ("5 gradient correctness", Duration::from_secs(60), gradients),
        ("6 entropy inequality", Duration::from_secs(10), entropy),
        ("7 complexity contract", Duration::from_secs(60), complexity),
        ("8 synthetic c-MIL task", Duration::from_secs(300), synthetic_task),
        ("9 determinism", Duration::from_secs(120), determinism),
        ("10 MIL label semantics", Duration::from_secs(10), mil_semantics),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let passed = result.passed && elapsed <= budget;
        failed += usize::from(!passed);
        println!(
            "{} criterion {name}: {} [{:.2}s, budget {}s]",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
