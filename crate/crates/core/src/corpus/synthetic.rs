use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Bag;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::training::Target;

pub const NOISE_SIGMA: f64 = 0.1;
const BACKGROUND_POOL: usize = 4;

/// How a synthetic bag was composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BagKind {
    /// A strictly before B: the only positive kind.
    Ordered,
    /// B strictly before A.
    Reversed,
    OnlyA,
    OnlyB,
    Background,
}

impl BagKind {
    pub fn is_positive(self) -> bool {
        self == BagKind::Ordered
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub bags: Vec<Bag>,
    pub kinds: Vec<BagKind>,
    pub pattern_a: Vec<f64>,
    pub pattern_b: Vec<f64>,
}

fn unit_rms(v: Vec<f64>) -> Vec<f64> {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    v.into_iter().map(|x| x / rms).collect()
}

fn random_pattern(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    unit_rms((0..d).map(|_| normal.sample(rng)).collect())
}

/// Negative kind for the `i`-th negative bag: 70% reversed, 10% each of
/// A alone, B alone and background only.
fn negative_kind(i: usize) -> BagKind {
    match i % 10 {
        0..=6 => BagKind::Reversed,
        7 => BagKind::OnlyA,
        8 => BagKind::OnlyB,
        _ => BagKind::Background,
    }
}

/// Binary bags whose label is set by the ORDER of two pattern instances.
/// Exactly `bag_count / 2` bags are positive.
pub fn generate_correlated_task(
    bag_count: usize,
    instances_per_bag: usize,
    d: usize,
    seed: u64,
) -> Result<SyntheticTask> {
    if instances_per_bag < 3 {
        return Err(Error::Infeasible(format!(
            "instances_per_bag = {instances_per_bag}; need two pattern slots plus background (>= 3)"
        )));
    }
    if bag_count == 0 || d == 0 {
        return Err(Error::Infeasible("bag_count and d must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern_a = random_pattern(d, &mut rng);
    let pattern_b = random_pattern(d, &mut rng);
    let background: Vec<Vec<f64>> = (0..BACKGROUND_POOL).map(|_| random_pattern(d, &mut rng)).collect();
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");

    let positives = bag_count / 2;
    let mut kinds: Vec<BagKind> = (0..bag_count)
        .map(|i| if i < positives { BagKind::Ordered } else { negative_kind(i - positives) })
        .collect();
    kinds.shuffle(&mut rng);

    let n = instances_per_bag;
    let mut bags = Vec::with_capacity(bag_count);
    for (index, kind) in kinds.iter().enumerate() {
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(&mut rng);
        let (first, second) = (slots[0].min(slots[1]), slots[0].max(slots[1]));
        let (a_slot, b_slot) = match kind {
            BagKind::Ordered => (Some(first), Some(second)),
            BagKind::Reversed => (Some(second), Some(first)),
            BagKind::OnlyA => (Some(first), None),
            BagKind::OnlyB => (None, Some(first)),
            BagKind::Background => (None, None),
        };
        let mut instance_labels = vec![0u8; n];
        let mut instances = Matrix::zeros(n, d);
        for (j, label) in instance_labels.iter_mut().enumerate() {
            let base = if Some(j) == a_slot {
                &pattern_a
            } else if Some(j) == b_slot {
                // the B that completes an A→B pair carries the instance label
                if kind.is_positive() {
                    *label = 1;
                }
                &pattern_b
            } else {
                background.choose(&mut rng).expect("non-empty pool")
            };
            for (out, b) in instances.row_mut(j).iter_mut().zip(base) {
                *out = b + noise.sample(&mut rng);
            }
        }
        bags.push(Bag {
            id: format!("synthetic-{seed}-{index}"),
            instances,
            label: Target::binary(kind.is_positive()),
            instance_labels: Some(instance_labels),
        });
    }
    Ok(SyntheticTask {
        bags,
        kinds,
        pattern_a,
        pattern_b,
    })
}
