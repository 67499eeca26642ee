//! Brute-force entropies of small discrete joint distributions, in bits.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const ENTROPY_TOL: f64 = 1e-9;

/// Probability table over `supports.len()` variables, row-major with the last
/// variable varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    supports: Vec<usize>,
    probs: Vec<f64>,
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

impl JointDistribution {
    pub fn new(supports: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if supports.is_empty() || supports.contains(&0) {
            return Err(Error::InvalidConfig("every variable needs a non-empty support".into()));
        }
        let size: usize = supports.iter().product();
        if probs.len() != size {
            return Err(Error::shape(
                "JointDistribution",
                format!("table has {} entries, supports {supports:?} need {size}", probs.len()),
            ));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig("probabilities must be finite and >= 0".into()));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("total mass {mass} is not 1")));
        }
        Ok(Self { supports, probs })
    }

    /// 2–4 variables with supports of 1–4 values; roughly one cell in five
    /// is zero so `0·log 0` is exercised.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let count = rng.random_range(2..=4);
        let supports: Vec<usize> = (0..count).map(|_| rng.random_range(1..=4)).collect();
        let size: usize = supports.iter().product();
        let mut weights: Vec<f64> = (0..size)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
            .collect();
        if weights.iter().all(|w| *w == 0.0) {
            weights[0] = 1.0;
        }
        let total: f64 = weights.iter().sum();
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self { supports, probs }
    }

    pub fn variable_count(&self) -> usize {
        self.supports.len()
    }

    pub fn supports(&self) -> &[usize] {
        &self.supports
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn coordinates(&self, mut flat: usize) -> Vec<usize> {
        let mut coords = vec![0; self.supports.len()];
        for (c, s) in coords.iter_mut().zip(&self.supports).rev() {
            *c = flat % s;
            flat /= s;
        }
        coords
    }

    /// Marginal table over the first `k` variables.
    fn prefix_marginal(&self, k: usize) -> Vec<f64> {
        let size: usize = self.supports[..k].iter().product();
        let stride: usize = self.supports[k..].iter().product();
        let mut out = vec![0.0; size];
        for (flat, p) in self.probs.iter().enumerate() {
            out[flat / stride] += p;
        }
        out
    }

    pub fn marginal(&self, var: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.supports[var]];
        for (flat, p) in self.probs.iter().enumerate() {
            out[self.coordinates(flat)[var]] += p;
        }
        out
    }

    pub fn marginal_entropy(&self, var: usize) -> f64 {
        self.marginal(var).into_iter().map(plogp).sum()
    }

    /// `H(θ_t | θ_1..θ_{t-1}) = −Σ p(θ_≤t) log₂ p(θ_t | θ_<t)`, zero-based `t`.
    pub fn conditional_entropy(&self, t: usize) -> f64 {
        let joint = self.prefix_marginal(t + 1);
        let prefix = self.prefix_marginal(t);
        let s = self.supports[t];
        joint
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, p)| -p * (p / prefix[i / s]).log2())
            .sum()
    }
}

/// `−Σ p log₂ p` over the full table.
pub fn joint_entropy(dist: &JointDistribution) -> f64 {
    dist.probs.iter().copied().map(plogp).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyCheck {
    pub h_joint: f64,
    pub sum_marginals: f64,
    /// `H(θ_1) + Σ_{t≥2} H(θ_t | θ_<t)`
    pub chain_rule: f64,
    pub holds: bool,
    pub chain_holds: bool,
}

/// Joint entropy against the sum of marginals and the chain-rule expansion.
pub fn entropy_inequality_check(dist: &JointDistribution) -> EntropyCheck {
    let h_joint = joint_entropy(dist);
    let sum_marginals = (0..dist.variable_count()).map(|v| dist.marginal_entropy(v)).sum();
    let chain_rule = (0..dist.variable_count()).map(|t| dist.conditional_entropy(t)).sum();
    EntropyCheck {
        h_joint,
        sum_marginals,
        chain_rule,
        holds: h_joint <= sum_marginals + ENTROPY_TOL,
        chain_holds: (chain_rule - h_joint).abs() <= ENTROPY_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_examples() {
        let coins = JointDistribution::new(vec![2, 2], vec![0.25; 4]).unwrap();
        assert_eq!(joint_entropy(&coins), 2.0);
        let c = entropy_inequality_check(&coins);
        assert!(c.holds && c.chain_holds);
        assert!((c.sum_marginals - 2.0).abs() < 1e-12);

        let point = JointDistribution::new(vec![2, 3], vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(joint_entropy(&point), 0.0);

        let tied = JointDistribution::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let c = entropy_inequality_check(&tied);
        assert_eq!(c.h_joint, 1.0);
        assert_eq!(c.sum_marginals, 2.0);
        assert!(c.holds && c.chain_holds);
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(JointDistribution::new(vec![2], vec![0.5, 0.4]).is_err());
        assert!(JointDistribution::new(vec![2], vec![1.5, -0.5]).is_err());
        assert!(JointDistribution::new(vec![2, 2], vec![0.5, 0.5]).is_err());
        assert!(JointDistribution::new(vec![], vec![]).is_err());
    }

    #[test]
    fn marginal_of_last_variable() {
        let d = JointDistribution::new(vec![2, 3], vec![0.1, 0.2, 0.0, 0.3, 0.1, 0.3]).unwrap();
        let m = d.marginal(1);
        for (a, b) in m.iter().zip([0.4, 0.3, 0.3]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_tables_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let d = JointDistribution::random(&mut rng);
            JointDistribution::new(d.supports().to_vec(), d.probs().to_vec()).unwrap();
            assert!((2..=4).contains(&d.variable_count()));
        }
    }
}
