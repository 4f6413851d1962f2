use alloc::vec::Vec;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::stats::{entropy, LOG_EPS};
use crate::{Error, Result, Rng};

/// `K` unit-norm prototype rows of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub k: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl PrototypeBank {
    pub fn from_rows(k: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Config("prototype bank needs K >= 1 and dim >= 1".into()));
        }
        if data.len() != k * dim {
            return Err(Error::ShapeMismatch {
                expected: k * dim,
                actual: data.len(),
            });
        }
        let mut bank = Self { k, dim, data };
        bank.renormalize();
        Ok(bank)
    }

    /// Gaussian rows projected onto the unit sphere.
    pub fn random(k: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = Rng::seed_from_u64(seed);
        let data = (0..k * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::from_rows(k, dim, data)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Rescales every row to unit norm; zero rows become `e₁`.
    pub fn renormalize(&mut self) {
        for row in self.data.chunks_mut(self.dim) {
            let n = libm::sqrt(row.iter().map(|x| x * x).sum());
            if n > 0.0 && n.is_finite() {
                row.iter_mut().for_each(|x| *x /= n);
            } else {
                row.fill(0.0);
                row[0] = 1.0;
            }
        }
    }
}

/// Probability vector over prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentDistribution(pub Vec<f64>);

impl AssignmentDistribution {
    pub fn uniform(k: usize) -> Self {
        Self(alloc::vec![1.0 / k as f64; k])
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Softmax of `logits / tau` with max subtraction.
    pub fn softmax(logits: &[f64], tau: f64) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|&l| libm::exp((l - max) / tau)).collect();
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        Self(p)
    }
}

/// Inner products `⟨z, q_k⟩` for every prototype.
pub fn similarities(z: &[f64], bank: &PrototypeBank) -> Vec<f64> {
    bank.data
        .chunks(bank.dim)
        .map(|q| q.iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

/// `p_k = exp(⟨z, q_k⟩ / τ) / Σ_j exp(⟨z, q_j⟩ / τ)`.
pub fn prototype_probs(z: &[f64], bank: &PrototypeBank, tau: f64) -> AssignmentDistribution {
    AssignmentDistribution::softmax(&similarities(z, bank), tau)
}

/// `H(target, anchor) = −Σ_k target_k · ln(anchor_k + ε)`.
pub fn cross_entropy(target: &AssignmentDistribution, anchor: &AssignmentDistribution) -> f64 {
    -target
        .0
        .iter()
        .zip(&anchor.0)
        .map(|(t, a)| t * libm::log(a + LOG_EPS))
        .sum::<f64>()
}

/// Entropy of the batch-mean assignment; the objective subtracts `λ` times this.
pub fn memax(mean_probs: &AssignmentDistribution) -> f64 {
    mean_probs.entropy()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn equal_logits_are_uniform() {
        let p = AssignmentDistribution::softmax(&[0.3; 7], 0.1);
        assert!(p.0.iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn two_way_closed_form() {
        let p = AssignmentDistribution::softmax(&[1.0, 0.0], 1.0);
        let e = libm::exp(1.0);
        assert!((p.0[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p.0[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p.0[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn lower_temperature_sharpens() {
        let logits = [0.9, 0.1, -0.4, 0.35];
        let sharp = AssignmentDistribution::softmax(&logits, 0.025).entropy();
        let soft = AssignmentDistribution::softmax(&logits, 0.1).entropy();
        assert!(sharp < soft);
    }

    #[test]
    fn uniform_cross_entropy_is_ln_k() {
        let u = AssignmentDistribution::uniform(30);
        assert!((cross_entropy(&u, &u) - 3.401_197_381_662_155).abs() < 1e-9);
        assert!((memax(&u) - libm::log(30.0)).abs() < 1e-9);
    }

    #[test]
    fn one_hot_cases() {
        let mut oh = alloc::vec![0.0; 5];
        oh[2] = 1.0;
        let oh = AssignmentDistribution(oh);
        assert!(cross_entropy(&oh, &oh).abs() < 1e-11);
        assert!(memax(&oh).abs() < 1e-11);
    }

    #[test]
    fn gibbs_inequality_and_entropy_bounds() {
        let mut rng = Rng::seed_from_u64(17);
        for _ in 0..100 {
            let k = rng.random_range(2..12);
            let t: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = AssignmentDistribution::softmax(&t, 1.0);
            let a = AssignmentDistribution::softmax(&a, 0.5);
            assert!(cross_entropy(&t, &a) >= t.entropy() - 1e-10);
            let h = memax(&a);
            assert!(h >= -1e-10 && h <= libm::log(k as f64) + 1e-10);
        }
    }

    #[test]
    fn random_bank_is_unit_norm() {
        let b = PrototypeBank::random(30, 128, 4).unwrap();
        for k in 0..30 {
            let n: f64 = b.row(k).iter().map(|x| x * x).sum();
            assert!((libm::sqrt(n) - 1.0).abs() < 1e-12);
        }
        assert_eq!(b, PrototypeBank::random(30, 128, 4).unwrap());
    }
}
