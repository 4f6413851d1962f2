//! Batch objective `mean CE(p⁺, p) − λ·H(p̄)` and its analytic gradients.
//!
//! Targets come from the EMA encoder at the sharp temperature and are
//! constants for differentiation; only the anchor encoder and the prototype
//! bank receive gradients.

use alloc::{vec, vec::Vec};

use super::assign::{cross_entropy, similarities, AssignmentDistribution, PrototypeBank};
use super::train::{MemaxSide, TrainConfig};
use crate::encoder::{backward_into, forward, EncoderParams, ForwardCache};
use crate::exec::Executor;
use crate::stats::{argmax, entropy, LOG_EPS};
use crate::views::View;
use crate::{Error, Result};

/// Samples per gradient chunk. Fixed so the summation order never depends on
/// the number of workers.
const CHUNK: usize = 8;

/// One training sample: an unmasked target view and its masked anchors.
#[derive(Debug, Clone)]
pub struct Sample {
    pub target: View,
    pub anchors: Vec<View>,
}

#[derive(Debug, Clone)]
pub struct TargetAssignment {
    pub latent: Vec<f64>,
    pub probs: AssignmentDistribution,
    pub degenerate: bool,
}

/// Gradients for the anchor encoder (flat, `EncoderParams` layout) and the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<f64>,
    pub bank: Vec<f64>,
}

impl Gradients {
    fn zeros(n_encoder: usize, n_bank: usize) -> Self {
        Self {
            encoder: vec![0.0; n_encoder],
            bank: vec![0.0; n_bank],
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.encoder.iter_mut().zip(&other.encoder) {
            *a += b;
        }
        for (a, b) in self.bank.iter_mut().zip(&other.bank) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub loss: f64,
    /// Mean cross-entropy over (sample, anchor) pairs.
    pub cross_entropy: f64,
    /// Entropy of the regularized batch-mean distribution.
    pub mean_entropy: f64,
    /// Argmax histogram of the target assignments.
    pub target_usage: Vec<u64>,
    pub degenerate: usize,
}

/// Sharp pseudo-labels from the target encoder. No gradient flows through these.
pub fn target_assignments<E: Executor>(
    target_params: &EncoderParams,
    bank: &PrototypeBank,
    samples: &[Sample],
    tau_target: f64,
    exec: &E,
) -> Result<Vec<TargetAssignment>> {
    exec.map_indexed(samples.len(), |i| {
        let c = forward(target_params, &samples[i].target)?;
        let probs = AssignmentDistribution::softmax(&similarities(&c.latent.0, bank), tau_target);
        Ok(TargetAssignment {
            latent: c.latent.0,
            probs,
            degenerate: c.degenerate,
        })
    })
    .into_iter()
    .collect()
}

struct AnchorForward {
    cache: ForwardCache,
    probs: AssignmentDistribution,
}

/// `∂L/∂logits` for a softmax output with upstream `∂L/∂p`.
fn softmax_backward(p: &[f64], g: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(pk, gk)| pk * (gk - dot)).collect()
}

/// `∂(−λ H(p̄))/∂p̄`.
fn memax_grad(mean: &[f64], weight: f64) -> Vec<f64> {
    mean.iter()
        .map(|&m| weight * (libm::log(m + LOG_EPS) + m / (m + LOG_EPS)))
        .collect()
}

/// Anchor-branch objective with targets held fixed. Gradients are computed
/// when `with_grad` is set.
pub fn anchor_objective<E: Executor>(
    anchor_params: &EncoderParams,
    bank: &PrototypeBank,
    samples: &[Sample],
    targets: &[TargetAssignment],
    cfg: &TrainConfig,
    exec: &E,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<Gradients>)> {
    if samples.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if targets.len() != samples.len() {
        return Err(Error::ShapeMismatch {
            expected: samples.len(),
            actual: targets.len(),
        });
    }
    let k = bank.k;
    let forwards: Vec<Vec<AnchorForward>> = exec
        .map_indexed(samples.len(), |i| {
            samples[i]
                .anchors
                .iter()
                .map(|v| {
                    let cache = forward(anchor_params, v)?;
                    let probs = AssignmentDistribution::softmax(&similarities(&cache.latent.0, bank), cfg.tau_anchor);
                    Ok(AnchorForward { cache, probs })
                })
                .collect::<Result<Vec<_>>>()
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let n_pairs: usize = forwards.iter().map(Vec::len).sum();
    if n_pairs == 0 {
        return Err(Error::Empty("anchor views"));
    }
    let inv_pairs = 1.0 / n_pairs as f64;
    let mut ce = 0.0;
    let mut anchor_mean = vec![0.0; k];
    let mut degenerate = 0;
    for (fw, t) in forwards.iter().zip(targets) {
        degenerate += t.degenerate as usize;
        for a in fw {
            degenerate += a.cache.degenerate as usize;
            ce += cross_entropy(&t.probs, &a.probs);
            for (m, p) in anchor_mean.iter_mut().zip(&a.probs.0) {
                *m += p;
            }
        }
    }
    ce *= inv_pairs;
    anchor_mean.iter_mut().for_each(|m| *m *= inv_pairs);
    let target_mean: Vec<f64> = {
        let mut m = vec![0.0; k];
        for t in targets {
            for (a, p) in m.iter_mut().zip(&t.probs.0) {
                *a += p;
            }
        }
        m.iter_mut().for_each(|x| *x /= targets.len() as f64);
        m
    };
    let regularized = match cfg.memax_side {
        MemaxSide::Anchor => &anchor_mean,
        MemaxSide::Target => &target_mean,
    };
    let mean_entropy = entropy(regularized);
    let mut target_usage = vec![0u64; k];
    for t in targets {
        if let Some(i) = argmax(&t.probs.0) {
            target_usage[i] += 1;
        }
    }
    let breakdown = LossBreakdown {
        loss: ce - cfg.memax_weight * mean_entropy,
        cross_entropy: ce,
        mean_entropy,
        target_usage,
        degenerate,
    };
    if !with_grad {
        return Ok((breakdown, None));
    }

    let n_enc = anchor_params.data.len();
    let dim = bank.dim;
    let g_mean = memax_grad(regularized, cfg.memax_weight);
    let anchor_g_mean = matches!(cfg.memax_side, MemaxSide::Anchor).then_some(&g_mean);
    let n_chunks = samples.len().div_ceil(CHUNK);
    let partials = exec.map_indexed(n_chunks, |c| {
        let mut g = Gradients::zeros(n_enc, bank.data.len());
        let mut g_z = vec![0.0; dim];
        for i in c * CHUNK..((c + 1) * CHUNK).min(samples.len()) {
            let t = &targets[i].probs.0;
            for a in &forwards[i] {
                let p = &a.probs.0;
                let g_p: Vec<f64> = (0..k)
                    .map(|j| {
                        let ce_term = -t[j] / (p[j] + LOG_EPS);
                        let reg = anchor_g_mean.map_or(0.0, |gm| gm[j]);
                        (ce_term + reg) * inv_pairs
                    })
                    .collect();
                let g_s = softmax_backward(p, &g_p);
                let z = &a.cache.latent.0;
                g_z.fill(0.0);
                for (j, gs) in g_s.iter().enumerate() {
                    let scaled = gs / cfg.tau_anchor;
                    let q = bank.row(j);
                    let gq = &mut g.bank[j * dim..(j + 1) * dim];
                    for d in 0..dim {
                        g_z[d] += scaled * q[d];
                        gq[d] += scaled * z[d];
                    }
                }
                backward_into(anchor_params, &a.cache, &g_z, &mut g.encoder);
            }
        }
        g
    });
    let mut grads = Gradients::zeros(n_enc, bank.data.len());
    for p in &partials {
        grads.add(p);
    }
    if matches!(cfg.memax_side, MemaxSide::Target) {
        // Regularizer on the mean target prediction: reaches the bank through
        // the target softmax, never the target encoder.
        let inv_b = 1.0 / targets.len() as f64;
        for t in targets {
            let g_p: Vec<f64> = g_mean.iter().map(|g| g * inv_b).collect();
            let g_s = softmax_backward(&t.probs.0, &g_p);
            for (j, gs) in g_s.iter().enumerate() {
                let scaled = gs / cfg.tau_target;
                for (gq, z) in grads.bank[j * dim..(j + 1) * dim].iter_mut().zip(&t.latent) {
                    *gq += scaled * z;
                }
            }
        }
    }
    Ok((breakdown, Some(grads)))
}

/// Full batch objective value.
pub fn batch_loss<E: Executor>(
    anchor_params: &EncoderParams,
    target_params: &EncoderParams,
    bank: &PrototypeBank,
    samples: &[Sample],
    cfg: &TrainConfig,
    exec: &E,
) -> Result<LossBreakdown> {
    let targets = target_assignments(target_params, bank, samples, cfg.tau_target, exec)?;
    anchor_objective(anchor_params, bank, samples, &targets, cfg, exec, false).map(|(l, _)| l)
}

/// Objective value and gradients for the anchor encoder and the bank.
pub fn batch_gradients<E: Executor>(
    anchor_params: &EncoderParams,
    target_params: &EncoderParams,
    bank: &PrototypeBank,
    samples: &[Sample],
    cfg: &TrainConfig,
    exec: &E,
) -> Result<(LossBreakdown, Gradients)> {
    let targets = target_assignments(target_params, bank, samples, cfg.tau_target, exec)?;
    let (loss, grads) = anchor_objective(anchor_params, bank, samples, &targets, cfg, exec, true)?;
    Ok((loss, grads.expect("gradients requested")))
}
