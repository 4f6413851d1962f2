use alloc::{vec, vec::Vec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::assign::PrototypeBank;
use super::loss::{anchor_objective, target_assignments, Sample};
use super::optim::{adamw_step, cosine_lr, AdamWConfig, AdamWState};
use crate::encoder::{ema_update, init_params, EncoderConfig, EncoderParams};
use crate::exec::Executor;
use crate::grid::DailyFieldSeries;
use crate::stats::count_entropy;
use crate::views::{make_views, Raster, ViewConfig};
use crate::{Error, Result, Rng};

/// Which batch-mean distribution the entropy regularizer acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemaxSide {
    /// Mean of the anchor predictions (differentiable through the anchor encoder).
    #[default]
    Anchor,
    /// Mean of the target assignments (differentiable through the bank only).
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_prototypes: usize,
    pub tau_anchor: f64,
    pub tau_target: f64,
    pub memax_weight: f64,
    pub memax_side: MemaxSide,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub final_lr: f64,
    pub weight_decay: f64,
    pub ema_momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_prototypes: 30,
            tau_anchor: 0.1,
            tau_target: 0.025,
            memax_weight: 1.0,
            memax_side: MemaxSide::Anchor,
            epochs: 300,
            batch_size: 512,
            base_lr: 1e-3,
            final_lr: 1e-6,
            weight_decay: 0.04,
            ema_momentum: 0.996,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_prototypes == 0 {
            return bad("n_prototypes must be >= 1");
        }
        if !(self.tau_anchor > 0.0 && self.tau_target > 0.0) {
            return bad("temperatures must be positive");
        }
        if !(self.tau_target < self.tau_anchor) {
            return bad("tau_target must be smaller than tau_anchor");
        }
        if !(self.memax_weight >= 0.0) {
            return bad("memax_weight must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.base_lr > 0.0 && self.final_lr > 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rates must be positive and weight decay nonnegative");
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return bad("ema_momentum must be in [0, 1]");
        }
        Ok(())
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch objective.
    pub loss: f64,
    /// Mean over batches of the regularized batch-mean entropy.
    pub mean_entropy: f64,
    pub lr: f64,
    /// Entropy of the epoch's target-assignment argmax histogram.
    pub usage_entropy: f64,
    pub usage: Vec<u64>,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub anchor: EncoderParams,
    pub target: EncoderParams,
    pub bank: PrototypeBank,
    pub report: TrainReport,
}

/// Initial anchor/target encoders and bank for a configuration.
pub fn initial_state(
    channels: usize,
    view_cfg: &ViewConfig,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(EncoderParams, EncoderParams, PrototypeBank)> {
    let dims = enc_cfg.dims(view_cfg.patch_size, channels);
    let anchor = init_params(dims, cfg.seed)?;
    let bank = PrototypeBank::random(cfg.n_prototypes, dims.latent, cfg.seed.wrapping_add(0x9e37_79b9))?;
    Ok((anchor.clone(), anchor, bank))
}

/// Per-(epoch, day) generator so views never depend on scheduling.
fn view_rng(seed: u64, epoch: usize, day: usize) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64 + 1) << 32) | day as u64);
    rng
}

/// Trains on a normalized series. Deterministic in `cfg.seed` for any executor.
pub fn train<E: Executor>(
    dataset: &DailyFieldSeries,
    view_cfg: &ViewConfig,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
    exec: &E,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    view_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training series"));
    }
    let (mut anchor, mut target, mut bank) = initial_state(dataset.n_channels(), view_cfg, enc_cfg, cfg)?;
    let mut enc_state = AdamWState::new(anchor.data.len());
    let mut bank_state = AdamWState::new(bank.data.len());
    let adam = AdamWConfig::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr, cfg.final_lr);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut usage = vec![0u64; bank.k];
        let mut degenerate = 0;
        let mut n_batches = 0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let samples: Vec<Sample> = exec.map_indexed(batch.len(), |i| {
                let day = batch[i];
                let mut rng = view_rng(cfg.seed, epoch, day);
                let (target, anchors) = make_views(&Raster::of_day(dataset, day), view_cfg, &mut rng);
                Sample { target, anchors }
            });
            let targets = target_assignments(&target, &bank, &samples, cfg.tau_target, exec)?;
            let (breakdown, grads) = anchor_objective(&anchor, &bank, &samples, &targets, cfg, exec, true)?;
            if !breakdown.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let grads = grads.expect("gradients requested");
            adamw_step(&mut anchor.data, &grads.encoder, &mut enc_state, lr, cfg.weight_decay, adam)?;
            adamw_step(&mut bank.data, &grads.bank, &mut bank_state, lr, cfg.weight_decay, adam)?;
            bank.renormalize();
            ema_update(&mut target, &anchor, cfg.ema_momentum)?;

            loss_sum += breakdown.loss;
            entropy_sum += breakdown.mean_entropy;
            for (u, c) in usage.iter_mut().zip(&breakdown.target_usage) {
                *u += c;
            }
            degenerate += breakdown.degenerate;
            n_batches += 1;
        }
        report.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / n_batches as f64,
            mean_entropy: entropy_sum / n_batches as f64,
            lr,
            usage_entropy: count_entropy(&usage),
            usage,
            degenerate,
        });
    }
    Ok(TrainOutcome {
        anchor,
        target,
        bank,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::YearRange;
    use crate::exec::Sequential;
    use crate::grid::{normalize, GridGeometry};
    use crate::synth::{synthesize, SyntheticSpec};

    fn data() -> DailyFieldSeries {
        let g = GridGeometry::new(-20.0, -50.0, 0.5, 10, 10).unwrap();
        let s = SyntheticSpec::new(g, 3, YearRange::new(2000, 2000), 1);
        let d = synthesize(&s).unwrap();
        let stats = d.series.compute_stats();
        normalize(&d.series, &stats).unwrap()
    }

    fn small() -> (ViewConfig, EncoderConfig, TrainConfig) {
        let v = ViewConfig {
            out_size: 8,
            patch_size: 4,
            n_anchors: 1,
            mask_ratio: 0.25,
            ..ViewConfig::default()
        };
        let e = EncoderConfig {
            embed: 8,
            hidden: 8,
            latent: 8,
        };
        let t = TrainConfig {
            n_prototypes: 4,
            epochs: 2,
            batch_size: 64,
            ..TrainConfig::default()
        };
        (v, e, t)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let d = data();
        let (v, e, mut t) = small();
        t.epochs = 0;
        let out = train(&d, &v, &e, &t, &Sequential).unwrap();
        let (a, tg, b) = initial_state(2, &v, &e, &t).unwrap();
        assert_eq!(out.anchor, a);
        assert_eq!(out.target, tg);
        assert_eq!(out.bank, b);
        assert!(out.report.epochs.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_keeps_unit_prototypes() {
        let d = data();
        let (v, e, t) = small();
        let a = train(&d, &v, &e, &t, &Sequential).unwrap();
        let b = train(&d, &v, &e, &t, &Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.epochs.len(), 2);
        for k in 0..a.bank.k {
            let n: f64 = a.bank.row(k).iter().map(|x| x * x).sum();
            assert!((libm::sqrt(n) - 1.0).abs() < 1e-6);
        }
        assert_eq!(a.report.epochs[0].usage.iter().sum::<u64>(), d.len() as u64);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            tau_target: 0.2,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
