//! Mask-aware patch encoder: patchify, linear patch embedding, mean pooling
//! over unmasked patches, a tanh MLP head and L2 normalization.
//!
//! Parameters are stored in one flat buffer so optimizers and the EMA update
//! can treat them uniformly.

use alloc::{vec, vec::Vec};
use core::ops::Range;
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::views::View;
use crate::{Error, Result, Rng};

/// Pre-normalization norms below this fall back to `e₁`.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderDims {
    /// Flattened patch length `patch_size² · channels`.
    pub patch_dim: usize,
    pub embed: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl EncoderDims {
    pub fn new(patch_size: usize, channels: usize, embed: usize, hidden: usize, latent: usize) -> Self {
        Self {
            patch_dim: patch_size * patch_size * channels,
            embed,
            hidden,
            latent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_dim == 0 || self.embed == 0 || self.hidden == 0 || self.latent == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        Ok(())
    }

    /// `(name, shape, range)` of each tensor in the flat buffer.
    pub fn layout(&self) -> [(&'static str, [usize; 2], Range<usize>); 6] {
        let shapes = [
            ("patch_embed.weight", [self.patch_dim, self.embed]),
            ("patch_embed.bias", [1, self.embed]),
            ("mlp1.weight", [self.embed, self.hidden]),
            ("mlp1.bias", [1, self.hidden]),
            ("mlp2.weight", [self.hidden, self.latent]),
            ("mlp2.bias", [1, self.latent]),
        ];
        let mut offset = 0;
        shapes.map(|(name, shape)| {
            let len = shape[0] * shape[1];
            let r = offset..offset + len;
            offset += len;
            (name, shape, r)
        })
    }

    pub fn n_params(&self) -> usize {
        self.layout()[5].2.end
    }
}

/// Width settings of the encoder; the patch length follows from the views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub embed: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed: 64,
            hidden: 128,
            latent: 128,
        }
    }
}

impl EncoderConfig {
    pub fn dims(&self, patch_size: usize, channels: usize) -> EncoderDims {
        EncoderDims::new(patch_size, channels, self.embed, self.hidden, self.latent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dims: EncoderDims,
    pub data: Vec<f64>,
}

macro_rules! tensor {
    ($name:ident, $name_mut:ident, $idx:expr) => {
        pub fn $name(&self) -> &[f64] {
            &self.data[self.dims.layout()[$idx].2.clone()]
        }
        pub fn $name_mut(&mut self) -> &mut [f64] {
            let r = self.dims.layout()[$idx].2.clone();
            &mut self.data[r]
        }
    };
}

impl EncoderParams {
    pub fn zeros(dims: EncoderDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.n_params()],
        }
    }

    tensor!(patch_w, patch_w_mut, 0);
    tensor!(patch_b, patch_b_mut, 1);
    tensor!(w1, w1_mut, 2);
    tensor!(b1, b1_mut, 3);
    tensor!(w2, w2_mut, 4);
    tensor!(b2, b2_mut, 5);
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(dims: EncoderDims, seed: u64) -> Result<EncoderParams> {
    dims.validate()?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut p = EncoderParams::zeros(dims);
    for (name, [fan_in, fan_out], range) in dims.layout() {
        if name.ends_with("weight") {
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for w in &mut p.data[range] {
                *w = rng.random_range(-bound..bound);
            }
        }
    }
    Ok(p)
}

/// Unit-norm latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent(pub Vec<f64>);

impl Latent {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|x| x * x).sum())
    }
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pooled_patch: Vec<f64>,
    embedded: Vec<f64>,
    hidden: Vec<f64>,
    norm: f64,
    pub latent: Latent,
    /// Set when the head output was (numerically) zero and `e₁` was returned.
    pub degenerate: bool,
}

fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    let n_out = b.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
            *o += xi * wij;
        }
    }
    out
}

/// Mean of the flattened unmasked patches, each ordered `(channel, row, col)`.
fn pool_patches(view: &View, patch_size: usize) -> Result<Vec<f64>> {
    let g = view.side / patch_size;
    let dim = patch_size * patch_size * view.channels;
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for p in 0..g * g {
        if view.mask.get(p).copied().unwrap_or(false) {
            continue;
        }
        n += 1;
        let (pr, pc) = (p / g, p % g);
        let mut k = 0;
        for c in 0..view.channels {
            for r in pr * patch_size..(pr + 1) * patch_size {
                let start = (c * view.side + r) * view.side + pc * patch_size;
                for &x in &view.values[start..start + patch_size] {
                    acc[k] += x;
                    k += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::AllPatchesMasked);
    }
    let inv = 1.0 / n as f64;
    acc.iter_mut().for_each(|x| *x *= inv);
    Ok(acc)
}

/// Forward pass with cached activations.
pub fn forward(params: &EncoderParams, view: &View) -> Result<ForwardCache> {
    let dims = params.dims;
    let patch_size = libm::sqrt((dims.patch_dim / view.channels.max(1)) as f64) as usize;
    if patch_size * patch_size * view.channels != dims.patch_dim || view.side % patch_size != 0 {
        return Err(Error::ShapeMismatch {
            expected: dims.patch_dim,
            actual: patch_size * patch_size * view.channels,
        });
    }
    // The embedding is affine, so embedding the mean patch equals mean-pooling
    // the embedded patches.
    let pooled_patch = pool_patches(view, patch_size)?;
    let embedded = affine(&pooled_patch, params.patch_w(), params.patch_b());
    let mut hidden = affine(&embedded, params.w1(), params.b1());
    hidden.iter_mut().for_each(|h| *h = libm::tanh(*h));
    let mut out = affine(&hidden, params.w2(), params.b2());
    let norm = libm::sqrt(out.iter().map(|x| x * x).sum());
    let degenerate = !(norm > DEGENERATE_NORM);
    if degenerate {
        out.iter_mut().for_each(|x| *x = 0.0);
        out[0] = 1.0;
    } else {
        out.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(ForwardCache {
        pooled_patch,
        embedded,
        hidden,
        norm,
        latent: Latent(out),
        degenerate,
    })
}

pub fn encode(params: &EncoderParams, view: &View) -> Result<Latent> {
    forward(params, view).map(|c| c.latent)
}

/// Accumulates `∂(latent · upstream)/∂params` into `grad` (same layout as
/// `params.data`). Degenerate forwards contribute nothing.
pub fn backward_into(params: &EncoderParams, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) {
    if cache.degenerate {
        return;
    }
    let dims = params.dims;
    let layout = dims.layout();
    let z = &cache.latent.0;
    // Jacobian of u / |u|: (I - z zᵀ) / |u|.
    let zg: f64 = z.iter().zip(upstream).map(|(a, b)| a * b).sum();
    let g_out: Vec<f64> = z
        .iter()
        .zip(upstream)
        .map(|(zi, gi)| (gi - zi * zg) / cache.norm)
        .collect();

    let (w2, b2) = (params.w2(), layout[5].2.clone());
    for (g, go) in grad[b2].iter_mut().zip(&g_out) {
        *g += go;
    }
    let w2r = layout[4].2.clone();
    let mut g_hidden = vec![0.0; dims.hidden];
    for i in 0..dims.hidden {
        let row = &w2[i * dims.latent..(i + 1) * dims.latent];
        let grow = &mut grad[w2r.start + i * dims.latent..w2r.start + (i + 1) * dims.latent];
        let hi = cache.hidden[i];
        let mut acc = 0.0;
        for j in 0..dims.latent {
            grow[j] += hi * g_out[j];
            acc += row[j] * g_out[j];
        }
        g_hidden[i] = acc * (1.0 - hi * hi);
    }

    for (g, gh) in grad[layout[3].2.clone()].iter_mut().zip(&g_hidden) {
        *g += gh;
    }
    let (w1, w1r) = (params.w1(), layout[2].2.clone());
    let mut g_embed = vec![0.0; dims.embed];
    for i in 0..dims.embed {
        let row = &w1[i * dims.hidden..(i + 1) * dims.hidden];
        let grow = &mut grad[w1r.start + i * dims.hidden..w1r.start + (i + 1) * dims.hidden];
        let ei = cache.embedded[i];
        let mut acc = 0.0;
        for j in 0..dims.hidden {
            grow[j] += ei * g_hidden[j];
            acc += row[j] * g_hidden[j];
        }
        g_embed[i] = acc;
    }

    for (g, ge) in grad[layout[1].2.clone()].iter_mut().zip(&g_embed) {
        *g += ge;
    }
    let pwr = layout[0].2.clone();
    for (i, &xi) in cache.pooled_patch.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let grow = &mut grad[pwr.start + i * dims.embed..pwr.start + (i + 1) * dims.embed];
        for (g, ge) in grow.iter_mut().zip(&g_embed) {
            *g += xi * ge;
        }
    }
}

/// Exact gradient of `encode(params, view) · upstream` with respect to every parameter.
pub fn encode_backward(params: &EncoderParams, view: &View, upstream: &[f64]) -> Result<EncoderParams> {
    if upstream.len() != params.dims.latent {
        return Err(Error::ShapeMismatch {
            expected: params.dims.latent,
            actual: upstream.len(),
        });
    }
    let cache = forward(params, view)?;
    let mut grad = EncoderParams::zeros(params.dims);
    backward_into(params, &cache, upstream, &mut grad.data);
    Ok(grad)
}

/// `target ← m · target + (1 − m) · anchor`, entrywise.
pub fn ema_update(target: &mut EncoderParams, anchor: &EncoderParams, momentum: f64) -> Result<()> {
    if target.dims != anchor.dims {
        return Err(Error::ShapeMismatch {
            expected: target.dims.n_params(),
            actual: anchor.dims.n_params(),
        });
    }
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::Config("ema momentum must be in [0, 1]".into()));
    }
    for (t, a) in target.data.iter_mut().zip(&anchor.data) {
        *t = momentum * *t + (1.0 - momentum) * a;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::views::{CropBox, ViewKind};

    fn dims() -> EncoderDims {
        EncoderDims::new(2, 2, 5, 6, 4)
    }

    fn view(seed: u64, masked: &[usize]) -> View {
        let mut rng = Rng::seed_from_u64(seed);
        let side = 4;
        let mut values: Vec<f64> = (0..2 * side * side).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut mask = vec![false; 4];
        for &p in masked {
            mask[p] = true;
            let (pr, pc) = (p / 2, p % 2);
            for c in 0..2 {
                for r in pr * 2..pr * 2 + 2 {
                    let s = (c * side + r) * side + pc * 2;
                    values[s..s + 2].fill(0.0);
                }
            }
        }
        View {
            side,
            channels: 2,
            values,
            mask,
            crop: CropBox { row: 0, col: 0, height: 4, width: 4 },
            kind: ViewKind::Anchor,
        }
    }

    fn random_params(seed: u64) -> EncoderParams {
        let mut p = init_params(dims(), seed).unwrap();
        let mut rng = Rng::seed_from_u64(seed + 100);
        p.data.iter_mut().for_each(|x| *x += rng.random_range(-0.3..0.3));
        p
    }

    #[test]
    fn output_is_unit_norm_and_deterministic() {
        let p = random_params(1);
        let v = view(2, &[1]);
        let a = encode(&p, &v).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a, encode(&p, &v).unwrap());
    }

    #[test]
    fn zero_params_fall_back_to_e1() {
        let p = EncoderParams::zeros(dims());
        let c = forward(&p, &view(0, &[])).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.latent.0, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn all_masked_is_error() {
        let p = random_params(0);
        assert_eq!(encode(&p, &view(0, &[0, 1, 2, 3])), Err(Error::AllPatchesMasked));
    }

    #[test]
    fn patch_permutation_invariance() {
        let p = random_params(4);
        let v = view(7, &[2]);
        // Swap patches 0 and 3 (both unmasked).
        let mut w = v.clone();
        for c in 0..2 {
            for dr in 0..2 {
                for dc in 0..2 {
                    let a = (c * 4 + dr) * 4 + dc;
                    let b = (c * 4 + 2 + dr) * 4 + 2 + dc;
                    w.values.swap(a, b);
                }
            }
        }
        let za = encode(&p, &v).unwrap();
        let zb = encode(&p, &w).unwrap();
        for (x, y) in za.0.iter().zip(&zb.0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..3 {
            let p = random_params(seed);
            let v = view(seed + 10, &[seed as usize % 4]);
            let mut rng = Rng::seed_from_u64(seed + 20);
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = encode_backward(&p, &v, &c).unwrap();
            let f = |q: &EncoderParams| -> f64 { encode(q, &v).unwrap().0.iter().zip(&c).map(|(a, b)| a * b).sum() };
            let h = 1e-4;
            for i in 0..p.data.len() {
                let mut plus = p.clone();
                plus.data[i] += h;
                let mut minus = p.clone();
                minus.data[i] -= h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                if fd.abs() < 1e-7 && g.data[i].abs() < 1e-7 {
                    continue;
                }
                assert!(rel_err(fd, g.data[i]) <= 1e-4, "param {i}: fd {fd} vs {}", g.data[i]);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = random_params(3);
        let g = encode_backward(&p, &view(1, &[]), &[0.0; 4]).unwrap();
        assert!(g.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalization_jacobian_is_orthogonal_to_output() {
        // Perturbing the output bias along g moves z by J g; J z must vanish.
        let p = random_params(8);
        let v = view(3, &[0]);
        let c = forward(&p, &v).unwrap();
        let z = c.latent.0.clone();
        let g = encode_backward(&p, &v, &z).unwrap();
        // d(z·z)/dθ = 0 because |z| = 1 everywhere.
        assert!(g.data.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn ema_cases() {
        let d = dims();
        let mut t = EncoderParams::zeros(d);
        let mut a = EncoderParams::zeros(d);
        a.data.iter_mut().for_each(|x| *x = 2.0);
        let orig = t.clone();
        ema_update(&mut t, &a, 1.0).unwrap();
        assert_eq!(t, orig);
        ema_update(&mut t, &a, 0.5).unwrap();
        assert!(t.data.iter().all(|&x| x == 1.0));
        ema_update(&mut t, &a, 0.0).unwrap();
        assert_eq!(t, a);
        let other = EncoderParams::zeros(EncoderDims::new(2, 1, 5, 6, 4));
        assert!(ema_update(&mut t, &other, 0.5).is_err());
    }

    #[test]
    fn ema_contracts_distance() {
        let mut t = random_params(1);
        let a = random_params(2);
        let dist = |x: &EncoderParams| libm::sqrt(x.data.iter().zip(&a.data).map(|(p, q)| (p - q) * (p - q)).sum());
        let before = dist(&t);
        ema_update(&mut t, &a, 0.75).unwrap();
        assert!((dist(&t) - 0.75 * before).abs() < 1e-12);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let d = EncoderDims::new(4, 2, 64, 128, 128);
        let a = init_params(d, 9).unwrap();
        assert_eq!(a, init_params(d, 9).unwrap());
        for (name, [fi, fo], r) in d.layout() {
            let vals = &a.data[r];
            if name.ends_with("bias") {
                assert!(vals.iter().all(|&b| b == 0.0));
            } else {
                let bound = libm::sqrt(6.0 / (fi + fo) as f64);
                assert!(vals.iter().all(|w| w.abs() <= bound));
                let max = vals.iter().fold(0.0f64, |m, w| m.max(w.abs()));
                assert!(max > 0.9 * bound);
            }
        }
    }
}
