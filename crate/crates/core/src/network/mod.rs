//! Miniature SegNet-style encoder-decoder.
//!
//! Encoder block: same-padded conv, bias, ReLU, 2×2 max-pool (indices kept).
//! Decoder block: index unpooling, same-padded conv, bias, ReLU.
//! Head: 1×1 conv to two logits and a per-pixel softmax.
//!
//! Layer order everywhere (parameters, gradients, the NETP file) is
//! `enc0 … enc{d-1}, dec{d-1} … dec0, classifier`.

pub mod io;
pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decision::ProbMap;
use crate::error::{Error, Result};
use crate::grid::{Grid3, Mask};
use crate::priors::ClassWeights;

pub use layers::{ConvParams, Tensor};

/// Floor applied to the true-class probability before the log.
pub const LOG_CLIP: f64 = 1e-12;

pub const INPUT_CHANNELS: usize = 3;
pub const CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ArchSpec {
    pub depth: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl ArchSpec {
    /// Four blocks with 16/32/64/128 features.
    pub fn default_for(height: usize, width: usize) -> Self {
        Self {
            depth: 4,
            channels: vec![16, 32, 64, 128],
            kernel_size: 3,
            input_height: height,
            input_width: width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.depth == 0 || self.depth > 16 {
            return bad(format!("depth {} must be in 1..=16", self.depth));
        }
        if self.channels.len() != self.depth {
            return bad(format!(
                "{} channel counts for depth {}",
                self.channels.len(),
                self.depth
            ));
        }
        if self.channels.contains(&0) {
            return bad("channel counts must be positive".into());
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        let factor = 1usize << self.depth;
        if self.input_height == 0
            || self.input_width == 0
            || !self.input_height.is_multiple_of(factor)
            || !self.input_width.is_multiple_of(factor)
        {
            return bad(format!(
                "input {}x{} is not divisible by 2^{}",
                self.input_height, self.input_width, self.depth
            ));
        }
        Ok(())
    }

    /// `(out, in, kernel)` of every layer in canonical order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        let k = self.kernel_size;
        let ch = &self.channels;
        let mut shapes = Vec::with_capacity(2 * self.depth + 1);
        for l in 0..self.depth {
            let input = if l == 0 { INPUT_CHANNELS } else { ch[l - 1] };
            shapes.push((ch[l], input, k));
        }
        for l in (0..self.depth).rev() {
            let output = if l == 0 { ch[0] } else { ch[l - 1] };
            shapes.push((output, ch[l], k));
        }
        shapes.push((CLASSES, ch[0], 1));
        shapes
    }

    pub fn layer_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.depth).map(|l| format!("enc{l}")).collect();
        names.extend((0..self.depth).rev().map(|l| format!("dec{l}")));
        names.push("classifier".into());
        names
    }
}

/// Learnable parameters in canonical layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub arch: ArchSpec,
    pub layers: Vec<ConvParams>,
}

/// Same shapes as [`NetParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<ConvParams>,
}

impl NetParams {
    pub fn zeros(arch: &ArchSpec) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch: arch.clone(),
            layers: arch
                .layer_shapes()
                .into_iter()
                .map(|(o, i, k)| ConvParams::zeros(o, i, k))
                .collect(),
        })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| ConvParams::zeros(l.out_channels, l.in_channels, l.kernel))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn encoder(&self, l: usize) -> &ConvParams {
        &self.layers[l]
    }

    fn decoder(&self, l: usize) -> &ConvParams {
        &self.layers[2 * self.arch.depth - 1 - l]
    }

    fn classifier(&self) -> &ConvParams {
        &self.layers[2 * self.arch.depth]
    }
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|v| *v *= c);
        }
    }
}

/// He-normal kernels (variance `2 / fan_in`) and zero biases.
pub fn init_params(arch: &ArchSpec, seed: u64) -> Result<NetParams> {
    let mut params = NetParams::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.layers {
        let std = (2.0 / layer.fan_in() as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        for w in &mut layer.weight {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    enc_inputs: Vec<Tensor>,
    enc_pre: Vec<Tensor>,
    /// Argmax cells per encoder level, flat within each channel plane.
    pub pool_indices: Vec<Vec<u32>>,
    dec_inputs: Vec<Tensor>,
    dec_pre: Vec<Tensor>,
    head_input: Tensor,
    probs: ProbMap,
}

impl ForwardCache {
    pub fn probs(&self) -> &ProbMap {
        &self.probs
    }
}

fn check_input(params: &NetParams, image: &Grid3) -> Result<()> {
    let a = &params.arch;
    if image.dims() != (a.input_height, a.input_width) || image.channels() != INPUT_CHANNELS {
        return Err(Error::Shape(format!(
            "image {}x{}x{} vs network input {}x{}x{}",
            image.height(),
            image.width(),
            image.channels(),
            a.input_height,
            a.input_width,
            INPUT_CHANNELS
        )));
    }
    Ok(())
}

/// Two-class softmax keeping `p_background + p_crack == 1` by computing the
/// smaller probability directly and the larger as its complement.
#[inline]
pub fn softmax2(z_background: f64, z_crack: f64) -> (f64, f64) {
    if z_crack >= z_background {
        let pb = 1.0 / (1.0 + (z_crack - z_background).exp());
        (pb, 1.0 - pb)
    } else {
        let pc = 1.0 / (1.0 + (z_background - z_crack).exp());
        (1.0 - pc, pc)
    }
}

pub fn forward(params: &NetParams, image: &Grid3) -> Result<(ProbMap, ForwardCache)> {
    check_input(params, image)?;
    let depth = params.arch.depth;
    let mut a = Tensor::from_grid(image);
    let mut enc_inputs = Vec::with_capacity(depth);
    let mut enc_pre = Vec::with_capacity(depth);
    let mut pool_indices = Vec::with_capacity(depth);
    for l in 0..depth {
        let z = layers::conv_forward(&a, params.encoder(l));
        let r = layers::relu(&z);
        let (pooled, idx) = layers::max_pool(&r);
        enc_inputs.push(a);
        enc_pre.push(z);
        pool_indices.push(idx);
        a = pooled;
    }
    let mut dec_inputs = vec![Tensor::zeros(0, 0, 0); depth];
    let mut dec_pre = vec![Tensor::zeros(0, 0, 0); depth];
    for l in (0..depth).rev() {
        let (h, w) = (enc_pre[l].height, enc_pre[l].width);
        let u = layers::unpool(&a, &pool_indices[l], h, w);
        let z = layers::conv_forward(&u, params.decoder(l));
        a = layers::relu(&z);
        dec_inputs[l] = u;
        dec_pre[l] = z;
    }
    let logits = layers::conv_forward(&a, params.classifier());
    let (h, w) = (logits.height, logits.width);
    let n = h * w;
    let mut data = Vec::with_capacity(n * CLASSES);
    for k in 0..n {
        let (pb, pc) = softmax2(logits.data[k], logits.data[n + k]);
        data.push(pb);
        data.push(pc);
    }
    let probs = ProbMap::from_grid_unchecked(Grid3::new(h, w, CLASSES, data)?);
    let cache = ForwardCache {
        enc_inputs,
        enc_pre,
        pool_indices,
        dec_inputs,
        dec_pre,
        head_input: a,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Probabilities only.
pub fn predict(params: &NetParams, image: &Grid3) -> Result<ProbMap> {
    forward(params, image).map(|(p, _)| p)
}

/// `(1/HW) Σ −w_y log max(p_y, 1e-12)` over all pixels.
pub fn weighted_cross_entropy(p: &ProbMap, truth: &Mask, w: &ClassWeights) -> Result<f64> {
    if p.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "probabilities {:?} vs mask {:?}",
            p.dims(),
            truth.dims()
        )));
    }
    let (h, wd) = p.dims();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..wd {
            let crack = truth.get(y, x);
            let py = if crack {
                p.crack(y, x)
            } else {
                p.background(y, x)
            };
            total -= w.for_label(crack) * py.max(LOG_CLIP).ln();
        }
    }
    Ok(total / (h * wd) as f64)
}

/// Exact gradients of [`weighted_cross_entropy`] for the forward pass that
/// produced `cache`.
pub fn backward(
    params: &NetParams,
    cache: &ForwardCache,
    truth: &Mask,
    w: &ClassWeights,
) -> Result<Gradients> {
    let depth = params.arch.depth;
    if cache.enc_pre.len() != depth
        || truth.dims() != cache.probs.dims()
        || cache.probs.dims() != (params.arch.input_height, params.arch.input_width)
        || cache.head_input.channels != params.classifier().in_channels
    {
        return Err(Error::Shape(
            "forward cache does not match parameters or mask".into(),
        ));
    }
    let mut grads = params.zero_gradients();
    let (h, wd) = truth.dims();
    let n = h * wd;
    let inv = 1.0 / n as f64;

    // d/dz of −w_y log p_y is w_y (p − onehot(y)); zero where the clip is active
    let mut g = Tensor::zeros(CLASSES, h, wd);
    for y in 0..h {
        for x in 0..wd {
            let k = y * wd + x;
            let crack = truth.get(y, x);
            let pb = cache.probs.background(y, x);
            let pc = cache.probs.crack(y, x);
            let p_true = if crack { pc } else { pb };
            if p_true < LOG_CLIP {
                continue;
            }
            let s = w.for_label(crack) * inv;
            g.data[k] = s * (pb - f64::from(u8::from(!crack)));
            g.data[n + k] = s * (pc - f64::from(u8::from(crack)));
        }
    }

    let head = 2 * depth;
    let mut g = layers::conv_backward(
        &cache.head_input,
        params.classifier(),
        &g,
        &mut grads.layers[head],
        true,
    )
    .expect("input gradient requested");

    for l in 0..depth {
        let slot = 2 * depth - 1 - l;
        layers::relu_backward(&mut g, &cache.dec_pre[l]);
        let gu = layers::conv_backward(
            &cache.dec_inputs[l],
            params.decoder(l),
            &g,
            &mut grads.layers[slot],
            true,
        )
        .expect("input gradient requested");
        let (ph, pw) = (cache.enc_pre[l].height / 2, cache.enc_pre[l].width / 2);
        g = layers::unpool_backward(&gu, &cache.pool_indices[l], ph, pw);
    }
    // g is now d loss / d (deepest pooled output)
    for l in (0..depth).rev() {
        let pre = &cache.enc_pre[l];
        let mut gr = layers::max_pool_backward(&g, &cache.pool_indices[l], pre.height, pre.width);
        layers::relu_backward(&mut gr, pre);
        let gi = layers::conv_backward(
            &cache.enc_inputs[l],
            params.encoder(l),
            &gr,
            &mut grads.layers[l],
            l > 0,
        );
        if let Some(gi) = gi {
            g = gi;
        }
    }
    Ok(grads)
}

/// Forward, loss and gradients for one sample.
pub fn loss_and_gradients(
    params: &NetParams,
    image: &Grid3,
    truth: &Mask,
    w: &ClassWeights,
) -> Result<(f64, Gradients)> {
    let (probs, cache) = forward(params, image)?;
    let loss = weighted_cross_entropy(&probs, truth, w)?;
    let grads = backward(params, &cache, truth, w)?;
    Ok((loss, grads))
}
