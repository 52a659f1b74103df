//! Network building blocks: convolution layers, channel attention, RCAB,
//! the high-frequency attention block and the down/up sampling blocks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::spectral::hf_extract;
use crate::tensor::{conv2d, pixel_shuffle, Tensor};

/// Negative slope of every LeakyReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// RCABs on the high-frequency branch of an HFAB.
pub const HF_BRANCH_DEPTH: usize = 2;
/// RCABs on the original-feature branch of an HFAB.
pub const MAIN_BRANCH_DEPTH: usize = 5;

/// Named traversal over the learnable tensors of a layer or network.
pub trait ParamTree {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    /// `(name, tensor)` pairs in traversal order.
    fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, t| out.push((n.to_string(), t.clone())));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.numel());
        n
    }

    /// Rebuilds every parameter as a fresh leaf, tracked or not.
    fn set_trainable(&mut self, trainable: bool) {
        self.visit_mut("", &mut |_, t| {
            *t = if trainable {
                t.requiring_grad()
            } else {
                t.detach()
            };
        });
    }

    fn zero_grad(&self) {
        self.visit("", &mut |_, t| t.zero_grad());
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform in `±sqrt(1/fan_in)`.
pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::leaf(shape.to_vec(), data, true)
}

/// Square-kernel convolution with bias; padding keeps `k/2`.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv {
    pub fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize, stride: usize) -> Conv {
        let fan_in = cin * k * k;
        Conv {
            weight: uniform(rng, &[cout, cin, k, k], fan_in),
            bias: uniform(rng, &[cout], fan_in),
            stride,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let k = self.weight.shape()[2];
        conv2d(x, &self.weight, &self.bias, self.stride, k / 2)
    }
}

impl ParamTree for Conv {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Squeeze-and-excite gate: pool, 1×1 down, ReLU, 1×1 up, sigmoid.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub squeeze: Conv,
    pub excite: Conv,
}

impl ChannelAttention {
    pub fn new(
        rng: &mut ChaCha8Rng,
        channels: usize,
        reduction: usize,
    ) -> Result<ChannelAttention> {
        if reduction == 0 || !channels.is_multiple_of(reduction) {
            return Err(Error::Parameter(format!(
                "channel attention: {channels} channels not divisible by reduction {reduction}"
            )));
        }
        let mid = channels / reduction;
        Ok(ChannelAttention {
            squeeze: Conv::new(rng, channels, mid, 1, 1),
            excite: Conv::new(rng, mid, channels, 1, 1),
        })
    }

    /// Per-channel gate in `(0, 1)`, shaped `[C,1,1]`.
    pub fn gate(&self, x: &Tensor) -> Result<Tensor> {
        let pooled = x.global_avg_pool()?;
        let s = self.squeeze.forward(&pooled)?.relu();
        Ok(self.excite.forward(&s)?.sigmoid())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.mul(&self.gate(x)?)
    }
}

impl ParamTree for ChannelAttention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.squeeze.visit(&join(prefix, "squeeze"), f);
        self.excite.visit(&join(prefix, "excite"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.squeeze.visit_mut(&join(prefix, "squeeze"), f);
        self.excite.visit_mut(&join(prefix, "excite"), f);
    }
}

pub fn channel_attention(x: &Tensor, p: &ChannelAttention) -> Result<Tensor> {
    p.forward(x)
}

/// Residual channel attention block: `x + CA(conv(relu(conv(x))))`.
#[derive(Debug, Clone)]
pub struct Rcab {
    pub conv1: Conv,
    pub conv2: Conv,
    pub attention: ChannelAttention,
}

impl Rcab {
    pub fn new(rng: &mut ChaCha8Rng, channels: usize, reduction: usize) -> Result<Rcab> {
        Ok(Rcab {
            conv1: Conv::new(rng, channels, channels, 3, 1),
            conv2: Conv::new(rng, channels, channels, 3, 1),
            attention: ChannelAttention::new(rng, channels, reduction)?,
        })
    }

    /// The attention branch alone, without the skip connection.
    pub fn branch(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(x)?.relu();
        let h = self.conv2.forward(&h)?;
        self.attention.forward(&h)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.add(&self.branch(x)?)
    }
}

impl ParamTree for Rcab {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.attention.visit(&join(prefix, "ca"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.attention.visit_mut(&join(prefix, "ca"), f);
    }
}

pub fn rcab_forward(x: &Tensor, p: &Rcab) -> Result<Tensor> {
    p.forward(x)
}

fn chain(blocks: &[Rcab], x: &Tensor) -> Result<Tensor> {
    blocks.iter().try_fold(x.clone(), |h, b| b.forward(&h))
}

/// High-frequency attention block: two RCABs on the high-frequency feature
/// map, five on the original, summed. The branches share no parameters.
#[derive(Debug, Clone)]
pub struct Hfab {
    pub hf_branch: Vec<Rcab>,
    pub main_branch: Vec<Rcab>,
}

impl Hfab {
    pub fn new(rng: &mut ChaCha8Rng, channels: usize, reduction: usize) -> Result<Hfab> {
        let hf_branch = (0..HF_BRANCH_DEPTH)
            .map(|_| Rcab::new(rng, channels, reduction))
            .collect::<Result<_>>()?;
        let main_branch = (0..MAIN_BRANCH_DEPTH)
            .map(|_| Rcab::new(rng, channels, reduction))
            .collect::<Result<_>>()?;
        Ok(Hfab {
            hf_branch,
            main_branch,
        })
    }

    /// Runs both branches with an externally supplied high-frequency input.
    pub fn forward_with(&self, x: &Tensor, high: &Tensor) -> Result<Tensor> {
        let a = chain(&self.hf_branch, high)?;
        let b = chain(&self.main_branch, x)?;
        a.add(&b)
    }

    pub fn forward(&self, x: &Tensor, lambda: f64) -> Result<Tensor> {
        self.forward_with(x, &hf_extract(x, lambda)?)
    }
}

impl ParamTree for Hfab {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, b) in self.hf_branch.iter().enumerate() {
            b.visit(&join(prefix, &format!("hf.{i}")), f);
        }
        for (i, b) in self.main_branch.iter().enumerate() {
            b.visit(&join(prefix, &format!("main.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, b) in self.hf_branch.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("hf.{i}")), f);
        }
        for (i, b) in self.main_branch.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("main.{i}")), f);
        }
    }
}

pub fn hfab_forward(x: &Tensor, p: &Hfab, lambda: f64) -> Result<Tensor> {
    p.forward(x, lambda)
}

/// Strided 3×3 convolution, LeakyReLU, 3×3 convolution.
#[derive(Debug, Clone)]
pub struct DownBlock {
    pub reduce: Conv,
    pub refine: Conv,
}

impl DownBlock {
    pub fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, stride: usize) -> DownBlock {
        DownBlock {
            reduce: Conv::new(rng, cin, cout, 3, stride),
            refine: Conv::new(rng, cout, cout, 3, 1),
        }
    }

    pub fn stride(&self) -> usize {
        self.reduce.stride
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, h, w) = x.chw()?;
        let s = self.stride();
        if h % s != 0 || w % s != 0 {
            return Err(dim_err(
                "down_block",
                format!("{h}x{w} is not divisible by stride {s}"),
            ));
        }
        let y = self.reduce.forward(x)?.leaky_relu(LEAKY_SLOPE);
        self.refine.forward(&y)
    }
}

impl ParamTree for DownBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        self.refine.visit(&join(prefix, "refine"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.reduce.visit_mut(&join(prefix, "reduce"), f);
        self.refine.visit_mut(&join(prefix, "refine"), f);
    }
}

pub fn down_block(x: &Tensor, p: &DownBlock) -> Result<Tensor> {
    p.forward(x)
}

/// 3×3 convolution to `C·r²` channels, pixel shuffle, 3×3 convolution.
#[derive(Debug, Clone)]
pub struct UpBlock {
    pub expand: Conv,
    pub refine: Conv,
    pub factor: usize,
}

impl UpBlock {
    pub fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, factor: usize) -> Result<UpBlock> {
        if factor == 0 {
            return Err(Error::Parameter("up_block factor must be positive".into()));
        }
        Ok(UpBlock {
            expand: Conv::new(rng, cin, cout * factor * factor, 3, 1),
            refine: Conv::new(rng, cout, cout, 3, 1),
            factor,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.expand.forward(x)?;
        let y = pixel_shuffle(&y, self.factor)?;
        self.refine.forward(&y)
    }
}

impl ParamTree for UpBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.expand.visit(&join(prefix, "expand"), f);
        self.refine.visit(&join(prefix, "refine"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.expand.visit_mut(&join(prefix, "expand"), f);
        self.refine.visit_mut(&join(prefix, "refine"), f);
    }
}

pub fn up_block(x: &Tensor, p: &UpBlock) -> Result<Tensor> {
    p.forward(x)
}

/// Sets every parameter whose name satisfies `select` to zero.
pub fn zero_params<P: ParamTree + ?Sized>(p: &mut P, select: impl Fn(&str) -> bool) {
    p.visit_mut("", &mut |name, t| {
        if select(name) {
            *t = Tensor::leaf(t.shape().to_vec(), vec![0.0; t.numel()], t.requires_grad());
        }
    });
}
