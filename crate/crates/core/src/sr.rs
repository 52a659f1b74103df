//! Super-resolution network.
//!
//! Bicubic pre-upsampling feeds a head convolution (`f_b`); one or two down
//! blocks shrink it (`f_d`); a chain of HFABs refines it; up blocks restore
//! the target size; the result is concatenated with `f_b` and a tail
//! convolution maps the `2F` channels to RGB.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{join, Conv, DownBlock, Hfab, ParamTree, UpBlock};
use crate::data::resize::bicubic_resize;
use crate::error::{dim_err, Error, Result};
use crate::spectral::hf_extract;
use crate::tensor::{concat, Tensor};

/// Where the high-frequency extractor sits in the HFAB chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HfMode {
    /// Every HFAB extracts from its own input.
    #[default]
    PerBlock,
    /// Extract once from `f_d` and hand the same map to every HFAB.
    Once,
    /// Feed zeros to the high-frequency branch (ablation).
    Disabled,
}

impl HfMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HfMode::PerBlock => "per-block",
            HfMode::Once => "once",
            HfMode::Disabled => "disabled",
        }
    }
}

impl std::str::FromStr for HfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<HfMode> {
        match s {
            "per-block" => Ok(HfMode::PerBlock),
            "once" => Ok(HfMode::Once),
            "disabled" => Ok(HfMode::Disabled),
            other => Err(Error::Parameter(format!("unknown hf mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrConfig {
    pub scale: usize,
    pub channels: usize,
    pub num_hfab: usize,
    pub lambda: f64,
    pub hr_size: (usize, usize),
    pub reduction: usize,
    pub hf_mode: HfMode,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig {
            scale: 4,
            channels: 16,
            num_hfab: 2,
            lambda: 0.2,
            hr_size: (32, 32),
            reduction: 4,
            hf_mode: HfMode::PerBlock,
        }
    }
}

impl SrConfig {
    /// 112×112 faces with wider features.
    pub fn full_scale(scale: usize) -> SrConfig {
        let hr = if scale == 3 { 111 } else { 112 };
        SrConfig {
            scale,
            channels: 64,
            num_hfab: 4,
            hr_size: (hr, hr),
            reduction: 16,
            ..SrConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.scale) {
            return Err(Error::Parameter(format!(
                "scale {} not in {{2,3,4}}",
                self.scale
            )));
        }
        if self.channels < 4 {
            return Err(Error::Parameter(format!(
                "channels {} below 4",
                self.channels
            )));
        }
        if self.num_hfab == 0 {
            return Err(Error::Parameter("num_hfab must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Parameter(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.reduction == 0 || !self.channels.is_multiple_of(self.reduction) {
            return Err(Error::Parameter(format!(
                "channels {} not divisible by reduction {}",
                self.channels, self.reduction
            )));
        }
        let (h, w) = self.hr_size;
        if h == 0 || w == 0 || h % self.scale != 0 || w % self.scale != 0 {
            return Err(Error::Parameter(format!(
                "hr size {h}x{w} not divisible by scale {}",
                self.scale
            )));
        }
        let stages = self.stages();
        let total: usize = stages.iter().product();
        if h % total != 0 || w % total != 0 {
            return Err(Error::Parameter(format!(
                "hr size {h}x{w} cannot pass down stages {stages:?}"
            )));
        }
        Ok(())
    }

    pub fn lr_size(&self) -> (usize, usize) {
        (self.hr_size.0 / self.scale, self.hr_size.1 / self.scale)
    }

    /// Down-sampling strides; the up blocks mirror them.
    pub fn stages(&self) -> Vec<usize> {
        match self.scale {
            4 => vec![2, 2],
            s => vec![s],
        }
    }
}

/// Parameters of the whole SR network.
#[derive(Debug, Clone)]
pub struct SrNet {
    pub cfg: SrConfig,
    pub head: Conv,
    pub down: Vec<DownBlock>,
    pub hfabs: Vec<Hfab>,
    pub up: Vec<UpBlock>,
    pub tail: Conv,
}

/// Intermediate features, for inspection.
#[derive(Debug, Clone)]
pub struct SrTrace {
    pub upsampled: Tensor,
    pub head: Tensor,
    pub reduced: Tensor,
    pub refined: Tensor,
    pub expanded: Tensor,
    pub output: Tensor,
}

impl SrNet {
    pub fn new(cfg: SrConfig, seed: u64) -> Result<SrNet> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = cfg.channels;
        let head = Conv::new(&mut rng, 3, f, 3, 1);
        let down = cfg
            .stages()
            .iter()
            .map(|&s| DownBlock::new(&mut rng, f, f, s))
            .collect();
        let hfabs = (0..cfg.num_hfab)
            .map(|_| Hfab::new(&mut rng, f, cfg.reduction))
            .collect::<Result<_>>()?;
        let up = cfg
            .stages()
            .iter()
            .rev()
            .map(|&s| UpBlock::new(&mut rng, f, f, s))
            .collect::<Result<_>>()?;
        let tail = Conv::new(&mut rng, 2 * f, 3, 3, 1);
        Ok(SrNet {
            cfg,
            head,
            down,
            hfabs,
            up,
            tail,
        })
    }

    /// Un-clamped forward pass used for training.
    pub fn forward(&self, lr: &Tensor) -> Result<Tensor> {
        Ok(self.trace(lr)?.output)
    }

    /// Forward pass clamped to `[0, 1]` for presentation.
    pub fn infer(&self, lr: &Tensor) -> Result<Tensor> {
        Ok(self.forward(lr)?.clamp01())
    }

    pub fn trace(&self, lr: &Tensor) -> Result<SrTrace> {
        let (c, h, w) = lr.chw()?;
        let (lh, lw) = self.cfg.lr_size();
        if c != 3 || (h, w) != (lh, lw) {
            return Err(dim_err(
                "sr_forward",
                format!("expected LR input [3,{lh},{lw}], got {:?}", lr.shape()),
            ));
        }
        let upsampled = bicubic_resize(lr, self.cfg.scale as f64)?;
        let head = self.head.forward(&upsampled)?;
        let reduced = self
            .down
            .iter()
            .try_fold(head.clone(), |x, d| d.forward(&x))?;

        let lambda = self.cfg.lambda;
        let shared_high = match self.cfg.hf_mode {
            HfMode::PerBlock => None,
            HfMode::Once => Some(hf_extract(&reduced, lambda)?),
            HfMode::Disabled => Some(Tensor::zeros(reduced.shape())),
        };
        let mut refined = reduced.clone();
        for block in &self.hfabs {
            refined = match &shared_high {
                None => block.forward(&refined, lambda)?,
                Some(high) => block.forward_with(&refined, high)?,
            };
        }
        let expanded = self
            .up
            .iter()
            .try_fold(refined.clone(), |x, u| u.forward(&x))?;
        let output = self
            .tail
            .forward(&concat(&[expanded.clone(), head.clone()])?)?;
        Ok(SrTrace {
            upsampled,
            head,
            reduced,
            refined,
            expanded,
            output,
        })
    }
}

impl ParamTree for SrNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.head.visit(&join(prefix, "head"), f);
        for (i, d) in self.down.iter().enumerate() {
            d.visit(&join(prefix, &format!("down.{i}")), f);
        }
        for (i, b) in self.hfabs.iter().enumerate() {
            b.visit(&join(prefix, &format!("hfab.{i}")), f);
        }
        for (i, u) in self.up.iter().enumerate() {
            u.visit(&join(prefix, &format!("up.{i}")), f);
        }
        self.tail.visit(&join(prefix, "tail"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.head.visit_mut(&join(prefix, "head"), f);
        for (i, d) in self.down.iter_mut().enumerate() {
            d.visit_mut(&join(prefix, &format!("down.{i}")), f);
        }
        for (i, b) in self.hfabs.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("hfab.{i}")), f);
        }
        for (i, u) in self.up.iter_mut().enumerate() {
            u.visit_mut(&join(prefix, &format!("up.{i}")), f);
        }
        self.tail.visit_mut(&join(prefix, "tail"), f);
    }
}

/// Deterministic parameters for `seed`.
pub fn init_sr(cfg: &SrConfig, seed: u64) -> Result<SrNet> {
    SrNet::new(cfg.clone(), seed)
}

pub fn sr_forward(lr: &Tensor, net: &SrNet) -> Result<Tensor> {
    net.forward(lr)
}
