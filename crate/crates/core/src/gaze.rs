//! Global–local gaze estimator.
//!
//! Five branches, each with its own convolutional backbone, read the
//! high-frequency map of the whole face, the high-frequency maps of both eye
//! patches, and the two RGB eye patches. Their pooled features are
//! concatenated with the ten landmark coordinates and a two-layer head
//! regresses pitch and yaw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{join, uniform, Conv, ParamTree, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::spectral::hf_extract;
use crate::tensor::{concat, matmul_fc, Tensor};

/// Pitch `theta` and yaw `phi`, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeAngles {
    pub theta: f64,
    pub phi: f64,
}

impl GazeAngles {
    pub fn new(theta: f64, phi: f64) -> GazeAngles {
        GazeAngles { theta, phi }
    }

    /// `(−cosθ·sinφ, −sinθ, −cosθ·cosφ)`.
    pub fn to_vector(self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [-ct * sp, -st, -ct * cp]
    }

    /// Inverse of [`GazeAngles::to_vector`] for a non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> GazeAngles {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let theta = (-v[1] / n).clamp(-1.0, 1.0).asin();
        let phi = (-v[0]).atan2(-v[2]);
        GazeAngles { theta, phi }
    }
}

pub fn angles_to_vector(g: GazeAngles) -> [f64; 3] {
    g.to_vector()
}

/// Five facial landmarks in normalised `[0,1]²` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks {
    pub left_eye: (f64, f64),
    pub right_eye: (f64, f64),
    pub nose: (f64, f64),
    pub mouth_left: (f64, f64),
    pub mouth_right: (f64, f64),
}

impl Landmarks {
    pub fn points(&self) -> [(f64, f64); 5] {
        [
            self.left_eye,
            self.right_eye,
            self.nose,
            self.mouth_left,
            self.mouth_right,
        ]
    }

    pub fn from_points(p: [(f64, f64); 5]) -> Result<Landmarks> {
        let lm = Landmarks {
            left_eye: p[0],
            right_eye: p[1],
            nose: p[2],
            mouth_left: p[3],
            mouth_right: p[4],
        };
        lm.validate()?;
        Ok(lm)
    }

    pub fn validate(&self) -> Result<()> {
        for (x, y) in self.points() {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(Error::Parameter(format!(
                    "landmark ({x}, {y}) outside the unit square"
                )));
            }
        }
        Ok(())
    }

    /// `[x0, y0, x1, y1, …]`.
    pub fn flat(&self) -> [f64; 10] {
        let mut out = [0.0; 10];
        for (i, (x, y)) in self.points().into_iter().enumerate() {
            out[2 * i] = x;
            out[2 * i + 1] = y;
        }
        out
    }

    pub fn eye_midpoint(&self) -> (f64, f64) {
        (
            0.5 * (self.left_eye.0 + self.right_eye.0),
            0.5 * (self.left_eye.1 + self.right_eye.1),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeConfig {
    pub patch_frac: f64,
    /// Output channels of each stride-2 backbone stage.
    pub backbone: Vec<usize>,
    pub hidden: usize,
    pub lambda: f64,
}

impl Default for GazeConfig {
    fn default() -> Self {
        GazeConfig {
            patch_frac: 0.25,
            backbone: vec![8, 16, 16],
            hidden: 64,
            lambda: 0.2,
        }
    }
}

impl GazeConfig {
    pub fn full_scale() -> GazeConfig {
        GazeConfig {
            backbone: vec![64, 128, 256, 512],
            hidden: 512,
            ..GazeConfig::default()
        }
    }

    pub fn feature_width(&self) -> usize {
        *self.backbone.last().expect("validated backbone")
    }

    pub fn head_input(&self) -> usize {
        5 * self.feature_width() + 10
    }

    pub fn validate(&self) -> Result<()> {
        if self.backbone.is_empty() || self.backbone.contains(&0) {
            return Err(Error::Parameter(
                "backbone needs at least one non-empty stage".into(),
            ));
        }
        if self.hidden == 0 {
            return Err(Error::Parameter("head width must be positive".into()));
        }
        if !(self.patch_frac > 0.0 && self.patch_frac <= 1.0) {
            return Err(Error::Parameter(format!(
                "patch_frac {} outside (0, 1]",
                self.patch_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Parameter(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Stride-2 convolution stages followed by global average pooling.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub stages: Vec<Conv>,
}

impl Backbone {
    fn new(rng: &mut ChaCha8Rng, widths: &[usize]) -> Backbone {
        let mut cin = 3;
        let stages = widths
            .iter()
            .map(|&c| {
                let conv = Conv::new(rng, cin, c, 3, 2);
                cin = c;
                conv
            })
            .collect();
        Backbone { stages }
    }

    /// Flat feature vector of the backbone's last width.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for s in &self.stages {
            h = s.forward(&h)?.leaky_relu(LEAKY_SLOPE);
        }
        let pooled = h.global_avg_pool()?;
        pooled.reshape(&[pooled.numel()])
    }
}

impl ParamTree for Backbone {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&join(prefix, &format!("stage.{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&join(prefix, &format!("stage.{i}")), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn new(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> Linear {
        Linear {
            weight: uniform(rng, &[n_out, n_in], n_in),
            bias: uniform(rng, &[n_out], n_in),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        matmul_fc(x, &self.weight, &self.bias)
    }
}

impl ParamTree for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Branch order of [`GazeNet::forward_branches`].
pub const BRANCHES: [&str; 5] = [
    "global_map",
    "left_map",
    "right_map",
    "left_patch",
    "right_patch",
];

#[derive(Debug, Clone)]
pub struct GazeNet {
    pub cfg: GazeConfig,
    pub branches: Vec<Backbone>,
    pub hidden: Linear,
    pub output: Linear,
}

/// The five branch inputs derived from one face image.
#[derive(Debug, Clone)]
pub struct GazeInputs {
    pub global_map: Tensor,
    pub left_map: Tensor,
    pub right_map: Tensor,
    pub left_patch: Tensor,
    pub right_patch: Tensor,
}

impl GazeInputs {
    pub fn into_array(self) -> [Tensor; 5] {
        [
            self.global_map,
            self.left_map,
            self.right_map,
            self.left_patch,
            self.right_patch,
        ]
    }
}

impl GazeNet {
    pub fn new(cfg: GazeConfig, seed: u64) -> Result<GazeNet> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branches = (0..5)
            .map(|_| Backbone::new(&mut rng, &cfg.backbone))
            .collect();
        let hidden = Linear::new(&mut rng, cfg.head_input(), cfg.hidden);
        let output = Linear::new(&mut rng, cfg.hidden, 2);
        Ok(GazeNet {
            cfg,
            branches,
            hidden,
            output,
        })
    }

    pub fn inputs(&self, img: &Tensor, lm: &Landmarks, lambda: f64) -> Result<GazeInputs> {
        let (left_patch, right_patch) = extract_eye_patches(img, lm, self.cfg.patch_frac)?;
        let (left_map, right_map) = build_local_maps(&left_patch, &right_patch, lambda)?;
        Ok(GazeInputs {
            global_map: build_global_map(img, lambda)?,
            left_map,
            right_map,
            left_patch,
            right_patch,
        })
    }

    /// Runs the backbones on explicit branch inputs, in [`BRANCHES`] order.
    pub fn forward_branches(&self, inputs: &[Tensor; 5], lm: &Landmarks) -> Result<Tensor> {
        let mut feats = Vec::with_capacity(6);
        for (b, x) in self.branches.iter().zip(inputs) {
            feats.push(b.forward(x)?);
        }
        feats.push(Tensor::new(&[10], lm.flat().to_vec())?);
        let joined = concat(&feats)?;
        let h = self.hidden.forward(&joined)?.leaky_relu(LEAKY_SLOPE);
        self.output.forward(&h)
    }

    /// `[θ, φ]` as a differentiable tensor.
    pub fn forward(&self, img: &Tensor, lm: &Landmarks) -> Result<Tensor> {
        self.forward_lambda(img, lm, self.cfg.lambda)
    }

    pub fn forward_lambda(&self, img: &Tensor, lm: &Landmarks, lambda: f64) -> Result<Tensor> {
        let inputs = self.inputs(img, lm, lambda)?.into_array();
        self.forward_branches(&inputs, lm)
    }

    pub fn predict(&self, img: &Tensor, lm: &Landmarks) -> Result<GazeAngles> {
        let out = self.forward(img, lm)?;
        Ok(GazeAngles::new(out.data()[0], out.data()[1]))
    }
}

impl ParamTree for GazeNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (b, name) in self.branches.iter().zip(BRANCHES) {
            b.visit(&join(prefix, name), f);
        }
        self.hidden.visit(&join(prefix, "fc_hidden"), f);
        self.output.visit(&join(prefix, "fc_out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (b, name) in self.branches.iter_mut().zip(BRANCHES) {
            b.visit_mut(&join(prefix, name), f);
        }
        self.hidden.visit_mut(&join(prefix, "fc_hidden"), f);
        self.output.visit_mut(&join(prefix, "fc_out"), f);
    }
}

/// Top-left corner of a `p × p` window centred on `(cx, cy)` (pixels),
/// clamped to the image.
pub fn patch_origin(center: (f64, f64), p: usize, h: usize, w: usize) -> (usize, usize) {
    let half = p as f64 / 2.0;
    let left = (center.0 - half).round().clamp(0.0, (w - p) as f64) as usize;
    let top = (center.1 - half).round().clamp(0.0, (h - p) as f64) as usize;
    (top, left)
}

/// Side length of the eye patch for an image of height `h`.
pub fn patch_size(h: usize, patch_frac: f64) -> usize {
    (patch_frac * h as f64).round() as usize
}

/// Square crops around the two eye landmarks.
pub fn extract_eye_patches(
    img: &Tensor,
    lm: &Landmarks,
    patch_frac: f64,
) -> Result<(Tensor, Tensor)> {
    let (_, h, w) = img.chw()?;
    let p = patch_size(h, patch_frac);
    if p < 2 || p > h || p > w {
        return Err(Error::Parameter(format!(
            "eye patch side {p} invalid for {h}x{w} image"
        )));
    }
    let crop = |(x, y): (f64, f64)| {
        let (top, left) = patch_origin((x * w as f64, y * h as f64), p, h, w);
        img.crop(top, left, p, p)
    };
    Ok((crop(lm.left_eye)?, crop(lm.right_eye)?))
}

pub fn build_global_map(img: &Tensor, lambda: f64) -> Result<Tensor> {
    hf_extract(img, lambda)
}

pub fn build_local_maps(left: &Tensor, right: &Tensor, lambda: f64) -> Result<(Tensor, Tensor)> {
    Ok((hf_extract(left, lambda)?, hf_extract(right, lambda)?))
}

pub fn gaze_forward(
    img: &Tensor,
    lm: &Landmarks,
    net: &GazeNet,
    lambda: f64,
) -> Result<GazeAngles> {
    let out = net.forward_lambda(img, lm, lambda)?;
    Ok(GazeAngles::new(out.data()[0], out.data()[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::zero_params;
    use rand::Rng;

    fn random_img(h: usize, w: usize, seed: u64) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            &[3, h, w],
            (0..3 * h * w).map(|_| r.random_range(0.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn lm() -> Landmarks {
        Landmarks::from_points([
            (0.3, 0.4),
            (0.7, 0.4),
            (0.5, 0.6),
            (0.38, 0.78),
            (0.62, 0.78),
        ])
        .unwrap()
    }

    #[test]
    fn vector_examples() {
        let v = angles_to_vector(GazeAngles::new(0.0, 0.0));
        assert_eq!(v, [-0.0, -0.0, -1.0]);
        let v = angles_to_vector(GazeAngles::new(std::f64::consts::FRAC_PI_2, 0.0));
        assert!(v[0].abs() < 1e-15 && (v[1] + 1.0).abs() < 1e-15 && v[2].abs() < 1e-15);
        let g = GazeAngles::new(0.3, -0.4);
        let back = GazeAngles::from_vector(g.to_vector());
        assert!((back.theta - 0.3).abs() < 1e-12 && (back.phi + 0.4).abs() < 1e-12);
    }

    #[test]
    fn landmarks_validated() {
        assert!(Landmarks::from_points([(1.2, 0.0); 5]).is_err());
        assert_eq!(lm().flat()[..4], [0.3, 0.4, 0.7, 0.4]);
    }

    #[test]
    fn central_patch() {
        let img = random_img(32, 32, 1);
        let centre = Landmarks::from_points([(0.5, 0.5); 5]).unwrap();
        let (l, r) = extract_eye_patches(&img, &centre, 0.25).unwrap();
        assert_eq!(l.shape(), &[3, 8, 8]);
        assert_eq!(l.data(), img.crop(12, 12, 8, 8).unwrap().data());
        assert_eq!(l.data(), r.data());
    }

    #[test]
    fn corner_patch_clamped() {
        let img = random_img(16, 20, 2);
        let corner =
            Landmarks::from_points([(0.0, 0.0), (1.0, 1.0), (0.5, 0.5), (0.5, 0.5), (0.5, 0.5)])
                .unwrap();
        let (l, r) = extract_eye_patches(&img, &corner, 0.25).unwrap();
        assert_eq!(l.data(), img.crop(0, 0, 4, 4).unwrap().data());
        assert_eq!(r.data(), img.crop(12, 16, 4, 4).unwrap().data());
    }

    #[test]
    fn tiny_patch_rejected() {
        let img = random_img(4, 4, 3);
        assert!(matches!(
            extract_eye_patches(&img, &lm(), 0.25),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn output_is_two_finite_scalars() {
        let net = GazeNet::new(GazeConfig::default(), 4).unwrap();
        let out = net.forward(&random_img(32, 32, 5), &lm()).unwrap();
        assert_eq!(out.shape(), &[2]);
        assert!(out.all_finite());
    }

    #[test]
    fn zero_head_gives_bias() {
        let mut net = GazeNet::new(GazeConfig::default(), 6).unwrap();
        zero_params(&mut net, |n| n == "fc_out.weight");
        net.output.bias = Tensor::new(&[2], vec![0.25, -0.125]).unwrap();
        let g = net.predict(&random_img(32, 32, 7), &lm()).unwrap();
        assert_eq!(g, GazeAngles::new(0.25, -0.125));
    }

    #[test]
    fn branches_are_distinct() {
        let net = GazeNet::new(GazeConfig::default(), 8).unwrap();
        let img = random_img(32, 32, 9);
        let inputs = net.inputs(&img, &lm(), 0.2).unwrap().into_array();
        let base = net.forward_branches(&inputs, &lm()).unwrap();
        let mut swapped = inputs.clone();
        swapped.swap(3, 4);
        let other = net.forward_branches(&swapped, &lm()).unwrap();
        assert_ne!(base.data(), other.data());
    }

    #[test]
    fn nose_landmark_reaches_the_head() {
        let net = GazeNet::new(GazeConfig::default(), 10).unwrap();
        let img = random_img(32, 32, 11);
        let a = net.forward(&img, &lm()).unwrap();
        let mut moved = lm();
        moved.nose.0 += 0.1;
        let b = net.forward(&img, &moved).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn global_map_matches_extractor() {
        let img = random_img(16, 16, 12);
        let m = build_global_map(&img, 0.2).unwrap();
        assert_eq!(m.data(), hf_extract(&img, 0.2).unwrap().data());
        let c = Tensor::full(&[3, 8, 8], 0.6);
        let (a, b) = build_local_maps(&c, &c, 0.3).unwrap();
        assert!(a.data().iter().chain(b.data()).all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn full_scale_head_width() {
        let cfg = GazeConfig::full_scale();
        assert_eq!(cfg.hidden, 512);
        assert_eq!(cfg.head_input(), 5 * 512 + 10);
    }
}
