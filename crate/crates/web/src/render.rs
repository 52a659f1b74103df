use haze_core::blocks::ParamTree;
use haze_core::data::metrics::psnr;
use haze_core::data::resize::bicubic_resize;
use haze_core::data::synth::{generate, synth_sample, FaceSample, GenerateConfig};
use haze_core::gaze::GazeAngles;
use haze_core::overlay::draw_arrow;
use haze_core::spectral::{hf_extract, SpectralMask};
use haze_core::sr::{SrConfig, SrNet};
use haze_core::train::{epoch_batches, l1, Adam};
use haze_core::{Error, Result, Tensor};

const SCALE: usize = 4;
const TRAIN_FACES: usize = 8;
const LEARNING_RATE: f64 = 3e-3;

/// Interleaves a `[3,H,W]` tensor in `[0,1]` into RGBA bytes.
pub fn rgba(img: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = img.chw()?;
    if c != 3 {
        return Err(Error::Parameter(format!("expected 3 channels, got {c}")));
    }
    let d = img.data();
    let mut out = Vec::with_capacity(4 * h * w);
    for i in 0..h * w {
        for ch in 0..3 {
            out.push((d[ch * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    Ok(out)
}

/// Joins same-height RGBA images left to right.
pub fn side_by_side(panels: &[(Vec<u8>, usize)], h: usize) -> Vec<u8> {
    let mut out = Vec::new();
    for y in 0..h {
        for (px, w) in panels {
            out.extend_from_slice(&px[4 * y * w..4 * (y + 1) * w]);
        }
    }
    out
}

/// Nearest-neighbour enlargement.
pub fn zoom(img: &Tensor, k: usize) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    let d = img.data();
    let mut out = Vec::with_capacity(c * h * w * k * k);
    for ch in 0..c {
        for y in 0..h * k {
            for x in 0..w * k {
                out.push(d[ch * h * w + (y / k) * w + x / k]);
            }
        }
    }
    Tensor::new(&[c, h * k, w * k], out)
}

fn render(gaze: GazeAngles, id: u64, size: usize) -> Result<FaceSample> {
    synth_sample(gaze, id, (size, size), SCALE, id)
}

pub fn face(gaze: GazeAngles, id: u64, size: usize) -> Result<Vec<u8>> {
    let s = render(gaze, id, size)?;
    let (l, r) = (s.landmarks.left_eye, s.landmarks.right_eye);
    let start = (
        (l.0 + r.0) / 2.0 * size as f64,
        (l.1 + r.1) / 2.0 * size as f64,
    );
    let (img, _) = draw_arrow(&s.hr, start, gaze, 0.4 * size as f64);
    rgba(&img)
}

/// Min-max stretch to `[0,1]` over all channels.
fn stretch(t: &Tensor) -> Result<Tensor> {
    let (lo, hi) = t
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    Tensor::new(
        t.shape(),
        t.data().iter().map(|v| (v - lo) / span).collect(),
    )
}

pub fn spectrum(gaze: GazeAngles, id: u64, size: usize, lambda: f64) -> Result<Vec<u8>> {
    let s = render(gaze, id, size)?;
    let mask = SpectralMask::new(size, size, lambda)?;
    let mut bits = vec![0.0; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            if mask.keeps(x, y) {
                for ch in 0..3 {
                    bits[ch * size * size + y * size + x] = 1.0;
                }
            }
        }
    }
    let mask_img = Tensor::new(&[3, size, size], bits)?;
    let hf = stretch(&hf_extract(&s.hr, lambda)?)?;
    Ok(side_by_side(
        &[
            (rgba(&s.hr)?, size),
            (rgba(&mask_img)?, size),
            (rgba(&hf)?, size),
        ],
        size,
    ))
}

/// A small super-resolution network trained in place, one epoch per call.
#[wasm_bindgen::prelude::wasm_bindgen]
pub struct SrDemo {
    net: SrNet,
    faces: Vec<FaceSample>,
    opt: Adam,
    epoch: u64,
    seed: u64,
}

impl SrDemo {
    pub fn new(seed: u64) -> Result<SrDemo> {
        let cfg = SrConfig {
            channels: 8,
            num_hfab: 1,
            ..SrConfig::default()
        };
        let faces = generate(&GenerateConfig {
            count: TRAIN_FACES,
            identities: 4,
            size: cfg.hr_size,
            scale: cfg.scale,
            seed,
            ..GenerateConfig::default()
        })?;
        let mut net = SrNet::new(cfg, seed)?;
        net.set_trainable(true);
        Ok(SrDemo {
            net,
            faces,
            opt: Adam::new(),
            epoch: 0,
            seed,
        })
    }

    pub fn train_epoch(&mut self) -> Result<f64> {
        let n = self.faces.len();
        let mut total = 0.0;
        for batch in epoch_batches(n, 4, self.seed, self.epoch) {
            self.net.zero_grad();
            for &i in &batch {
                let s = &self.faces[i];
                let loss = l1(&self.net.forward(&s.lr)?, &s.hr)?;
                total += loss.item();
                loss.scale(1.0 / batch.len() as f64).backward()?;
            }
            self.opt.step(&mut self.net, LEARNING_RATE)?;
        }
        self.epoch += 1;
        let mean = total / n as f64;
        if mean.is_finite() {
            Ok(mean)
        } else {
            Err(Error::Numerical(format!("loss became {mean}")))
        }
    }

    pub fn compare(&self, index: usize, k: usize) -> Result<Vec<u8>> {
        let s = self
            .faces
            .get(index)
            .ok_or_else(|| Error::Parameter(format!("face {index} of {}", self.faces.len())))?;
        let k = k.max(1);
        let bicubic = bicubic_resize(&s.lr, SCALE as f64)?;
        let sr = self.net.infer(&s.lr)?;
        let (_, h, w) = s.hr.chw()?;
        let panels = [bicubic, sr, s.hr.clone()]
            .iter()
            .map(|t| Ok((rgba(&zoom(t, k)?)?, w * k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(side_by_side(&panels, h * k))
    }

    pub fn psnr(&self) -> Result<(f64, f64)> {
        let (mut b, mut s) = (0.0, 0.0);
        for f in &self.faces {
            b += psnr(&bicubic_resize(&f.lr, SCALE as f64)?.clamp01(), &f.hr, 1.0)?;
            s += psnr(&self.net.infer(&f.lr)?, &f.hr, 1.0)?;
        }
        let n = self.faces.len() as f64;
        Ok((b / n, s / n))
    }

    pub fn epochs_run(&self) -> u64 {
        self.epoch
    }

    pub fn hr_size(&self) -> usize {
        self.faces[0].hr.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }
}
