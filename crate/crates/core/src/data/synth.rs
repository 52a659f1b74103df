//! Procedural face cards with analytically known gaze.
//!
//! Each card is a skin-tone rectangle with two elliptical sclerae, iris and
//! pupil discs, a nose mark and a mouth. The iris centre sits at the eye
//! landmark displaced by `(k·tan φ, k·tan θ)` pixels, so the rendered image
//! encodes the gaze label exactly up to antialiasing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::resize::bicubic_resize;
use crate::error::{Error, Result};
use crate::gaze::{GazeAngles, Landmarks};
use crate::tensor::Tensor;

/// Largest admissible |θ| and |φ|.
pub const MAX_ANGLE: f64 = 0.6;
pub const NOISE_SIGMA: f64 = 0.01;
/// Sclera horizontal semi-axis as a fraction of image width.
pub const EYE_RADIUS_FRAC: f64 = 0.14;
pub const IRIS_FRAC: f64 = 0.4;
pub const PUPIL_FRAC: f64 = 0.45;
const SUPERSAMPLE: usize = 4;

const LEFT_EYE: (f64, f64) = (0.32, 0.40);
const RIGHT_EYE: (f64, f64) = (0.68, 0.40);
const NOSE: (f64, f64) = (0.50, 0.60);
const MOUTH_LEFT: (f64, f64) = (0.38, 0.78);
const MOUTH_RIGHT: (f64, f64) = (0.62, 0.78);
const FACE_JITTER: f64 = 0.04;

#[derive(Debug, Clone)]
pub struct FaceSample {
    pub hr: Tensor,
    pub lr: Tensor,
    pub landmarks: Landmarks,
    pub gaze: GazeAngles,
    pub id: u64,
    /// Rendered iris centres in pixel coordinates, left eye first.
    pub iris_centers: [(f64, f64); 2],
}

/// Gain `k` for an eye of horizontal semi-axis `radius` pixels.
pub fn iris_gain(radius: f64) -> f64 {
    0.3 * radius / MAX_ANGLE.tan()
}

/// Horizontal sclera semi-axis in pixels for an image of width `w`.
pub fn eye_radius(w: usize) -> f64 {
    EYE_RADIUS_FRAC * w as f64
}

/// Iris displacement `(dx, dy)` in pixels.
pub fn iris_offset(gaze: GazeAngles, radius: f64) -> (f64, f64) {
    let k = iris_gain(radius);
    (k * gaze.phi.tan(), k * gaze.theta.tan())
}

/// Inverts [`iris_offset`].
pub fn gaze_from_offset(offset: (f64, f64), radius: f64) -> GazeAngles {
    let k = iris_gain(radius);
    GazeAngles::new((offset.1 / k).atan(), (offset.0 / k).atan())
}

struct Appearance {
    background: [f64; 3],
    skin: [f64; 3],
    iris: [f64; 3],
    shift: (f64, f64),
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn appearance(id: u64) -> Appearance {
    let mut rng = ChaCha8Rng::seed_from_u64(id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x4A5A);
    let skin = lerp3(
        [0.96, 0.80, 0.69],
        [0.45, 0.30, 0.22],
        rng.random_range(0.0..1.0),
    );
    let iris = lerp3(
        [0.35, 0.55, 0.75],
        [0.30, 0.18, 0.08],
        rng.random_range(0.0..1.0),
    );
    let g = rng.random_range(0.15..0.45);
    let background = [
        g,
        g + rng.random_range(-0.05..0.05),
        g + rng.random_range(-0.05..0.05),
    ];
    let shift = (
        rng.random_range(-FACE_JITTER..FACE_JITTER),
        rng.random_range(-FACE_JITTER..FACE_JITTER),
    );
    Appearance {
        background,
        skin,
        iris,
        shift,
    }
}

/// Landmarks of an unshifted face card.
pub fn template_landmarks() -> Landmarks {
    Landmarks {
        left_eye: LEFT_EYE,
        right_eye: RIGHT_EYE,
        nose: NOSE,
        mouth_left: MOUTH_LEFT,
        mouth_right: MOUTH_RIGHT,
    }
}

/// Landmarks of identity `id` in normalised coordinates.
pub fn identity_landmarks(id: u64) -> Landmarks {
    let (sx, sy) = appearance(id).shift;
    let at = |p: (f64, f64)| (p.0 + sx, p.1 + sy);
    Landmarks {
        left_eye: at(LEFT_EYE),
        right_eye: at(RIGHT_EYE),
        nose: at(NOSE),
        mouth_left: at(MOUTH_LEFT),
        mouth_right: at(MOUTH_RIGHT),
    }
}

fn inside_ellipse(p: (f64, f64), c: (f64, f64), rx: f64, ry: f64) -> bool {
    let dx = (p.0 - c.0) / rx;
    let dy = (p.1 - c.1) / ry;
    dx * dx + dy * dy <= 1.0
}

/// Renders one face card and its bicubic `1/scale` downsample.
pub fn synth_sample(
    gaze: GazeAngles,
    id: u64,
    size: (usize, usize),
    scale: usize,
    seed: u64,
) -> Result<FaceSample> {
    if !(gaze.theta.abs() <= MAX_ANGLE && gaze.phi.abs() <= MAX_ANGLE) {
        return Err(Error::Parameter(format!(
            "gaze ({}, {}) outside ±{MAX_ANGLE} rad",
            gaze.theta, gaze.phi
        )));
    }
    let (h, w) = size;
    if h < 16 || w < 16 {
        return Err(Error::Parameter(format!(
            "image {h}x{w} smaller than 16x16"
        )));
    }
    if scale == 0 || h % scale != 0 || w % scale != 0 {
        return Err(Error::Parameter(format!(
            "{h}x{w} not divisible by scale {scale}"
        )));
    }

    let look = appearance(id);
    let landmarks = identity_landmarks(id);
    let px = |p: (f64, f64)| (p.0 * w as f64, p.1 * h as f64);
    let rx = eye_radius(w);
    let ry = 0.75 * rx;
    let r_iris = IRIS_FRAC * rx;
    let r_pupil = PUPIL_FRAC * r_iris;
    let (dx, dy) = iris_offset(gaze, rx);
    let eyes = [px(landmarks.left_eye), px(landmarks.right_eye)];
    let irises = eyes.map(|(x, y)| (x + dx, y + dy));

    let (sx, sy) = look.shift;
    let face_x = ((0.12 + sx) * w as f64, (0.88 + sx) * w as f64);
    let face_y = ((0.10 + sy) * h as f64, (0.92 + sy) * h as f64);
    let nose = px(landmarks.nose);
    let nose_r = (0.035 * w as f64, 0.05 * h as f64);
    let ml = px(landmarks.mouth_left);
    let mr = px(landmarks.mouth_right);
    let mouth_c = ((ml.0 + mr.0) / 2.0, (ml.1 + mr.1) / 2.0);
    let mouth_r = ((mr.0 - ml.0) / 2.0, 0.035 * h as f64);
    let corner_r = 0.02 * w as f64;

    let sclera = [0.95, 0.95, 0.93];
    let pupil = [0.05, 0.04, 0.04];
    let lips = [0.65, 0.25, 0.25];
    let shade = lerp3(look.skin, [0.0, 0.0, 0.0], 0.35);

    let color_at = |p: (f64, f64)| -> [f64; 3] {
        for (e, c) in eyes.iter().zip(&irises) {
            if inside_ellipse(p, *e, rx, ry) {
                return if inside_ellipse(p, *c, r_pupil, r_pupil) {
                    pupil
                } else if inside_ellipse(p, *c, r_iris, r_iris) {
                    look.iris
                } else {
                    sclera
                };
            }
        }
        if inside_ellipse(p, ml, corner_r, corner_r) || inside_ellipse(p, mr, corner_r, corner_r) {
            return shade;
        }
        if inside_ellipse(p, mouth_c, mouth_r.0, mouth_r.1) {
            return lips;
        }
        if inside_ellipse(p, nose, nose_r.0, nose_r.1) {
            return shade;
        }
        if (face_x.0..face_x.1).contains(&p.0) && (face_y.0..face_y.1).contains(&p.1) {
            return look.skin;
        }
        look.background
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut data = vec![0.0; 3 * h * w];
    let n_sub = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let p = (
                        x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64,
                        y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64,
                    );
                    let c = color_at(p);
                    acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
                }
            }
            for (ch, a) in acc.iter().enumerate() {
                data[ch * h * w + y * w + x] = a / n_sub;
            }
        }
    }
    for v in &mut data {
        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    let hr = Tensor::new(&[3, h, w], data)?;
    let lr = bicubic_resize(&hr, 1.0 / scale as f64)?;
    Ok(FaceSample {
        hr,
        lr,
        landmarks,
        gaze,
        id,
        iris_centers: irises,
    })
}

/// Parameters of a generated collection.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub count: usize,
    pub identities: usize,
    pub size: (usize, usize),
    pub scale: usize,
    /// Gaze angles are drawn uniformly from `±gaze_range`.
    pub gaze_range: f64,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            count: 64,
            identities: 8,
            size: (32, 32),
            scale: 4,
            gaze_range: 0.4,
            seed: 1,
        }
    }
}

/// Sample `i` belongs to identity `i % identities`.
pub fn generate(cfg: &GenerateConfig) -> Result<Vec<FaceSample>> {
    if cfg.identities == 0 {
        return Err(Error::Parameter("at least one identity is required".into()));
    }
    if !(0.0..=MAX_ANGLE).contains(&cfg.gaze_range) {
        return Err(Error::Parameter(format!(
            "gaze range {} outside [0, {MAX_ANGLE}]",
            cfg.gaze_range
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.gaze_range;
    (0..cfg.count)
        .map(|i| {
            let (theta, phi) = if r > 0.0 {
                (rng.random_range(-r..=r), rng.random_range(-r..=r))
            } else {
                (0.0, 0.0)
            };
            let noise_seed = rng.random::<u64>();
            synth_sample(
                GazeAngles::new(theta, phi),
                (i % cfg.identities) as u64,
                cfg.size,
                cfg.scale,
                noise_seed,
            )
        })
        .collect()
}
