//! Gaze arrow drawn over an image.

use crate::gaze::GazeAngles;
use crate::Tensor;

pub const ARROW_COLOR: [f64; 3] = [1.0, 0.0, 0.0];

/// Image-plane direction of a gaze: `(cosθ·sinφ, sinθ)`, x right, y down.
pub fn arrow_direction(g: GazeAngles) -> (f64, f64) {
    let v = g.to_vector();
    (-v[0], -v[1])
}

fn segment(from: (f64, f64), to: (f64, f64), h: usize, w: usize, out: &mut Vec<(usize, usize)>) {
    let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt();
    let steps = (len * 4.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (from.0 + t * (to.0 - from.0)).floor();
        let y = (from.1 + t * (to.1 - from.1)).floor();
        if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
            let p = (y as usize, x as usize);
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
}

/// Pixels `(row, col)` of an arrow of `len` pixels from `start` (pixels).
pub fn arrow_pixels(
    start: (f64, f64),
    g: GazeAngles,
    len: f64,
    h: usize,
    w: usize,
) -> Vec<(usize, usize)> {
    let (dx, dy) = arrow_direction(g);
    let tip = (start.0 + len * dx, start.1 + len * dy);
    let mut px = Vec::new();
    segment(start, tip, h, w, &mut px);
    let back = (-dx, -dy);
    let head = (0.3 * len).max(1.5);
    for angle in [0.45f64, -0.45] {
        let (s, c) = angle.sin_cos();
        let d = (c * back.0 - s * back.1, s * back.0 + c * back.1);
        segment(tip, (tip.0 + head * d.0, tip.1 + head * d.1), h, w, &mut px);
    }
    px
}

/// Copy of `img` with the arrow painted and the painted pixel list.
pub fn draw_arrow(
    img: &Tensor,
    start: (f64, f64),
    g: GazeAngles,
    len: f64,
) -> (Tensor, Vec<(usize, usize)>) {
    let (c, h, w) = img.chw().expect("image tensor");
    let px = arrow_pixels(start, g, len, h, w);
    let mut data = img.data().to_vec();
    for &(y, x) in &px {
        for (ch, v) in ARROW_COLOR.iter().enumerate().take(c) {
            data[ch * h * w + y * w + x] = *v;
        }
    }
    (Tensor::new(img.shape(), data).expect("same shape"), px)
}
