//! Bicubic resampling following MATLAB's `imresize` defaults.
//!
//! Keys cubic kernel with `a = -0.5`, half-pixel centre alignment, and on
//! downscaling the kernel is stretched by `1/factor` for antialiasing.
//! Out-of-range taps replicate the border sample.

use crate::error::{dim_err, Error, Result};
use crate::tensor::{GradFn, Tensor};

/// Keys cubic convolution kernel, `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Taps contributing to one output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Output length for resizing `len` samples by `factor`.
pub fn output_len(len: usize, factor: f64) -> usize {
    // the tolerance keeps 33 * (1/3) from rounding up to 12
    (len as f64 * factor - 1e-9).ceil().max(0.0) as usize
}

/// Per-output-sample taps and normalised weights along one axis.
pub fn contributions(in_len: usize, out_len: usize, scale: f64) -> Vec<Contribution> {
    let (kernel_width, stretch) = if scale < 1.0 {
        (4.0 / scale, scale)
    } else {
        (4.0, 1.0)
    };
    let taps = kernel_width.ceil() as i64 + 2;
    (1..=out_len)
        .map(|x| {
            let u = x as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (u - kernel_width / 2.0).floor() as i64;
            let mut indices = Vec::with_capacity(taps as usize);
            let mut weights = Vec::with_capacity(taps as usize);
            for j in 0..taps {
                let idx = left + j;
                let wgt = stretch * cubic(stretch * (u - idx as f64));
                if wgt == 0.0 {
                    continue;
                }
                // 1-based tap index, replicated at the borders
                let clamped = idx.clamp(1, in_len as i64) as usize - 1;
                indices.push(clamped);
                weights.push(wgt);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Contribution { indices, weights }
        })
        .collect()
}

/// Resizes `[C,H,W]` by `factor` along both axes.
pub fn bicubic_resize(img: &Tensor, factor: f64) -> Result<Tensor> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Parameter(format!(
            "resize factor {factor} must be positive"
        )));
    }
    let (_, h, w) = img.chw()?;
    let (oh, ow) = (output_len(h, factor), output_len(w, factor));
    resize_with_scale(img, oh, ow, factor, factor)
}

/// Resizes `[C,H,W]` to `(out_h, out_w)` with explicit per-axis scales.
pub fn resize_with_scale(
    img: &Tensor,
    out_h: usize,
    out_w: usize,
    scale_h: f64,
    scale_w: f64,
) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(dim_err(
            "bicubic_resize",
            format!("{h}x{w} resized to degenerate {out_h}x{out_w}"),
        ));
    }
    let rows = contributions(h, out_h, scale_h);
    let cols = contributions(w, out_w, scale_w);
    let out = separable(img.data(), c, (h, w), &rows, &cols);
    Ok(Tensor::from_op(
        vec![c, out_h, out_w],
        out,
        vec![img.clone()],
        ResizeBackward {
            channels: c,
            src: (h, w),
            rows,
            cols,
        },
    ))
}

/// Applies row taps then column taps to each `h × w` plane.
fn separable(
    src: &[f64],
    c: usize,
    (h, w): (usize, usize),
    rows: &[Contribution],
    cols: &[Contribution],
) -> Vec<f64> {
    let (out_h, out_w) = (rows.len(), cols.len());
    let mut out = vec![0.0; c * out_h * out_w];
    let mut tmp = vec![0.0; out_h * w];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        tmp.fill(0.0);
        for (oy, con) in rows.iter().enumerate() {
            let dst = &mut tmp[oy * w..(oy + 1) * w];
            for (&iy, &wt) in con.indices.iter().zip(&con.weights) {
                let row = &plane[iy * w..(iy + 1) * w];
                dst.iter_mut().zip(row).for_each(|(d, v)| *d += wt * v);
            }
        }
        let dst_plane = &mut out[ch * out_h * out_w..(ch + 1) * out_h * out_w];
        for oy in 0..out_h {
            let row = &tmp[oy * w..(oy + 1) * w];
            for (ox, con) in cols.iter().enumerate() {
                dst_plane[oy * out_w + ox] = con
                    .indices
                    .iter()
                    .zip(&con.weights)
                    .map(|(&ix, &wt)| wt * row[ix])
                    .sum();
            }
        }
    }
    out
}

/// Resampling is linear, so the backward pass scatters through the same taps.
struct ResizeBackward {
    channels: usize,
    src: (usize, usize),
    rows: Vec<Contribution>,
    cols: Vec<Contribution>,
}

impl GradFn for ResizeBackward {
    fn name(&self) -> &'static str {
        "bicubic_resize"
    }

    fn backward(&self, _inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (h, w) = self.src;
        let (out_h, out_w) = (self.rows.len(), self.cols.len());
        let mut gx = vec![0.0; self.channels * h * w];
        let mut tmp = vec![0.0; out_h * w];
        for ch in 0..self.channels {
            let g = &grad[ch * out_h * out_w..(ch + 1) * out_h * out_w];
            tmp.fill(0.0);
            for oy in 0..out_h {
                let row = &mut tmp[oy * w..(oy + 1) * w];
                for (ox, con) in self.cols.iter().enumerate() {
                    let go = g[oy * out_w + ox];
                    for (&ix, &wt) in con.indices.iter().zip(&con.weights) {
                        row[ix] += wt * go;
                    }
                }
            }
            let plane = &mut gx[ch * h * w..(ch + 1) * h * w];
            for (oy, con) in self.rows.iter().enumerate() {
                let src = &tmp[oy * w..(oy + 1) * w];
                for (&iy, &wt) in con.indices.iter().zip(&con.weights) {
                    plane[iy * w..(iy + 1) * w]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, v)| *d += wt * v);
                }
            }
        }
        vec![Some(gx)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert!((cubic(0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic(1.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn unit_factor_is_identity() {
        let data: Vec<f64> = (0..3 * 5 * 7)
            .map(|i| ((i * 37) % 11) as f64 / 11.0)
            .collect();
        let img = Tensor::new(&[3, 5, 7], data).unwrap();
        let out = bicubic_resize(&img, 1.0).unwrap();
        assert_eq!(out.shape(), img.shape());
        assert!(out
            .data()
            .iter()
            .zip(img.data())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn constant_survives_any_factor() {
        let img = Tensor::full(&[2, 12, 9], 0.3);
        for f in [0.25, 1.0 / 3.0, 0.5, 2.0, 3.0, 4.0, 1.7] {
            let out = bicubic_resize(&img, f).unwrap();
            assert!(
                out.data().iter().all(|v| (v - 0.3).abs() < 1e-10),
                "factor {f}"
            );
        }
    }

    #[test]
    fn output_extents() {
        assert_eq!(output_len(32, 0.25), 8);
        assert_eq!(output_len(33, 1.0 / 3.0), 11);
        assert_eq!(output_len(8, 4.0), 32);
        assert_eq!(output_len(5, 0.5), 3);
    }

    #[test]
    fn degenerate_output_rejected() {
        let img = Tensor::full(&[1, 2, 2], 1.0);
        assert_eq!(bicubic_resize(&img, 0.1).unwrap().shape(), &[1, 1, 1]);
        assert!(matches!(
            resize_with_scale(&img, 0, 1, 0.1, 0.1),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            bicubic_resize(&img, -1.0),
            Err(Error::Parameter(_))
        ));
    }

    proptest! {
        #[test]
        fn weights_partition_unity(in_len in 1usize..40, factor in 0.1f64..5.0) {
            let out_len = output_len(in_len, factor).max(1);
            for c in contributions(in_len, out_len, factor) {
                let s: f64 = c.weights.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(c.indices.iter().all(|&i| i < in_len));
            }
        }
    }
}
