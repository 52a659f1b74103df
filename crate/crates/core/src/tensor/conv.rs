use super::{GradFn, Tensor};
use crate::error::{dim_err, Error, Result};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    /// Output positions `o` along one axis with `0 <= o*stride + k - pad < len`.
    #[inline]
    fn valid(&self, k: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let s = self.stride;
        let lo = if self.pad > k {
            (self.pad - k).div_ceil(s)
        } else {
            0
        };
        let hi = if len + self.pad > k {
            ((len - 1 + self.pad - k) / s + 1).min(out_len)
        } else {
            0
        };
        lo..hi.max(lo)
    }
}

struct Conv2d {
    geo: Geometry,
}

/// Cross-correlation of `x: [C_in,H,W]` with `w: [C_out,C_in,kh,kw]` plus bias.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (cin, h, wd) = x.chw()?;
    let (cout, wcin, kh, kw) = match *w.shape() {
        [a, b, c, d] => (a, b, c, d),
        ref s => {
            return Err(dim_err(
                "conv2d",
                format!("weight must be rank 4, got {s:?}"),
            ))
        }
    };
    if wcin != cin {
        return Err(dim_err(
            "conv2d",
            format!("input has {cin} channels, weight expects {wcin}"),
        ));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Parameter(format!(
            "conv2d kernel {kh}x{kw} must be odd"
        )));
    }
    if stride == 0 {
        return Err(Error::Parameter("conv2d stride must be positive".into()));
    }
    if b.numel() != cout {
        return Err(dim_err(
            "conv2d",
            format!("bias has {} elements, expected {cout}", b.numel()),
        ));
    }
    if h + 2 * padding < kh || wd + 2 * padding < kw {
        return Err(dim_err(
            "conv2d",
            format!("{h}x{wd} input with padding {padding} is smaller than kernel {kh}x{kw}"),
        ));
    }
    let geo = Geometry {
        cin,
        h,
        w: wd,
        cout,
        kh,
        kw,
        oh: (h + 2 * padding - kh) / stride + 1,
        ow: (wd + 2 * padding - kw) / stride + 1,
        stride,
        pad: padding,
    };
    let data = forward(&geo, x.data(), w.data(), b.data());
    Ok(Tensor::from_op(
        vec![cout, geo.oh, geo.ow],
        data,
        vec![x.clone(), w.clone(), b.clone()],
        Conv2d { geo },
    ))
}

fn forward(g: &Geometry, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (ohw, hw) = (g.oh * g.ow, g.h * g.w);
    let mut out = vec![0.0; g.cout * ohw];
    for co in 0..g.cout {
        let plane = &mut out[co * ohw..(co + 1) * ohw];
        plane.fill(b[co]);
        for ci in 0..g.cin {
            let src = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..g.kh {
                let rows = g.valid(ky, g.h, g.oh);
                for kx in 0..g.kw {
                    let wv = w[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let cols = g.valid(kx, g.w, g.ow);
                    for oy in rows.clone() {
                        let iy = oy * g.stride + ky - g.pad;
                        let in_row = &src[iy * g.w..(iy + 1) * g.w];
                        let out_row = &mut plane[oy * g.ow..(oy + 1) * g.ow];
                        if g.stride == 1 {
                            let ix0 = cols.start + kx - g.pad;
                            let n = cols.len();
                            out_row[cols.clone()]
                                .iter_mut()
                                .zip(&in_row[ix0..ix0 + n])
                                .for_each(|(o, v)| *o += wv * v);
                        } else {
                            for ox in cols.clone() {
                                out_row[ox] += wv * in_row[ox * g.stride + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

impl GradFn for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let g = &self.geo;
        let (x, w, b) = (&inputs[0], &inputs[1], &inputs[2]);
        let (xd, wd) = (x.data(), w.data());
        let (ohw, hw) = (g.oh * g.ow, g.h * g.w);
        let mut gx = x.requires_grad().then(|| vec![0.0; xd.len()]);
        let mut gw = w.requires_grad().then(|| vec![0.0; wd.len()]);
        let gb = b.requires_grad().then(|| {
            grad.chunks_exact(ohw)
                .map(|p| p.iter().sum::<f64>())
                .collect::<Vec<_>>()
        });
        if gx.is_some() || gw.is_some() {
            for co in 0..g.cout {
                let gplane = &grad[co * ohw..(co + 1) * ohw];
                for ci in 0..g.cin {
                    let src = &xd[ci * hw..(ci + 1) * hw];
                    for ky in 0..g.kh {
                        let rows = g.valid(ky, g.h, g.oh);
                        for kx in 0..g.kw {
                            let widx = ((co * g.cin + ci) * g.kh + ky) * g.kw + kx;
                            let wv = wd[widx];
                            let cols = g.valid(kx, g.w, g.ow);
                            let mut acc = 0.0;
                            for oy in rows.clone() {
                                let iy = oy * g.stride + ky - g.pad;
                                let grow = &gplane[oy * g.ow..(oy + 1) * g.ow];
                                if let Some(gx) = gx.as_mut() {
                                    let dst = &mut gx[ci * hw + iy * g.w..ci * hw + (iy + 1) * g.w];
                                    for ox in cols.clone() {
                                        dst[ox * g.stride + kx - g.pad] += wv * grow[ox];
                                    }
                                }
                                if gw.is_some() {
                                    let in_row = &src[iy * g.w..(iy + 1) * g.w];
                                    for ox in cols.clone() {
                                        acc += grow[ox] * in_row[ox * g.stride + kx - g.pad];
                                    }
                                }
                            }
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += acc;
                            }
                        }
                    }
                }
            }
        }
        vec![gx, gw, gb]
    }
}
