use super::{GradFn, Tensor};
use crate::error::{dim_err, Error, Result};

/// How the right operand of a binary op lines up with the left one.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    Same,
    /// `[C,1,1]` against `[C,H,W]`; the payload is `H*W`.
    PerChannel(usize),
    Scalar,
}

impl Broadcast {
    fn resolve(op: &'static str, x: &[usize], y: &[usize]) -> Result<Broadcast> {
        if x == y {
            return Ok(Broadcast::Same);
        }
        if y.iter().product::<usize>() == 1 {
            return Ok(Broadcast::Scalar);
        }
        if let ([c, h, w], [c2, 1, 1]) = (x, y) {
            if c == c2 {
                return Ok(Broadcast::PerChannel(h * w));
            }
        }
        Err(dim_err(op, format!("cannot combine {x:?} with {y:?}")))
    }

    #[inline]
    fn index(self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::PerChannel(hw) => i / hw,
            Broadcast::Scalar => 0,
        }
    }

    /// Sums a full-size gradient down to the right operand's shape.
    fn reduce(self, g: &[f64], y_len: usize) -> Vec<f64> {
        match self {
            Broadcast::Same => g.to_vec(),
            _ => {
                let mut out = vec![0.0; y_len];
                for (i, v) in g.iter().enumerate() {
                    out[self.index(i)] += v;
                }
                out
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct Binary {
    kind: BinaryKind,
    bc: Broadcast,
}

impl GradFn for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        }
    }

    fn backward(&self, inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, y) = (&inputs[0], &inputs[1]);
        let bc = self.bc;
        let gx = x.requires_grad().then(|| match self.kind {
            BinaryKind::Add | BinaryKind::Sub => grad.to_vec(),
            BinaryKind::Mul => grad
                .iter()
                .enumerate()
                .map(|(i, g)| g * y.data()[bc.index(i)])
                .collect(),
        });
        let gy = y.requires_grad().then(|| match self.kind {
            BinaryKind::Add => bc.reduce(grad, y.numel()),
            BinaryKind::Sub => {
                let mut r = bc.reduce(grad, y.numel());
                r.iter_mut().for_each(|v| *v = -*v);
                r
            }
            BinaryKind::Mul => {
                let prod: Vec<f64> = grad.iter().zip(x.data()).map(|(g, a)| g * a).collect();
                bc.reduce(&prod, y.numel())
            }
        });
        vec![gx, gy]
    }
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Scale(f64),
    Abs,
    Square,
}

struct Unary(UnaryKind);

impl GradFn for Unary {
    fn name(&self) -> &'static str {
        match self.0 {
            UnaryKind::Relu => "relu",
            UnaryKind::LeakyRelu(_) => "leaky_relu",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Scale(_) => "scale",
            UnaryKind::Abs => "abs",
            UnaryKind::Square => "square",
        }
    }

    fn backward(&self, inputs: &[Tensor], output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let x = inputs[0].data();
        let g: Vec<f64> = match self.0 {
            UnaryKind::Relu => grad
                .iter()
                .zip(x)
                .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                .collect(),
            UnaryKind::LeakyRelu(s) => grad
                .iter()
                .zip(x)
                .map(|(g, &v)| if v > 0.0 { *g } else { s * g })
                .collect(),
            UnaryKind::Sigmoid => grad
                .iter()
                .zip(output)
                .map(|(g, &y)| g * y * (1.0 - y))
                .collect(),
            UnaryKind::Scale(c) => grad.iter().map(|g| g * c).collect(),
            UnaryKind::Abs => grad
                .iter()
                .zip(x)
                .map(|(g, &v)| {
                    if v > 0.0 {
                        *g
                    } else if v < 0.0 {
                        -*g
                    } else {
                        0.0
                    }
                })
                .collect(),
            UnaryKind::Square => grad.iter().zip(x).map(|(g, &v)| 2.0 * v * g).collect(),
        };
        vec![Some(g)]
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

struct Sum;

impl GradFn for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![grad[0]; inputs[0].numel()])]
    }
}

struct Reshape;

impl GradFn for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, _inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.to_vec())]
    }
}

struct AvgPool {
    hw: usize,
}

impl GradFn for AvgPool {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }

    fn backward(&self, inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let inv = 1.0 / self.hw as f64;
        let mut g = Vec::with_capacity(inputs[0].numel());
        for gc in grad {
            g.extend(std::iter::repeat_n(gc * inv, self.hw));
        }
        vec![Some(g)]
    }
}

struct Fc;

impl GradFn for Fc {
    fn name(&self) -> &'static str {
        "matmul_fc"
    }

    fn backward(&self, inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, w, b) = (&inputs[0], &inputs[1], &inputs[2]);
        let n = x.numel();
        let gx = x.requires_grad().then(|| {
            let mut gx = vec![0.0; n];
            for (row, g) in w.data().chunks_exact(n).zip(grad) {
                gx.iter_mut().zip(row).for_each(|(a, wv)| *a += g * wv);
            }
            gx
        });
        let gw = w.requires_grad().then(|| {
            let mut gw = Vec::with_capacity(w.numel());
            for g in grad {
                gw.extend(x.data().iter().map(|xv| g * xv));
            }
            gw
        });
        let gb = b.requires_grad().then(|| grad.to_vec());
        vec![gx, gw, gb]
    }
}

struct Concat {
    sizes: Vec<usize>,
}

impl GradFn for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let mut offset = 0;
        inputs
            .iter()
            .zip(&self.sizes)
            .map(|(t, &n)| {
                let g = t.requires_grad().then(|| grad[offset..offset + n].to_vec());
                offset += n;
                g
            })
            .collect()
    }
}

struct Crop {
    top: usize,
    left: usize,
    src: (usize, usize, usize),
    size: (usize, usize),
}

impl GradFn for Crop {
    fn name(&self) -> &'static str {
        "crop"
    }

    fn backward(&self, _inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (c, h, w) = self.src;
        let (ph, pw) = self.size;
        let mut g = vec![0.0; c * h * w];
        for ch in 0..c {
            for y in 0..ph {
                let src = (ch * h + self.top + y) * w + self.left;
                let dst = (ch * ph + y) * pw;
                g[src..src + pw].copy_from_slice(&grad[dst..dst + pw]);
            }
        }
        vec![Some(g)]
    }
}

struct PixelShuffle {
    index: Vec<usize>,
}

impl GradFn for PixelShuffle {
    fn name(&self) -> &'static str {
        "pixel_shuffle"
    }

    fn backward(&self, _inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let mut g = vec![0.0; grad.len()];
        for (o, &src) in self.index.iter().enumerate() {
            g[src] = grad[o];
        }
        vec![Some(g)]
    }
}

impl Tensor {
    fn binary(&self, other: &Tensor, kind: BinaryKind) -> Result<Tensor> {
        let name = Binary {
            kind,
            bc: Broadcast::Same,
        }
        .name();
        let bc = Broadcast::resolve(name, self.shape(), other.shape())?;
        let (a, b) = (self.data(), other.data());
        let data: Vec<f64> = match (kind, bc) {
            (BinaryKind::Add, Broadcast::Same) => a.iter().zip(b).map(|(x, y)| x + y).collect(),
            (BinaryKind::Sub, Broadcast::Same) => a.iter().zip(b).map(|(x, y)| x - y).collect(),
            (BinaryKind::Mul, Broadcast::Same) => a.iter().zip(b).map(|(x, y)| x * y).collect(),
            _ => a
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let y = b[bc.index(i)];
                    match kind {
                        BinaryKind::Add => x + y,
                        BinaryKind::Sub => x - y,
                        BinaryKind::Mul => x * y,
                    }
                })
                .collect(),
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Binary { kind, bc },
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, BinaryKind::Mul)
    }

    fn unary(&self, kind: UnaryKind) -> Tensor {
        let f = |v: f64| match kind {
            UnaryKind::Relu => v.max(0.0),
            UnaryKind::LeakyRelu(s) => {
                if v > 0.0 {
                    v
                } else {
                    s * v
                }
            }
            UnaryKind::Sigmoid => sigmoid(v),
            UnaryKind::Scale(c) => c * v,
            UnaryKind::Abs => v.abs(),
            UnaryKind::Square => v * v,
        };
        let data = self.data().iter().map(|&v| f(v)).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], Unary(kind))
    }

    pub fn relu(&self) -> Tensor {
        self.unary(UnaryKind::Relu)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        self.unary(UnaryKind::LeakyRelu(slope))
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary(UnaryKind::Scale(c))
    }

    pub fn abs(&self) -> Tensor {
        self.unary(UnaryKind::Abs)
    }

    pub fn square(&self) -> Tensor {
        self.unary(UnaryKind::Square)
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(vec![1], vec![s], vec![self.clone()], Sum)
    }

    pub fn mean(&self) -> Tensor {
        self.sum().scale(1.0 / self.numel() as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(dim_err(
                "reshape",
                format!("{:?} cannot become {shape:?}", self.shape()),
            ));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            Reshape,
        ))
    }

    /// Per-channel mean of a `[C,H,W]` tensor, shaped `[C,1,1]`.
    pub fn global_avg_pool(&self) -> Result<Tensor> {
        let (c, h, w) = self.chw()?;
        let hw = h * w;
        let data = self
            .data()
            .chunks_exact(hw)
            .map(|ch| ch.iter().sum::<f64>() / hw as f64)
            .collect();
        Ok(Tensor::from_op(
            vec![c, 1, 1],
            data,
            vec![self.clone()],
            AvgPool { hw },
        ))
    }

    /// Spatial window `[C, top..top+h, left..left+w]`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor> {
        let (c, sh, sw) = self.chw()?;
        if h == 0 || w == 0 || top + h > sh || left + w > sw {
            return Err(dim_err(
                "crop",
                format!("window {h}x{w} at ({top},{left}) outside {sh}x{sw}"),
            ));
        }
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for y in 0..h {
                let start = (ch * sh + top + y) * sw + left;
                data.extend_from_slice(&self.data()[start..start + w]);
            }
        }
        Ok(Tensor::from_op(
            vec![c, h, w],
            data,
            vec![self.clone()],
            Crop {
                top,
                left,
                src: (c, sh, sw),
                size: (h, w),
            },
        ))
    }
}

/// `w·x + b` for a flattened `x` of length `n`, `w: [m,n]`, `b: [m]`.
pub fn matmul_fc(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = match *w.shape() {
        [m, n] => (m, n),
        ref s => {
            return Err(dim_err(
                "matmul_fc",
                format!("weight must be rank 2, got {s:?}"),
            ))
        }
    };
    if x.numel() != n {
        return Err(dim_err(
            "matmul_fc",
            format!("input has {} elements, weight expects {n}", x.numel()),
        ));
    }
    if b.numel() != m {
        return Err(dim_err(
            "matmul_fc",
            format!("bias has {} elements, expected {m}", b.numel()),
        ));
    }
    let data = w
        .data()
        .chunks_exact(n)
        .zip(b.data())
        .map(|(row, bv)| row.iter().zip(x.data()).map(|(a, c)| a * c).sum::<f64>() + bv)
        .collect();
    Ok(Tensor::from_op(
        vec![m],
        data,
        vec![x.clone(), w.clone(), b.clone()],
        Fc,
    ))
}

/// Concatenation along the leading axis; trailing extents must agree.
pub fn concat(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
    let tail = &first.shape()[1..];
    let mut lead = 0;
    for p in parts {
        if &p.shape()[1..] != tail {
            return Err(dim_err(
                "concat",
                format!("{:?} does not stack with {:?}", p.shape(), first.shape()),
            ));
        }
        lead += p.shape()[0];
    }
    let mut shape = vec![lead];
    shape.extend_from_slice(tail);
    let data = parts
        .iter()
        .flat_map(|p| p.data().iter().copied())
        .collect();
    Ok(Tensor::from_op(
        shape,
        data,
        parts.to_vec(),
        Concat {
            sizes: parts.iter().map(Tensor::numel).collect(),
        },
    ))
}

/// Sub-pixel rearrangement `[C·r², H, W] → [C, r·H, r·W]`.
///
/// Output pixel `(c, y·r+i, x·r+j)` reads input channel `c·r² + i·r + j` at `(y, x)`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (cin, h, w) = x.chw()?;
    if r == 0 || cin % (r * r) != 0 {
        return Err(Error::Parameter(format!(
            "pixel_shuffle: {cin} channels not divisible by r²={}",
            r * r
        )));
    }
    let c = cin / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut index = Vec::with_capacity(x.numel());
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let (y, i) = (oy / r, oy % r);
                let (xx, j) = (ox / r, ox % r);
                let src_c = ch * r * r + i * r + j;
                index.push((src_c * h + y) * w + xx);
            }
        }
    }
    let data = index.iter().map(|&i| x.data()[i]).collect();
    Ok(Tensor::from_op(
        vec![c, oh, ow],
        data,
        vec![x.clone()],
        PixelShuffle { index },
    ))
}
