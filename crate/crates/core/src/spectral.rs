//! Orthonormal 2-D DCT, the diagonal high-pass mask and the high-frequency
//! extractor built from them.
//!
//! The extractor is `idct2(dct2(x) ⊙ mask)` applied per channel. With the
//! orthonormal basis it is a self-adjoint linear projection, so its backward
//! rule is the extractor itself.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{GradFn, Tensor};

/// Precomputed cosine bases for an `h × w` transform.
#[derive(Debug, Clone)]
pub struct DctPlan {
    h: usize,
    w: usize,
    /// `basis_h[k*h + n]` = orthonormal DCT-II coefficient.
    basis_h: Vec<f64>,
    basis_w: Vec<f64>,
}

fn basis(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let a = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        for i in 0..n {
            m[k * n + i] = a * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    m
}

impl DctPlan {
    pub fn new(h: usize, w: usize) -> Result<DctPlan> {
        if h == 0 || w == 0 {
            return Err(dim_err("dct", format!("empty plane {h}x{w}")));
        }
        Ok(DctPlan {
            h,
            w,
            basis_h: basis(h),
            basis_w: basis(w),
        })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    /// `B_h · X · B_wᵀ` for one plane.
    pub fn forward_plane(&self, x: &[f64], out: &mut [f64]) {
        self.separable(x, out, false)
    }

    /// `B_hᵀ · D · B_w` for one plane.
    pub fn inverse_plane(&self, d: &[f64], out: &mut [f64]) {
        self.separable(d, out, true)
    }

    fn separable(&self, src: &[f64], out: &mut [f64], inverse: bool) {
        let (h, w) = (self.h, self.w);
        debug_assert_eq!(src.len(), h * w);
        // rows: tmp[y][k] = Σ_x src[y][x] · Bw(k, x)   (forward)
        //       tmp[y][x] = Σ_k src[y][k] · Bw(k, x)   (inverse)
        let mut tmp = vec![0.0; h * w];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let dst = &mut tmp[y * w..(y + 1) * w];
            if inverse {
                for (k, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        let b = &self.basis_w[k * w..(k + 1) * w];
                        dst.iter_mut().zip(b).for_each(|(d, bk)| *d += v * bk);
                    }
                }
            } else {
                for (k, d) in dst.iter_mut().enumerate() {
                    let b = &self.basis_w[k * w..(k + 1) * w];
                    *d = row.iter().zip(b).map(|(a, c)| a * c).sum();
                }
            }
        }
        out.fill(0.0);
        for i in 0..h {
            for j in 0..h {
                // forward: out[k] += Bh(k, n) · tmp[n]; inverse: out[n] += Bh(k, n) · tmp[k]
                let (dst_row, src_row, coef) = if inverse {
                    (j, i, self.basis_h[i * h + j])
                } else {
                    (i, j, self.basis_h[i * h + j])
                };
                if coef == 0.0 {
                    continue;
                }
                let (s, d) = (src_row * w, dst_row * w);
                for x in 0..w {
                    out[d + x] += coef * tmp[s + x];
                }
            }
        }
    }

    fn check(&self, op: &'static str, x: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = x.chw()?;
        if (h, w) != (self.h, self.w) {
            return Err(dim_err(
                op,
                format!("plan is {}x{}, input is {h}x{w}", self.h, self.w),
            ));
        }
        Ok((c, h, w))
    }
}

fn per_plane(x: &Tensor, hw: usize, f: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
    let mut out = vec![0.0; x.numel()];
    for (src, dst) in x.data().chunks_exact(hw).zip(out.chunks_exact_mut(hw)) {
        f(src, dst);
    }
    out
}

/// Per-channel orthonormal type-II DCT of `x: [C,H,W]`.
pub fn dct2(plan: &DctPlan, x: &Tensor) -> Result<Tensor> {
    let (_, h, w) = plan.check("dct2", x)?;
    let data = per_plane(x, h * w, |s, d| plan.forward_plane(s, d));
    Tensor::new(x.shape(), data)
}

/// Inverse of [`dct2`].
pub fn idct2(plan: &DctPlan, d: &Tensor) -> Result<Tensor> {
    let (_, h, w) = plan.check("idct2", d)?;
    let data = per_plane(d, h * w, |s, o| plan.inverse_plane(s, o));
    Tensor::new(d.shape(), data)
}

/// Binary spectral mask: coefficient `(x, y)` is dropped iff `y < 2λh − x`.
///
/// `x` indexes columns (horizontal frequency), `y` rows; both zero-based.
/// Only the height enters the cutoff, also for non-square planes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMask {
    h: usize,
    w: usize,
    lambda: f64,
    bits: Vec<bool>,
}

impl SpectralMask {
    pub fn new(h: usize, w: usize, lambda: f64) -> Result<SpectralMask> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Parameter(format!("lambda {lambda} outside [0, 1]")));
        }
        if h == 0 || w == 0 {
            return Err(Error::Parameter(format!(
                "mask extent {h}x{w} must be positive"
            )));
        }
        let mut cut = 2.0 * lambda * h as f64;
        // x + y is an integer; a cut within rounding noise of one (λ = 0.3,
        // h = 10 gives 6.000000000000001) is snapped so ties keep the coefficient
        if (cut - cut.round()).abs() < 1e-9 {
            cut = cut.round();
        }
        let mut bits = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                bits.push(y as f64 >= -(x as f64) + cut);
            }
        }
        Ok(SpectralMask { h, w, lambda, bits })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Whether coefficient at column `x`, row `y` passes.
    pub fn keeps(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.w + x]
    }

    /// Row-major bits, `true` = kept.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kept_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Builds the mask for an `h × w` spectrum.
pub fn build_mask(h: usize, w: usize, lambda: f64) -> Result<SpectralMask> {
    SpectralMask::new(h, w, lambda)
}

/// Plan and mask bundled for repeated extraction at one plane size.
#[derive(Debug)]
pub struct HfExtractor {
    plan: DctPlan,
    mask: SpectralMask,
}

impl HfExtractor {
    pub fn new(h: usize, w: usize, lambda: f64) -> Result<HfExtractor> {
        Ok(HfExtractor {
            plan: DctPlan::new(h, w)?,
            mask: SpectralMask::new(h, w, lambda)?,
        })
    }

    pub fn mask(&self) -> &SpectralMask {
        &self.mask
    }

    pub fn plan(&self) -> &DctPlan {
        &self.plan
    }

    fn project_plane(&self, src: &[f64], dst: &mut [f64]) {
        let mut spec = vec![0.0; src.len()];
        self.plan.forward_plane(src, &mut spec);
        spec.iter_mut()
            .zip(&self.mask.bits)
            .filter(|(_, &keep)| !keep)
            .for_each(|(v, _)| *v = 0.0);
        self.plan.inverse_plane(&spec, dst);
    }

    fn project(&self, data: &[f64]) -> Vec<f64> {
        let hw = self.plan.h * self.plan.w;
        let mut out = vec![0.0; data.len()];
        for (s, d) in data.chunks_exact(hw).zip(out.chunks_exact_mut(hw)) {
            self.project_plane(s, d);
        }
        out
    }

    /// Differentiable extraction on `[C,H,W]`.
    pub fn apply(self: &Arc<Self>, x: &Tensor) -> Result<Tensor> {
        self.plan.check("hf_extract", x)?;
        let data = self.project(x.data());
        Ok(Tensor::from_op(
            x.shape().to_vec(),
            data,
            vec![x.clone()],
            HfBackward(Arc::clone(self)),
        ))
    }
}

struct HfBackward(Arc<HfExtractor>);

impl GradFn for HfBackward {
    fn name(&self) -> &'static str {
        "hf_extract"
    }

    fn backward(&self, _inputs: &[Tensor], _output: &[f64], grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(self.0.project(grad))]
    }
}

type ExtractorKey = (usize, usize, u64);

thread_local! {
    static EXTRACTORS: RefCell<HashMap<ExtractorKey, Arc<HfExtractor>>> = RefCell::new(HashMap::new());
}

/// Shared extractor for `(h, w, λ)`, built once per thread.
pub fn extractor(h: usize, w: usize, lambda: f64) -> Result<Arc<HfExtractor>> {
    let key = (h, w, lambda.to_bits());
    if let Some(e) = EXTRACTORS.with(|m| m.borrow().get(&key).cloned()) {
        return Ok(e);
    }
    let e = Arc::new(HfExtractor::new(h, w, lambda)?);
    EXTRACTORS.with(|m| m.borrow_mut().insert(key, Arc::clone(&e)));
    Ok(e)
}

/// High-frequency part of every channel of `x: [C,H,W]`.
pub fn hf_extract(x: &Tensor, lambda: f64) -> Result<Tensor> {
    let (_, h, w) = x.chw()?;
    extractor(h, w, lambda)?.apply(x)
}

/// Σ v² over all elements.
pub fn energy(x: &Tensor) -> f64 {
    x.data().iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    #[test]
    fn decimal_lambda_ties_are_kept() {
        let m = super::SpectralMask::new(10, 10, 0.3).unwrap();
        assert!(m.keeps(6, 0));
        assert!(m.keeps(3, 3));
        assert!(!m.keeps(5, 0));
    }

    use super::*;
    use crate::tensor::finite_diff_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct double sum per output coefficient.
    fn naive_dct(x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let a = |k: usize, n: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let mut out = vec![0.0; h * w];
        for u in 0..h {
            for v in 0..w {
                let mut s = 0.0;
                for y in 0..h {
                    for xx in 0..w {
                        s += x[y * w + xx]
                            * (PI * (2 * y + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                            * (PI * (2 * xx + 1) as f64 * v as f64 / (2 * w) as f64).cos();
                    }
                }
                out[u * w + v] = a(u, h) * a(v, w) * s;
            }
        }
        out
    }

    fn max_abs(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_plane_has_only_dc() {
        let (h, w, c) = (6, 5, 0.7);
        let plan = DctPlan::new(h, w).unwrap();
        let d = dct2(&plan, &Tensor::full(&[1, h, w], c)).unwrap();
        assert!((d.data()[0] - c * ((h * w) as f64).sqrt()).abs() < 1e-10);
        assert!(d.data()[1..].iter().all(|v| v.abs() < 1e-10));

        let mut spec = vec![0.0; h * w];
        spec[0] = c * ((h * w) as f64).sqrt();
        let img = idct2(&plan, &Tensor::new(&[1, h, w], spec).unwrap()).unwrap();
        assert!(img.data().iter().all(|v| (v - c).abs() < 1e-10));
    }

    #[test]
    fn single_pixel_is_identity() {
        let plan = DctPlan::new(1, 1).unwrap();
        let x = Tensor::new(&[2, 1, 1], vec![3.5, -1.0]).unwrap();
        assert_eq!(dct2(&plan, &x).unwrap().data(), x.data());
    }

    #[test]
    fn zero_spectrum_gives_zero_image() {
        let plan = DctPlan::new(4, 3).unwrap();
        let img = idct2(&plan, &Tensor::zeros(&[2, 4, 3])).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fast_path_matches_double_sum() {
        for (h, w) in [(28, 28), (7, 12), (5, 1)] {
            let plan = DctPlan::new(h, w).unwrap();
            let x = random(&[1, h, w], (h * 31 + w) as u64);
            let fast = dct2(&plan, &x).unwrap();
            assert!(max_abs(fast.data(), &naive_dct(x.data(), h, w)) < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let plan = DctPlan::new(4, 4).unwrap();
        assert!(matches!(
            dct2(&plan, &Tensor::zeros(&[1, 4, 5])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mask_examples() {
        assert_eq!(build_mask(4, 4, 0.0).unwrap().kept_count(), 16);
        assert_eq!(build_mask(4, 4, 1.0).unwrap().kept_count(), 0);
        let m = build_mask(4, 4, 0.5).unwrap();
        assert_eq!(m.kept_count(), 6);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(m.keeps(x, y), x + y >= 4);
            }
        }
        assert!(matches!(build_mask(4, 4, 1.1), Err(Error::Parameter(_))));
        assert!(matches!(build_mask(4, 4, -0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn boundary_coefficient_is_kept() {
        // 2λh = 2 exactly: (2,0), (1,1), (0,2) sit on the line and survive
        let m = build_mask(4, 4, 0.25).unwrap();
        assert!(m.keeps(2, 0) && m.keeps(1, 1) && m.keeps(0, 2));
        assert!(!m.keeps(1, 0) && !m.keeps(0, 1));
    }

    #[test]
    fn hf_extract_examples() {
        let c = Tensor::full(&[3, 8, 8], 0.4);
        assert!(hf_extract(&c, 0.2)
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() < 1e-9));
        let x = random(&[2, 8, 6], 9);
        assert!(max_abs(hf_extract(&x, 0.0).unwrap().data(), x.data()) < 1e-9);
    }

    #[test]
    fn hf_extract_gradient_is_projection() {
        let x = random(&[2, 6, 6], 4);
        let target = random(&[2, 6, 6], 5);
        let err = finite_diff_check(
            |t| hf_extract(t, 0.3).unwrap().mul(&target).unwrap().sum(),
            &x,
            1e-6,
        );
        assert!(err < 1e-6, "{err}");
        // gradient of <E(x), t> is E(t)
        let probe = x.requiring_grad();
        hf_extract(&probe, 0.3)
            .unwrap()
            .mul(&target)
            .unwrap()
            .sum()
            .backward()
            .unwrap();
        let expected = hf_extract(&target, 0.3).unwrap();
        assert!(max_abs(&probe.grad().unwrap(), expected.data()) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip_and_parseval(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let plan = DctPlan::new(h, w).unwrap();
            let x = random(&[2, h, w], seed);
            let d = dct2(&plan, &x).unwrap();
            let back = idct2(&plan, &d).unwrap();
            prop_assert!(max_abs(back.data(), x.data()) < 1e-9);
            let (ex, ed) = (energy(&x), energy(&d));
            prop_assert!((ex - ed).abs() <= 1e-9 * ex.max(1e-300));
        }

        #[test]
        fn extractor_is_linear_idempotent_projection(
            h in 2usize..10, w in 2usize..10, lambda in 0.0f64..1.0, seed in any::<u64>(),
            a in -2.0f64..2.0, b in -2.0f64..2.0,
        ) {
            let x = random(&[2, h, w], seed);
            let y = random(&[2, h, w], seed.wrapping_add(1));
            let ex = hf_extract(&x, lambda).unwrap();
            let twice = hf_extract(&ex, lambda).unwrap();
            prop_assert!(max_abs(twice.data(), ex.data()) < 1e-9);

            let combo = x.scale(a).add(&y.scale(b)).unwrap();
            let lhs = hf_extract(&combo, lambda).unwrap();
            let rhs = ex.scale(a).add(&hf_extract(&y, lambda).unwrap().scale(b)).unwrap();
            prop_assert!(max_abs(lhs.data(), rhs.data()) < 1e-9);
        }

        #[test]
        fn higher_lambda_keeps_a_subset(h in 1usize..10, w in 1usize..10, l1 in 0.0f64..1.0, l2 in 0.0f64..1.0, seed in any::<u64>()) {
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let m_lo = build_mask(h, w, lo).unwrap();
            let m_hi = build_mask(h, w, hi).unwrap();
            for (a, b) in m_lo.bits().iter().zip(m_hi.bits()) {
                prop_assert!(!*b || *a);
            }
            let x = random(&[1, h, w], seed);
            let e_lo = energy(&hf_extract(&x, lo).unwrap());
            let e_hi = energy(&hf_extract(&x, hi).unwrap());
            prop_assert!(e_hi <= e_lo + 1e-12);
        }
    }
}
