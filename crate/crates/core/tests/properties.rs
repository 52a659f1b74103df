use haze_core::data::checkpoint::Checkpoint;
use haze_core::data::{ppm, split_by_identity};
use haze_core::spectral::{hf_extract, SpectralMask};
use haze_core::tensor::pixel_shuffle;
use haze_core::train::{epoch_batches, total_loss};
use haze_core::Tensor;
use proptest::prelude::*;

fn image(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0.0f64..1.0, c * h * w)
        .prop_map(move |d| Tensor::new(&[c, h, w], d).unwrap())
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backward_is_linear(x in image(2, 5, 5), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let grad_of = |f: &dyn Fn(&Tensor) -> Tensor| {
            let p = x.requiring_grad();
            f(&p).backward().unwrap();
            p.grad().unwrap()
        };
        let f = |t: &Tensor| t.sigmoid().sum();
        let g = |t: &Tensor| t.leaky_relu(0.2).square().mean();
        let combo = grad_of(&|t| f(t).scale(a).add(&g(t).scale(b)).unwrap());
        let (gf, gg) = (grad_of(&f), grad_of(&g));
        for i in 0..combo.len() {
            prop_assert!((combo[i] - (a * gf[i] + b * gg[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn hf_extract_is_self_adjoint(x in image(1, 12, 12), y in image(1, 12, 12), lambda in 0.0f64..1.0) {
        let lhs = dot(&hf_extract(&x, lambda).unwrap(), &y);
        let rhs = dot(&x, &hf_extract(&y, lambda).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn larger_lambda_keeps_a_subset(h in 1usize..20, w in 1usize..20, l1 in 0.0f64..1.0, l2 in 0.0f64..1.0) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let (a, b) = (SpectralMask::new(h, w, lo).unwrap(), SpectralMask::new(h, w, hi).unwrap());
        for y in 0..h {
            for x in 0..w {
                prop_assert!(!b.keeps(x, y) || a.keeps(x, y));
            }
        }
    }

    #[test]
    fn pixel_shuffle_permutes(x in image(8, 3, 2)) {
        let out = pixel_shuffle(&x, 2).unwrap();
        prop_assert_eq!(out.shape(), &[2, 6, 4]);
        let sorted = |t: &Tensor| {
            let mut v = t.data().to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        prop_assert_eq!(sorted(&out), sorted(&x));
    }

    #[test]
    fn ppm_round_trip_within_quantisation(x in image(3, 4, 7)) {
        let back = ppm::decode(&ppm::encode(&x).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn checkpoint_bytes_round_trip(x in image(2, 3, 3), epoch in 0u32..1000, seed in any::<u64>()) {
        let ckpt = Checkpoint {
            epoch,
            phase: 1,
            seed,
            config: "sr.scale = 4\n".into(),
            tensors: vec![("sr.w".into(), x.clone()), ("gaze.b".into(), x.scale(-1.0))],
        };
        let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), ckpt.to_bytes().unwrap());
        prop_assert_eq!(back.tensors[0].1.data(), x.data());
    }

    #[test]
    fn identity_split_is_disjoint(ids in prop::collection::vec(0u64..6, 2..40), frac in 0.0f64..0.9, seed in any::<u64>()) {
        let split = split_by_identity(&ids, frac, seed).unwrap();
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..ids.len()).collect::<Vec<_>>());
        for &v in &split.val {
            prop_assert!(split.train.iter().all(|&t| ids[t] != ids[v]));
        }
    }

    #[test]
    fn epoch_batches_cover_every_sample(n in 1usize..50, batch in 1usize..10, seed in any::<u64>(), epoch in 0u64..5) {
        let batches = epoch_batches(n, batch, seed, epoch);
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn total_loss_is_affine_in_alpha(l_sr in 0.0f64..10.0, l_ge in 0.0f64..10.0, alpha in 0.0f64..2.0) {
        prop_assert_eq!(total_loss(l_sr, l_ge, 0.0), l_sr);
        prop_assert!((total_loss(l_sr, l_ge, alpha) - l_sr - alpha * l_ge).abs() < 1e-12);
    }
}
