use super::Tensor;

/// Largest relative disagreement between the reverse-mode gradient of `f` at
/// `x` and central differences with step `eps`, over every coordinate.
///
/// Relative error per coordinate is `|a - c| / max(|a|, |c|, 1e-8)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> f64
where
    F: Fn(&Tensor) -> Tensor,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_at(f, x, eps, &coords)
}

/// [`finite_diff_check`] restricted to the listed flat coordinates.
pub fn finite_diff_check_at<F>(f: F, x: &Tensor, eps: f64, coords: &[usize]) -> f64
where
    F: Fn(&Tensor) -> Tensor,
{
    let probe = x.requiring_grad();
    let loss = f(&probe);
    assert_eq!(loss.numel(), 1, "finite_diff_check needs a scalar function");
    let analytic = if loss.requires_grad() {
        loss.backward().expect("scalar loss");
        probe.grad().unwrap_or_else(|| vec![0.0; x.numel()])
    } else {
        vec![0.0; x.numel()]
    };

    let eval = |i: usize, delta: f64| {
        let mut data = x.data().to_vec();
        data[i] += delta;
        let shifted = Tensor::new(x.shape(), data).expect("same shape");
        f(&shifted).item()
    };

    coords
        .iter()
        .map(|&i| {
            let cd = (eval(i, eps) - eval(i, -eps)) / (2.0 * eps);
            let a = analytic[i];
            (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8)
        })
        .fold(0.0, f64::max)
}
