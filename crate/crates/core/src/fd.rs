//! Richardson-extrapolated central differences for smooth vector-valued
//! functions. Used where a quantity has no closed form and to build
//! independent cross-checks of the closed forms.

/// Nested central difference Δᵢ₁ ⋯ Δᵢₖ f / (2h)ᵏ at `x`. Its error expands in
/// even powers of `h`.
fn nested_central<F>(f: &F, x: &[f64], idx: &[usize], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let k = idx.len();
    let mut acc: Option<Vec<f64>> = None;
    let mut pt = x.to_vec();
    for mask in 0..(1usize << k) {
        pt.copy_from_slice(x);
        let mut sign = 1.0;
        for (bit, &i) in idx.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                pt[i] -= h;
                sign = -sign;
            } else {
                pt[i] += h;
            }
        }
        let v = f(&pt);
        match &mut acc {
            None => acc = Some(v.into_iter().map(|c| sign * c).collect()),
            Some(a) => a.iter_mut().zip(v).for_each(|(ai, c)| *ai += sign * c),
        }
    }
    let scale = (2.0 * h).powi(k as i32);
    acc.unwrap_or_default().into_iter().map(|c| c / scale).collect()
}

/// Mixed partial derivative ∂ᵢ₁⋯∂ᵢₖ f(x) with two Richardson levels, error
/// O(h⁶).
pub fn partial<F>(f: &F, x: &[f64], idx: &[usize], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    if idx.is_empty() {
        return f(x);
    }
    let d1 = nested_central(f, x, idx, h);
    let d2 = nested_central(f, x, idx, h / 2.0);
    let d4 = nested_central(f, x, idx, h / 4.0);
    d1.iter()
        .zip(&d2)
        .zip(&d4)
        .map(|((a, b), c)| {
            let r1 = (4.0 * b - a) / 3.0;
            let r2 = (4.0 * c - b) / 3.0;
            (16.0 * r2 - r1) / 15.0
        })
        .collect()
}

/// k-th derivative at 0 of a function of one variable.
pub fn derivative<F>(f: &F, order: usize, h: f64) -> Vec<f64>
where
    F: Fn(f64) -> Vec<f64> + ?Sized,
{
    let g = |t: &[f64]| f(t[0]);
    partial(&g, &[0.0], &vec![0; order], h)
}

/// Gradient of a scalar function.
pub fn gradient<F>(f: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let g = |p: &[f64]| vec![f(p)];
    (0..x.len()).map(|i| partial(&g, x, &[i], h)[0]).collect()
}

/// Hessian of a scalar function, row-major.
pub fn hessian<F>(f: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = x.len();
    let g = |p: &[f64]| vec![f(p)];
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = partial(&g, x, &[i, j], h)[0];
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}
