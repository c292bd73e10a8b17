// Float helpers that core does not provide without std.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// `ceil(ratio * n)` with a tolerance so that e.g. `0.7 * 10` keeps 7, not 8.
pub(crate) fn ceil_fraction(ratio: f64, n: usize) -> usize {
    let exact = ratio * n as f64;
    let rounded = libm::round(exact);
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        ceil(exact) as usize
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, sqrt(ss / (n - 1) as f64))
}
