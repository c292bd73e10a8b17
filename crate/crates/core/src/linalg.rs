//! Small dense linear algebra: ridge least squares through the normal
//! equations with a Cholesky factorization. Dimensions are the embedding
//! size, so nothing here needs to be clever.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Solves `(AᵀA + λI) x = Aᵀb` for the rows `a` of `A`.
pub fn ridge_solve(a: &[Vec<f64>], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::NoSamples("least squares system has no rows".into()));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} targets",
            a.len(),
            b.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge lambda must be >= 0, got {lambda}")));
    }
    let k = a[0].len();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (row, &target) in a.iter().zip(b) {
        if row.len() != k {
            return Err(Error::InvalidArgument("ragged system rows".into()));
        }
        for i in 0..k {
            rhs[i] += row[i] * target;
            for j in 0..=i {
                gram[i * k + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        gram[i * k + i] += lambda;
        for j in 0..i {
            gram[j * k + i] = gram[i * k + j];
        }
    }
    cholesky_solve(&mut gram, &mut rhs, k).map_err(|e| match e {
        Error::Singular(msg) if lambda == 0.0 => {
            Error::Singular(format!("{msg}; use a ridge lambda > 0"))
        }
        other => other,
    })?;
    Ok(rhs)
}

/// In-place Cholesky solve of the SPD system `m x = rhs`; `rhs` receives `x`.
fn cholesky_solve(m: &mut [f64], rhs: &mut [f64], k: usize) -> Result<()> {
    let scale = (0..k).map(|i| m[i * k + i].abs()).fold(0.0, f64::max);
    let tol = scale * 1e-13;
    for j in 0..k {
        let mut d = m[j * k + j];
        for p in 0..j {
            d -= m[j * k + p] * m[j * k + p];
        }
        if d.is_nan() || d <= tol {
            return Err(Error::Singular(format!("pivot {j} is {d:e}")));
        }
        let d = math::sqrt(d);
        m[j * k + j] = d;
        for i in j + 1..k {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= m[i * k + p] * m[j * k + p];
            }
            m[i * k + j] = s / d;
        }
    }
    // L y = rhs
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= m[i * k + p] * rhs[p];
        }
        rhs[i] = s / m[i * k + i];
    }
    // Lᵀ x = y
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= m[p * k + i] * rhs[p];
        }
        rhs[i] = s / m[i * k + i];
    }
    if rhs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("least squares solution".into()));
    }
    Ok(())
}
