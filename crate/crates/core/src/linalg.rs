//! Small dense-vector helpers. Parameter vectors are plain `Vec<f64>`.

use crate::error::{Error, Result};

/// Dense model parameter vector of dimension `d`.
pub type ParamVector = Vec<f64>;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> ParamVector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> ParamVector {
    a.iter().map(|v| alpha * v).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Coordinate-wise arithmetic mean, summed in input order.
pub fn mean(vectors: &[ParamVector]) -> Result<ParamVector> {
    let first = vectors.first().ok_or(Error::EmptyInput("mean of zero vectors"))?;
    let d = first.len();
    let mut acc = vec![0.0; d];
    for v in vectors {
        check_dim(d, v)?;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(acc)
}

pub fn check_dim(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

pub fn check_all_dims(expected: usize, vs: &[ParamVector]) -> Result<()> {
    vs.iter().try_for_each(|v| check_dim(expected, v))
}
