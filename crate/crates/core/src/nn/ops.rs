use ndarray::ArrayView1;

use super::Scalar;
use crate::error::{Error, Result};

/// Squared L2 norm accumulated in `f64`.
pub fn norm_sq<F: Scalar>(v: ArrayView1<F>) -> f64 {
    v.iter().map(|x| x.to64() * x.to64()).sum()
}

pub fn dot<F: Scalar>(u: ArrayView1<F>, v: ArrayView1<F>) -> f64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.to64() * b.to64()).sum()
}

/// Cosine similarity; zero-norm inputs are rejected.
pub fn cosine<F: Scalar>(u: ArrayView1<F>, v: ArrayView1<F>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
            context: "cosine".into(),
        });
    }
    let nu = norm_sq(u).sqrt();
    let nv = norm_sq(v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateVector("cosine of a zero vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
