use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A latent observation embedding. Every entry is finite and the dimension is at least one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Latent<T>(Vec<T>);

impl<T: Scalar> Latent<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("latent vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent vector"));
        }
        Ok(Latent(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "latent dimension must be positive");
        Latent(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.0.iter()
    }
}

impl<T> std::ops::Index<usize> for Latent<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Mean squared difference `(1/D) Σ (a_k - b_k)²`.
pub fn mse_distance<T: Scalar>(a: &Latent<T>, b: &Latent<T>) -> Result<T> {
    check_dims(a.dim(), b.dim())?;
    let sum: T = a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(sum / T::from_count(a.dim()))
}

/// Componentwise arithmetic mean of a nonempty collection of equal-dimension latents.
pub fn mean_latent<'a, T, I>(vs: I) -> Result<Latent<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a Latent<T>>,
{
    let mut iter = vs.into_iter();
    let first = iter.next().ok_or(Error::Empty("mean_latent input"))?;
    let mut acc = first.0.clone();
    let mut count = 1usize;
    for v in iter {
        check_dims(acc.len(), v.dim())?;
        for (a, &x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
        count += 1;
    }
    let n = T::from_count(count);
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(Latent(acc))
}
