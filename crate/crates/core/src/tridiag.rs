use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric tridiagonal system `A x = b` with `A[i][i] = diag[i]` and
/// `A[i][i+1] = A[i+1][i] = off[i]`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal<T> {
    pub diag: Vec<T>,
    pub off: Vec<T>,
}

impl<T: Scalar> SymTridiagonal<T> {
    pub fn new(diag: Vec<T>, off: Vec<T>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length must be n - 1");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `A x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc = acc + self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc = acc + self.off[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Thomas algorithm. Fails on a zero (or non-finite) pivot.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        let mut c_prime = vec![T::zero(); n];
        let mut d_prime = vec![T::zero(); n];
        let mut pivot = self.diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = self.diag[i] - self.off[i - 1] * c_prime[i - 1];
            }
            if pivot == T::zero() || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: i });
            }
            if i + 1 < n {
                c_prime[i] = self.off[i] / pivot;
            }
            let prev = if i > 0 { self.off[i - 1] * d_prime[i - 1] } else { T::zero() };
            d_prime[i] = (rhs[i] - prev) / pivot;
        }
        let mut x = d_prime;
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] = x[i] - c_prime[i] * x[i + 1];
        }
        Ok(x)
    }

    /// `max |A x - b| / max |b|`.
    pub fn relative_residual(&self, x: &[T], rhs: &[T]) -> T {
        let ax = self.apply(x);
        let num = ax.iter().zip(rhs).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
        let den = rhs.iter().map(|b| b.abs()).fold(T::zero(), T::max);
        if den == T::zero() {
            num
        } else {
            num / den
        }
    }
}
