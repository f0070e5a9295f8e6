use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Scalar};

/// Uniform radial grid `r_i = i * dr`, `i = 0..len`, covering `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid<T> {
    dr: T,
    len: usize,
}

impl<T: Scalar> RadialGrid<T> {
    /// Grid on `[0, r_max]` with spacing as close to `dr` as an integer
    /// number of cells allows (never coarser).
    pub fn new(r_max: T, dr: T) -> Result<Self> {
        if !(dr > T::zero()) || !(r_max > dr) {
            return Err(Error::InvalidParameter(format!(
                "radial grid needs 0 < dr < r_max, got dr = {dr}, r_max = {r_max}"
            )));
        }
        let cells = (r_max / dr).ceil().to_usize().ok_or_else(|| {
            Error::InvalidParameter("radial grid too large".into())
        })?;
        Ok(Self {
            dr: r_max / from_usize(cells),
            len: cells + 1,
        })
    }

    /// Grid with exactly `cells` cells of width `dr`.
    pub fn with_cells(dr: T, cells: usize) -> Self {
        assert!(cells >= 2);
        Self { dr, len: cells + 1 }
    }

    pub fn dr(&self) -> T {
        self.dr
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn r(&self, i: usize) -> T {
        self.dr * from_usize(i)
    }

    pub fn r_max(&self) -> T {
        self.r(self.len - 1)
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.len).map(|i| self.r(i)).collect()
    }

    /// Same extent, half the spacing.
    pub fn refined(&self) -> Self {
        Self {
            dr: self.dr / (T::one() + T::one()),
            len: 2 * (self.len - 1) + 1,
        }
    }

    /// Linear interpolation of nodal `values` at `r` (clamped to the grid).
    pub fn interpolate(&self, values: &[T], r: T) -> T {
        debug_assert_eq!(values.len(), self.len);
        if r <= T::zero() {
            return values[0];
        }
        let x = r / self.dr;
        let i = x.floor().to_usize().unwrap_or(usize::MAX);
        if i >= self.len - 1 {
            return values[self.len - 1];
        }
        let frac = x - from_usize(i);
        values[i] + (values[i + 1] - values[i]) * frac
    }
}
