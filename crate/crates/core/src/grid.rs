//! Uniform periodic grids on the flat torus C^d / (Z^d + iZ^d).
//!
//! Real axes are ordered `x_1, y_1, x_2, y_2, ...` with `z^j = x_j + i y_j`.
//! Linear indices put axis 0 fastest, so the leading complex coordinates of
//! a point occupy the innermost (contiguous) part of the layout. Fibers of
//! the projection onto the trailing coordinates are therefore contiguous
//! blocks.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    samples: usize,
}

impl GridSpec {
    /// `dim` complex dimensions, `samples` points per real axis.
    ///
    /// Total spaces use `dim` 2 or 3; fibers and bases of a fibration reuse
    /// the same type with `dim` 1 or 2.
    pub fn new(dim: usize, samples: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(LabError::InvalidGrid(format!(
                "complex dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if samples < 8 || !samples.is_multiple_of(2) {
            return Err(LabError::InvalidGrid(format!(
                "samples per axis must be even and at least 8, got {samples}"
            )));
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn axes(&self) -> usize {
        2 * self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        1.0 / self.samples as f64
    }

    /// Stride of `axis` in the linear layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.samples.pow(axis as u32)
    }

    /// Integer coordinates of a linear index, one entry per real axis.
    pub fn multi_index(&self, mut index: usize, out: &mut [usize]) {
        for slot in out.iter_mut().take(self.axes()) {
            *slot = index % self.samples;
            index /= self.samples;
        }
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .take(self.axes())
            .rev()
            .fold(0, |acc, &i| acc * self.samples + i % self.samples)
    }

    /// Real coordinates in [0, 1) of a linear index.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut multi = vec![0; self.axes()];
        self.multi_index(index, &mut multi);
        multi.iter().map(|&i| i as f64 * self.step()).collect()
    }

    /// Signed wavenumber of DFT bin `i` along one axis.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.samples as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Index of the grid point obtained by shifting `index` by `steps`
    /// along `axis` (periodically).
    pub fn shifted(&self, index: usize, axis: usize, steps: isize) -> usize {
        let stride = self.stride(axis);
        let n = self.samples as isize;
        let coord = ((index / stride) % self.samples) as isize;
        let moved = (coord + steps).rem_euclid(n) as usize;
        index - coord as usize * stride + moved * stride
    }
}
