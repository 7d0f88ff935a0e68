//! FFT plumbing and Fourier multipliers on [`GridSpec`] grids.
//!
//! Differentiation uses effective wavenumbers in which the Nyquist bin is
//! treated as zero on every axis. Every derivative operator (including
//! second derivatives along one axis) is then a product of first-derivative
//! multipliers. This keeps the discrete i∂∂̄ operator rank one per Fourier
//! mode, which is what makes discrete integration by parts exact.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

pub struct SpectralPlan {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Effective wavenumbers, `axes` entries per grid point.
    wavenumbers: Vec<f64>,
}

static PLANS: OnceLock<Mutex<HashMap<GridSpec, Arc<SpectralPlan>>>> = OnceLock::new();

pub fn plan(grid: GridSpec) -> Arc<SpectralPlan> {
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("spectral plan cache poisoned");
    guard
        .entry(grid)
        .or_insert_with(|| Arc::new(SpectralPlan::build(grid)))
        .clone()
}

impl SpectralPlan {
    fn build(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.samples());
        let inverse = planner.plan_fft_inverse(grid.samples());
        let axes = grid.axes();
        let nyquist = grid.samples() / 2;
        let mut wavenumbers = vec![0.0; grid.len() * axes];
        let mut multi = vec![0; axes];
        for idx in 0..grid.len() {
            grid.multi_index(idx, &mut multi);
            for (a, &i) in multi.iter().enumerate() {
                wavenumbers[idx * axes + a] = if i == nyquist {
                    0.0
                } else {
                    grid.wavenumber(i) as f64
                };
            }
        }
        Self {
            grid,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Effective wavenumber of mode `idx` along real axis `axis`.
    #[inline]
    pub fn wavenumber(&self, idx: usize, axis: usize) -> f64 {
        self.wavenumbers[idx * self.grid.axes() + axis]
    }

    /// Multiplier of ∂/∂z^j.
    #[inline]
    pub fn dz(&self, idx: usize, j: usize) -> Complex64 {
        let k = self.wavenumber(idx, 2 * j);
        let l = self.wavenumber(idx, 2 * j + 1);
        Complex64::new(PI * l, PI * k)
    }

    /// Multiplier of ∂/∂z̄^j.
    #[inline]
    pub fn dzbar(&self, idx: usize, j: usize) -> Complex64 {
        let k = self.wavenumber(idx, 2 * j);
        let l = self.wavenumber(idx, 2 * j + 1);
        Complex64::new(-PI * l, PI * k)
    }

    /// Multiplier of ∂/∂(real axis).
    #[inline]
    pub fn d_axis(&self, idx: usize, axis: usize) -> Complex64 {
        Complex64::new(0.0, 2.0 * PI * self.wavenumber(idx, axis))
    }

    /// True when every derivative multiplier vanishes on the mode.
    pub fn is_null_mode(&self, idx: usize) -> bool {
        (0..self.grid.axes()).all(|a| self.wavenumber(idx, a) == 0.0)
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.forward);
    }

    /// Inverse transform including the 1/len normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        buf.par_iter_mut().for_each(|c| *c *= scale);
    }

    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Apply a per-mode multiplier to the spectrum of a real field and return
    /// the complex result in physical space.
    pub fn apply<M>(&self, spectrum: &[Complex64], multiplier: M) -> Vec<Complex64>
    where
        M: Fn(usize) -> Complex64 + Sync,
    {
        let mut out: Vec<Complex64> = spectrum
            .par_iter()
            .enumerate()
            .map(|(idx, &c)| c * multiplier(idx))
            .collect();
        self.inverse(&mut out);
        out
    }

    /// ∂/∂z^j of a complex-valued field.
    pub fn dz_complex(&self, values: &[Complex64], j: usize) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        buf.par_iter_mut()
            .enumerate()
            .for_each(|(idx, c)| *c *= self.dz(idx, j));
        self.inverse(&mut buf);
        buf
    }

    fn transform(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.samples();
        debug_assert_eq!(buf.len(), self.grid.len());
        // Axis 0 is contiguous: one batched call.
        buf.par_chunks_mut(n * 64.min(buf.len() / n).max(1))
            .for_each(|chunk| fft.process(chunk));
        for axis in 1..self.grid.axes() {
            let stride = self.grid.stride(axis);
            let block = stride * n;
            buf.par_chunks_mut(block).for_each(|chunk| {
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                for offset in 0..stride {
                    for (i, slot) in line.iter_mut().enumerate() {
                        *slot = chunk[offset + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, value) in line.iter().enumerate() {
                        chunk[offset + i * stride] = *value;
                    }
                }
            });
        }
    }
}
