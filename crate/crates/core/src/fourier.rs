//! Unitary 2-D discrete Fourier transforms and the dimensionless frequency
//! grid shared by every Fourier multiplier in the crate.
//!
//! Frequencies are per pixel: `ξ_d = 2π k_d / N_d` with integer
//! `k_d ∈ [−⌊N_d/2⌋, ⌈N_d/2⌉)`, stored in FFT order (zero frequency first).
//! Both transform directions carry a `1/√(ny·nx)` factor, so Parseval holds
//! exactly and Fourier multipliers with unit modulus are unitary.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Squared radial frequency `ξ² = ξ_y² + ξ_x²` for every Fourier sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    ny: usize,
    nx: usize,
    xi2: Vec<f64>,
}

/// Signed integer frequency index of FFT bin `i` on an axis of length `n`.
pub fn frequency_index(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Per-pixel angular frequency of FFT bin `i` on an axis of length `n`.
pub fn angular_frequency(i: usize, n: usize) -> f64 {
    2.0 * PI * frequency_index(i, n) as f64 / n as f64
}

impl FrequencyGrid {
    pub fn new(ny: usize, nx: usize) -> Result<Self> {
        if ny < 2 || nx < 2 {
            return Err(Error::InvalidShape {
                ny,
                nx,
                reason: "frequency grid needs at least 2 samples per axis",
            });
        }
        let xs: Vec<f64> = (0..nx).map(|i| angular_frequency(i, nx).powi(2)).collect();
        let mut xi2 = Vec::with_capacity(ny * nx);
        for iy in 0..ny {
            let fy = angular_frequency(iy, ny).powi(2);
            xi2.extend(xs.iter().map(|fx| fy + fx));
        }
        Ok(Self { ny, nx, xi2 })
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn xi2(&self) -> &[f64] {
        &self.xi2
    }

    pub fn at(&self, iy: usize, ix: usize) -> f64 {
        self.xi2[iy * self.nx + ix]
    }
}

/// Builds the squared-frequency grid for an `ny × nx` image.
pub fn frequency_sq_grid(ny: usize, nx: usize) -> Result<FrequencyGrid> {
    FrequencyGrid::new(ny, nx)
}

/// Counts transforms and propagations performed through a [`Fft2d`].
#[derive(Debug, Default)]
pub struct TransformCounter {
    forward_fft: AtomicUsize,
    inverse_fft: AtomicUsize,
    forward_propagations: AtomicUsize,
    backward_propagations: AtomicUsize,
}

/// A point-in-time copy of a [`TransformCounter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransformCounts {
    pub forward_fft: usize,
    pub inverse_fft: usize,
    pub forward_propagations: usize,
    pub backward_propagations: usize,
}

impl std::ops::Sub for TransformCounts {
    type Output = TransformCounts;

    fn sub(self, rhs: Self) -> Self {
        TransformCounts {
            forward_fft: self.forward_fft - rhs.forward_fft,
            inverse_fft: self.inverse_fft - rhs.inverse_fft,
            forward_propagations: self.forward_propagations - rhs.forward_propagations,
            backward_propagations: self.backward_propagations - rhs.backward_propagations,
        }
    }
}

impl TransformCounter {
    pub fn snapshot(&self) -> TransformCounts {
        TransformCounts {
            forward_fft: self.forward_fft.load(Ordering::Relaxed),
            inverse_fft: self.inverse_fft.load(Ordering::Relaxed),
            forward_propagations: self.forward_propagations.load(Ordering::Relaxed),
            backward_propagations: self.backward_propagations.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn add_propagation(&self, backward: bool) {
        let c = if backward {
            &self.backward_propagations
        } else {
            &self.forward_propagations
        };
        c.fetch_add(1, Ordering::Relaxed);
    }
}

/// Planned unitary 2-D FFT for a fixed shape.
pub struct Fft2d {
    ny: usize,
    nx: usize,
    row_forward: Arc<dyn Fft<f64>>,
    row_inverse: Arc<dyn Fft<f64>>,
    col_forward: Arc<dyn Fft<f64>>,
    col_inverse: Arc<dyn Fft<f64>>,
    counter: TransformCounter,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d")
            .field("ny", &self.ny)
            .field("nx", &self.nx)
            .finish_non_exhaustive()
    }
}

// Rows handed to one rayon task; keeps per-task scratch allocation amortized.
const ROWS_PER_TASK: usize = 16;

impl Fft2d {
    pub fn new(ny: usize, nx: usize) -> Result<Self> {
        if ny == 0 || nx == 0 {
            return Err(Error::InvalidShape {
                ny,
                nx,
                reason: "FFT dimensions must be positive",
            });
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            ny,
            nx,
            row_forward: planner.plan_fft_forward(nx),
            row_inverse: planner.plan_fft_inverse(nx),
            col_forward: planner.plan_fft_forward(ny),
            col_inverse: planner.plan_fft_inverse(ny),
            counter: TransformCounter::default(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn len(&self) -> usize {
        self.ny * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counter(&self) -> &TransformCounter {
        &self.counter
    }

    pub fn counts(&self) -> TransformCounts {
        self.counter.snapshot()
    }

    /// In-place unitary forward transform of a row-major buffer.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.counter.forward_fft.fetch_add(1, Ordering::Relaxed);
        self.transform(data, &self.row_forward, &self.col_forward);
    }

    /// In-place unitary inverse transform of a row-major buffer.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.counter.inverse_fft.fetch_add(1, Ordering::Relaxed);
        self.transform(data, &self.row_inverse, &self.col_inverse);
    }

    /// Forward transform of a real buffer.
    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Applies a real, even Fourier multiplier to a real image: `F⁻¹(m·F(x))`.
    ///
    /// The multiplier must be symmetric under `ξ → −ξ` for the result to be
    /// real; the imaginary round-off is discarded.
    pub fn filter_real(&self, data: &[f64], multiplier: &[f64]) -> Vec<f64> {
        let mut buf = self.forward_real(data);
        buf.iter_mut().zip(multiplier).for_each(|(c, m)| *c *= m);
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    fn transform(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (ny, nx) = (self.ny, self.nx);
        assert_eq!(data.len(), ny * nx, "buffer does not match planned FFT shape");

        run_rows(data, nx, rows);
        let mut transposed = vec![Complex64::default(); ny * nx];
        transpose(data, &mut transposed, ny, nx);
        run_rows(&mut transposed, ny, cols);
        transpose(&transposed, data, nx, ny);

        let scale = 1.0 / ((ny * nx) as f64).sqrt();
        data.par_chunks_mut(nx * ROWS_PER_TASK)
            .for_each(|chunk| chunk.iter_mut().for_each(|c| *c *= scale));
    }
}

fn run_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    data.par_chunks_mut(len * ROWS_PER_TASK).for_each(|chunk| {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// Transposes a `rows × cols` row-major matrix into `dst` (`cols × rows`).
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
