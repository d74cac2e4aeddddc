//! Hologram data and the linear/nonlinear Tikhonov functionals built on it.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::forward::{ctf_factors, exit_wave, linear_intensity, MaterialCoupling, WaveCache};
use crate::fourier::{Fft2d, FrequencyGrid, TransformCounts};
use crate::grid::{ensure_same_shape, RealImage};
use crate::propagation::Propagator;
use crate::regularization::RegularizationWeights;

/// Flat-field corrected holograms `I_j` recorded at Fresnel numbers `F_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HologramSet {
    holograms: Vec<RealImage>,
    fresnel_numbers: Vec<f64>,
}

impl HologramSet {
    pub fn new(holograms: Vec<RealImage>, fresnel_numbers: Vec<f64>) -> Result<Self> {
        if holograms.is_empty() {
            return Err(Error::EmptyHolograms);
        }
        if holograms.len() != fresnel_numbers.len() {
            return Err(invalid(
                "fresnel_numbers",
                format!(
                    "{} Fresnel numbers for {} holograms",
                    fresnel_numbers.len(),
                    holograms.len()
                ),
            ));
        }
        let shape = holograms[0].shape();
        for h in &holograms {
            ensure_same_shape(shape, h.shape())?;
            if h.min() < 0.0 {
                return Err(invalid("holograms", "intensities must be non-negative"));
            }
        }
        for &f in &fresnel_numbers {
            crate::propagation::check_fresnel_number(f)?;
        }
        Ok(Self {
            holograms,
            fresnel_numbers,
        })
    }

    pub fn holograms(&self) -> &[RealImage] {
        &self.holograms
    }

    pub fn fresnel_numbers(&self) -> &[f64] {
        &self.fresnel_numbers
    }

    pub fn len(&self) -> usize {
        self.holograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holograms.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.holograms[0].shape()
    }

    /// Keeps only the holograms at the given indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut h = Vec::with_capacity(indices.len());
        let mut f = Vec::with_capacity(indices.len());
        for &i in indices {
            let img = self
                .holograms
                .get(i)
                .ok_or_else(|| invalid("indices", format!("hologram {i} out of range")))?;
            h.push(img.clone());
            f.push(self.fresnel_numbers[i]);
        }
        Self::new(h, f)
    }
}

/// Precomputed operators for one reconstruction problem on a fixed grid.
///
/// Owns the FFT plan (with its transform counters), one propagator and one
/// CTF transfer function per hologram, and the regularization weights.
/// All per-hologram work runs in parallel and is reduced in ascending
/// hologram order, so results do not depend on the thread count.
pub struct TikhonovProblem {
    ny: usize,
    nx: usize,
    fft: Arc<Fft2d>,
    coupling: MaterialCoupling,
    propagators: Vec<Propagator>,
    transfers: Vec<Vec<f64>>,
    holograms: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

impl std::fmt::Debug for TikhonovProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TikhonovProblem")
            .field("shape", &(self.ny, self.nx))
            .field("holograms", &self.holograms.len())
            .field("coupling", &self.coupling)
            .finish_non_exhaustive()
    }
}

impl TikhonovProblem {
    pub fn new(
        data: &HologramSet,
        coupling: &MaterialCoupling,
        weights: &RegularizationWeights,
    ) -> Result<Self> {
        let (ny, nx) = data.shape();
        ensure_same_shape((ny, nx), weights.shape())?;
        let grid = FrequencyGrid::new(ny, nx)?;
        let fft = Arc::new(Fft2d::new(ny, nx)?);
        let mut propagators = Vec::with_capacity(data.len());
        let mut transfers = Vec::with_capacity(data.len());
        for &f in data.fresnel_numbers() {
            propagators.push(Propagator::new(fft.clone(), &grid, f)?);
            transfers.push(ctf_factors(f, &grid)?.transfer(coupling));
        }
        Ok(Self {
            ny,
            nx,
            fft,
            coupling: *coupling,
            propagators,
            transfers,
            holograms: data.holograms().iter().map(|h| h.data().to_vec()).collect(),
            alpha: weights.alpha().to_vec(),
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

    pub fn num_holograms(&self) -> usize {
        self.holograms.len()
    }

    pub fn coupling(&self) -> &MaterialCoupling {
        &self.coupling
    }

    pub fn fft(&self) -> &Fft2d {
        &self.fft
    }

    pub fn counts(&self) -> TransformCounts {
        self.fft.counts()
    }

    pub(crate) fn check(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: (self.ny, self.nx),
                found: (phi.len() / self.nx.max(1), self.nx),
            });
        }
        Ok(())
    }

    /// `‖α^{1/2}·F(φ)‖²` (one forward FFT).
    pub fn regularization_value(&self, phi: &[f64]) -> f64 {
        let spectrum = self.fft.forward_real(phi);
        spectrum.iter().zip(&self.alpha).map(|(c, a)| a * c.norm_sqr()).sum()
    }

    /// `T_NL(φ) = Σ_j ‖N_j(φ) − I_j‖² + ‖α^{1/2}F(φ)‖²`.
    ///
    /// Costs `J` forward propagations and one forward FFT.
    pub fn nl_value(&self, phi: &[f64]) -> Result<f64> {
        self.check(phi)?;
        let exit = exit_wave(phi, self.coupling.gamma());
        let misfits: Vec<f64> = self
            .propagators
            .par_iter()
            .zip(&self.holograms)
            .map(|(prop, data)| {
                let cache = WaveCache::new(exit.clone(), prop);
                cache
                    .detector
                    .iter()
                    .zip(data)
                    .map(|(d, i)| (d.norm_sqr() - i).powi(2))
                    .sum::<f64>()
            })
            .collect();
        Ok(misfits.iter().sum::<f64>() + self.regularization_value(phi))
    }

    /// Value and gradient `2Σ_j N_j'[φ]*(N_j(φ) − I_j) + 2F⁻¹(α·F(φ))`.
    ///
    /// Costs `J` forward and `J` backward propagations plus one forward and
    /// one inverse FFT for the regularization term.
    pub fn nl_value_and_gradient(&self, phi: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(phi)?;
        let gamma = self.coupling.gamma();
        let exit = exit_wave(phi, gamma);
        let parts: Vec<(f64, Vec<f64>)> = self
            .propagators
            .par_iter()
            .zip(&self.holograms)
            .map(|(prop, data)| {
                let cache = WaveCache::new(exit.clone(), prop);
                let residual: Vec<f64> = cache
                    .detector
                    .iter()
                    .zip(data)
                    .map(|(d, i)| d.norm_sqr() - i)
                    .collect();
                let misfit = residual.iter().map(|r| r * r).sum::<f64>();
                (misfit, cache.adjoint(&residual, gamma, prop))
            })
            .collect();

        let mut spectrum = self.fft.forward_real(phi);
        let penalty: f64 = spectrum.iter().zip(&self.alpha).map(|(c, a)| a * c.norm_sqr()).sum();
        spectrum.iter_mut().zip(&self.alpha).for_each(|(c, a)| *c *= *a);
        self.fft.inverse(&mut spectrum);
        let mut grad: Vec<f64> = spectrum.iter().map(|c| 2.0 * c.re).collect();

        for (_, adj) in &parts {
            grad.iter_mut().zip(adj).for_each(|(g, a)| *g += 2.0 * a);
        }
        // same summation order as `nl_value`, so both agree bit for bit
        let value = parts.iter().map(|(m, _)| m).sum::<f64>() + penalty;
        Ok((value, grad))
    }

    /// `T_Lin(φ) = Σ_j ‖L_j(φ) − I_j‖² + ‖α^{1/2}F(φ)‖²`.
    pub fn lin_value(&self, phi: &[f64]) -> Result<f64> {
        self.check(phi)?;
        let misfits: Vec<f64> = self
            .transfers
            .par_iter()
            .zip(&self.holograms)
            .map(|(h, data)| {
                linear_intensity(&self.fft, phi, h)
                    .iter()
                    .zip(data)
                    .map(|(l, i)| (l - i).powi(2))
                    .sum::<f64>()
            })
            .collect();
        Ok(misfits.iter().sum::<f64>() + self.regularization_value(phi))
    }

    /// Gradient of `T_Lin`: `Σ_j 4F⁻¹(h_j·F(L_j(φ) − I_j)) + 2F⁻¹(α·F(φ))`,
    /// with `h_j = s_j − c_{β/δ}·c_j`.
    pub fn lin_gradient(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.check(phi)?;
        let spectrum = self.fft.forward_real(phi);
        let numerator = self.ctf_numerator();
        let denominator = self.ctf_denominator(0.0);
        // ∇T_Lin = 2F⁻¹(denominator·Φ − numerator)
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .zip(&numerator)
            .zip(&denominator)
            .map(|((p, n), d)| 2.0 * (p * d - n))
            .collect();
        self.fft.inverse(&mut buf);
        Ok(buf.into_iter().map(|c| c.re).collect())
    }

    /// `2Σ_j h_j·F(I_j − 1)`, the data term of the closed-form CTF filter.
    pub fn ctf_numerator(&self) -> Vec<Complex64> {
        let parts: Vec<Vec<Complex64>> = self
            .transfers
            .par_iter()
            .zip(&self.holograms)
            .map(|(h, data)| {
                let shifted: Vec<f64> = data.iter().map(|v| v - 1.0).collect();
                let mut spec = self.fft.forward_real(&shifted);
                spec.iter_mut().zip(h).for_each(|(c, t)| *c *= 2.0 * t);
                spec
            })
            .collect();
        let mut acc = vec![Complex64::default(); self.len()];
        for part in &parts {
            acc.iter_mut().zip(part).for_each(|(a, p)| *a += p);
        }
        acc
    }

    /// `shift + α + 4Σ_j h_j²`.
    pub fn ctf_denominator(&self, shift: f64) -> Vec<f64> {
        let mut den: Vec<f64> = self.alpha.iter().map(|a| a + shift).collect();
        for h in &self.transfers {
            den.iter_mut().zip(h).for_each(|(d, t)| *d += 4.0 * t * t);
        }
        den
    }
}
