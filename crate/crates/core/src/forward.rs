//! Image-formation models for inline holography of a single-material object.
//!
//! The absorption image is tied to the phase, `μ = c_{β/δ}·φ`, so the exit
//! wave is `exp(γφ)` with `γ = i − c_{β/δ}`. The nonlinear model is
//! `N(φ) = |D_F(exp(γφ))|²`; the contrast-transfer (CTF) model is its
//! linearization about `φ = 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fourier::{Fft2d, FrequencyGrid};
use crate::grid::{ensure_same_shape, RealImage, Unit};
use crate::propagation::{check_fresnel_number, Propagator};

/// Single-material coupling between absorption and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialCoupling {
    c_beta_delta: f64,
}

impl MaterialCoupling {
    pub fn new(c_beta_delta: f64) -> Result<Self> {
        if !(c_beta_delta.is_finite() && c_beta_delta >= 0.0) {
            return Err(invalid(
                "c_beta_delta",
                format!("must be finite and non-negative, got {c_beta_delta}"),
            ));
        }
        Ok(Self { c_beta_delta })
    }

    pub fn pure_phase() -> Self {
        Self { c_beta_delta: 0.0 }
    }

    pub fn c_beta_delta(&self) -> f64 {
        self.c_beta_delta
    }

    /// `γ = i − c_{β/δ}`.
    pub fn gamma(&self) -> Complex64 {
        Complex64::new(-self.c_beta_delta, 1.0)
    }
}

/// Phase and absorption transfer functions `sin(ξ²/(4πF))`, `cos(ξ²/(4πF))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfFactors {
    fresnel_number: f64,
    s: Vec<f64>,
    c: Vec<f64>,
}

impl CtfFactors {
    pub fn fresnel_number(&self) -> f64 {
        self.fresnel_number
    }

    pub fn sin(&self) -> &[f64] {
        &self.s
    }

    pub fn cos(&self) -> &[f64] {
        &self.c
    }

    /// Combined single-material transfer function `s − c_{β/δ}·c`.
    pub fn transfer(&self, coupling: &MaterialCoupling) -> Vec<f64> {
        let cb = coupling.c_beta_delta;
        self.s.iter().zip(&self.c).map(|(s, c)| s - cb * c).collect()
    }
}

pub fn ctf_factors(fresnel_number: f64, grid: &FrequencyGrid) -> Result<CtfFactors> {
    check_fresnel_number(fresnel_number)?;
    let scale = 1.0 / (4.0 * PI * fresnel_number);
    let (s, c) = grid.xi2().iter().map(|&xi2| (xi2 * scale).sin_cos()).unzip();
    Ok(CtfFactors {
        fresnel_number,
        s,
        c,
    })
}

pub(crate) fn exit_wave(phi: &[f64], gamma: Complex64) -> Vec<Complex64> {
    phi.iter().map(|&p| (gamma * p).exp()).collect()
}

/// Exit wave and its propagated field at one evaluation point.
///
/// Holds `exp(γφ)` and `D_F(exp(γφ))`, the two quantities shared by the
/// model, its derivative and the adjoint derivative.
#[derive(Debug, Clone)]
pub struct WaveCache {
    pub(crate) exit: Vec<Complex64>,
    pub(crate) detector: Vec<Complex64>,
}

impl WaveCache {
    pub(crate) fn new(exit: Vec<Complex64>, prop: &Propagator) -> Self {
        let mut detector = exit.clone();
        prop.forward_in_place(&mut detector);
        Self { exit, detector }
    }

    /// Model intensities `|D_F(exp(γφ))|²`.
    pub fn intensity(&self) -> Vec<f64> {
        self.detector.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `N'[φ](ψ) = 2 Re{γ · conj(D_F e) · D_F(e·ψ)}`.
    pub(crate) fn derivative(&self, dir: &[f64], gamma: Complex64, prop: &Propagator) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self.exit.iter().zip(dir).map(|(e, d)| e * d).collect();
        prop.forward_in_place(&mut buf);
        buf.iter()
            .zip(&self.detector)
            .map(|(v, de)| 2.0 * (gamma * de.conj() * v).re)
            .collect()
    }

    /// `N'[φ]*(I) = 2 Re{conj(γ e) · D_F⁻¹(D_F e · I)}`.
    pub(crate) fn adjoint(&self, intensity: &[f64], gamma: Complex64, prop: &Propagator) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .detector
            .iter()
            .zip(intensity)
            .map(|(de, i)| de * i)
            .collect();
        prop.backward_in_place(&mut buf);
        buf.iter()
            .zip(&self.exit)
            .map(|(v, e)| 2.0 * ((gamma * e).conj() * v).re)
            .collect()
    }
}

fn standalone_propagator(ny: usize, nx: usize, fresnel_number: f64) -> Result<Propagator> {
    let grid = FrequencyGrid::new(ny, nx)?;
    Propagator::new(Arc::new(Fft2d::new(ny, nx)?), &grid, fresnel_number)
}

/// CTF model `1 + 2F⁻¹((s_F − c_{β/δ}c_F)·F(φ))`.
pub fn linear_model(
    phi: &RealImage,
    coupling: &MaterialCoupling,
    fresnel_number: f64,
) -> Result<RealImage> {
    let (ny, nx) = phi.shape();
    let grid = FrequencyGrid::new(ny, nx)?;
    let transfer = ctf_factors(fresnel_number, &grid)?.transfer(coupling);
    let fft = Fft2d::new(ny, nx)?;
    Ok(RealImage::from_raw(
        ny,
        nx,
        linear_intensity(&fft, phi.data(), &transfer),
        Unit::Dimensionless,
    ))
}

/// `1 + 2F⁻¹(h·F(φ))`; the unit background is added in real space.
pub(crate) fn linear_intensity(fft: &Fft2d, phi: &[f64], transfer: &[f64]) -> Vec<f64> {
    let mut out = fft.filter_real(phi, transfer);
    out.iter_mut().for_each(|v| *v = 1.0 + 2.0 * *v);
    out
}

/// Nonlinear model `|D_F(exp(γφ))|²`.
pub fn nonlinear_model(
    phi: &RealImage,
    coupling: &MaterialCoupling,
    fresnel_number: f64,
) -> Result<RealImage> {
    let (ny, nx) = phi.shape();
    let prop = standalone_propagator(ny, nx, fresnel_number)?;
    let cache = WaveCache::new(exit_wave(phi.data(), coupling.gamma()), &prop);
    Ok(RealImage::from_raw(ny, nx, cache.intensity(), Unit::Dimensionless))
}

/// Directional derivative of [`nonlinear_model`] at `phi` along `direction`.
pub fn frechet_apply(
    phi: &RealImage,
    direction: &RealImage,
    coupling: &MaterialCoupling,
    fresnel_number: f64,
) -> Result<RealImage> {
    ensure_same_shape(phi.shape(), direction.shape())?;
    let (ny, nx) = phi.shape();
    let prop = standalone_propagator(ny, nx, fresnel_number)?;
    let gamma = coupling.gamma();
    let cache = WaveCache::new(exit_wave(phi.data(), gamma), &prop);
    Ok(RealImage::from_raw(
        ny,
        nx,
        cache.derivative(direction.data(), gamma, &prop),
        Unit::Dimensionless,
    ))
}

/// Adjoint of [`frechet_apply`] with respect to the real L² inner product.
pub fn frechet_adjoint(
    phi: &RealImage,
    intensity_dir: &RealImage,
    coupling: &MaterialCoupling,
    fresnel_number: f64,
) -> Result<RealImage> {
    ensure_same_shape(phi.shape(), intensity_dir.shape())?;
    let (ny, nx) = phi.shape();
    let prop = standalone_propagator(ny, nx, fresnel_number)?;
    let gamma = coupling.gamma();
    let cache = WaveCache::new(exit_wave(phi.data(), gamma), &prop);
    Ok(RealImage::from_raw(
        ny,
        nx,
        cache.adjoint(intensity_dir.data(), gamma, &prop),
        Unit::Radians,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::angular_frequency;
    use crate::grid::dot;

    fn smooth_field(ny: usize, nx: usize, seed: f64) -> RealImage {
        RealImage::from_fn(ny, nx, Unit::Radians, |y, x| {
            let (y, x) = (y as f64, x as f64);
            (0.21 * y + seed).sin() * (0.17 * x - seed).cos() + 0.3 * (0.05 * (x + y) + 2.0 * seed).sin()
        })
        .unwrap()
    }

    fn rough_field(ny: usize, nx: usize, seed: u64) -> RealImage {
        // small LCG, enough for decorrelated test inputs
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        RealImage::from_fn(ny, nx, Unit::Dimensionless, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .unwrap()
    }

    #[test]
    fn ctf_factor_identities() {
        let f = 6.5e-4;
        let grid = FrequencyGrid::new(512, 512).unwrap();
        let ctf = ctf_factors(f, &grid).unwrap();
        assert_eq!(ctf.sin()[0], 0.0);
        assert_eq!(ctf.cos()[0], 1.0);
        let worst = ctf
            .sin()
            .iter()
            .zip(ctf.cos())
            .map(|(s, c)| (s * s + c * c - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-14);
        assert!(ctf_factors(0.0, &grid).is_err());
    }

    #[test]
    fn ctf_first_maximum() {
        // argument π/2 at ξ² = 2π²F
        let f = 0.05;
        let xi2 = 2.0 * PI * PI * f;
        let (s, c) = (xi2 / (4.0 * PI * f)).sin_cos();
        assert!((s - 1.0).abs() < 1e-15 && c.abs() < 1e-15);
    }

    #[test]
    fn zero_phase_gives_flat_intensity() {
        let phi = RealImage::zeros(16, 16, Unit::Radians).unwrap();
        let coupling = MaterialCoupling::new(0.1).unwrap();
        for model in [linear_model, nonlinear_model] {
            let out = model(&phi, &coupling, 1e-3).unwrap();
            assert!(out.data().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn linear_model_is_affine() {
        let coupling = MaterialCoupling::new(0.0135).unwrap();
        let (a, b) = (0.7, -1.9);
        let p1 = rough_field(64, 64, 1);
        let p2 = rough_field(64, 64, 2);
        let combo = RealImage::from_fn(64, 64, Unit::Radians, |y, x| {
            a * p1.get(y, x) + b * p2.get(y, x)
        })
        .unwrap();
        let f = 1.59e-3;
        let l1 = linear_model(&p1, &coupling, f).unwrap();
        let l2 = linear_model(&p2, &coupling, f).unwrap();
        let lc = linear_model(&combo, &coupling, f).unwrap();
        let expected: Vec<f64> = l1
            .data()
            .iter()
            .zip(l2.data())
            .map(|(u, v)| a * (u - 1.0) + b * (v - 1.0))
            .collect();
        let got: Vec<f64> = lc.data().iter().map(|v| v - 1.0).collect();
        let err: f64 = got.iter().zip(&expected).map(|(g, e)| (g - e).powi(2)).sum::<f64>().sqrt();
        let scale = crate::grid::norm(&expected);
        assert!(err < 1e-12 * scale);
    }

    #[test]
    fn linear_model_single_mode() {
        let (n, k, eps, f) = (32usize, 5usize, 1e-3, 2e-2);
        let xi = angular_frequency(k, n);
        let phi = RealImage::from_fn(n, n, Unit::Radians, |_, x| eps * (xi * x as f64).cos()).unwrap();
        let out = linear_model(&phi, &MaterialCoupling::pure_phase(), f).unwrap();
        let s = (xi * xi / (4.0 * PI * f)).sin();
        for y in 0..n {
            for x in 0..n {
                let want = 1.0 + 2.0 * eps * s * (xi * x as f64).cos();
                assert!((out.get(y, x) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pure_phase_mean_is_one() {
        let phi = smooth_field(48, 40, 0.3);
        let out = nonlinear_model(&phi, &MaterialCoupling::pure_phase(), 1.5e-3).unwrap();
        assert!((out.mean() - 1.0).abs() < 1e-12);
        assert!(out.min() >= 0.0);
    }

    #[test]
    fn absorbing_mean_matches_exit_wave_energy() {
        let phi = smooth_field(32, 32, 1.1);
        let coupling = MaterialCoupling::new(0.1).unwrap();
        let out = nonlinear_model(&phi, &coupling, 1e-3).unwrap();
        let expected: f64 = phi.data().iter().map(|p| (-2.0 * 0.1 * p).exp()).sum::<f64>() / phi.len() as f64;
        assert!((out.mean() - expected).abs() < 1e-12);
    }

    #[test]
    fn frechet_matches_central_difference() {
        let coupling = MaterialCoupling::new(0.0135).unwrap();
        let f = 1.57e-3;
        let phi = smooth_field(64, 64, 0.7);
        let dir = rough_field(64, 64, 9);
        let h = 1e-6;
        let plus = RealImage::from_fn(64, 64, Unit::Radians, |y, x| phi.get(y, x) + h * dir.get(y, x)).unwrap();
        let minus = RealImage::from_fn(64, 64, Unit::Radians, |y, x| phi.get(y, x) - h * dir.get(y, x)).unwrap();
        let np = nonlinear_model(&plus, &coupling, f).unwrap();
        let nm = nonlinear_model(&minus, &coupling, f).unwrap();
        let fd: Vec<f64> = np.data().iter().zip(nm.data()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let an = frechet_apply(&phi, &dir, &coupling, f).unwrap();
        let err: f64 = fd.iter().zip(an.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-6 * an.norm(), "relative error {}", err / an.norm());
    }

    #[test]
    fn zero_direction_and_zero_intensity() {
        let coupling = MaterialCoupling::new(0.1).unwrap();
        let phi = smooth_field(16, 16, 0.2);
        let zero = RealImage::zeros(16, 16, Unit::Radians).unwrap();
        assert!(frechet_apply(&phi, &zero, &coupling, 1e-3).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(frechet_adjoint(&phi, &zero, &coupling, 1e-3).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_at_zero_is_phase_ctf() {
        let f = 1.49e-3;
        let psi = rough_field(64, 64, 4);
        let zero = RealImage::zeros(64, 64, Unit::Radians).unwrap();
        let pure = MaterialCoupling::pure_phase();
        let lin = linear_model(&psi, &pure, f).unwrap();
        let lin_part: Vec<f64> = lin.data().iter().map(|v| v - 1.0).collect();
        for op in [frechet_apply, frechet_adjoint] {
            let d = op(&zero, &psi, &pure, f).unwrap();
            let err: f64 = d.data().iter().zip(&lin_part).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-12 * crate::grid::norm(&lin_part));
        }
    }

    #[test]
    fn adjoint_identity() {
        let f = 1.33e-3;
        for (i, cb) in [0.0, 0.1, 0.0135].into_iter().enumerate() {
            let coupling = MaterialCoupling::new(cb).unwrap();
            let phi = smooth_field(64, 64, i as f64);
            let psi = rough_field(64, 64, 10 + i as u64);
            let inten = rough_field(64, 64, 20 + i as u64);
            let lhs = dot(frechet_apply(&phi, &psi, &coupling, f).unwrap().data(), inten.data());
            let rhs = dot(psi.data(), frechet_adjoint(&phi, &inten, &coupling, f).unwrap().data());
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs());
        }
    }

    #[test]
    fn coupling_validation() {
        assert!(MaterialCoupling::new(-0.1).is_err());
        let g = MaterialCoupling::new(0.25).unwrap().gamma();
        assert_eq!((g.re, g.im), (-0.25, 1.0));
    }
}
