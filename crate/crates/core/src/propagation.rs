//! Paraxial Fresnel propagation as a unit-modulus Fourier multiplier.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fourier::{Fft2d, FrequencyGrid};
use crate::grid::ComplexField;

pub(crate) fn check_fresnel_number(fresnel_number: f64) -> Result<()> {
    if !(fresnel_number.is_finite() && fresnel_number > 0.0) {
        return Err(invalid(
            "fresnel_number",
            format!("must be positive and finite, got {fresnel_number}"),
        ));
    }
    Ok(())
}

/// Fourier factors `exp(−i ξ²/(4πF))` of the propagator at Fresnel number `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FresnelKernel {
    fresnel_number: f64,
    factors: Vec<Complex64>,
}

impl FresnelKernel {
    pub fn new(fresnel_number: f64, grid: &FrequencyGrid) -> Result<Self> {
        check_fresnel_number(fresnel_number)?;
        let scale = 1.0 / (4.0 * PI * fresnel_number);
        let factors = grid
            .xi2()
            .iter()
            .map(|&xi2| Complex64::from_polar(1.0, -xi2 * scale))
            .collect();
        Ok(Self {
            fresnel_number,
            factors,
        })
    }

    pub fn fresnel_number(&self) -> f64 {
        self.fresnel_number
    }

    pub fn factors(&self) -> &[Complex64] {
        &self.factors
    }
}

/// Applies Fresnel propagators of a fixed set of Fresnel numbers on one grid.
///
/// Propagations are counted on the FFT's [`TransformCounter`](crate::fourier::TransformCounter).
#[derive(Debug, Clone)]
pub struct Propagator {
    fft: Arc<Fft2d>,
    kernel: FresnelKernel,
}

impl Propagator {
    pub fn new(fft: Arc<Fft2d>, grid: &FrequencyGrid, fresnel_number: f64) -> Result<Self> {
        if fft.shape() != grid.shape() {
            return Err(Error::ShapeMismatch {
                expected: fft.shape(),
                found: grid.shape(),
            });
        }
        Ok(Self {
            fft,
            kernel: FresnelKernel::new(fresnel_number, grid)?,
        })
    }

    pub fn fresnel_number(&self) -> f64 {
        self.kernel.fresnel_number
    }

    pub fn fft(&self) -> &Arc<Fft2d> {
        &self.fft
    }

    /// `D_F` applied in place.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.fft.counter().add_propagation(false);
        self.fft.forward(data);
        data.iter_mut()
            .zip(&self.kernel.factors)
            .for_each(|(c, k)| *c *= k);
        self.fft.inverse(data);
    }

    /// `D_F⁻¹ = D_F*` applied in place.
    pub fn backward_in_place(&self, data: &mut [Complex64]) {
        self.fft.counter().add_propagation(true);
        self.fft.forward(data);
        data.iter_mut()
            .zip(&self.kernel.factors)
            .for_each(|(c, k)| *c *= k.conj());
        self.fft.inverse(data);
    }
}

fn propagate(psi: &ComplexField, fresnel_number: f64, backward: bool) -> Result<ComplexField> {
    check_fresnel_number(fresnel_number)?;
    if psi.data().iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            what: "wave field",
        });
    }
    let (ny, nx) = psi.shape();
    let grid = FrequencyGrid::new(ny, nx)?;
    let prop = Propagator::new(Arc::new(Fft2d::new(ny, nx)?), &grid, fresnel_number)?;
    let mut data = psi.data().to_vec();
    if backward {
        prop.backward_in_place(&mut data);
    } else {
        prop.forward_in_place(&mut data);
    }
    Ok(ComplexField::from_raw(ny, nx, data))
}

/// Propagates `psi` to the detector: `F⁻¹(exp(−iξ²/(4πF))·F(ψ))`.
pub fn fresnel_propagate(psi: &ComplexField, fresnel_number: f64) -> Result<ComplexField> {
    propagate(psi, fresnel_number, false)
}

/// Inverse (and adjoint) of [`fresnel_propagate`].
pub fn fresnel_backpropagate(psi: &ComplexField, fresnel_number: f64) -> Result<ComplexField> {
    propagate(psi, fresnel_number, true)
}
