//! Frequency-dependent Tikhonov weights `α(ξ)`.
//!
//! Plateaus are joined by logistic blends in `|ξ|` whose width is given
//! relative to the cutoff frequency. The first cutoff sits at the first
//! maximum of the phase CTF for the mean Fresnel number, `π(2F̄)^{1/2}`; the
//! optional second cutoff `πDF̄` marks the numerical aperture of a detector
//! `D` pixels across.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::FrequencyGrid;

pub const DEFAULT_ALPHA_LOW: f64 = 1e-3;
pub const DEFAULT_ALPHA_HIGH: f64 = 1e-1;
pub const DEFAULT_TRANSITION_WIDTH: f64 = 0.1;

/// Default beyond-NA plateau for `num_holograms` holograms (`2J`).
pub fn default_alpha_beyond_na(num_holograms: usize) -> f64 {
    2.0 * num_holograms as f64
}

/// Per-Fourier-sample regularization weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationWeights {
    ny: usize,
    nx: usize,
    alpha: Vec<f64>,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub alpha_beyond_na: Option<f64>,
    pub cutoff_low: f64,
    /// Present only when the beyond-NA level is active (below Nyquist).
    pub cutoff_na: Option<f64>,
    pub transition_width: f64,
}

impl RegularizationWeights {
    /// Weights that are constant over all frequencies.
    pub fn uniform(ny: usize, nx: usize, alpha: f64) -> Result<Self> {
        check_alpha("alpha", alpha)?;
        Ok(Self {
            ny,
            nx,
            alpha: vec![alpha; ny * nx],
            alpha_low: alpha,
            alpha_high: alpha,
            alpha_beyond_na: None,
            cutoff_low: 0.0,
            cutoff_na: None,
            transition_width: DEFAULT_TRANSITION_WIDTH,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

fn check_alpha(name: &'static str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(invalid(name, format!("must be finite and non-negative, got {value}")));
    }
    Ok(())
}

fn mean_fresnel(fresnel_numbers: &[f64]) -> Result<f64> {
    if fresnel_numbers.is_empty() {
        return Err(Error::EmptyHolograms);
    }
    if fresnel_numbers.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(invalid("fresnel_numbers", "must all be positive"));
    }
    Ok(fresnel_numbers.iter().sum::<f64>() / fresnel_numbers.len() as f64)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

// Smooth step from 0 to 1 across `cutoff`, width relative to the cutoff.
fn blend(radius: f64, cutoff: f64, width: f64) -> f64 {
    logistic((radius - cutoff) / (width * cutoff))
}

/// First-maximum cutoff `π(2F̄)^{1/2}`.
pub fn low_frequency_cutoff(fresnel_numbers: &[f64]) -> Result<f64> {
    Ok(PI * (2.0 * mean_fresnel(fresnel_numbers)?).sqrt())
}

/// Numerical-aperture cutoff `πDF̄` for a detector `detector_len` pixels across.
pub fn aperture_cutoff(fresnel_numbers: &[f64], detector_len: f64) -> Result<f64> {
    Ok(PI * detector_len * mean_fresnel(fresnel_numbers)?)
}

/// Two plateaus, `alpha_low` below `π(2F̄)^{1/2}` and `alpha_high` above.
pub fn build_weights_two_level(
    grid: &FrequencyGrid,
    fresnel_numbers: &[f64],
    alpha_low: f64,
    alpha_high: f64,
    transition_width: f64,
) -> Result<RegularizationWeights> {
    check_alpha("alpha_low", alpha_low)?;
    check_alpha("alpha_high", alpha_high)?;
    if !(transition_width.is_finite() && transition_width > 0.0) {
        return Err(invalid("transition_width", "must be positive"));
    }
    let cutoff = low_frequency_cutoff(fresnel_numbers)?;
    let alpha = grid
        .xi2()
        .iter()
        .map(|&xi2| alpha_low + (alpha_high - alpha_low) * blend(xi2.sqrt(), cutoff, transition_width))
        .collect();
    Ok(RegularizationWeights {
        ny: grid.ny(),
        nx: grid.nx(),
        alpha,
        alpha_low,
        alpha_high,
        alpha_beyond_na: None,
        cutoff_low: cutoff,
        cutoff_na: None,
        transition_width,
    })
}

/// Two-level weights plus a third plateau `alpha_beyond_na` above `πDF̄`.
///
/// When the aperture cutoff lies at or beyond Nyquist (`π`) the third level
/// is inactive and the result equals the two-level weights.
#[allow(clippy::too_many_arguments)]
pub fn build_weights_three_level(
    grid: &FrequencyGrid,
    fresnel_numbers: &[f64],
    detector_len: f64,
    alpha_low: f64,
    alpha_high: f64,
    alpha_beyond_na: f64,
    transition_width: f64,
) -> Result<RegularizationWeights> {
    check_alpha("alpha_beyond_na", alpha_beyond_na)?;
    if !(detector_len.is_finite() && detector_len >= 2.0) {
        return Err(invalid("detector_len", "must be at least 2 pixels"));
    }
    let mut weights =
        build_weights_two_level(grid, fresnel_numbers, alpha_low, alpha_high, transition_width)?;
    weights.alpha_beyond_na = Some(alpha_beyond_na);
    let cutoff = aperture_cutoff(fresnel_numbers, detector_len)?;
    if cutoff >= PI {
        return Ok(weights);
    }
    weights.cutoff_na = Some(cutoff);
    for (a, &xi2) in weights.alpha.iter_mut().zip(grid.xi2()) {
        *a += (alpha_beyond_na - alpha_high) * blend(xi2.sqrt(), cutoff, transition_width);
    }
    Ok(weights)
}

/// Regularization settings prior to building weights on a concrete grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationParams {
    pub alpha_low: f64,
    pub alpha_high: f64,
    /// Enables the third level when set.
    pub alpha_beyond_na: Option<f64>,
    pub transition_width: f64,
}

impl Default for RegularizationParams {
    fn default() -> Self {
        Self {
            alpha_low: DEFAULT_ALPHA_LOW,
            alpha_high: DEFAULT_ALPHA_HIGH,
            alpha_beyond_na: None,
            transition_width: DEFAULT_TRANSITION_WIDTH,
        }
    }
}

impl RegularizationParams {
    pub fn build(
        &self,
        grid: &FrequencyGrid,
        fresnel_numbers: &[f64],
        detector_len: f64,
    ) -> Result<RegularizationWeights> {
        match self.alpha_beyond_na {
            None => build_weights_two_level(
                grid,
                fresnel_numbers,
                self.alpha_low,
                self.alpha_high,
                self.transition_width,
            ),
            Some(beyond) => build_weights_three_level(
                grid,
                fresnel_numbers,
                detector_len,
                self.alpha_low,
                self.alpha_high,
                beyond,
                self.transition_width,
            ),
        }
    }
}
