//! Cone-beam setup to per-pixel parameters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `hc` in keV·m.
const HC_KEV_M: f64 = 1.23984193e-9;

pub fn wavelength_from_kev(energy_kev: f64) -> Result<f64> {
    if !(energy_kev.is_finite() && energy_kev > 0.0) {
        return Err(invalid("energy_kev", "must be positive"));
    }
    Ok(HC_KEV_M / energy_kev)
}

/// Distances in metres, energy in keV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupGeometry {
    pub source_sample: f64,
    pub source_detector: f64,
    pub pixel_pitch: f64,
    pub energy_kev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParameters {
    pub magnification: f64,
    pub pixel_size: f64,
    pub distance: f64,
    pub wavelength: f64,
    pub fresnel_number: f64,
}

impl SetupGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.source_sample) {
            return Err(invalid("source_sample", "must be positive"));
        }
        if !(positive(self.source_detector) && self.source_detector > self.source_sample) {
            return Err(invalid(
                "source_detector",
                "must exceed the source-sample distance",
            ));
        }
        if !positive(self.pixel_pitch) {
            return Err(invalid("pixel_pitch", "must be positive"));
        }
        wavelength_from_kev(self.energy_kev).map(|_| ())
    }

    /// Effective propagation distance `(z02 − z01)/M`.
    fn effective_distance(&self) -> f64 {
        (self.source_detector - self.source_sample) * self.source_sample / self.source_detector
    }
}

/// Magnification, effective pixel size and distance, and the Fresnel number
/// at the effective pixel scale.
pub fn effective_parameters(g: &SetupGeometry) -> Result<EffectiveParameters> {
    g.validate()?;
    let magnification = g.source_detector / g.source_sample;
    let pixel_size = g.pixel_pitch / magnification;
    let distance = g.effective_distance();
    let wavelength = wavelength_from_kev(g.energy_kev)?;
    Ok(EffectiveParameters {
        magnification,
        pixel_size,
        distance,
        wavelength,
        fresnel_number: pixel_size * pixel_size / (wavelength * distance),
    })
}

/// Fresnel numbers of a multi-distance scan after rescaling every hologram
/// to the magnification of the first distance.
///
/// The lateral length scale is the first effective pixel size; each
/// distance keeps its own effective propagation distance.
pub fn fresnel_numbers_at_reference(
    source_samples: &[f64],
    source_detector: f64,
    pixel_pitch: f64,
    energy_kev: f64,
) -> Result<Vec<f64>> {
    let first = *source_samples
        .first()
        .ok_or_else(|| invalid("source_sample", "at least one distance is required"))?;
    let reference = effective_parameters(&SetupGeometry {
        source_sample: first,
        source_detector,
        pixel_pitch,
        energy_kev,
    })?;
    source_samples
        .iter()
        .map(|&z| {
            let g = SetupGeometry {
                source_sample: z,
                source_detector,
                pixel_pitch,
                energy_kev,
            };
            g.validate()?;
            Ok(reference.pixel_size.powi(2) / (reference.wavelength * g.effective_distance()))
        })
        .collect()
}
