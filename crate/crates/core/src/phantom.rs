//! Sphere phantoms and noisy hologram simulation.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::forward::{exit_wave, MaterialCoupling, WaveCache};
use crate::fourier::{Fft2d, FrequencyGrid};
use crate::grid::{RealImage, Unit};
use crate::problem::HologramSet;
use crate::propagation::Propagator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    /// `[y, x]` in pixels; pixel `(i, j)` has its center at `(i, j)`.
    pub center: [f64; 2],
    pub radius: f64,
}

/// How projected thickness (pixels) is converted to phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseScale {
    /// `φ = −k·δ·t` with the wave number in radians per pixel.
    Material { wavenumber: f64, delta: f64 },
    /// Scales so that the thickest projection has this phase (≤ 0).
    PeakPhase(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpherePhantomSpec {
    pub spheres: Vec<Sphere>,
    pub scale: PhaseScale,
    /// Average the profile over a 2×2 sub-pixel grid.
    #[serde(default)]
    pub supersample: bool,
}

impl SpherePhantomSpec {
    pub fn validate(&self) -> Result<()> {
        for s in &self.spheres {
            if !(s.radius.is_finite() && s.radius > 0.0) {
                return Err(invalid("phantom.spheres.radius", "must be positive"));
            }
            if !(s.center[0].is_finite() && s.center[1].is_finite()) {
                return Err(invalid("phantom.spheres.center", "must be finite"));
            }
        }
        match self.scale {
            PhaseScale::Material { wavenumber, delta } => {
                if !(wavenumber.is_finite() && wavenumber > 0.0) {
                    return Err(invalid("phantom.scale.wavenumber", "must be positive"));
                }
                if !(delta.is_finite() && delta >= 0.0) {
                    return Err(invalid("phantom.scale.delta", "must be non-negative"));
                }
            }
            PhaseScale::PeakPhase(p) => {
                if !(p.is_finite() && p <= 0.0) {
                    return Err(invalid("phantom.scale.peak_phase", "must be non-positive"));
                }
            }
        }
        Ok(())
    }
}

fn chord(sphere: &Sphere, y: f64, x: f64) -> f64 {
    let r2 = (y - sphere.center[0]).powi(2) + (x - sphere.center[1]).powi(2);
    let h = sphere.radius * sphere.radius - r2;
    if h > 0.0 {
        2.0 * h.sqrt()
    } else {
        0.0
    }
}

/// Phase of a set of homogeneous spheres; projected thicknesses add.
pub fn sphere_phantom(spec: &SpherePhantomSpec, ny: usize, nx: usize) -> Result<RealImage> {
    spec.validate()?;
    for s in &spec.spheres {
        let [cy, cx] = s.center;
        let r = s.radius;
        let outside = cy + r <= -0.5
            || cx + r <= -0.5
            || cy - r >= ny as f64 - 0.5
            || cx - r >= nx as f64 - 0.5;
        if outside {
            return Err(invalid(
                "phantom.spheres",
                format!("sphere at ({cy}, {cx}) with radius {r} lies outside the {ny}x{nx} grid"),
            ));
        }
    }
    let offsets: &[(f64, f64)] = if spec.supersample {
        &[(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)]
    } else {
        &[(0.0, 0.0)]
    };
    let thickness = RealImage::from_fn(ny, nx, Unit::Dimensionless, |y, x| {
        let mut t = 0.0;
        for &(dy, dx) in offsets {
            for s in &spec.spheres {
                t += chord(s, y as f64 + dy, x as f64 + dx);
            }
        }
        t / offsets.len() as f64
    })?;
    let factor = match spec.scale {
        PhaseScale::Material { wavenumber, delta } => -wavenumber * delta,
        PhaseScale::PeakPhase(p) => {
            let peak = thickness.max();
            if peak > 0.0 {
                p / peak
            } else {
                0.0
            }
        }
    };
    let data = thickness.into_data().into_iter().map(|t| factor * t + 0.0).collect();
    RealImage::new(ny, nx, data, Unit::Radians)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    /// Maximum relative deviation from 1, in `[0, 0.5)`.
    pub amplitude: f64,
    /// In pixels, at least 1.
    pub correlation_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Expected photons per pixel at unit intensity; `None` disables Poisson noise.
    pub photon_count: Option<f64>,
    pub gaussian_sigma: Option<f64>,
    pub drift: Option<DriftSpec>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.photon_count {
            if !(n.is_finite() && n > 0.0) {
                return Err(invalid("noise.photon_count", "must be positive"));
            }
        }
        if let Some(s) = self.gaussian_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(invalid("noise.gaussian_sigma", "must be non-negative"));
            }
        }
        if let Some(d) = self.drift {
            check_drift(d.amplitude, d.correlation_length)?;
        }
        Ok(())
    }
}

fn check_drift(amplitude: f64, correlation_length: f64) -> Result<()> {
    if !(0.0..0.5).contains(&amplitude) {
        return Err(invalid("noise.drift.amplitude", "must lie in [0, 0.5)"));
    }
    if !(correlation_length.is_finite() && correlation_length >= 1.0) {
        return Err(invalid("noise.drift.correlation_length", "must be at least 1"));
    }
    Ok(())
}

/// Smooth multiplicative background with mean 1 and maximum deviation
/// `amplitude`.
///
/// White Gaussian noise is band-limited to `|ξ| ≤ 2π/correlation_length`
/// with a hard spectral cutoff, then shifted and scaled.
pub fn flat_field_drift(
    ny: usize,
    nx: usize,
    amplitude: f64,
    correlation_length: f64,
    seed: u64,
) -> Result<RealImage> {
    check_drift(amplitude, correlation_length)?;
    if amplitude == 0.0 {
        return RealImage::filled(ny, nx, 1.0, Unit::Dimensionless);
    }
    let grid = FrequencyGrid::new(ny, nx)?;
    let fft = Fft2d::new(ny, nx)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise: Vec<f64> = (0..ny * nx).map(|_| normal.sample(&mut rng)).collect();
    let cutoff_sq = (2.0 * std::f64::consts::PI / correlation_length).powi(2);
    // the mean is removed here and restored as exactly 1 below
    let pass: Vec<f64> = grid
        .xi2()
        .iter()
        .map(|&x| if x > 0.0 && x <= cutoff_sq { 1.0 } else { 0.0 })
        .collect();
    let mut field = fft.filter_real(&noise, &pass);
    let deviation = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if deviation > 0.0 { amplitude / deviation } else { 0.0 };
    field.iter_mut().for_each(|v| *v = 1.0 + scale * *v);
    RealImage::new(ny, nx, field, Unit::Dimensionless)
}

/// Simulates `I_j = N_j(φ)`, applies drift, Poisson and Gaussian noise.
///
/// Hologram `j` draws from ChaCha20 stream `j` of the seed, so results are
/// independent of the thread count.
pub fn simulate_holograms(
    phi: &RealImage,
    coupling: &MaterialCoupling,
    fresnel_numbers: &[f64],
    noise: &NoiseSpec,
) -> Result<HologramSet> {
    noise.validate()?;
    if fresnel_numbers.is_empty() {
        return Err(crate::error::Error::EmptyHolograms);
    }
    let (ny, nx) = phi.shape();
    let grid = FrequencyGrid::new(ny, nx)?;
    let fft = Arc::new(Fft2d::new(ny, nx)?);
    let exit = exit_wave(phi.data(), coupling.gamma());
    let holograms: Vec<RealImage> = fresnel_numbers
        .par_iter()
        .enumerate()
        .map(|(j, &f)| -> Result<RealImage> {
            let prop = Propagator::new(fft.clone(), &grid, f)?;
            let mut intensity = WaveCache::new(exit.clone(), &prop).intensity();
            let mut rng = ChaCha20Rng::seed_from_u64(noise.seed);
            rng.set_stream(j as u64);
            if let Some(d) = noise.drift {
                let drift = flat_field_drift(ny, nx, d.amplitude, d.correlation_length, rng.next_u64())?;
                intensity.iter_mut().zip(drift.data()).for_each(|(i, m)| *i *= m);
            }
            if let Some(n) = noise.photon_count {
                for v in intensity.iter_mut() {
                    let mean = *v * n;
                    let counts: f64 = if mean > 0.0 {
                        Poisson::new(mean)
                            .map_err(|e| invalid("noise.photon_count", e.to_string()))?
                            .sample(&mut rng)
                    } else {
                        0.0
                    };
                    *v = counts / n;
                }
            }
            if let Some(s) = noise.gaussian_sigma.filter(|&s| s > 0.0) {
                let normal = Normal::new(0.0, s).map_err(|e| invalid("noise.gaussian_sigma", e.to_string()))?;
                // clamped so the data stay valid intensities
                intensity.iter_mut().for_each(|v| *v = (*v + rng.sample(normal)).max(0.0));
            }
            RealImage::new(ny, nx, intensity, Unit::Dimensionless)
        })
        .collect::<Result<_>>()?;
    HologramSet::new(holograms, fresnel_numbers.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(center: [f64; 2], radius: f64, scale: PhaseScale) -> SpherePhantomSpec {
        SpherePhantomSpec {
            spheres: vec![Sphere { center, radius }],
            scale,
            supersample: false,
        }
    }

    #[test]
    fn polystyrene_sphere_peak_phase() {
        let wavelength = 1.5498e-10;
        let pixel = 196e-9;
        let k = 2.0 * std::f64::consts::PI / wavelength * pixel;
        let radius = 7.5e-6 / pixel;
        let spec = single([64.0, 64.0], radius, PhaseScale::Material { wavenumber: k, delta: 3.673e-6 });
        let phi = sphere_phantom(&spec, 128, 128).unwrap();
        let peak = phi.get(64, 64);
        assert!((peak + k * 3.673e-6 * 2.0 * radius).abs() < 1e-12);
        assert!((peak + 2.23).abs() < 0.01, "peak {peak}");
        assert!(phi.max() <= 0.0);
    }

    #[test]
    fn zero_at_rim_and_outside() {
        let spec = single([8.0, 8.0], 3.0, PhaseScale::PeakPhase(-1.0));
        let phi = sphere_phantom(&spec, 16, 16).unwrap();
        assert_eq!(phi.get(8, 11), 0.0);
        assert_eq!(phi.get(0, 0), 0.0);
        assert_eq!(phi.get(8, 8), -1.0);
    }

    #[test]
    fn overlapping_spheres_add() {
        let a = single([8.0, 6.0], 3.0, PhaseScale::Material { wavenumber: 1.0, delta: 0.1 });
        let b = single([8.0, 9.0], 3.0, PhaseScale::Material { wavenumber: 1.0, delta: 0.1 });
        let mut both = a.clone();
        both.spheres.extend(b.spheres.iter().copied());
        let pa = sphere_phantom(&a, 16, 16).unwrap();
        let pb = sphere_phantom(&b, 16, 16).unwrap();
        let pab = sphere_phantom(&both, 16, 16).unwrap();
        for i in 0..pab.len() {
            assert!((pab.data()[i] - pa.data()[i] - pb.data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn sphere_outside_grid_rejected() {
        let spec = single([100.0, 8.0], 3.0, PhaseScale::PeakPhase(-1.0));
        assert!(sphere_phantom(&spec, 16, 16).is_err());
        let bad = single([8.0, 8.0], -1.0, PhaseScale::PeakPhase(-1.0));
        assert!(sphere_phantom(&bad, 16, 16).is_err());
    }

    #[test]
    fn zero_phase_gives_unit_holograms() {
        let phi = RealImage::zeros(16, 16, Unit::Radians).unwrap();
        let set = simulate_holograms(&phi, &MaterialCoupling::pure_phase(), &[1e-3, 2e-3], &NoiseSpec::noiseless()).unwrap();
        for h in set.holograms() {
            assert!(h.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn noiseless_pure_phase_mean_is_one() {
        let spec = single([16.0, 16.0], 6.0, PhaseScale::PeakPhase(-2.0));
        let phi = sphere_phantom(&spec, 32, 32).unwrap();
        let set = simulate_holograms(&phi, &MaterialCoupling::pure_phase(), &[2e-3], &NoiseSpec::noiseless()).unwrap();
        let h = &set.holograms()[0];
        assert!((h.mean() - 1.0).abs() < 1e-12);
        assert!(h.min() >= 0.0);
    }

    #[test]
    fn seeded_simulation_is_deterministic() {
        let spec = single([16.0, 16.0], 6.0, PhaseScale::PeakPhase(-1.0));
        let phi = sphere_phantom(&spec, 32, 32).unwrap();
        let noise = NoiseSpec {
            photon_count: Some(100.0),
            gaussian_sigma: Some(0.01),
            drift: Some(DriftSpec { amplitude: 0.05, correlation_length: 8.0 }),
            seed: 7,
        };
        let c = MaterialCoupling::pure_phase();
        let a = simulate_holograms(&phi, &c, &[1e-3, 2e-3], &noise).unwrap();
        let b = simulate_holograms(&phi, &c, &[1e-3, 2e-3], &noise).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.holograms()[0], a.holograms()[1]);
        let other = simulate_holograms(&phi, &c, &[1e-3, 2e-3], &NoiseSpec { seed: 8, ..noise }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn drift_properties() {
        let flat = flat_field_drift(32, 32, 0.0, 4.0, 1).unwrap();
        assert!(flat.data().iter().all(|&v| v == 1.0));

        let field = flat_field_drift(64, 64, 0.1, 8.0, 3).unwrap();
        assert!((field.mean() - 1.0).abs() < 1e-3);
        let dev = field.data().iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
        assert!(dev <= 0.1 + 1e-12);
        assert!(field.min() > 0.0);

        // power beyond the cutoff at least 40 dB below the passband
        let grid = FrequencyGrid::new(64, 64).unwrap();
        let fft = Fft2d::new(64, 64).unwrap();
        let centered: Vec<f64> = field.data().iter().map(|v| v - 1.0).collect();
        let spec = fft.forward_real(&centered);
        let cutoff_sq = (2.0 * std::f64::consts::PI / 8.0f64).powi(2);
        let (mut inside, mut outside) = (0.0, 0.0);
        for (c, &x) in spec.iter().zip(grid.xi2()) {
            if x <= cutoff_sq {
                inside += c.norm_sqr();
            } else {
                outside += c.norm_sqr();
            }
        }
        assert!(outside <= 1e-4 * inside, "{outside} vs {inside}");

        assert!(flat_field_drift(8, 8, 0.5, 4.0, 0).is_err());
        assert!(flat_field_drift(8, 8, 0.1, 0.5, 0).is_err());
    }

    #[test]
    fn invalid_noise_rejected() {
        let phi = RealImage::zeros(8, 8, Unit::Radians).unwrap();
        let noise = NoiseSpec { photon_count: Some(0.0), ..Default::default() };
        assert!(simulate_holograms(&phi, &MaterialCoupling::pure_phase(), &[1e-3], &noise).is_err());
    }
}
