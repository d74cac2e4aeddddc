//! End-to-end reconstruction: padding, weights, solver dispatch, cropping.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::ctf::{admm_solve, ctf_solve, AdmmOptions};
use crate::error::Result;
use crate::forward::MaterialCoupling;
use crate::fourier::FrequencyGrid;
use crate::grid::{crop_image, pad_image, Padding, RealImage, Unit, Window};
use crate::nltikh::{nltikh_solve, NltikhOptions};
use crate::problem::{HologramSet, TikhonovProblem};
use crate::regularization::RegularizationParams;
use crate::trace::ConvergenceTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ctf,
    Cctf,
    #[default]
    Nltikh,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ctf => "ctf",
            Method::Cctf => "cctf",
            Method::Nltikh => "nltikh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionSettings {
    pub method: Method,
    pub coupling: MaterialCoupling,
    pub regularization: RegularizationParams,
    pub padding: Padding,
    pub admm: AdmmOptions,
    pub nltikh: NltikhOptions,
}

impl Default for ReconstructionSettings {
    fn default() -> Self {
        Self {
            method: Method::default(),
            coupling: MaterialCoupling::pure_phase(),
            regularization: RegularizationParams::default(),
            padding: Padding::default(),
            admm: AdmmOptions::default(),
            nltikh: NltikhOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub phase: RealImage,
    /// Empty for the closed-form CTF.
    pub trace: ConvergenceTrace,
    pub converged: bool,
    pub wall_time: f64,
}

/// A reconstruction problem on the padded grid, ready to solve.
#[derive(Debug)]
pub struct PreparedProblem {
    pub problem: TikhonovProblem,
    /// Constraints restricted to the unpadded window.
    pub constraints: ConstraintSet,
    pub original_shape: (usize, usize),
}

/// Pads the data, builds the weights and the operators. `constraints`
/// refer to the unpadded image.
pub fn prepare(
    data: &HologramSet,
    constraints: &ConstraintSet,
    settings: &ReconstructionSettings,
) -> Result<PreparedProblem> {
    settings.padding.validate()?;
    constraints.validate()?;
    let (ny, nx) = data.shape();
    let padded = if settings.padding.is_identity() {
        data.clone()
    } else {
        let holograms = data
            .holograms()
            .iter()
            .map(|h| pad_image(h, settings.padding.factor, settings.padding.mode))
            .collect::<Result<Vec<_>>>()?;
        HologramSet::new(holograms, data.fresnel_numbers().to_vec())?
    };
    let (py, px) = padded.shape();
    let constraints = if settings.padding.is_identity() {
        constraints.clone()
    } else {
        constraints.clone().within(Window::centered((py, px), (ny, nx)))
    };
    let grid = FrequencyGrid::new(py, px)?;
    // the aperture cutoff uses the detector size, not the padded size
    let weights = settings
        .regularization
        .build(&grid, data.fresnel_numbers(), ny.max(nx) as f64)?;
    Ok(PreparedProblem {
        problem: TikhonovProblem::new(&padded, &settings.coupling, &weights)?,
        constraints,
        original_shape: (ny, nx),
    })
}

impl PreparedProblem {
    /// Solves on the padded grid; the trace is empty for the closed-form CTF.
    pub fn solve(&self, settings: &ReconstructionSettings) -> Result<(Vec<f64>, ConvergenceTrace)> {
        Ok(match settings.method {
            Method::Ctf => (
                ctf_solve(&self.problem)?,
                ConvergenceTrace {
                    converged: true,
                    ..Default::default()
                },
            ),
            Method::Cctf => admm_solve(&self.problem, &self.constraints, &settings.admm)?,
            Method::Nltikh => {
                let out = nltikh_solve(&self.problem, &self.constraints, &settings.nltikh)?;
                (out.phase.into_data(), out.trace)
            }
        })
    }

    /// Cuts the unpadded region out of a padded-grid phase.
    pub fn crop(&self, phi: Vec<f64>) -> Result<RealImage> {
        let (py, px) = self.problem.shape();
        crop_image(&RealImage::new(py, px, phi, Unit::Radians)?, self.original_shape)
    }
}

/// Runs one reconstruction. `constraints` refer to the unpadded image.
pub fn reconstruct(
    data: &HologramSet,
    constraints: &ConstraintSet,
    settings: &ReconstructionSettings,
) -> Result<Reconstruction> {
    let clock = Instant::now();
    let prepared = prepare(data, constraints, settings)?;
    let (phi, trace) = prepared.solve(settings)?;
    Ok(Reconstruction {
        phase: prepared.crop(phi)?,
        converged: trace.converged,
        trace,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

pub struct Job<'a> {
    pub data: &'a HologramSet,
    pub constraints: &'a ConstraintSet,
    pub settings: &'a ReconstructionSettings,
}

/// Independent reconstructions on the current rayon pool, in input order.
pub fn reconstruct_batch(jobs: &[Job<'_>]) -> Vec<Result<Reconstruction>> {
    jobs.par_iter()
        .map(|j| reconstruct(j.data, j.constraints, j.settings))
        .collect()
}
