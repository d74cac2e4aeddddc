use std::fs;
use std::path::{Path, PathBuf};

use holoretrieve::io::{read_mask, write_real, write_trace_csv};
use holoretrieve::{
    reconstruct, ConstraintSet, HologramSet, MaterialCoupling, Method, RealImage, ReconstructionSettings,
    TraceFlag,
};
use serde::Serialize;

use crate::config::{self, ReconstructConfig, SolverConfig};
use crate::failure::Failure;
use crate::fixture::{read_holograms, Fixture};

pub struct ReconstructArgs<'a> {
    pub config: &'a Path,
    pub method: Option<Method>,
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
    pub allow_nonconverged: bool,
}

/// Everything a solver run needs, loaded from disk.
#[derive(Debug)]
pub struct RunInputs {
    pub data: HologramSet,
    pub constraints: ConstraintSet,
    pub settings: ReconstructionSettings,
    pub truth: Option<RealImage>,
    /// The solver configuration with defaults taken from the fixture.
    pub solver: SolverConfig,
    pub holograms: Vec<PathBuf>,
}

/// Where hologram data come from.
pub enum DataSource<'a> {
    Fixture(&'a Path),
    Files { holograms: &'a [PathBuf], fresnel_numbers: &'a [f64] },
}

/// Loads data, mask and truth; `config_path` anchors relative paths and
/// `prefix` names the config section in diagnostics.
pub fn load_inputs(
    config_path: &Path,
    source: DataSource<'_>,
    solver: &SolverConfig,
    prefix: &str,
) -> Result<RunInputs, Failure> {
    let mut solver = solver.clone();
    let (data, truth, holograms) = match source {
        DataSource::Fixture(path) => {
            let fixture = Fixture::load(&config::resolve(config_path, path), &format!("{prefix}fixture"))?;
            solver.c_beta_delta.get_or_insert(fixture.manifest.c_beta_delta);
            let data = read_holograms(&fixture.holograms, &fixture.manifest.fresnel_numbers)?;
            let truth = fixture.truth()?;
            (data, Some(truth), fixture.holograms)
        }
        DataSource::Files { holograms, fresnel_numbers } => {
            let stems: Vec<PathBuf> = holograms.iter().map(|h| config::resolve(config_path, h)).collect();
            (read_holograms(&stems, fresnel_numbers)?, None, stems)
        }
    };
    let c_beta_delta = *solver.c_beta_delta.get_or_insert(0.0);

    let spec = &solver.constraints;
    let mut constraints = if spec.negativity {
        ConstraintSet::negativity()
    } else {
        ConstraintSet::unconstrained()
    };
    if let Some(stem) = &spec.support {
        let path = config::resolve(config_path, stem);
        let mask = read_mask(&path).map_err(|e| Failure::io(format!("{prefix}constraints.support {}", path.display()), e))?;
        if mask.shape() != data.shape() {
            return Err(Failure::Validation(vec![format!(
                "{prefix}constraints.support: mask is {:?}, holograms are {:?}",
                mask.shape(),
                data.shape()
            )]));
        }
        constraints = constraints.with_support(mask);
    }
    if let Some(b) = spec.bounds {
        constraints = constraints.with_bounds(b.lo, b.hi);
    }

    let settings = ReconstructionSettings {
        method: solver.method,
        coupling: MaterialCoupling::new(c_beta_delta)?,
        regularization: solver.regularization,
        padding: solver.padding,
        admm: solver.admm,
        nltikh: solver.nltikh_options(),
    };
    Ok(RunInputs { data, constraints, settings, truth, solver, holograms })
}

#[derive(Debug, Serialize)]
struct ResolvedRun<'a> {
    holograms: &'a [PathBuf],
    fresnel_numbers: &'a [f64],
    #[serde(flatten)]
    solver: &'a SolverConfig,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    method: Method,
    iterations: usize,
    converged: bool,
    wall_time_s: f64,
    flags: &'a [TraceFlag],
    #[serde(skip_serializing_if = "Option::is_none")]
    final_gradient_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_vs_truth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_up_to_offset: Option<f64>,
    config: ResolvedRun<'a>,
}

/// Writes `phase`, `trace.csv` and `summary.json`; returns the output
/// directory.
pub fn run(args: &ReconstructArgs<'_>) -> Result<PathBuf, Failure> {
    let mut cfg: ReconstructConfig = config::load(args.config)?;
    if let Some(m) = args.method {
        cfg.solver.method = m;
    }
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(seed) = cfg.seed {
        cfg.solver.nltikh.seed = seed;
    }
    cfg.validate()?;

    let source = match &cfg.fixture {
        Some(path) => DataSource::Fixture(path),
        None => DataSource::Files { holograms: &cfg.holograms, fresnel_numbers: &cfg.fresnel_numbers },
    };
    let inputs = load_inputs(args.config, source, &cfg.solver, "")?;
    let dir = match (args.out, &cfg.output.dir) {
        (Some(out), _) => out.to_path_buf(),
        (None, Some(dir)) => config::resolve(args.config, dir),
        (None, None) => config::config_dir(args.config),
    };

    let rec = reconstruct(&inputs.data, &inputs.constraints, &inputs.settings)?;
    let (error_vs_truth, error_up_to_offset) = match &inputs.truth {
        Some(t) => (Some(rec.phase.relative_error(t)?), Some(rec.phase.relative_error_up_to_offset(t)?)),
        None => (None, None),
    };

    fs::create_dir_all(&dir).map_err(|e| Failure::io(dir.display(), e))?;
    let notes = format!("{} reconstruction", inputs.settings.method);
    write_real(&dir.join("phase"), &rec.phase, Some(notes)).map_err(|e| Failure::io("phase", e))?;
    let trace_path = dir.join("trace.csv");
    write_trace_csv(&trace_path, &rec.trace).map_err(|e| Failure::io(trace_path.display(), e))?;
    let summary = Summary {
        method: inputs.settings.method,
        iterations: rec.trace.iterations(),
        converged: rec.converged,
        wall_time_s: rec.wall_time,
        flags: &rec.trace.flags,
        final_gradient_residual: rec.trace.last().and_then(|r| r.gradient_residual),
        error_vs_truth,
        error_up_to_offset,
        config: ResolvedRun {
            holograms: &inputs.holograms,
            fresnel_numbers: inputs.data.fresnel_numbers(),
            solver: &inputs.solver,
        },
    };
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| Failure::io("summary.json", e))?;
    json.push('\n');
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, json).map_err(|e| Failure::io(summary_path.display(), e))?;

    if !rec.converged && !args.allow_nonconverged {
        return Err(Failure::NotConverged(format!(
            "{} stopped after {} iterations; outputs in {}",
            inputs.settings.method,
            rec.trace.iterations(),
            dir.display()
        )));
    }
    Ok(dir)
}
