//! Scenario batches with paired NLTikh comparisons.
//!
//! `results.csv` holds only quantities that are reproducible from the
//! seeds; wall times go to `timings.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use holoretrieve::ctf::{admm_solve, ctf_solve};
use holoretrieve::nltikh::{probe_stepsize, problem_gradient_residual, problem_value_residual, StepRule};
use holoretrieve::pipeline::{prepare, PreparedProblem};
use holoretrieve::{Method, NltikhOptions, ReconstructionSettings};
use rayon::prelude::*;

use crate::config::{self, BenchmarkConfig, Comparison};
use crate::failure::Failure;
use crate::reconstruct::{load_inputs, DataSource, RunInputs};

pub const RESULTS_HEADER: &str =
    "scenario,method,variant,iterations,converged,error_vs_truth,error_up_to_offset,r_grad,r_value";
pub const TIMINGS_HEADER: &str = "scenario,method,variant,wall_time_s";

/// Multiples of the probed `1/L̂` tried as constant stepsizes.
pub const CONSTANT_STEP_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

pub struct BenchmarkArgs<'a> {
    pub config: &'a Path,
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
}

struct Loaded {
    name: String,
    inputs: RunInputs,
    prepared: PreparedProblem,
    compare: Vec<Comparison>,
}

struct Run {
    scenario: usize,
    variant: String,
    settings: ReconstructionSettings,
}

struct Outcome {
    phi: Vec<f64>,
    iterations: usize,
    converged: bool,
    wall_time: f64,
}

fn solve(l: &Loaded, settings: &ReconstructionSettings) -> Result<Outcome, Failure> {
    let clock = Instant::now();
    let (phi, trace) = l.prepared.solve(settings)?;
    Ok(Outcome {
        phi,
        iterations: trace.iterations(),
        converged: trace.converged,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// `1/L̂` at the warm start of a scenario.
fn probed_step(l: &Loaded) -> Result<f64, Failure> {
    let s = &l.inputs.settings;
    let problem = &l.prepared.problem;
    let start = if l.prepared.constraints.is_unconstrained() {
        ctf_solve(problem)?
    } else {
        admm_solve(problem, &l.prepared.constraints, &s.admm)?.0
    };
    let (_, grad) = problem.nl_value_and_gradient(&start)?;
    Ok(probe_stepsize(problem, &start, &grad, s.nltikh.seed)?)
}

fn runs_for(index: usize, l: &Loaded) -> Result<Vec<Run>, Failure> {
    let base = l.inputs.settings;
    let mut runs = vec![Run { scenario: index, variant: "default".into(), settings: base }];
    for c in &l.compare {
        match c {
            Comparison::ConstantStep => {
                let tau = probed_step(l)?;
                for m in CONSTANT_STEP_GRID {
                    let nltikh = NltikhOptions { step_rule: StepRule::Constant(m * tau), ..base.nltikh };
                    runs.push(Run {
                        scenario: index,
                        variant: format!("constant-{m}"),
                        settings: ReconstructionSettings { nltikh, ..base },
                    });
                }
            }
            Comparison::ColdStart => {
                let nltikh = NltikhOptions { warm_start: false, ..base.nltikh };
                runs.push(Run {
                    scenario: index,
                    variant: "cold-start".into(),
                    settings: ReconstructionSettings { nltikh, ..base },
                });
            }
        }
    }
    Ok(runs)
}

fn cell(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        let _ = write!(out, "{v:.16e}");
    }
}

/// Writes `results.csv` and `timings.csv`; returns the output directory.
pub fn run(args: &BenchmarkArgs<'_>) -> Result<PathBuf, Failure> {
    let mut cfg: BenchmarkConfig = config::load(args.config)?;
    if let Some(seed) = args.seed {
        for s in &mut cfg.scenario {
            s.solver.nltikh.seed = seed;
        }
    }
    cfg.validate()?;
    let dir = match (args.out, &cfg.output.dir) {
        (Some(out), _) => out.to_path_buf(),
        (None, Some(dir)) => config::resolve(args.config, dir),
        (None, None) => config::config_dir(args.config),
    };

    let loaded = cfg
        .scenario
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let prefix = format!("scenario[{i}].");
            let inputs = load_inputs(args.config, DataSource::Fixture(&s.fixture), &s.solver, &prefix)?;
            let prepared = prepare(&inputs.data, &inputs.constraints, &inputs.settings)?;
            Ok(Loaded { name: s.name.clone(), inputs, prepared, compare: s.compare.clone() })
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let runs = loaded
        .iter()
        .enumerate()
        .map(|(i, l)| runs_for(i, l))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();

    // long fixed-length runs give the reference value for R_value
    let references = loaded
        .par_iter()
        .map(|l| -> Result<Option<Vec<f64>>, Failure> {
            if l.compare.is_empty() {
                return Ok(None);
            }
            let base = l.inputs.settings;
            let nltikh = NltikhOptions { max_iterations: 1000, stop_on_tolerance: false, ..base.nltikh };
            Ok(Some(solve(l, &ReconstructionSettings { method: Method::Nltikh, nltikh, ..base })?.phi))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let outcomes = runs
        .par_iter()
        .map(|r| solve(&loaded[r.scenario], &r.settings))
        .collect::<Result<Vec<_>, _>>()?;

    let mut results = format!("{RESULTS_HEADER}\n");
    let mut timings = format!("{TIMINGS_HEADER}\n");
    for (r, o) in runs.iter().zip(outcomes) {
        let l = &loaded[r.scenario];
        let problem = &l.prepared.problem;
        let r_grad = problem_gradient_residual(problem, &o.phi, &l.prepared.constraints)?;
        let r_value = match &references[r.scenario] {
            Some(reference) => Some(problem_value_residual(problem, &o.phi, reference)?),
            None => None,
        };
        let phase = l.prepared.crop(o.phi)?;
        let (err, err_offset) = match &l.inputs.truth {
            Some(t) => (Some(phase.relative_error(t)?), Some(phase.relative_error_up_to_offset(t)?)),
            None => (None, None),
        };
        let method = r.settings.method;
        let _ = write!(results, "{},{method},{},{},{}", l.name, r.variant, o.iterations, o.converged);
        cell(&mut results, err);
        cell(&mut results, err_offset);
        cell(&mut results, Some(r_grad));
        cell(&mut results, r_value);
        results.push('\n');
        let _ = writeln!(timings, "{},{method},{},{:.6}", l.name, r.variant, o.wall_time);
    }

    fs::create_dir_all(&dir).map_err(|e| Failure::io(dir.display(), e))?;
    for (name, text) in [("results.csv", results), ("timings.csv", timings)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Failure::io(path.display(), e))?;
    }
    Ok(dir)
}
