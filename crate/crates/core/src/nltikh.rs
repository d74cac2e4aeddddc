//! Nonlinear Tikhonov reconstruction by projected gradient descent.
//!
//! Steps alternate between the two Barzilai–Borwein quotients and are
//! safeguarded by a non-monotone backtracking line search against the
//! largest of the last `M` objective values. Iterations stop once the
//! gradient residual, the stationarity gradient at `φ_k` relative to
//! `‖∇T_NL(0)‖`, drops below the tolerance.

use std::collections::VecDeque;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::ctf::{admm_solve, ctf_solve, AdmmOptions};
use crate::error::{invalid, Error, Result};
use crate::forward::MaterialCoupling;
use crate::grid::{dot, norm, RealImage, Unit};
use crate::problem::{HologramSet, TikhonovProblem};
use crate::regularization::RegularizationWeights;
use crate::trace::{ConvergenceTrace, IterationRecord, TraceFlag};

/// A differentiable objective over flat real vectors.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Objective for TikhonovProblem {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.nl_value(x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.nl_value_and_gradient(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Alternating Barzilai–Borwein quotients.
    BarzilaiBorwein,
    /// The same trial step in every iteration.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialStep {
    /// `1/L̂` from a finite-difference gradient probe along a random direction.
    Probe,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NltikhOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Disables the residual test; used for long reference runs.
    pub stop_on_tolerance: bool,
    pub linesearch_window: usize,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    pub initial_step: InitialStep,
    pub step_rule: StepRule,
    pub warm_start: bool,
    /// Seed for the stepsize probe direction.
    pub seed: u64,
    /// Options of the constrained-CTF warm start.
    #[serde(skip)]
    pub admm: AdmmOptions,
}

impl Default for NltikhOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-3,
            stop_on_tolerance: true,
            linesearch_window: 10,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 20,
            initial_step: InitialStep::Probe,
            step_rule: StepRule::BarzilaiBorwein,
            warm_start: true,
            seed: 0,
            admm: AdmmOptions::default(),
        }
    }
}

impl NltikhOptions {
    /// Fixed 1000 iterations with the stopping rule disabled, for reference
    /// solutions.
    pub fn long_run() -> Self {
        Self {
            max_iterations: 1000,
            stop_on_tolerance: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("nltikh.max_iterations", "must be at least 1"));
        }
        if !(self.gradient_tolerance.is_finite() && self.gradient_tolerance >= 0.0) {
            return Err(invalid("nltikh.gradient_tolerance", "must be non-negative"));
        }
        if self.linesearch_window == 0 {
            return Err(invalid("nltikh.linesearch_window", "must be at least 1"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(invalid("nltikh.backtrack_factor", "must lie in (0, 1)"));
        }
        if !(self.sufficient_decrease.is_finite() && self.sufficient_decrease > 0.0) {
            return Err(invalid("nltikh.sufficient_decrease", "must be positive"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if let InitialStep::Fixed(t) = self.initial_step {
            if !positive(t) {
                return Err(invalid("nltikh.initial_step", "must be positive"));
            }
        }
        if let StepRule::Constant(t) = self.step_rule {
            if !positive(t) {
                return Err(invalid("nltikh.step_rule", "constant step must be positive"));
            }
        }
        self.admm.validate()
    }

    fn linesearch(&self) -> LinesearchParams {
        LinesearchParams {
            backtrack_factor: self.backtrack_factor,
            sufficient_decrease: self.sufficient_decrease,
            max_backtracks: self.max_backtracks,
        }
    }
}

/// Barzilai–Borwein stepsize for iteration `k ≥ 1`.
///
/// Odd `k` uses `⟨Δφ,Δg⟩/‖Δg‖²`, even `k` uses `‖Δφ‖²/⟨Δφ,Δg⟩`. A
/// non-positive or non-finite quotient falls back to `previous`.
pub fn bb_stepsize(k: usize, delta_phi: &[f64], delta_grad: &[f64], previous: f64) -> Result<f64> {
    let ss = dot(delta_phi, delta_phi);
    let yy = dot(delta_grad, delta_grad);
    if ss == 0.0 && yy == 0.0 {
        return Err(Error::Stagnation);
    }
    let sy = dot(delta_phi, delta_grad);
    let tau = if k % 2 == 1 { sy / yy } else { ss / sy };
    Ok(if tau.is_finite() && tau > 0.0 {
        tau
    } else {
        previous
    })
}

/// Iterate, gradient and objective history of the descent loop.
#[derive(Debug, Clone)]
pub struct GradientState {
    pub iterate: Vec<f64>,
    pub gradient: Vec<f64>,
    pub value: f64,
    pub previous_iterate: Option<Vec<f64>>,
    pub previous_gradient: Option<Vec<f64>>,
    pub stepsize: f64,
    window: VecDeque<f64>,
    window_len: usize,
}

impl GradientState {
    pub fn new(iterate: Vec<f64>, value: f64, gradient: Vec<f64>, stepsize: f64, window_len: usize) -> Self {
        let mut window = VecDeque::with_capacity(window_len);
        window.push_back(value);
        Self {
            iterate,
            gradient,
            value,
            previous_iterate: None,
            previous_gradient: None,
            stepsize,
            window,
            window_len: window_len.max(1),
        }
    }

    /// Largest of the last `M` objective values.
    pub fn reference_value(&self) -> f64 {
        self.window.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn window(&self) -> impl Iterator<Item = &f64> {
        self.window.iter()
    }

    fn advance(&mut self, iterate: Vec<f64>, value: f64, gradient: Vec<f64>) {
        self.previous_iterate = Some(std::mem::replace(&mut self.iterate, iterate));
        self.previous_gradient = Some(std::mem::replace(&mut self.gradient, gradient));
        self.value = value;
        if self.window.len() == self.window_len {
            self.window.pop_front();
        }
        self.window.push_back(value);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinesearchParams {
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LinesearchParams {
    fn default() -> Self {
        Self {
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinesearchOutcome {
    pub step: f64,
    pub iterate: Vec<f64>,
    pub value: f64,
    pub backtracks: usize,
    /// The backtrack budget ran out and the smallest trial was accepted.
    pub exhausted: bool,
}

/// Non-monotone backtracking along the projected gradient path.
///
/// A trial `x(τ) = Π_A(φ − τ∇)` is accepted when
/// `T(x(τ)) ≤ max(window) − (σ/τ)‖x(τ) − φ‖²`, which reduces to
/// `max(window) − στ‖∇‖²` without constraints.
pub fn nonmonotone_linesearch(
    state: &GradientState,
    candidate_step: f64,
    params: &LinesearchParams,
    mut project: impl FnMut(&mut [f64]) -> Result<()>,
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<LinesearchOutcome> {
    let reference = state.reference_value();
    let mut step = candidate_step;
    let mut backtracks = 0;
    loop {
        let mut trial: Vec<f64> = state
            .iterate
            .iter()
            .zip(&state.gradient)
            .map(|(x, g)| x - step * g)
            .collect();
        project(&mut trial)?;
        let value = objective(&trial)?;
        let moved: f64 = trial
            .iter()
            .zip(&state.iterate)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let accepted = value <= reference - params.sufficient_decrease / step * moved;
        if accepted || backtracks >= params.max_backtracks {
            return Ok(LinesearchOutcome {
                step,
                iterate: trial,
                value,
                backtracks,
                exhausted: !accepted,
            });
        }
        step *= params.backtrack_factor;
        backtracks += 1;
    }
}

/// Minimum-norm element of `∇T(φ) + N_A(φ)`; equals the gradient without
/// constraints.
pub fn stationarity_gradient(
    phi: &[f64],
    gradient: &[f64],
    constraints: &ConstraintSet,
    ny: usize,
    nx: usize,
) -> Result<Vec<f64>> {
    let mut out = gradient.to_vec();
    if constraints.is_unconstrained() {
        return Ok(out);
    }
    // A pixel sits on a bound exactly when projecting a nudge past it
    // brings it back: compare projections of φ ± 1.
    let mut up: Vec<f64> = phi.iter().map(|p| p + 1.0).collect();
    let mut down: Vec<f64> = phi.iter().map(|p| p - 1.0).collect();
    constraints.project_in_place(&mut up, ny, nx)?;
    constraints.project_in_place(&mut down, ny, nx)?;
    for i in 0..out.len() {
        let at_upper = up[i] <= phi[i];
        let at_lower = down[i] >= phi[i];
        let g = out[i];
        out[i] = match (at_upper, at_lower) {
            (true, true) => 0.0,
            (true, false) => g.max(0.0),
            (false, true) => g.min(0.0),
            (false, false) => g,
        };
    }
    Ok(out)
}

/// Projected gradient descent on a generic objective.
///
/// `gradient_scale` normalizes the residual (`‖∇T(0)‖` for NLTikh); a zero
/// scale marks a trivially consistent problem that is converged at once.
pub fn projected_gradient_descent<O: Objective + ?Sized>(
    objective: &O,
    start: Vec<f64>,
    constraints: &ConstraintSet,
    shape: (usize, usize),
    gradient_scale: f64,
    options: &NltikhOptions,
) -> Result<(Vec<f64>, ConvergenceTrace)> {
    options.validate()?;
    let clock = Instant::now();
    let (ny, nx) = shape;
    let mut project = |x: &mut [f64]| constraints.project_in_place(x, ny, nx);
    let residual = |x: &[f64], g: &[f64]| -> Result<f64> {
        if gradient_scale == 0.0 {
            return Ok(0.0);
        }
        Ok(norm(&stationarity_gradient(x, g, constraints, ny, nx)?) / gradient_scale)
    };

    let mut x0 = start;
    project(&mut x0)?;
    let (f0, g0) = objective.value_and_gradient(&x0)?;
    if !f0.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut trace = ConvergenceTrace {
        initial_objective: Some(f0),
        ..Default::default()
    };
    let r0 = residual(&x0, &g0)?;
    trace.initial_gradient_residual = Some(r0);
    if options.stop_on_tolerance && (r0 < options.gradient_tolerance || gradient_scale == 0.0) {
        trace.converged = true;
        return Ok((x0, trace));
    }

    let tau0 = match options.initial_step {
        InitialStep::Fixed(t) => t,
        InitialStep::Probe => probe_stepsize(objective, &x0, &g0, options.seed)?,
    };
    let mut state = GradientState::new(x0, f0, g0, tau0, options.linesearch_window);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let params = options.linesearch();

    for k in 0..options.max_iterations {
        let trial_step = match options.step_rule {
            StepRule::Constant(t) => t,
            StepRule::BarzilaiBorwein => match (&state.previous_iterate, &state.previous_gradient) {
                (Some(px), Some(pg)) => {
                    let dx: Vec<f64> = state.iterate.iter().zip(px).map(|(a, b)| a - b).collect();
                    let dg: Vec<f64> = state.gradient.iter().zip(pg).map(|(a, b)| a - b).collect();
                    match bb_stepsize(k, &dx, &dg, state.stepsize) {
                        Ok(t) => t,
                        Err(Error::Stagnation) => {
                            trace.flags.push(TraceFlag::Stagnated { iteration: k });
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                _ => state.stepsize,
            },
        };

        let outcome = nonmonotone_linesearch(&state, trial_step, &params, &mut project, |x| {
            objective.value(x)
        })?;
        if outcome.exhausted {
            trace.flags.push(TraceFlag::LinesearchExhausted { iteration: k + 1 });
        }
        let (value, gradient) = objective.value_and_gradient(&outcome.iterate)?;
        if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { iteration: k + 1 });
        }
        let r = residual(&outcome.iterate, &gradient)?;
        state.stepsize = outcome.step;
        state.advance(outcome.iterate, value, gradient);

        trace.records.push(IterationRecord {
            iteration: k + 1,
            objective: Some(value),
            gradient_residual: Some(r),
            stepsize: Some(outcome.step),
            backtracks: outcome.backtracks,
            elapsed: clock.elapsed().as_secs_f64(),
            ..Default::default()
        });
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, state.iterate.clone()));
        }
        if options.stop_on_tolerance && r < options.gradient_tolerance {
            trace.converged = true;
            break;
        }
    }

    if trace.converged {
        return Ok((state.iterate, trace));
    }
    if options.stop_on_tolerance {
        trace.flags.push(TraceFlag::NotConverged);
        // fall back to the lowest objective seen
        if let Some((v, x)) = best {
            if v < state.value {
                return Ok((x, trace));
            }
        }
    }
    Ok((state.iterate, trace))
}

/// `1/L̂` with `L̂ = ‖∇T(x + δ) − ∇T(x)‖/‖δ‖` for a small random `δ`.
pub fn probe_stepsize<O: Objective + ?Sized>(objective: &O, x: &[f64], g: &[f64], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rms = 1e-4;
    let delta: Vec<f64> = (0..x.len())
        .map(|_| rms * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let shifted: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
    let (_, g2) = objective.value_and_gradient(&shifted)?;
    let diff: Vec<f64> = g2.iter().zip(g).map(|(a, b)| a - b).collect();
    let lipschitz = norm(&diff) / norm(&delta);
    Ok(if lipschitz.is_finite() && lipschitz > 0.0 {
        1.0 / lipschitz
    } else {
        1.0
    })
}

/// Result of an NLTikh reconstruction.
#[derive(Debug, Clone)]
pub struct NltikhOutput {
    pub phase: RealImage,
    pub trace: ConvergenceTrace,
    /// `‖∇T_NL(0)‖`, the residual normalization.
    pub gradient_scale: f64,
    pub initial_guess: RealImage,
}

/// Full NLTikh solve on a prepared problem.
pub fn nltikh_solve(
    problem: &TikhonovProblem,
    constraints: &ConstraintSet,
    options: &NltikhOptions,
) -> Result<NltikhOutput> {
    options.validate()?;
    constraints.validate()?;
    let (ny, nx) = problem.shape();
    let zero = vec![0.0; problem.len()];
    let (_, g_zero) = problem.nl_value_and_gradient(&zero)?;
    let gradient_scale = norm(&g_zero);

    let start = if !options.warm_start {
        zero
    } else if constraints.is_unconstrained() {
        ctf_solve(problem)?
    } else {
        admm_solve(problem, constraints, &options.admm)?.0
    };
    let initial_guess = RealImage::from_raw(ny, nx, start.clone(), Unit::Radians);
    let (phi, trace) =
        projected_gradient_descent(problem, start, constraints, (ny, nx), gradient_scale, options)?;
    Ok(NltikhOutput {
        phase: RealImage::from_raw(ny, nx, phi, Unit::Radians),
        trace,
        gradient_scale,
        initial_guess,
    })
}

/// Nonlinear Tikhonov phase reconstruction.
pub fn nltikh_reconstruct(
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
    constraints: &ConstraintSet,
    options: &NltikhOptions,
) -> Result<(RealImage, ConvergenceTrace)> {
    let problem = TikhonovProblem::new(data, coupling, weights)?;
    let out = nltikh_solve(&problem, constraints, options)?;
    Ok((out.phase, out.trace))
}

/// `T_NL(φ)`.
pub fn tikhonov_nl_value(
    phi: &RealImage,
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
) -> Result<f64> {
    TikhonovProblem::new(data, coupling, weights)?.nl_value(phi.data())
}

/// `∇T_NL(φ)`.
pub fn tikhonov_nl_gradient(
    phi: &RealImage,
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
) -> Result<RealImage> {
    let problem = TikhonovProblem::new(data, coupling, weights)?;
    let (ny, nx) = problem.shape();
    let (_, g) = problem.nl_value_and_gradient(phi.data())?;
    Ok(RealImage::from_raw(ny, nx, g, Unit::Radians))
}

/// `‖∇T_NL(φ)‖ / ‖∇T_NL(0)‖`, or 0 when the denominator vanishes.
pub fn gradient_residual(
    phi: &RealImage,
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
) -> Result<f64> {
    gradient_residual_constrained(phi, data, coupling, weights, &ConstraintSet::unconstrained())
}

/// Gradient residual using the stationarity gradient of `T_NL` over `A`.
pub fn gradient_residual_constrained(
    phi: &RealImage,
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
    constraints: &ConstraintSet,
) -> Result<f64> {
    let problem = TikhonovProblem::new(data, coupling, weights)?;
    problem_gradient_residual(&problem, phi.data(), constraints)
}

/// [`gradient_residual_constrained`] on a prepared problem.
pub fn problem_gradient_residual(
    problem: &TikhonovProblem,
    phi: &[f64],
    constraints: &ConstraintSet,
) -> Result<f64> {
    let (ny, nx) = problem.shape();
    let (_, g_zero) = problem.nl_value_and_gradient(&vec![0.0; problem.len()])?;
    let scale = norm(&g_zero);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let (_, g) = problem.nl_value_and_gradient(phi)?;
    Ok(norm(&stationarity_gradient(phi, &g, constraints, ny, nx)?) / scale)
}

/// `(T_NL(φ_k) − T_NL(φ_ref)) / (T_NL(0) − T_NL(φ_ref))`.
pub fn value_residual(
    phi: &RealImage,
    phi_ref: &RealImage,
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
) -> Result<f64> {
    let problem = TikhonovProblem::new(data, coupling, weights)?;
    problem_value_residual(&problem, phi.data(), phi_ref.data())
}

/// [`value_residual`] on a prepared problem.
pub fn problem_value_residual(
    problem: &TikhonovProblem,
    phi: &[f64],
    phi_ref: &[f64],
) -> Result<f64> {
    let t_ref = problem.nl_value(phi_ref)?;
    let t_zero = problem.nl_value(&vec![0.0; problem.len()])?;
    let denom = t_zero - t_ref;
    if denom == 0.0 {
        return Err(Error::Degenerate(
            "reference solution does not improve on zero",
        ));
    }
    Ok((problem.nl_value(phi)? - t_ref) / denom)
}
