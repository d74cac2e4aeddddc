//! Closed-form CTF reconstruction and constrained CTF via accelerated ADMM.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{invalid, Error, Result};
use crate::forward::MaterialCoupling;
use crate::grid::{norm, RealImage, Unit};
use crate::problem::{HologramSet, TikhonovProblem};
use crate::regularization::RegularizationWeights;
use crate::trace::{ConvergenceTrace, IterationRecord, TraceFlag};

/// Form of the ADMM φ-update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdmmVariant {
    /// Scaled-dual ADMM: the proximal center of the φ-update is `ψ_k − u_k`.
    #[default]
    Scaled,
    /// The proximal center is the multiplier `λ_k` itself. Its unconstrained
    /// fixed point is the CTF filter with `ρ` added to the denominator, and
    /// it does not settle when a constraint is active.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmOptions {
    pub rho: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub variant: AdmmVariant,
    pub accelerate: bool,
    /// Momentum is restarted when the combined residual exceeds this factor
    /// times its previous value.
    pub restart_factor: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho: 0.1,
            tolerance: 1e-3,
            max_iterations: 200,
            variant: AdmmVariant::Scaled,
            accelerate: true,
            restart_factor: 1.0,
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(invalid("admm.rho", "must be positive"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(invalid("admm.tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("admm.max_iterations", "must be at least 1"));
        }
        if !(self.restart_factor.is_finite() && self.restart_factor > 0.0) {
            return Err(invalid("admm.restart_factor", "must be positive"));
        }
        Ok(())
    }
}

/// Applies the filter `F⁻¹((shift·F(center) + numerator) / denominator)`.
fn filter_solution(
    problem: &TikhonovProblem,
    numerator: &[Complex64],
    denominator: &[f64],
    center: Option<(&[f64], f64)>,
) -> Vec<f64> {
    let mut buf: Vec<Complex64> = match center {
        Some((c, shift)) => {
            let mut spec = problem.fft().forward_real(c);
            spec.iter_mut()
                .zip(numerator)
                .zip(denominator)
                .for_each(|((s, n), d)| *s = (*s * shift + n) / d);
            spec
        }
        None => numerator
            .iter()
            .zip(denominator)
            .map(|(n, d)| n / d)
            .collect(),
    };
    problem.fft().inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Unconstrained minimizer of `T_Lin` on the problem grid.
pub fn ctf_solve(problem: &TikhonovProblem) -> Result<Vec<f64>> {
    let denominator = problem.ctf_denominator(0.0);
    if denominator.iter().any(|&d| d <= 0.0) {
        return Err(Error::Degenerate(
            "regularization vanishes where the summed CTF is zero",
        ));
    }
    Ok(filter_solution(problem, &problem.ctf_numerator(), &denominator, None))
}

/// Closed-form CTF phase reconstruction.
pub fn ctf_reconstruct(
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
) -> Result<RealImage> {
    let problem = TikhonovProblem::new(data, coupling, weights)?;
    let (ny, nx) = problem.shape();
    Ok(RealImage::from_raw(ny, nx, ctf_solve(&problem)?, Unit::Radians))
}

/// Value of the linearized Tikhonov functional `T_Lin(φ)`.
pub fn tikhonov_lin_value(
    phi: &RealImage,
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
) -> Result<f64> {
    TikhonovProblem::new(data, coupling, weights)?.lin_value(phi.data())
}

/// Minimizes `T_Lin` over the constraint set with accelerated ADMM.
///
/// Returns the feasible iterate `ψ_K`. Each iteration costs one forward and
/// one inverse FFT; the data term of the filter is computed once up front.
pub fn admm_solve(
    problem: &TikhonovProblem,
    constraints: &ConstraintSet,
    options: &AdmmOptions,
) -> Result<(Vec<f64>, ConvergenceTrace)> {
    options.validate()?;
    constraints.validate()?;
    let (ny, nx) = problem.shape();
    let n = problem.len();
    let rho = options.rho;
    let start = Instant::now();

    let numerator = problem.ctf_numerator();
    let denominator = problem.ctf_denominator(rho);

    let mut psi = vec![0.0; n];
    let mut dual = vec![0.0; n];
    let mut psi_hat = psi.clone();
    let mut dual_hat = dual.clone();
    let mut momentum: f64 = 1.0;
    let mut last_combined = f64::INFINITY;
    let mut trace = ConvergenceTrace::default();
    let mut center = vec![0.0; n];

    for k in 1..=options.max_iterations {
        match options.variant {
            AdmmVariant::Scaled => center
                .iter_mut()
                .zip(psi_hat.iter().zip(&dual_hat))
                .for_each(|(c, (p, u))| *c = p - u),
            AdmmVariant::Literal => center.copy_from_slice(&dual_hat),
        }
        let phi = filter_solution(problem, &numerator, &denominator, Some((&center, rho)));

        let mut psi_new: Vec<f64> = phi.iter().zip(&dual_hat).map(|(p, u)| p + u).collect();
        constraints.project_in_place(&mut psi_new, ny, nx)?;
        let dual_new: Vec<f64> = dual_hat
            .iter()
            .zip(phi.iter().zip(&psi_new))
            .map(|(u, (p, s))| u + p - s)
            .collect();

        let primal_gap: Vec<f64> = phi.iter().zip(&psi_new).map(|(p, s)| p - s).collect();
        let psi_step: Vec<f64> = psi_new.iter().zip(&psi).map(|(a, b)| a - b).collect();
        let multiplier_norm = match options.variant {
            AdmmVariant::Scaled => rho * norm(&dual_new),
            AdmmVariant::Literal => norm(&dual_new),
        };
        let primal = norm(&primal_gap) / norm(&phi).max(norm(&psi_new)).max(f64::EPSILON);
        let dual_res = rho * norm(&psi_step) / multiplier_norm.max(f64::EPSILON);
        if !(primal.is_finite() && dual_res.is_finite()) {
            return Err(Error::Divergence { iteration: k });
        }
        trace.records.push(IterationRecord {
            iteration: k,
            primal_residual: Some(primal),
            dual_residual: Some(dual_res),
            stepsize: Some(rho),
            elapsed: start.elapsed().as_secs_f64(),
            ..Default::default()
        });

        let converged = primal < options.tolerance && dual_res < options.tolerance;

        if options.accelerate {
            let combined = rho
                * (dual_new.iter().zip(&dual_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                    + psi_new.iter().zip(&psi_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
            if combined < options.restart_factor * last_combined {
                let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let beta = (momentum - 1.0) / next;
                for i in 0..n {
                    psi_hat[i] = psi_new[i] + beta * (psi_new[i] - psi[i]);
                    dual_hat[i] = dual_new[i] + beta * (dual_new[i] - dual[i]);
                }
                momentum = next;
                last_combined = combined;
            } else {
                // restart from the previous iterate
                momentum = 1.0;
                psi_hat.copy_from_slice(&psi);
                dual_hat.copy_from_slice(&dual);
                last_combined /= options.restart_factor;
                trace.flags.push(TraceFlag::MomentumRestart { iteration: k });
            }
        } else {
            psi_hat.copy_from_slice(&psi_new);
            dual_hat.copy_from_slice(&dual_new);
        }
        psi = psi_new;
        dual = dual_new;

        if converged {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        trace.flags.push(TraceFlag::NotConverged);
    }
    Ok((psi, trace))
}

/// Constrained CTF reconstruction; the result lies in `constraints` exactly.
pub fn cctf_reconstruct(
    data: &HologramSet,
    coupling: &MaterialCoupling,
    weights: &RegularizationWeights,
    constraints: &ConstraintSet,
    options: &AdmmOptions,
) -> Result<(RealImage, ConvergenceTrace)> {
    let problem = TikhonovProblem::new(data, coupling, weights)?;
    let (ny, nx) = problem.shape();
    let (psi, trace) = admm_solve(&problem, constraints, options)?;
    Ok((RealImage::from_raw(ny, nx, psi, Unit::Radians), trace))
}

/// The φ-update filter at a fixed multiplier of zero: the CTF filter with
/// `shift` added to its denominator.
pub fn shifted_ctf_solve(problem: &TikhonovProblem, shift: f64) -> Vec<f64> {
    let denominator = problem.ctf_denominator(shift);
    filter_solution(problem, &problem.ctf_numerator(), &denominator, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::linear_model;
    use crate::fourier::FrequencyGrid;
    use crate::phantom::{sphere_phantom, PhaseScale, Sphere, SpherePhantomSpec};
    use crate::regularization::build_weights_two_level;

    const SPHERES_F: [f64; 4] = [1.59e-3, 1.57e-3, 1.49e-3, 1.33e-3];

    fn phantom(n: usize, peak: f64) -> RealImage {
        let c = n as f64 / 2.0;
        let spec = SpherePhantomSpec {
            spheres: vec![
                Sphere { center: [c - 10.0, c - 6.0], radius: n as f64 / 6.0 },
                Sphere { center: [c + 14.0, c + 12.0], radius: n as f64 / 10.0 },
            ],
            scale: PhaseScale::PeakPhase(peak),
            supersample: true,
        };
        sphere_phantom(&spec, n, n).unwrap()
    }

    fn linear_data(phi: &RealImage, coupling: &MaterialCoupling) -> HologramSet {
        let h = SPHERES_F.iter().map(|&f| linear_model(phi, coupling, f).unwrap()).collect();
        HologramSet::new(h, SPHERES_F.to_vec()).unwrap()
    }

    fn weights(n: usize, low: f64, high: f64) -> RegularizationWeights {
        build_weights_two_level(&FrequencyGrid::new(n, n).unwrap(), &SPHERES_F, low, high, 0.1).unwrap()
    }

    #[test]
    fn unit_holograms_give_zero_phase() {
        let ones = RealImage::filled(16, 16, 1.0, Unit::Dimensionless).unwrap();
        let data = HologramSet::new(vec![ones; 2], vec![1e-3, 2e-3]).unwrap();
        let w = RegularizationWeights::uniform(16, 16, 1e-3).unwrap();
        let phi = ctf_reconstruct(&data, &MaterialCoupling::pure_phase(), &w).unwrap();
        assert!(phi.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weak_phantom_recovered_from_linear_data() {
        let n = 128;
        // a pure-phase CTF has no response at zero frequency, so the
        // phantom is made mean-free before scaling to max |φ| = 0.05
        let raw = phantom(n, -1.0);
        let mean = raw.mean();
        let centered: Vec<f64> = raw.data().iter().map(|v| v - mean).collect();
        let peak = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let truth = RealImage::new(n, n, centered.iter().map(|v| 0.05 * v / peak).collect(), Unit::Radians).unwrap();
        let c = MaterialCoupling::pure_phase();
        let rec = ctf_reconstruct(&linear_data(&truth, &c), &c, &weights(n, 1e-5, 1e-3)).unwrap();
        let err = rec.relative_error(&truth).unwrap();
        assert!(err < 0.02, "relative error {err}");
    }

    #[test]
    fn ctf_minimizes_linear_functional() {
        let n = 32;
        let truth = phantom(n, -0.3);
        let c = MaterialCoupling::new(0.1).unwrap();
        let data = linear_data(&truth, &c);
        let w = weights(n, 1e-3, 1e-1);
        let problem = TikhonovProblem::new(&data, &c, &w).unwrap();
        let phi = ctf_solve(&problem).unwrap();
        let t0 = problem.lin_value(&vec![0.0; n * n]).unwrap();
        let tmin = problem.lin_value(&phi).unwrap();
        assert!(tmin <= t0);
        let grad = problem.lin_gradient(&phi).unwrap();
        assert!(norm(&grad) / t0 < 1e-10);

        // three-point parabola fit along a direction has its vertex at 0
        let dir: Vec<f64> = (0..n * n).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.01).collect();
        let at = |t: f64| {
            let p: Vec<f64> = phi.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            problem.lin_value(&p).unwrap()
        };
        let (fm, f0, fp) = (at(-1.0), at(0.0), at(1.0));
        let curvature = fp + fm - 2.0 * f0;
        assert!(curvature > 0.0);
        assert!(((fp - fm) / 2.0).abs() / curvature < 1e-6);
    }

    #[test]
    fn cctf_negativity_is_exact_and_converges() {
        let n = 64;
        let truth = phantom(n, -0.5);
        let c = MaterialCoupling::pure_phase();
        let (psi, trace) =
            cctf_reconstruct(&linear_data(&truth, &c), &c, &weights(n, 1e-3, 1e-1), &ConstraintSet::negativity(), &AdmmOptions::default())
                .unwrap();
        assert!(psi.max() <= 0.0);
        assert!(trace.converged, "{} iterations", trace.iterations());
        let last = trace.last().unwrap();
        assert!(last.primal_residual.unwrap() < 1e-3 && last.dual_residual.unwrap() < 1e-3);
    }

    #[test]
    fn literal_unconstrained_fixed_point_is_shifted_filter() {
        let n = 32;
        let c = MaterialCoupling::pure_phase();
        let data = linear_data(&phantom(n, -0.3), &c);
        let problem = TikhonovProblem::new(&data, &c, &weights(n, 1e-3, 1e-1)).unwrap();
        let opts = AdmmOptions { variant: AdmmVariant::Literal, ..Default::default() };
        let (psi, trace) = admm_solve(&problem, &ConstraintSet::unconstrained(), &opts).unwrap();
        assert!(trace.converged);
        let expected = shifted_ctf_solve(&problem, opts.rho);
        let diff: Vec<f64> = psi.iter().zip(&expected).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) / norm(&expected) < 1e-8);
    }

    #[test]
    fn literal_multiplier_grows_under_active_constraint() {
        // data generated by a positive phase push the unconstrained solution
        // out of the feasible set; the literal update then never settles
        let n = 32;
        let c = MaterialCoupling::pure_phase();
        let data = linear_data(&phantom(n, -0.3).with_unit(Unit::Radians), &c);
        let flipped: Vec<RealImage> = data
            .holograms()
            .iter()
            .map(|h| RealImage::new(n, n, h.data().iter().map(|v| 2.0 - v).collect(), Unit::Dimensionless).unwrap())
            .collect();
        let data = HologramSet::new(flipped, SPHERES_F.to_vec()).unwrap();
        let problem = TikhonovProblem::new(&data, &c, &weights(n, 1e-3, 1e-1)).unwrap();
        let opts = AdmmOptions { variant: AdmmVariant::Literal, accelerate: false, max_iterations: 300, ..Default::default() };
        let (_, trace) = admm_solve(&problem, &ConstraintSet::negativity(), &opts).unwrap_or_default_trace();
        assert!(!trace.converged);

        let scaled = AdmmOptions { accelerate: false, max_iterations: 2000, ..Default::default() };
        let (psi, trace) = admm_solve(&problem, &ConstraintSet::negativity(), &scaled).unwrap();
        assert!(trace.converged);
        assert!(psi.iter().all(|&v| v <= 0.0));
    }

    trait OrDivergence {
        fn unwrap_or_default_trace(self) -> (Vec<f64>, ConvergenceTrace);
    }

    impl OrDivergence for Result<(Vec<f64>, ConvergenceTrace)> {
        fn unwrap_or_default_trace(self) -> (Vec<f64>, ConvergenceTrace) {
            match self {
                Ok(v) => v,
                Err(Error::Divergence { .. }) => (Vec::new(), ConvergenceTrace::default()),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn one_fft_pair_per_iteration() {
        let n = 32;
        let c = MaterialCoupling::pure_phase();
        let data = linear_data(&phantom(n, -0.3), &c);
        let problem = TikhonovProblem::new(&data, &c, &weights(n, 1e-3, 1e-1)).unwrap();
        let opts = AdmmOptions { max_iterations: 10, tolerance: 1e-12, ..Default::default() };
        let before = problem.counts();
        let _ = problem.ctf_numerator();
        let setup = problem.counts() - before;
        let before = problem.counts();
        let (_, trace) = admm_solve(&problem, &ConstraintSet::negativity(), &opts).unwrap();
        let used = problem.counts() - before;
        let k = trace.iterations();
        assert_eq!(used.forward_fft, setup.forward_fft + k);
        assert_eq!(used.inverse_fft, k);
    }
}
