use serde::{Deserialize, Serialize};

/// Diagnostics recorded after one solver iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    pub objective: Option<f64>,
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    pub gradient_residual: Option<f64>,
    pub stepsize: Option<f64>,
    pub backtracks: usize,
    /// Seconds since the solver started.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceFlag {
    NotConverged,
    LinesearchExhausted { iteration: usize },
    Stagnated { iteration: usize },
    MomentumRestart { iteration: usize },
}

/// Per-iteration history of an iterative solver.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub flags: Vec<TraceFlag>,
    /// Objective at the starting point, when computed.
    pub initial_objective: Option<f64>,
    /// Gradient residual at the starting point (gradient solvers only).
    pub initial_gradient_residual: Option<f64>,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn total_backtracks(&self) -> usize {
        self.records.iter().map(|r| r.backtracks).sum()
    }

    pub fn restarts(&self) -> usize {
        self.flags
            .iter()
            .filter(|f| matches!(f, TraceFlag::MomentumRestart { .. }))
            .count()
    }

    pub fn linesearch_exhausted(&self) -> bool {
        self.flags
            .iter()
            .any(|f| matches!(f, TraceFlag::LinesearchExhausted { .. }))
    }

    /// First iteration whose gradient residual falls below `level`.
    pub fn iterations_to_gradient_residual(&self, level: f64) -> Option<usize> {
        if self.initial_gradient_residual.is_some_and(|r| r < level) {
            return Some(0);
        }
        self.records
            .iter()
            .find(|r| r.gradient_residual.is_some_and(|g| g < level))
            .map(|r| r.iteration)
    }
}
