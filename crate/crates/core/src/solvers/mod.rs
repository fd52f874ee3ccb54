//! General-purpose local solvers used by the inversion attacks.
//!
//! - [`solve_lm`]: Levenberg-Marquardt for nonlinear least squares, with
//!   Marquardt diagonal scaling and banded normal equations.
//! - [`minimize_qn`]: BFGS with a Wolfe line search for smooth scalar
//!   objectives.
//!
//! Both return the best iterate seen, never the last trial point.

mod lm;
mod qn;

pub use lm::{solve_lm, LmOptions};
pub use qn::{minimize_qn, QnOptions};

use crate::linalg::SparseMatrix;

/// Residual vector `r(x)` and its Jacobian.
pub trait LeastSquaresProblem {
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> SparseMatrix;
}

/// Smooth scalar objective with analytic gradient.
pub trait ScalarProblem {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.gradient(x))
    }
}

/// Closure-backed [`LeastSquaresProblem`].
pub struct FnLeastSquares<R, J> {
    pub residual: R,
    pub jacobian: J,
}

impl<R, J> LeastSquaresProblem for FnLeastSquares<R, J>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> SparseMatrix,
{
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        (self.residual)(x)
    }

    fn jacobian(&self, x: &[f64]) -> SparseMatrix {
        (self.jacobian)(x)
    }
}

/// Closure-backed [`ScalarProblem`].
pub struct FnScalar<F, G> {
    pub objective: F,
    pub gradient: G,
}

impl<F, G> ScalarProblem for FnScalar<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    GradientTol,
    StepTol,
    ObjectiveTol,
    MaxIters,
    NumericalFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::GradientTol | Termination::StepTol | Termination::ObjectiveTol
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTol => "gradient_tol",
            Termination::StepTol => "step_tol",
            Termination::ObjectiveTol => "objective_tol",
            Termination::MaxIters => "max_iters",
            Termination::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub solution: Vec<f64>,
    /// `0.5 * |r|^2` for least squares, `f(x)` for scalar problems.
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl SolverReport {
    pub(crate) fn new(solution: Vec<f64>, objective_value: f64, iterations: usize, termination: Termination) -> Self {
        SolverReport {
            solution,
            objective_value,
            iterations,
            converged: termination.converged(),
            termination,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SolverError {
    #[error("numerical failure after {} iterations: {reason}", best.iterations)]
    NumericalFailure {
        reason: String,
        /// Best iterate reached before the failure.
        best: Box<SolverReport>,
    },
    #[error("supplied gradient disagrees with finite differences (max relative error {error:.3e})")]
    GradientCheck { error: f64 },
}

impl SolverError {
    pub(crate) fn failure(reason: impl Into<String>, best: SolverReport) -> Self {
        SolverError::NumericalFailure {
            reason: reason.into(),
            best: Box::new(SolverReport {
                converged: false,
                termination: Termination::NumericalFailure,
                ..best
            }),
        }
    }

    /// The best iterate, for callers that treat failure as a non-converged run.
    pub fn into_report(self) -> Option<SolverReport> {
        match self {
            SolverError::NumericalFailure { best, .. } => Some(*best),
            SolverError::GradientCheck { .. } => None,
        }
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>, crate::Error>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            let d = (up - down) / (2.0 * h);
            if d.is_finite() {
                Ok(d)
            } else {
                Err(crate::Error::NonFinite { index: i })
            }
        })
        .collect()
}

/// Central-difference Jacobian of a vector function, one dense row per output.
pub fn finite_difference_jacobian<F>(f: F, x: &[f64], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut probe = x.to_vec();
    let k = f(x).len();
    let mut rows = vec![vec![0.0; x.len()]; k];
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        for (row, (u, d)) in rows.iter_mut().zip(up.iter().zip(&down)) {
            row[i] = (u - d) / (2.0 * h);
        }
    }
    rows
}

/// Entry-wise relative error `|a - b| / max(|a|, |b|, floor)` where the floor
/// is 1% of the largest reference magnitude, so near-zero entries are judged
/// on the scale of the whole quantity.
pub fn max_relative_error(actual: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = (1e-2 * scale).max(f64::MIN_POSITIVE);
    actual
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
