use super::{LeastSquaresProblem, SolverError, SolverReport, Termination};
use crate::vecops::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Relative change of `|r|` below which an accepted step terminates.
    pub f_tol: f64,
    /// Step-size tolerance: stop when `|dx| < x_tol * (|x| + x_tol)`.
    pub x_tol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 500,
            f_tol: 1e-10,
            x_tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

const DAMPING_INCREASE: f64 = 2.0;
const DAMPING_DECREASE: f64 = 1.0 / 3.0;
const DAMPING_CAP: f64 = 1e16;

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Levenberg-Marquardt on `min 0.5 |r(x)|^2`.
///
/// Each iteration solves `(J^T J + lambda * D) dx = -J^T r` where `D` is the
/// running maximum of `diag(J^T J)` (floored relative to its largest entry so
/// the system stays definite when a column vanishes). `lambda` shrinks by 3
/// after an accepted step and doubles after a rejected one.
pub fn solve_lm<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    opts: &LmOptions,
) -> Result<SolverReport, SolverError> {
    let mut x = x0.to_vec();
    let mut r = problem.residual(&x);
    let mut cost = 0.5 * dot(&r, &r);
    if !all_finite(&x) || !cost.is_finite() {
        return Err(SolverError::failure(
            "non-finite residual at the initial guess",
            SolverReport::new(x, f64::INFINITY, 0, Termination::NumericalFailure),
        ));
    }
    if opts.max_iters == 0 {
        return Ok(SolverReport::new(x, cost, 0, Termination::MaxIters));
    }
    if cost == 0.0 {
        return Ok(SolverReport::new(x, cost, 0, Termination::ObjectiveTol));
    }

    let n = x.len();
    let mut lambda = opts.initial_damping;
    let mut scale = vec![0.0f64; n];

    for iter in 1..=opts.max_iters {
        let jac = problem.jacobian(&x);
        let mut grad = jac.tr_mul_vec(&r);
        grad.iter_mut().for_each(|g| *g = -*g);
        let gram = jac.gram();
        let diag = gram.diag();
        for (s, d) in scale.iter_mut().zip(&diag) {
            *s = s.max(*d);
        }
        let floor = 1e-12 * scale.iter().fold(0.0f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
        let damping: Vec<f64> = scale.iter().map(|s| s.max(floor)).collect();

        loop {
            let mut system = gram.clone();
            system.add_diag(&damping.iter().map(|d| lambda * d).collect::<Vec<_>>());
            let Some(chol) = system.cholesky() else {
                lambda *= DAMPING_INCREASE;
                if lambda > DAMPING_CAP {
                    return Err(SolverError::failure(
                        "damped normal equations remain singular",
                        SolverReport::new(x, cost, iter, Termination::NumericalFailure),
                    ));
                }
                continue;
            };
            let step = chol.solve(&grad);
            let step_norm = norm(&step);
            let x_norm = norm(&x);
            let small_step = step_norm < opts.x_tol * (x_norm + opts.x_tol);

            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let r_trial = problem.residual(&trial);
            let cost_trial = 0.5 * dot(&r_trial, &r_trial);

            if cost_trial.is_finite() && cost_trial < cost {
                let old_norm = (2.0 * cost).sqrt();
                let new_norm = (2.0 * cost_trial).sqrt();
                x = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda * DAMPING_DECREASE).max(f64::MIN_POSITIVE);
                if cost == 0.0 || old_norm - new_norm <= opts.f_tol * old_norm {
                    return Ok(SolverReport::new(x, cost, iter, Termination::ObjectiveTol));
                }
                if small_step {
                    return Ok(SolverReport::new(x, cost, iter, Termination::StepTol));
                }
                break;
            }

            if small_step {
                // No representable improvement along the damped direction.
                return Ok(SolverReport::new(x, cost, iter, Termination::StepTol));
            }
            lambda *= DAMPING_INCREASE;
            if lambda > DAMPING_CAP {
                return Err(SolverError::failure(
                    "damping exceeded cap without an acceptable step",
                    SolverReport::new(x, cost, iter, Termination::NumericalFailure),
                ));
            }
        }
    }
    Ok(SolverReport::new(x, cost, opts.max_iters, Termination::MaxIters))
}
