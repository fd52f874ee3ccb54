use super::{finite_difference_gradient, max_relative_error, ScalarProblem, SolverError, SolverReport, Termination};
use crate::vecops::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnOptions {
    pub max_iters: usize,
    /// Stop when `max |g_i| < g_tol`.
    pub g_tol: f64,
    /// Stop when `|f_k - f_{k+1}| <= f_tol * max(|f_k|, |f_{k+1}|, 1)`.
    pub f_tol: f64,
    /// When set, compare the analytic gradient at `x0` against central
    /// differences (`h = 1e-6`) and fail if the relative error exceeds it.
    pub check_gradient: Option<f64>,
}

impl Default for QnOptions {
    fn default() -> Self {
        QnOptions {
            max_iters: 500,
            g_tol: 1e-8,
            f_tol: 1e-10,
            check_gradient: None,
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_TRIALS: usize = 50;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Strong-Wolfe line search along `dir` (bracketing followed by zoom with
/// safeguarded cubic interpolation). Non-finite trial values count as
/// failures of the sufficient-decrease test.
fn line_search<P: ScalarProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    f0: f64,
    slope0: f64,
    dir: &[f64],
    alpha_init: f64,
) -> Option<Trial> {
    let mut trials = 0usize;
    let mut probe = vec![0.0; x.len()];
    let mut eval = |alpha: f64, trials: &mut usize| -> Trial {
        *trials += 1;
        for ((p, xi), di) in probe.iter_mut().zip(x).zip(dir) {
            *p = xi + alpha * di;
        }
        let (f, g) = problem.value_and_gradient(&probe);
        let slope = dot(&g, dir);
        let f = if f.is_finite() && slope.is_finite() { f } else { f64::INFINITY };
        Trial { alpha, f, g, slope }
    };
    let armijo = |t: &Trial| t.f <= f0 + C1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -C2 * slope0;

    let mut prev = Trial {
        alpha: 0.0,
        f: f0,
        g: Vec::new(),
        slope: slope0,
    };
    let mut alpha = alpha_init;
    let (mut lo, mut hi) = loop {
        if trials >= MAX_TRIALS {
            return None;
        }
        let t = eval(alpha, &mut trials);
        if !armijo(&t) || (trials > 1 && t.f >= prev.f) {
            break (prev, t);
        }
        if curvature(&t) {
            return Some(t);
        }
        if t.slope >= 0.0 {
            break (t, prev);
        }
        alpha = 2.0 * t.alpha;
        prev = t;
    };

    // Zoom: `lo` satisfies sufficient decrease and has the lowest value seen.
    while trials < MAX_TRIALS {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= f64::EPSILON * b.max(1e-300) {
            return None;
        }
        let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (lo.alpha + hi.alpha));
        if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
            alpha = 0.5 * (lo.alpha + hi.alpha);
        }
        let t = eval(alpha, &mut trials);
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Some(t);
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    None
}

/// Minimizer of the cubic interpolating values and slopes at both ends.
fn cubic_min(p: &Trial, q: &Trial) -> Option<f64> {
    if !(p.f.is_finite() && q.f.is_finite()) {
        return None;
    }
    let d1 = p.slope + q.slope - 3.0 * (p.f - q.f) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.slope * q.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let alpha = q.alpha - (q.alpha - p.alpha) * (q.slope + d2 - d1) / (q.slope - p.slope + 2.0 * d2);
    alpha.is_finite().then_some(alpha)
}

/// BFGS with a dense inverse-Hessian approximation.
///
/// The first step is scaled to unit length; before the first update the
/// identity is rescaled by `s^T y / y^T y`. Updates are skipped when the
/// curvature `s^T y` is not sufficiently positive.
pub fn minimize_qn<P: ScalarProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    opts: &QnOptions,
) -> Result<SolverReport, SolverError> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = problem.value_and_gradient(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::failure(
            "non-finite objective or gradient at the initial guess",
            SolverReport::new(x, f, 0, Termination::NumericalFailure),
        ));
    }
    if let Some(tol) = opts.check_gradient {
        let fd = finite_difference_gradient(|z| problem.value(z), &x, 1e-6).map_err(|_| {
            SolverError::GradientCheck { error: f64::INFINITY }
        })?;
        let error = max_relative_error(&g, &fd);
        if !(error <= tol) {
            return Err(SolverError::GradientCheck { error });
        }
    }
    if opts.max_iters == 0 {
        return Ok(SolverReport::new(x, f, 0, Termination::MaxIters));
    }
    if inf_norm(&g) < opts.g_tol {
        return Ok(SolverReport::new(x, f, 0, Termination::GradientTol));
    }

    let mut h = identity(n);
    let mut first = true;
    let mut dir = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for iter in 1..=opts.max_iters {
        sym_mul(&h, &g, &mut dir);
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            h = identity(n);
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = dot(&g, &dir);
            first = true;
        }
        let alpha_init = if first { (1.0 / norm(&g)).min(1.0) } else { 1.0 };

        let Some(t) = line_search(problem, &x, f, slope, &dir, alpha_init) else {
            return Err(SolverError::failure(
                "line search found no Wolfe step",
                SolverReport::new(x, f, iter - 1, Termination::NumericalFailure),
            ));
        };

        let s: Vec<f64> = dir.iter().map(|d| t.alpha * d).collect();
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        let f_old = f;
        f = t.f;
        g = t.g;

        if inf_norm(&g) < opts.g_tol {
            return Ok(SolverReport::new(x, f, iter, Termination::GradientTol));
        }
        if (f_old - f).abs() <= opts.f_tol * f_old.abs().max(f.abs()).max(1.0) {
            return Ok(SolverReport::new(x, f, iter, Termination::ObjectiveTol));
        }

        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if first {
                let gamma = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= gamma);
            }
            bfgs_update(&mut h, &s, &y, sy, &mut hy);
            first = false;
        }
    }
    Ok(SolverReport::new(x, f, opts.max_iters, Termination::MaxIters))
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    (0..n).for_each(|i| h[i * n + i] = 1.0);
    h
}

fn sym_mul(h: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&h[i * n..(i + 1) * n], v);
    }
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`, expanded to a
/// symmetric rank-two correction.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, hy: &mut [f64]) {
    let n = s.len();
    let rho = 1.0 / sy;
    sym_mul(h, y, hy);
    let yhy = dot(y, hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        let row = &mut h[i * n..(i + 1) * n];
        let (si, hyi) = (s[i], hy[i]);
        for j in 0..n {
            row[j] += coef * si * s[j] - rho * (si * hy[j] + hyi * s[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::solvers::FnScalar;
    use rand::Rng;

    fn cosine_to(t: Vec<f64>) -> impl ScalarProblem {
        let t2 = t.clone();
        FnScalar {
            objective: move |x: &[f64]| 1.0 - dot(x, &t) / (norm(x) * norm(&t)),
            gradient: move |x: &[f64]| {
                let (nx, nt) = (norm(x), norm(&t2));
                let c = dot(x, &t2) / (nx * nt);
                x.iter().zip(&t2).map(|(xi, ti)| -(ti / (nx * nt) - c * xi / (nx * nx))).collect()
            },
        }
    }

    #[test]
    fn convex_quadratic() {
        let c = [1.0, 2.0, 3.0];
        let p = FnScalar {
            objective: |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum(),
            gradient: |x: &[f64]| x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect(),
        };
        let mut rng = seed::rng(3);
        let x0: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
        let rep = minimize_qn(&p, &x0, &QnOptions::default()).unwrap();
        assert!(rep.converged);
        for (x, e) in rep.solution.iter().zip(c) {
            assert!((x - e).abs() < 1e-6);
        }
    }

    #[test]
    fn cosine_toward_fixed_target() {
        let mut rng = seed::rng(11);
        for _ in 0..5 {
            let t: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x0: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = cosine_to(t.clone());
            let rep = minimize_qn(&p, &x0, &QnOptions::default()).unwrap();
            let sim = dot(&rep.solution, &t) / (norm(&rep.solution) * norm(&t));
            assert!(sim >= 1.0 - 1e-6, "sim = {sim}");
        }
    }

    #[test]
    fn gradient_check_mode() {
        let good = cosine_to(vec![1.0, -2.0, 0.5]);
        let opts = QnOptions { check_gradient: Some(1e-4), ..QnOptions::default() };
        assert!(minimize_qn(&good, &[0.3, 0.2, 0.9], &opts).is_ok());

        let wrong = FnScalar {
            objective: |x: &[f64]| x[0] * x[0],
            gradient: |x: &[f64]| vec![x[0]],
        };
        assert!(matches!(
            minimize_qn(&wrong, &[1.0], &opts),
            Err(SolverError::GradientCheck { .. })
        ));
    }

    #[test]
    fn zero_iterations_returns_start() {
        let p = cosine_to(vec![1.0, 0.0]);
        let opts = QnOptions { max_iters: 0, ..QnOptions::default() };
        let rep = minimize_qn(&p, &[0.0, 1.0], &opts).unwrap();
        assert_eq!(rep.solution, vec![0.0, 1.0]);
        assert_eq!(rep.termination, Termination::MaxIters);
        assert!(!rep.converged);
    }

    #[test]
    fn rosenbrock() {
        let p = FnScalar {
            objective: |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            gradient: |x: &[f64]| {
                vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ]
            },
        };
        let opts = QnOptions { f_tol: 0.0, ..QnOptions::default() };
        let rep = minimize_qn(&p, &[-1.2, 1.0], &opts).unwrap();
        assert!((rep.solution[0] - 1.0).abs() < 1e-6 && (rep.solution[1] - 1.0).abs() < 1e-6);
    }
}
