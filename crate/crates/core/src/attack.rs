//! Inversion attacks on protected templates under full disclosure.
//!
//! The attacker knows the subject's keys and the protected template `P` and
//! searches for `V*` with `protect(V*) ~ P`, either by least squares on the
//! Euclidean residual or by minimizing the cosine distance. Success is judged
//! by the cosine similarity of `V*` to the embedding that was protected.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embeddings::{csv_reader, ElementDistribution};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::metrics::cosine_similarity;
use crate::seed;
use crate::solvers::{minimize_qn, solve_lm, LeastSquaresProblem, LmOptions, QnOptions, ScalarProblem, SolverError, SolverReport};
use crate::transform::{jacobian_into, output_dim, protect_into, Keys, ProtectedTemplate};
use crate::vecops::{dot, norm};

fn check_pair(p: &ProtectedTemplate, keys: &Keys, n: usize) -> Result<()> {
    if p.subject() != keys.subject() {
        return Err(Error::KeyMismatch(format!(
            "template of '{}' with keys of '{}'",
            p.subject(),
            keys.subject()
        )));
    }
    if p.overlap() != keys.overlap() {
        return Err(Error::KeyMismatch(format!(
            "template overlap {} but keys overlap {}",
            p.overlap(),
            keys.overlap()
        )));
    }
    let k = output_dim(n, keys.m(), keys.overlap())?;
    if k != p.values().len() {
        return Err(Error::Dimension {
            expected: k,
            found: p.values().len(),
        });
    }
    Ok(())
}

/// `r(x) = protect(x) - P`.
#[derive(Debug, Clone)]
pub struct EuclideanInversion {
    keys: Keys,
    target: Vec<f64>,
    n: usize,
}

impl LeastSquaresProblem for EuclideanInversion {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.target.len()];
        protect_into(x, &self.keys, &mut r);
        for (ri, p) in r.iter_mut().zip(&self.target) {
            *ri -= p;
        }
        r
    }

    fn jacobian(&self, x: &[f64]) -> SparseMatrix {
        let mut jac = SparseMatrix::with_capacity(self.n, self.target.len() * self.keys.m());
        jacobian_into(x, &self.keys, self.target.len(), &mut jac);
        jac
    }
}

/// `f(x) = 1 - cos(protect(x), P)`.
///
/// Where `protect(x)` vanishes the objective is taken as 1 and the gradient
/// as `-J^T P/|P|`, the direction that first increases the similarity.
#[derive(Debug, Clone)]
pub struct CosineInversion {
    keys: Keys,
    target: Vec<f64>,
    target_norm: f64,
    n: usize,
}

impl CosineInversion {
    fn eval(&self, x: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let k = self.target.len();
        let mut q = vec![0.0; k];
        protect_into(x, &self.keys, &mut q);
        let qn = norm(&q);
        let qp = dot(&q, &self.target);
        let value = if qn == 0.0 {
            1.0
        } else {
            1.0 - qp / (qn * self.target_norm)
        };
        if !want_grad {
            return (value, Vec::new());
        }
        let dq: Vec<f64> = if qn == 0.0 {
            self.target.iter().map(|p| -p / self.target_norm).collect()
        } else {
            let a = 1.0 / (qn * self.target_norm);
            let b = qp / (qn * qn * qn * self.target_norm);
            q.iter()
                .zip(&self.target)
                .map(|(qi, pi)| -(a * pi - b * qi))
                .collect()
        };
        let mut jac = SparseMatrix::with_capacity(self.n, k * self.keys.m());
        jacobian_into(x, &self.keys, k, &mut jac);
        (value, jac.tr_mul_vec(&dq))
    }
}

impl ScalarProblem for CosineInversion {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, false).0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x, true).1
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.eval(x, true)
    }
}

/// Least-squares inversion problem for `p` over vectors of dimension `n`.
pub fn build_euclidean_problem(p: &ProtectedTemplate, keys: &Keys, n: usize) -> Result<EuclideanInversion> {
    check_pair(p, keys, n)?;
    Ok(EuclideanInversion {
        keys: keys.clone(),
        target: p.values().to_vec(),
        n,
    })
}

/// Cosine-distance inversion problem for `p` over vectors of dimension `n`.
pub fn build_cosine_problem(p: &ProtectedTemplate, keys: &Keys, n: usize) -> Result<CosineInversion> {
    check_pair(p, keys, n)?;
    let target_norm = norm(p.values());
    if target_norm == 0.0 {
        return Err(Error::ZeroTemplate(p.subject().to_string()));
    }
    Ok(CosineInversion {
        keys: keys.clone(),
        target: p.values().to_vec(),
        target_norm,
        n,
    })
}

/// Per-dimension Gaussian draw; the stream depends only on `(seed, index)`.
pub fn draw_initial_guess(dist: &ElementDistribution, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(&[seed, index as u64]));
    dist.means()
        .iter()
        .zip(dist.stddevs())
        .map(|(m, s)| {
            let z: f64 = rng.sample(StandardNormal);
            m + s * z
        })
        .collect()
}

/// Guess stream seed for one subject of a campaign.
pub fn subject_guess_seed(campaign_seed: u64, subject: &str) -> u64 {
    seed::derive(&[campaign_seed, seed::label_hash(subject)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SolverKind {
    EuclideanLm,
    #[default]
    CosineQn,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::EuclideanLm => "euclidean_lm",
            SolverKind::CosineQn => "cosine_qn",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean_lm" | "euclidean" | "lm" => Ok(SolverKind::EuclideanLm),
            "cosine_qn" | "cosine" | "qn" => Ok(SolverKind::CosineQn),
            _ => Err(Error::Parameter(format!("unknown solver '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub solver: SolverKind,
    pub guesses_per_template: usize,
    pub guess_seed: u64,
    pub lm: LmOptions,
    pub qn: QnOptions,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            solver: SolverKind::default(),
            guesses_per_template: 10,
            guess_seed: 0,
            lm: LmOptions::default(),
            qn: QnOptions::default(),
        }
    }
}

impl AttackConfig {
    fn validate(&self) -> Result<()> {
        if self.guesses_per_template == 0 {
            return Err(Error::Parameter("guesses_per_template must be >= 1".into()));
        }
        Ok(())
    }
}

/// One solver run against one template.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub subject: String,
    pub guess_index: usize,
    pub solver: SolverKind,
    pub recovered: Vec<f64>,
    pub objective_value: f64,
    pub inversion_similarity: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// The scalar part of an [`AttackResult`], as stored in results files.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub subject: String,
    pub guess_index: usize,
    pub solver: SolverKind,
    pub converged: bool,
    pub iterations: usize,
    pub objective_value: f64,
    pub inversion_similarity: f64,
}

impl From<&AttackResult> for AttackRecord {
    fn from(r: &AttackResult) -> Self {
        AttackRecord {
            subject: r.subject.clone(),
            guess_index: r.guess_index,
            solver: r.solver,
            converged: r.converged,
            iterations: r.iterations,
            objective_value: r.objective_value,
            inversion_similarity: r.inversion_similarity,
        }
    }
}

/// A template to attack, with the keys and the embedding it came from.
#[derive(Debug, Clone, Copy)]
pub struct AttackTarget<'a> {
    pub template: &'a ProtectedTemplate,
    pub keys: &'a Keys,
    pub truth: &'a [f64],
}

fn run_cell(target: &AttackTarget<'_>, x0: &[f64], guess_index: usize, cfg: &AttackConfig) -> Result<AttackResult> {
    let n = target.truth.len();
    let outcome = match cfg.solver {
        SolverKind::EuclideanLm => {
            let problem = build_euclidean_problem(target.template, target.keys, n)?;
            solve_lm(&problem, x0, &cfg.lm)
        }
        SolverKind::CosineQn => {
            let problem = build_cosine_problem(target.template, target.keys, n)?;
            minimize_qn(&problem, x0, &cfg.qn)
        }
    };
    let report: SolverReport = match outcome {
        Ok(r) => r,
        Err(e @ SolverError::GradientCheck { .. }) => return Err(e.into()),
        Err(e) => e.into_report().expect("numerical failures carry the best iterate"),
    };
    let mut recovered = report.solution;
    if recovered.iter().any(|v| !v.is_finite()) {
        recovered = x0.to_vec();
    }
    // A vanishing recovery carries no direction.
    let inversion_similarity = cosine_similarity(&recovered, target.truth).unwrap_or(0.0);
    Ok(AttackResult {
        subject: target.template.subject().to_string(),
        guess_index,
        solver: cfg.solver,
        recovered,
        objective_value: report.objective_value,
        inversion_similarity,
        converged: report.converged,
        iterations: report.iterations,
    })
}

fn check_target(target: &AttackTarget<'_>, cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    check_pair(target.template, target.keys, target.truth.len())?;
    if cfg.solver == SolverKind::CosineQn && norm(target.template.values()) == 0.0 {
        return Err(Error::ZeroTemplate(target.template.subject().to_string()));
    }
    Ok(())
}

/// Runs the configured solver from each supplied starting point.
pub fn attack_with_guesses(target: &AttackTarget<'_>, guesses: &[Vec<f64>], cfg: &AttackConfig) -> Result<Vec<AttackResult>> {
    check_target(target, cfg)?;
    for g in guesses {
        if g.len() != target.truth.len() {
            return Err(Error::Dimension {
                expected: target.truth.len(),
                found: g.len(),
            });
        }
    }
    guesses
        .iter()
        .enumerate()
        .map(|(i, x0)| run_cell(target, x0, i, cfg))
        .collect()
}

/// Attacks one template with `cfg.guesses_per_template` drawn guesses.
pub fn attack_template(target: &AttackTarget<'_>, dist: &ElementDistribution, cfg: &AttackConfig) -> Result<Vec<AttackResult>> {
    check_target(target, cfg)?;
    if dist.dim() != target.truth.len() {
        return Err(Error::Dimension {
            expected: target.truth.len(),
            found: dist.dim(),
        });
    }
    let stream = subject_guess_seed(cfg.guess_seed, target.template.subject());
    let run = |g: usize| run_cell(target, &draw_initial_guess(dist, stream, g), g, cfg);

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..cfg.guesses_per_template).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..cfg.guesses_per_template).map(run).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackCampaignResult {
    config: AttackConfig,
    results: Vec<AttackResult>,
    best: Vec<(String, f64)>,
}

impl AttackCampaignResult {
    fn new(config: AttackConfig, results: Vec<AttackResult>) -> Self {
        let best = best_by_subject(results.iter().map(|r| (r.subject.as_str(), r.inversion_similarity)));
        AttackCampaignResult { config, results, best }
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    /// Results ordered by target, then by guess.
    pub fn results(&self) -> &[AttackResult] {
        &self.results
    }

    pub fn records(&self) -> Vec<AttackRecord> {
        self.results.iter().map(AttackRecord::from).collect()
    }

    /// Best similarity per subject, in target order.
    pub fn best_similarities(&self) -> &[(String, f64)] {
        &self.best
    }

    pub fn best_for(&self, subject: &str) -> Option<f64> {
        self.best.iter().find(|(s, _)| s == subject).map(|(_, b)| *b)
    }

    pub fn similarities(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.inversion_similarity).collect()
    }

    pub fn mean_similarity(&self) -> f64 {
        self.results.iter().map(|r| r.inversion_similarity).sum::<f64>() / self.results.len().max(1) as f64
    }
}

/// Maximum score per label, in order of first appearance.
pub fn best_by_subject<'a>(cells: impl IntoIterator<Item = (&'a str, f64)>) -> Vec<(String, f64)> {
    let mut best: Vec<(String, f64)> = Vec::new();
    for (subject, s) in cells {
        match best.last_mut() {
            Some((last, b)) if last == subject => *b = b.max(s),
            _ => match best.iter_mut().find(|(l, _)| l == subject) {
                Some((_, b)) => *b = b.max(s),
                None => best.push((subject.to_string(), s)),
            },
        }
    }
    best
}

/// Attacks every target with every guess. Cells are independent; the result
/// order is target-major regardless of scheduling.
pub fn attack_campaign(targets: &[AttackTarget<'_>], dist: &ElementDistribution, cfg: &AttackConfig) -> Result<AttackCampaignResult> {
    for t in targets {
        check_target(t, cfg)?;
        if dist.dim() != t.truth.len() {
            return Err(Error::Dimension {
                expected: t.truth.len(),
                found: dist.dim(),
            });
        }
    }
    let g = cfg.guesses_per_template;
    let streams: Vec<u64> = targets
        .iter()
        .map(|t| subject_guess_seed(cfg.guess_seed, t.template.subject()))
        .collect();
    let run = |cell: usize| {
        let (t, guess) = (cell / g, cell % g);
        run_cell(&targets[t], &draw_initial_guess(dist, streams[t], guess), guess, cfg)
    };

    #[cfg(feature = "parallel")]
    let results: Result<Vec<_>> = {
        use rayon::prelude::*;
        (0..targets.len() * g).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Result<Vec<_>> = (0..targets.len() * g).map(run).collect();

    Ok(AttackCampaignResult::new(*cfg, results?))
}

pub fn save_attack_records(records: &[AttackRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "subject,guess,solver,converged,iterations,objective,similarity").map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.subject, r.guess_index, r.solver, r.converged, r.iterations, r.objective_value, r.inversion_similarity
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_attack_records(path: impl AsRef<Path>) -> Result<Vec<AttackRecord>> {
    const HEADER: [&str; 7] = ["subject", "guess", "solver", "converged", "iterations", "objective", "similarity"];
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| Error::from_csv(path, e))?;
    if header.iter().ne(HEADER) {
        return Err(Error::format(1, format!("expected header '{}'", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::from_csv(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::format(line, format!("invalid {what}"));
        let similarity: f64 = row[6].parse().map_err(|_| bad("similarity"))?;
        if !(-1.0..=1.0).contains(&similarity) {
            return Err(bad("similarity"));
        }
        out.push(AttackRecord {
            subject: row[0].to_string(),
            guess_index: row[1].parse().map_err(|_| bad("guess"))?,
            solver: row[2].parse().map_err(|_| bad("solver"))?,
            converged: row[3].parse().map_err(|_| bad("converged flag"))?,
            iterations: row[4].parse().map_err(|_| bad("iteration count"))?,
            objective_value: row[5].parse().map_err(|_| bad("objective"))?,
            inversion_similarity: similarity,
        });
    }
    if out.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no attack results", path.display())));
    }
    Ok(out)
}
