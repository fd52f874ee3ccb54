//! Key selection: redraw a subject's keys until the cosine inversion attack
//! fails to reach a loose FMR-anchored threshold.
//!
//! The threshold is computed once from the unprotected scores of the dataset
//! and shared by all subjects. Within an attempt the selection guesses run in
//! order and the attempt is rejected at the first guess that reaches `tau`.
//! The guesses are the same for every attempt of a subject, so re-attacking
//! accepted keys with the selection seed reproduces the recorded similarities.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::attack::{attack_with_guesses, draw_initial_guess, subject_guess_seed, AttackConfig, AttackTarget, SolverKind};
use crate::embeddings::{ElementDistribution, Embedding};
use crate::error::{Error, Result};
use crate::metrics::{threshold_at_fmr, ScoreSet};
use crate::seed;
use crate::solvers::QnOptions;
use crate::transform::{generate_random_keys, protect, Keys, DEFAULT_C_RANGE, DEFAULT_SET_SIZE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub target_fmr: f64,
    pub selection_guesses: usize,
    pub max_attempts: usize,
    pub c_range: u32,
    pub m: usize,
    pub overlap: usize,
    pub key_seed: u64,
    pub guess_seed: u64,
    pub qn: QnOptions,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            target_fmr: 0.2,
            selection_guesses: 3,
            max_attempts: 200,
            c_range: DEFAULT_C_RANGE,
            m: DEFAULT_SET_SIZE,
            overlap: 0,
            key_seed: 0,
            guess_seed: 0,
            qn: QnOptions::default(),
        }
    }
}

impl SelectionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.target_fmr > 0.0 && self.target_fmr <= 1.0) {
            return Err(Error::Parameter(format!("target FMR {} not in (0, 1]", self.target_fmr)));
        }
        if self.selection_guesses == 0 || self.max_attempts == 0 {
            return Err(Error::Parameter("selection guesses and attempts must be >= 1".into()));
        }
        Ok(())
    }

    /// The attack that selection runs; re-running it on accepted keys
    /// reproduces the selection-time similarities.
    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            solver: SolverKind::CosineQn,
            guesses_per_template: self.selection_guesses,
            guess_seed: self.guess_seed,
            qn: self.qn,
            ..AttackConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub keys: Keys,
    pub attempts_used: usize,
    pub selection_similarities: Vec<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionLogRow {
    pub subject: String,
    pub attempt: usize,
    pub accepted: bool,
    pub guess: usize,
    pub similarity: f64,
    pub tau: f64,
}

/// Keys drawn for `subject` on a given attempt (1-based).
pub fn attempt_keys(subject: &str, attempt: usize, cfg: &SelectionConfig) -> Result<Keys> {
    let s = seed::derive(&[cfg.key_seed, seed::label_hash(subject), attempt as u64]);
    generate_random_keys(subject, cfg.m, cfg.overlap, cfg.c_range, s)
}

/// The most resistant keys seen by an exhausted selection: the attempt whose
/// largest evaluated similarity was smallest. Attempts stop at the first
/// guess reaching `tau`, so that similarity is a lower bound on the attempt's
/// true worst case.
#[derive(Debug, Clone, PartialEq)]
pub struct BestEffort {
    pub subject: String,
    pub keys: Keys,
    pub attempt: usize,
    pub max_similarity: f64,
}

enum Selection {
    Accepted(SelectionOutcome),
    Exhausted(BestEffort),
}

fn run_selection(
    v: &Embedding,
    dist: &ElementDistribution,
    tau: f64,
    cfg: &SelectionConfig,
    log: &mut Vec<SelectionLogRow>,
) -> Result<Selection> {
    cfg.validate()?;
    let subject = v.identity();
    let attack_cfg = cfg.attack_config();
    let stream = subject_guess_seed(cfg.guess_seed, subject);
    let guesses: Vec<Vec<f64>> = (0..cfg.selection_guesses)
        .map(|g| draw_initial_guess(dist, stream, g))
        .collect();
    let mut best: Option<BestEffort> = None;

    for attempt in 1..=cfg.max_attempts {
        let keys = attempt_keys(subject, attempt, cfg)?;
        let template = protect(v, &keys)?;
        let target = AttackTarget {
            template: &template,
            keys: &keys,
            truth: v.values(),
        };
        let first_row = log.len();
        let mut sims = Vec::with_capacity(guesses.len());
        for (g, x0) in guesses.iter().enumerate() {
            let r = attack_with_guesses(&target, std::slice::from_ref(x0), &attack_cfg)?;
            let s = r[0].inversion_similarity;
            log.push(SelectionLogRow {
                subject: subject.to_string(),
                attempt,
                accepted: false,
                guess: g,
                similarity: s,
                tau,
            });
            sims.push(s);
            if s >= tau {
                break;
            }
        }
        let worst = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if worst < tau {
            log[first_row..].iter_mut().for_each(|row| row.accepted = true);
            return Ok(Selection::Accepted(SelectionOutcome {
                keys,
                attempts_used: attempt,
                selection_similarities: sims,
                tau,
            }));
        }
        if best.as_ref().is_none_or(|b| worst < b.max_similarity) {
            best = Some(BestEffort {
                subject: subject.to_string(),
                keys,
                attempt,
                max_similarity: worst,
            });
        }
    }
    Ok(Selection::Exhausted(best.expect("at least one attempt")))
}

/// Selection for one subject against a precomputed threshold. Appends one
/// log row per guess actually run.
pub fn select_with_threshold(
    v: &Embedding,
    dist: &ElementDistribution,
    tau: f64,
    cfg: &SelectionConfig,
    log: &mut Vec<SelectionLogRow>,
) -> Result<SelectionOutcome> {
    match run_selection(v, dist, tau, cfg, log)? {
        Selection::Accepted(o) => Ok(o),
        Selection::Exhausted(_) => Err(Error::KeySelectionExhausted {
            subject: v.identity().to_string(),
            attempts: cfg.max_attempts,
        }),
    }
}

pub fn select_keys_for_subject(
    v: &Embedding,
    dist: &ElementDistribution,
    unprotected: &ScoreSet,
    cfg: &SelectionConfig,
) -> Result<SelectionOutcome> {
    let tau = threshold_at_fmr(unprotected, cfg.target_fmr)?;
    select_with_threshold(v, dist, tau, cfg, &mut Vec::new())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSelection {
    /// Accepted outcomes in input order.
    pub outcomes: Vec<(String, SelectionOutcome)>,
    /// Subjects with no acceptable keys, with the most resistant keys seen.
    pub exhausted: Vec<BestEffort>,
    pub log: Vec<SelectionLogRow>,
    pub tau: f64,
}

impl DatasetSelection {
    pub fn keys(&self) -> Vec<Keys> {
        self.outcomes.iter().map(|(_, o)| o.keys.clone()).collect()
    }

    /// Accepted keys, or the best-effort keys for exhausted subjects, in
    /// input order.
    pub fn keys_with_fallback(&self, order: &[&str]) -> Vec<Keys> {
        order
            .iter()
            .filter_map(|s| {
                self.get(s)
                    .map(|o| o.keys.clone())
                    .or_else(|| self.exhausted.iter().find(|b| b.subject == *s).map(|b| b.keys.clone()))
            })
            .collect()
    }

    pub fn exhausted_subjects(&self) -> Vec<&str> {
        self.exhausted.iter().map(|b| b.subject.as_str()).collect()
    }

    pub fn get(&self, subject: &str) -> Option<&SelectionOutcome> {
        self.outcomes.iter().find(|(s, _)| s == subject).map(|(_, o)| o)
    }
}

/// Independent selection for each reference embedding. Exhausted subjects
/// are listed with their best-effort keys rather than aborting the run; any
/// other error is returned.
pub fn select_keys_for_dataset(
    references: &[&Embedding],
    dist: &ElementDistribution,
    unprotected: &ScoreSet,
    cfg: &SelectionConfig,
) -> Result<DatasetSelection> {
    cfg.validate()?;
    let tau = threshold_at_fmr(unprotected, cfg.target_fmr)?;
    let run = |v: &&Embedding| {
        let mut log = Vec::new();
        let r = run_selection(v, dist, tau, cfg, &mut log);
        (r, log)
    };

    #[cfg(feature = "parallel")]
    let per_subject: Vec<_> = {
        use rayon::prelude::*;
        references.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_subject: Vec<_> = references.iter().map(run).collect();

    let mut out = DatasetSelection {
        tau,
        ..DatasetSelection::default()
    };
    for (v, (result, log)) in references.iter().zip(per_subject) {
        out.log.extend(log);
        match result? {
            Selection::Accepted(o) => out.outcomes.push((v.identity().to_string(), o)),
            Selection::Exhausted(b) => out.exhausted.push(b),
        }
    }
    Ok(out)
}

pub fn save_selection_log(rows: &[SelectionLogRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "subject,attempt,accepted,guess,similarity,tau").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.subject, r.attempt, r.accepted, r.guess, r.similarity, r.tau).map_err(io)?;
    }
    w.flush().map_err(io)
}
