//! Verification scoring and error rates.
//!
//! All scores are cosine *similarities*; a cosine distance is `1 - s`.
//! A comparison is accepted as a match when its score is `>= threshold`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::attack::{best_by_subject, AttackCampaignResult, AttackRecord};
use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::transform::ProtectedTemplate;
use crate::vecops::{dot, norm};

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Genuine and impostor similarity scores, each kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(mut genuine: Vec<f64>, mut impostor: Vec<f64>) -> Result<Self> {
        for s in genuine.iter().chain(&impostor) {
            if !(-1.0..=1.0).contains(s) {
                return Err(Error::Parameter(format!("score {s} outside [-1, 1]")));
            }
        }
        genuine.sort_by(f64::total_cmp);
        impostor.sort_by(f64::total_cmp);
        Ok(ScoreSet { genuine, impostor })
    }

    pub fn genuine(&self) -> &[f64] {
        &self.genuine
    }

    pub fn impostor(&self) -> &[f64] {
        &self.impostor
    }

    fn require_both(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::InsufficientData(
                "both genuine and impostor scores are required".into(),
            ));
        }
        Ok(())
    }

    /// Fraction of impostor scores `>= threshold`.
    pub fn fmr(&self, threshold: f64) -> f64 {
        let below = self.impostor.partition_point(|&s| s < threshold);
        (self.impostor.len() - below) as f64 / self.impostor.len() as f64
    }

    /// Fraction of genuine scores `< threshold`.
    pub fn fnmr(&self, threshold: f64) -> f64 {
        self.genuine.partition_point(|&s| s < threshold) as f64 / self.genuine.len() as f64
    }
}

/// Scores every unordered pair once; equal labels are genuine comparisons.
pub fn score_all_pairs(items: &[(&str, &[f64])]) -> Result<ScoreSet> {
    if items.len() < 2 {
        return Err(Error::InsufficientData("need at least two vectors".into()));
    }
    let first = items[0].0;
    if items.iter().all(|(id, _)| *id == first) {
        return Err(Error::InsufficientData("need at least two identities".into()));
    }
    let dim = items[0].1.len();
    let mut unit = Vec::with_capacity(items.len());
    for (_, v) in items {
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: v.len(),
            });
        }
        let n = norm(v);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        unit.push(v.iter().map(|x| x / n).collect::<Vec<_>>());
    }

    let row = |i: usize| -> (Vec<f64>, Vec<f64>) {
        let (mut g, mut im) = (Vec::new(), Vec::new());
        for j in i + 1..items.len() {
            let s = dot(&unit[i], &unit[j]).clamp(-1.0, 1.0);
            if items[i].0 == items[j].0 {
                g.push(s);
            } else {
                im.push(s);
            }
        }
        (g, im)
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<_> = {
        use rayon::prelude::*;
        (0..items.len()).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<_> = (0..items.len()).map(row).collect();

    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for (g, im) in rows {
        genuine.extend(g);
        impostor.extend(im);
    }
    ScoreSet::new(genuine, impostor)
}

pub fn score_embeddings(set: &EmbeddingSet) -> Result<ScoreSet> {
    let items: Vec<(&str, &[f64])> = set.iter().map(|e| (e.identity(), e.values())).collect();
    score_all_pairs(&items)
}

pub fn score_templates(templates: &[ProtectedTemplate]) -> Result<ScoreSet> {
    let items: Vec<(&str, &[f64])> = templates.iter().map(|t| (t.subject(), t.values())).collect();
    score_all_pairs(&items)
}

/// `(fmr, fnmr)` at a threshold.
pub fn fmr_fnmr_at(s: &ScoreSet, threshold: f64) -> Result<(f64, f64)> {
    s.require_both()?;
    Ok((s.fmr(threshold), s.fnmr(threshold)))
}

/// Smallest threshold whose FMR does not exceed `target_fmr`.
///
/// Candidates are the sorted impostor scores; when the chosen score has a
/// distinct predecessor, the midpoint between the two is returned (same FMR,
/// less sensitive to ties). If even the maximum impostor score would admit
/// too many matches, the next float above it is returned and the FMR is 0.
pub fn threshold_at_fmr(s: &ScoreSet, target_fmr: f64) -> Result<f64> {
    if s.impostor.is_empty() {
        return Err(Error::InsufficientData("no impostor scores".into()));
    }
    if !(target_fmr > 0.0 && target_fmr <= 1.0) {
        return Err(Error::Parameter(format!("target FMR {target_fmr} not in (0, 1]")));
    }
    let imp = &s.impostor;
    let n = imp.len();
    let allowed = ((target_fmr * n as f64) * (1.0 + 1e-12)).floor() as usize;
    let allowed = allowed.min(n);
    // Smallest index j >= n - allowed that starts a run of equal scores.
    let mut j = n - allowed;
    while j > 0 && j < n && imp[j - 1] == imp[j] {
        j += 1;
    }
    Ok(if j >= n {
        imp[n - 1].next_up()
    } else if j == 0 {
        imp[0]
    } else {
        0.5 * (imp[j - 1] + imp[j])
    })
}

/// Whether `target_fmr` is resolvable with this many impostor scores.
pub fn fmr_resolvable(s: &ScoreSet, target_fmr: f64) -> bool {
    target_fmr * s.impostor.len() as f64 >= 1.0
}

/// FNMR at the FMR-anchored threshold, with the threshold itself.
pub fn fnmr_at_fmr(s: &ScoreSet, target_fmr: f64) -> Result<(f64, f64)> {
    s.require_both()?;
    let tau = threshold_at_fmr(s, target_fmr)?;
    Ok((tau, s.fnmr(tau)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

/// Error trade-off over thresholds drawn from the pooled scores.
///
/// With `n_points == 0`, or when there are fewer distinct scores than
/// requested points, every distinct score is a threshold; otherwise evenly
/// spaced order statistics are used. A final threshold just above the largest
/// score gives the `(0, 1)` end point.
pub fn det_curve(s: &ScoreSet, n_points: usize) -> Result<DetCurve> {
    s.require_both()?;
    let mut pooled: Vec<f64> = s.genuine.iter().chain(&s.impostor).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let max = *pooled.last().expect("non-empty");
    let mut thresholds = if n_points == 0 || pooled.len() < n_points {
        pooled
    } else {
        let last = pooled.len() - 1;
        let mut t: Vec<f64> = (0..n_points.saturating_sub(1).max(1))
            .map(|i| pooled[i * last / (n_points.saturating_sub(1).max(2) - 1)])
            .collect();
        t.dedup();
        t
    };
    thresholds.push(max.next_up());
    let points = thresholds
        .into_iter()
        .map(|threshold| DetPoint {
            threshold,
            fmr: s.fmr(threshold),
            fnmr: s.fnmr(threshold),
        })
        .collect();
    Ok(DetCurve { points })
}

pub fn save_det(curve: &DetCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "threshold,fmr,fnmr").map_err(io)?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.threshold, p.fmr, p.fnmr).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IsrAggregation {
    /// A subject counts once if any of its guesses succeeds.
    #[default]
    BestOfGuesses,
    /// Every (subject, guess) attack counts separately.
    PerAttack,
}

/// Inversion success rate over attack records at a fixed threshold.
pub fn isr_at_threshold(
    records: &[AttackRecord],
    threshold: f64,
    aggregation: IsrAggregation,
    converged_only: bool,
) -> Result<f64> {
    let cells: Vec<(&str, f64)> = records
        .iter()
        .filter(|r| !converged_only || r.converged)
        .map(|r| (r.subject.as_str(), r.inversion_similarity))
        .collect();
    if cells.is_empty() {
        return Err(Error::InsufficientData("empty attack campaign".into()));
    }
    let rate = |scores: &mut dyn Iterator<Item = f64>, n: usize| {
        scores.filter(|&s| s >= threshold).count() as f64 / n as f64
    };
    Ok(match aggregation {
        IsrAggregation::PerAttack => rate(&mut cells.iter().map(|c| c.1), cells.len()),
        IsrAggregation::BestOfGuesses => {
            let best = best_by_subject(cells);
            rate(&mut best.iter().map(|b| b.1), best.len())
        }
    })
}

/// Fraction of inverted templates whose similarity to the true embedding
/// reaches the threshold at `target_fmr` of the unprotected system.
pub fn isr(
    campaign: &AttackCampaignResult,
    unprotected: &ScoreSet,
    target_fmr: f64,
    aggregation: IsrAggregation,
) -> Result<f64> {
    let tau = threshold_at_fmr(unprotected, target_fmr)?;
    isr_at_threshold(&campaign.records(), tau, aggregation, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width bins over `[min, max]`; the last bin is closed on the right.
/// A zero-width range is widened to `1e-12`.
pub fn histogram(scores: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("no scores to bin".into()));
    }
    if bins == 0 {
        return Err(Error::Parameter("bin count must be >= 1".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    histogram_in(scores, bins, lo, hi)
}

/// Like [`histogram`] but over a caller-chosen range; values outside it are
/// clamped into the edge bins.
pub fn histogram_in(scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::Parameter("bin count must be >= 1".into()));
    }
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let b = ((s - lo) / width).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(bins - 1) };
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            left: lo + i as f64 * width,
            right: lo + (i + 1) as f64 * width,
            count,
        })
        .collect())
}

pub fn save_histogram(bins: &[HistogramBin], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "bin_left,bin_right,count").map_err(io)?;
    for b in bins {
        writeln!(w, "{},{},{}", b.left, b.right, b.count).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn export_histogram(scores: &[f64], bins: usize, path: impl AsRef<Path>) -> Result<()> {
    save_histogram(&histogram(scores, bins)?, path)
}

/// Plain-text table with right-aligned numeric columns.
#[derive(Debug, Clone, Default)]
pub struct TextTable {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl TextTable {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        TextTable {
            title: title.into(),
            headers: headers.iter().map(|s| s.to_string()).collect(),
            ..TextTable::default()
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let cols = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| -> String {
            let parts: Vec<String> = (0..cols)
                .map(|i| {
                    let cell = cells.get(i).map_or("", String::as_str);
                    if i == 0 {
                        format!("{cell:<w$}", w = widths[i])
                    } else {
                        format!("{cell:>w$}", w = widths[i])
                    }
                })
                .collect();
            format!("| {} |", parts.join(" | "))
        };
        let rule = format!(
            "+{}+",
            widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+")
        );
        let mut out = format!("{}\n{rule}\n{}\n{rule}\n", self.title, line(&self.headers));
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out.push_str(&rule);
        out.push('\n');
        for note in &self.notes {
            out.push_str(&format!("  note: {note}\n"));
        }
        out
    }
}

/// Formats a rate in `[0, 1]` as a percentage with one decimal.
pub fn percent(rate: f64) -> String {
    format!("{:.1}", 100.0 * rate)
}
