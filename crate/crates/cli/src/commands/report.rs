use std::path::{Path, PathBuf};

use polyprotect::attack::{best_by_subject, load_attack_records, AttackRecord};
use polyprotect::metrics::{fmr_resolvable, isr_at_threshold, threshold_at_fmr, IsrAggregation, TextTable};

use crate::config::{RunConfig, Tunables};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;
use crate::svg::{histogram_overlay, Series};

use super::{create_dir, fmr_label, load_scores, parse_labeled, pct, write_text};

/// Inversion success rates of attack campaigns against the unprotected
/// system's thresholds.
#[derive(Debug, Clone, clap::Args)]
pub struct ReportArgs {
    /// Unprotected `kind,score` CSV written by `eval`
    #[arg(long)]
    pub scores: PathBuf,
    /// Attack records CSV, optionally `LABEL=FILE`; repeatable
    #[arg(long, value_name = "[LABEL=]FILE", required = true)]
    pub attack: Vec<String>,
    /// Output directory
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

/// One row of `isr_summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsrRow {
    pub label: String,
    pub fmr: f64,
    pub threshold: f64,
    pub isr_best: f64,
    pub isr_per_attack: f64,
}

pub fn report(args: &ReportArgs, cfg: &RunConfig) -> CliResult<Vec<IsrRow>> {
    let scores = load_scores(&args.scores)?;
    let mut campaigns: Vec<(String, PathBuf, Vec<AttackRecord>)> = Vec::new();
    for a in &args.attack {
        let (label, path) = parse_labeled(a)?;
        if campaigns.iter().any(|(l, _, _)| *l == label) {
            return Err(CliError::usage(format!("duplicate label '{label}'")));
        }
        let records = load_attack_records(&path)?;
        campaigns.push((label, path, records));
    }
    create_dir(&args.out_dir)?;

    let mut anchors = cfg.fmr_anchors.0.clone();
    if !anchors.contains(&cfg.selection_fmr) {
        anchors.push(cfg.selection_fmr);
    }
    anchors.sort_by(|a, b| b.total_cmp(a));

    let mut overview = TextTable::new(
        "Attack campaigns",
        &["campaign", "subjects", "attacks", "converged", "mean sim", "mean best sim"],
    );
    let mut isr_table = TextTable::new(
        "Inversion success rate",
        &["campaign", "FMR", "tau", "ISR best-of-guesses", "ISR per attack"],
    );
    isr_table
        .notes
        .push("An attack succeeds when its similarity to the true embedding is >= tau.".into());
    for &t in &anchors {
        if !fmr_resolvable(&scores, t) {
            isr_table.notes.push(format!(
                "FMR {} is below the 1/{} impostor resolution; its threshold is the strictest observed.",
                fmr_label(t),
                scores.impostor().len()
            ));
        }
    }

    let mut rows = Vec::new();
    let mut csv = String::from("campaign,fmr,threshold,isr_best_of_guesses,isr_per_attack\n");
    let mut outputs = Vec::new();
    for (label, _, records) in &campaigns {
        let bests: Vec<f64> = best_by_subject(records.iter().map(|r| (r.subject.as_str(), r.inversion_similarity)))
            .into_iter()
            .map(|b| b.1)
            .collect();
        let all: Vec<f64> = records.iter().map(|r| r.inversion_similarity).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        overview.push_row(vec![
            label.clone(),
            bests.len().to_string(),
            records.len().to_string(),
            pct(records.iter().filter(|r| r.converged).count() as f64 / records.len() as f64),
            format!("{:.4}", mean(&all)),
            format!("{:.4}", mean(&bests)),
        ]);

        for &t in &anchors {
            let tau = threshold_at_fmr(&scores, t)?;
            let row = IsrRow {
                label: label.clone(),
                fmr: t,
                threshold: tau,
                isr_best: isr_at_threshold(records, tau, IsrAggregation::BestOfGuesses, false)?,
                isr_per_attack: isr_at_threshold(records, tau, IsrAggregation::PerAttack, false)?,
            };
            isr_table.push_row(vec![
                label.clone(),
                fmr_label(t),
                format!("{tau:.4}"),
                pct(row.isr_best),
                pct(row.isr_per_attack),
            ]);
            csv.push_str(&format!("{},{},{},{},{}\n", label, t, tau, row.isr_best, row.isr_per_attack));
            rows.push(row);
        }

        let svg_path = args.out_dir.join(format!("isr_{label}.svg"));
        let svg = histogram_overlay(
            &format!("{label}: inversion vs comparison scores"),
            &[
                Series { label: "genuine", color: "#2a7d2a", values: scores.genuine() },
                Series { label: "impostor", color: "#c0392b", values: scores.impostor() },
                Series { label: "best inversion", color: "#1f5fbf", values: &bests },
            ],
            cfg.bins,
        );
        write_text(&svg_path, &svg)?;
        outputs.push(svg_path);
    }

    let summary_csv = args.out_dir.join("isr_summary.csv");
    write_text(&summary_csv, &csv)?;
    let text = format!("{}\n{}", overview.render(), isr_table.render());
    let report_path = args.out_dir.join("isr_report.txt");
    write_text(&report_path, &text)?;
    print!("{text}");

    outputs.insert(0, summary_csv);
    outputs.insert(1, report_path);
    let mut inputs: Vec<&Path> = vec![&args.scores];
    inputs.extend(campaigns.iter().map(|(_, p, _)| p.as_path()));
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest("report", cfg, &inputs, &outs)?;
    Ok(rows)
}
