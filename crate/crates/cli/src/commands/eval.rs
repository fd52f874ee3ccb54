use std::path::{Path, PathBuf};

use polyprotect::metrics::{
    det_curve, fmr_resolvable, fnmr_at_fmr, save_det, score_embeddings, score_templates, ScoreSet, TextTable,
};
use polyprotect::transform::load_templates;

use crate::config::{RunConfig, Tunables};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;
use crate::svg::{histogram_overlay, Series};

use super::{create_dir, fmr_label, load_prepared, parse_labeled, pct, save_scores, write_text};

/// Score all genuine and impostor pairs; write scores, DET curves and an
/// FNMR summary.
#[derive(Debug, Clone, clap::Args)]
pub struct EvalArgs {
    /// Unprotected embeddings CSV (labelled `unprotected`)
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// Protected templates CSV, optionally `LABEL=FILE`; repeatable
    #[arg(long, value_name = "[LABEL=]FILE")]
    pub protected: Vec<String>,
    /// Output directory
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

pub fn eval(args: &EvalArgs, cfg: &RunConfig) -> CliResult<()> {
    let mut inputs: Vec<(String, PathBuf)> = Vec::new();
    if let Some(p) = &args.emb {
        inputs.push(("unprotected".into(), p.clone()));
    }
    for a in &args.protected {
        inputs.push(parse_labeled(a)?);
    }
    if inputs.is_empty() {
        return Err(CliError::usage("eval needs --emb and/or at least one --protected"));
    }
    for (i, (label, _)) in inputs.iter().enumerate() {
        if inputs[..i].iter().any(|(l, _)| l == label) {
            return Err(CliError::usage(format!("duplicate label '{label}'")));
        }
    }
    create_dir(&args.out_dir)?;

    let mut table = TextTable::new("Verification error rates", &["set", "genuine", "impostor"]);
    for &t in &cfg.fmr_anchors.0 {
        table.headers.push(format!("tau @ FMR {}", fmr_label(t)));
        table.headers.push(format!("FNMR @ FMR {}", fmr_label(t)));
    }
    let mut outputs = Vec::new();
    for (i, (label, path)) in inputs.iter().enumerate() {
        let scores = if i == 0 && args.emb.is_some() {
            score_embeddings(&load_prepared(path, cfg)?)?
        } else {
            score_templates(&load_templates(path)?)?
        };
        outputs.extend(write_set(label, &scores, &args.out_dir, cfg)?);

        let mut row = vec![label.clone(), scores.genuine().len().to_string(), scores.impostor().len().to_string()];
        for &t in &cfg.fmr_anchors.0 {
            let (tau, fnmr) = fnmr_at_fmr(&scores, t)?;
            row.push(format!("{tau:.4}"));
            row.push(pct(fnmr));
            if !fmr_resolvable(&scores, t) {
                table.notes.push(format!(
                    "{label}: FMR {} is below the 1/{} impostor resolution; its threshold is the strictest observed.",
                    fmr_label(t),
                    scores.impostor().len()
                ));
            }
        }
        table.push_row(row);
    }
    let summary = args.out_dir.join("eval_summary.txt");
    let text = table.render();
    write_text(&summary, &text)?;
    print!("{text}");

    outputs.insert(0, summary);
    let ins: Vec<&Path> = inputs.iter().map(|(_, p)| p.as_path()).collect();
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest("eval", cfg, &ins, &outs)?;
    Ok(())
}

fn write_set(label: &str, scores: &ScoreSet, dir: &Path, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let scores_path = dir.join(format!("scores_{label}.csv"));
    save_scores(scores, &scores_path)?;
    let det_path = dir.join(format!("det_{label}.csv"));
    save_det(&det_curve(scores, cfg.det_points)?, &det_path)?;
    let svg_path = dir.join(format!("scores_{label}.svg"));
    let svg = histogram_overlay(
        &format!("{label}: comparison scores"),
        &[
            Series { label: "genuine", color: "#2a7d2a", values: scores.genuine() },
            Series { label: "impostor", color: "#c0392b", values: scores.impostor() },
        ],
        cfg.bins,
    );
    write_text(&svg_path, &svg)?;
    Ok(vec![scores_path, det_path, svg_path])
}
