use std::path::{Path, PathBuf};

use polyprotect::embeddings::estimate_distribution;
use polyprotect::keyselect::{save_selection_log, select_keys_for_dataset, DatasetSelection};
use polyprotect::metrics::score_embeddings;
use polyprotect::transform::save_keys;

use crate::config::{RunConfig, Tunables};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;

use super::{load_prepared, write_text};

/// Draw keys per subject until a small cosine attack on its reference
/// template stays below the selection threshold.
#[derive(Debug, Clone, clap::Args)]
pub struct SelectArgs {
    /// Input embeddings CSV
    #[arg(long)]
    pub emb: PathBuf,
    /// Output keys CSV
    #[arg(long)]
    pub keys_out: PathBuf,
    /// Per-guess selection log CSV
    #[arg(long)]
    pub log_out: PathBuf,
    /// CSV of subjects with no acceptable keys
    #[arg(long)]
    pub exhausted_out: Option<PathBuf>,
    /// Write the most resistant keys seen for exhausted subjects and exit 0
    #[arg(long)]
    pub fill_exhausted: bool,
    #[command(flatten)]
    pub tunables: Tunables,
}

pub fn select_keys(args: &SelectArgs, cfg: &RunConfig) -> CliResult<DatasetSelection> {
    let set = load_prepared(&args.emb, cfg)?;
    let references = set.references();
    let dist = estimate_distribution(&set)?;
    let unprotected = score_embeddings(&set)?;
    let sel = select_keys_for_dataset(&references, &dist, &unprotected, &cfg.selection_config()?)?;

    let order: Vec<&str> = references.iter().map(|e| e.identity()).collect();
    let keys = if args.fill_exhausted {
        sel.keys_with_fallback(&order)
    } else {
        sel.keys()
    };
    save_keys(&keys, &args.keys_out)?;
    save_selection_log(&sel.log, &args.log_out)?;
    let mut outputs: Vec<&Path> = vec![&args.keys_out, &args.log_out];
    if let Some(p) = &args.exhausted_out {
        let mut text = String::from("subject,best_attempt,max_similarity\n");
        for b in &sel.exhausted {
            text.push_str(&format!("{},{},{}\n", b.subject, b.attempt, b.max_similarity));
        }
        write_text(p, &text)?;
        outputs.push(p);
    }
    write_manifest("select-keys", cfg, &[&args.emb], &outputs)?;

    println!(
        "key selection at overlap {} (tau {:.4}): {} accepted, {} exhausted after {} attempts",
        cfg.overlap,
        sel.tau,
        sel.outcomes.len(),
        sel.exhausted.len(),
        cfg.max_attempts
    );
    if !sel.exhausted.is_empty() {
        if args.fill_exhausted {
            println!("best-effort keys written for exhausted subjects");
        } else {
            return Err(CliError::Exhausted {
                count: sel.exhausted.len(),
                subjects: sel.exhausted_subjects().join(" "),
            });
        }
    }
    Ok(sel)
}
