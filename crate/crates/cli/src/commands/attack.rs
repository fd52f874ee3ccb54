use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use polyprotect::attack::{attack_campaign, save_attack_records, AttackCampaignResult, AttackTarget};
use polyprotect::embeddings::estimate_distribution;
use polyprotect::metrics::export_histogram;
use polyprotect::transform::{load_keys, load_templates, Keys};
use polyprotect::Error;

use crate::config::{RunConfig, Tunables};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;

use super::{load_prepared, write_text};

/// Invert the first protected template of every subject from random
/// starting points.
#[derive(Debug, Clone, clap::Args)]
pub struct AttackArgs {
    /// Protected templates CSV
    #[arg(long)]
    pub protected: PathBuf,
    /// Keys CSV used to protect them
    #[arg(long)]
    pub keys: PathBuf,
    /// Embeddings the templates came from; used for scoring and for the
    /// attacker's per-element distribution
    #[arg(long)]
    pub emb: PathBuf,
    /// Output attack records CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram CSV of all inversion similarities
    #[arg(long)]
    pub hist_out: Option<PathBuf>,
    /// Best similarity per subject CSV
    #[arg(long)]
    pub bests_out: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: Tunables,
}

pub fn attack(args: &AttackArgs, cfg: &RunConfig) -> CliResult<AttackCampaignResult> {
    let set = load_prepared(&args.emb, cfg)?;
    let templates = load_templates(&args.protected)?;
    let keys = load_keys(&args.keys)?;
    let by_subject: HashMap<&str, &Keys> = keys.iter().map(|k| (k.subject(), k)).collect();
    let by_sample: HashMap<(&str, &str), &[f64]> =
        set.iter().map(|e| ((e.identity(), e.sample()), e.values())).collect();

    let mut seen = HashSet::new();
    let mut targets = Vec::new();
    for t in &templates {
        if !seen.insert(t.subject()) {
            continue;
        }
        let keys = by_subject
            .get(t.subject())
            .ok_or_else(|| Error::KeyMismatch(format!("no keys for subject {}", t.subject())))?;
        let truth = by_sample.get(&(t.subject(), t.sample())).ok_or_else(|| {
            Error::InsufficientData(format!("no embedding for ({}, {})", t.subject(), t.sample()))
        })?;
        targets.push(AttackTarget { template: t, keys, truth });
    }
    if targets.is_empty() {
        return Err(CliError::Core(Error::InsufficientData("no templates to attack".into())));
    }

    let dist = estimate_distribution(&set)?;
    let campaign = attack_campaign(&targets, &dist, &cfg.attack_config(cfg.solver.0)?)?;
    save_attack_records(&campaign.records(), &args.out)?;

    let mut outputs = vec![args.out.as_path()];
    if let Some(p) = &args.hist_out {
        export_histogram(&campaign.similarities(), cfg.bins, p)?;
        outputs.push(p);
    }
    if let Some(p) = &args.bests_out {
        let mut text = String::from("subject,best_similarity\n");
        for (s, b) in campaign.best_similarities() {
            text.push_str(&format!("{s},{b}\n"));
        }
        write_text(p, &text)?;
        outputs.push(p);
    }
    let inputs: [&Path; 3] = [&args.protected, &args.keys, &args.emb];
    write_manifest("attack", cfg, &inputs, &outputs)?;

    let bests = campaign.best_similarities();
    let best_mean = bests.iter().map(|b| b.1).sum::<f64>() / bests.len() as f64;
    let converged = campaign.results().iter().filter(|r| r.converged).count();
    println!(
        "{} attack on {} templates x {} guesses: mean similarity {:.4}, mean best-of-guesses {:.4}, {}/{} converged",
        cfg.solver.0,
        targets.len(),
        cfg.guesses,
        campaign.mean_similarity(),
        best_mean,
        converged,
        campaign.results().len()
    );
    Ok(campaign)
}
