use std::collections::HashMap;
use std::path::PathBuf;

use polyprotect::seed;
use polyprotect::transform::{
    generate_random_keys, load_keys, output_dim, protect as protect_one, save_keys, save_templates, Keys,
};
use polyprotect::Error;

use crate::config::{RunConfig, Tunables};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;

use super::load_prepared;

/// Protect every embedding with its subject's keys.
#[derive(Debug, Clone, clap::Args)]
pub struct ProtectArgs {
    /// Input embeddings CSV
    #[arg(long)]
    pub emb: PathBuf,
    /// Output protected templates CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Existing keys CSV (one row per subject)
    #[arg(long, conflicts_with = "keys_out")]
    pub keys: Option<PathBuf>,
    /// Generate fresh random keys and write them here
    #[arg(long)]
    pub keys_out: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: Tunables,
}

/// Random keys for one subject. The seed ignores the overlap, so the same
/// subject gets the same coefficients and exponents at every overlap.
pub(crate) fn subject_keys(subject: &str, cfg: &RunConfig) -> CliResult<Keys> {
    let s = seed::derive(&[cfg.stream("keys")?, seed::label_hash(subject)]);
    Ok(generate_random_keys(subject, cfg.m, cfg.overlap, cfg.c_range, s)?)
}

pub fn protect(args: &ProtectArgs, cfg: &RunConfig) -> CliResult<()> {
    if args.keys.is_some() == args.keys_out.is_some() {
        return Err(CliError::usage("protect needs exactly one of --keys or --keys-out"));
    }
    let set = load_prepared(&args.emb, cfg)?;
    let identities = set.identities();

    let keys: Vec<Keys> = match (&args.keys, &args.keys_out) {
        (Some(path), None) => {
            let mut by_subject: HashMap<String, Keys> =
                load_keys(path)?.into_iter().map(|k| (k.subject().to_string(), k)).collect();
            identities
                .iter()
                .map(|id| {
                    by_subject
                        .remove(*id)
                        .ok_or_else(|| CliError::Core(Error::KeyMismatch(format!("no keys for subject {id}"))))
                })
                .collect::<CliResult<_>>()?
        }
        (None, Some(out)) => {
            let keys = identities
                .iter()
                .map(|id| subject_keys(id, cfg))
                .collect::<CliResult<Vec<_>>>()?;
            save_keys(&keys, out)?;
            keys
        }
        _ => unreachable!("checked above"),
    };
    let by_subject: HashMap<&str, &Keys> = keys.iter().map(|k| (k.subject(), k)).collect();

    let templates = set
        .iter()
        .map(|e| protect_one(e, by_subject[e.identity()]))
        .collect::<Result<Vec<_>, _>>()?;
    save_templates(&templates, &args.out)?;

    let mut inputs = vec![args.emb.as_path()];
    let mut outputs = vec![args.out.as_path()];
    match (&args.keys, &args.keys_out) {
        (Some(k), _) => inputs.push(k),
        (_, Some(k)) => outputs.push(k),
        _ => {}
    }
    write_manifest("protect", cfg, &inputs, &outputs)?;

    let overlap = keys[0].overlap();
    println!(
        "protected {} embeddings of {} subjects: dim {} -> {} (m {}, overlap {})",
        templates.len(),
        keys.len(),
        set.dim(),
        output_dim(set.dim(), keys[0].m(), overlap)?,
        keys[0].m(),
        overlap
    );
    Ok(())
}
