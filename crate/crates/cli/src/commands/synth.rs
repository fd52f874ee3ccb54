use std::path::PathBuf;

use polyprotect::embeddings::{generate_synthetic, save_embeddings, SyntheticSpec};

use crate::config::{RunConfig, Tunables};
use crate::error::CliResult;
use crate::manifest::write_manifest;

/// Generate an identity-clustered synthetic embedding set.
#[derive(Debug, Clone, clap::Args)]
pub struct SynthArgs {
    /// Output embeddings CSV
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

pub fn gen_synth(args: &SynthArgs, cfg: &RunConfig) -> CliResult<()> {
    let set = generate_synthetic(&SyntheticSpec {
        identities: cfg.identities,
        samples_per_identity: cfg.samples,
        dim: cfg.dim,
        class_spread: cfg.class_spread,
        scale: cfg.scale,
        seed: cfg.stream("synth")?,
    })?;
    save_embeddings(&set, &args.out)?;
    write_manifest("gen-synth", cfg, &[], &[&args.out])?;
    println!(
        "wrote {} embeddings ({} identities x {} samples, dim {}) to {}",
        set.len(),
        cfg.identities,
        cfg.samples,
        cfg.dim,
        args.out.display()
    );
    Ok(())
}
