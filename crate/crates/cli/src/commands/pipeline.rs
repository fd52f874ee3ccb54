use std::path::PathBuf;

use polyprotect::attack::SolverKind;

use crate::config::{RunConfig, Solver, Tunables};
use crate::error::CliResult;

use super::{
    attack, create_dir, eval, gen_synth, protect, report, AttackArgs, EvalArgs, ProtectArgs, ReportArgs, SynthArgs,
};

/// Synthesize, protect at every configured overlap, evaluate, attack with
/// both solvers and report.
#[derive(Debug, Clone, clap::Args)]
pub struct PipelineArgs {
    /// Output directory
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub embeddings: PathBuf,
    /// `(overlap, keys, protected)`
    pub protected: Vec<(usize, PathBuf, PathBuf)>,
    pub eval_dir: PathBuf,
    /// `(label, records)`
    pub attacks: Vec<(String, PathBuf)>,
    pub report_dir: PathBuf,
}

const SOLVERS: [SolverKind; 2] = [SolverKind::EuclideanLm, SolverKind::CosineQn];

pub fn pipeline(args: &PipelineArgs, cfg: &RunConfig) -> CliResult<PipelineOutputs> {
    cfg.require_seed()?;
    let dir = &args.out_dir;
    create_dir(dir)?;
    let tunables = Tunables::default();

    let embeddings = dir.join("embeddings.csv");
    gen_synth(&SynthArgs { out: embeddings.clone(), tunables: tunables.clone() }, cfg)?;

    let mut protected = Vec::new();
    for &o in &cfg.overlaps.0 {
        let ocfg = RunConfig { overlap: o, ..cfg.clone() };
        let keys = dir.join(format!("keys_o{o}.csv"));
        let out = dir.join(format!("protected_o{o}.csv"));
        protect(
            &ProtectArgs {
                emb: embeddings.clone(),
                out: out.clone(),
                keys: None,
                keys_out: Some(keys.clone()),
                tunables: tunables.clone(),
            },
            &ocfg,
        )?;
        protected.push((o, keys, out));
    }

    let eval_dir = dir.join("eval");
    eval(
        &EvalArgs {
            emb: Some(embeddings.clone()),
            protected: protected.iter().map(|(o, _, p)| format!("o{o}={}", p.display())).collect(),
            out_dir: eval_dir.clone(),
            tunables: tunables.clone(),
        },
        cfg,
    )?;

    let mut attacks = Vec::new();
    for (o, keys, prot) in &protected {
        for solver in SOLVERS {
            let label = format!("o{o}_{solver}");
            let out = dir.join(format!("attack_{label}.csv"));
            let acfg = RunConfig { overlap: *o, solver: Solver(solver), ..cfg.clone() };
            attack(
                &AttackArgs {
                    protected: prot.clone(),
                    keys: keys.clone(),
                    emb: embeddings.clone(),
                    out: out.clone(),
                    hist_out: None,
                    bests_out: None,
                    tunables: tunables.clone(),
                },
                &acfg,
            )?;
            attacks.push((label, out));
        }
    }

    let report_dir = dir.join("report");
    report(
        &ReportArgs {
            scores: eval_dir.join("scores_unprotected.csv"),
            attack: attacks.iter().map(|(l, p)| format!("{l}={}", p.display())).collect(),
            out_dir: report_dir.clone(),
            tunables,
        },
        cfg,
    )?;

    Ok(PipelineOutputs { embeddings, protected, eval_dir, attacks, report_dir })
}
