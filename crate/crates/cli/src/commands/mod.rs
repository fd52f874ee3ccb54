mod attack;
mod eval;
mod pipeline;
mod protect;
mod report;
mod select;
mod synth;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use polyprotect::embeddings::{load_embeddings, normalize_set, EmbeddingSet};
use polyprotect::metrics::{percent, ScoreSet};
use polyprotect::Error;

pub use attack::{attack, AttackArgs};
pub use eval::{eval, EvalArgs};
pub use pipeline::{pipeline, PipelineArgs, PipelineOutputs};
pub use protect::{protect, ProtectArgs};
pub use report::{report, ReportArgs};
pub use select::{select_keys, SelectArgs};
pub use synth::{gen_synth, SynthArgs};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Loads embeddings and applies the configured normalization.
pub(crate) fn load_prepared(path: &Path, cfg: &RunConfig) -> CliResult<EmbeddingSet> {
    let set = load_embeddings(path)?;
    Ok(match cfg.normalization_for(&set)? {
        Some(mode) => normalize_set(&set, &mode)?,
        None => set,
    })
}

/// FMR anchor as a percentage without trailing zeros, e.g. `0.01%`.
pub(crate) fn fmr_label(t: f64) -> String {
    let s = format!("{:.6}", 100.0 * t);
    format!("{}%", s.trim_end_matches('0').trim_end_matches('.'))
}

/// Rate as a one-decimal percentage.
pub(crate) fn pct(rate: f64) -> String {
    format!("{}%", percent(rate))
}

/// `label=path`, or a bare path labelled by its file stem.
pub(crate) fn parse_labeled(arg: &str) -> CliResult<(String, PathBuf)> {
    let (label, path) = match arg.split_once('=') {
        Some((l, p)) => (l.trim().to_string(), PathBuf::from(p)),
        None => {
            let p = PathBuf::from(arg);
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (stem, p)
        }
    };
    if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
        return Err(CliError::usage(format!(
            "invalid label in '{arg}': use letters, digits, '_', '-' or '.'"
        )));
    }
    Ok((label, path))
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `kind,score` rows for both score classes.
pub(crate) fn save_scores(s: &ScoreSet, path: &Path) -> CliResult<()> {
    let mut text = String::from("kind,score\n");
    for (kind, scores) in [("genuine", s.genuine()), ("impostor", s.impostor())] {
        for v in scores {
            text.push_str(&format!("{kind},{v}\n"));
        }
    }
    write_text(path, &text)
}

pub(crate) fn load_scores(path: &Path) -> CliResult<ScoreSet> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let bad = |line: usize, message: String| {
        CliError::Core(Error::Format {
            line: line as u64,
            message: format!("{}: {message}", path.display()),
        })
    };
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        let n = i + 1;
        if n == 1 {
            if line.trim() != "kind,score" {
                return Err(bad(n, "expected header 'kind,score'".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (kind, value) = line
            .split_once(',')
            .ok_or_else(|| bad(n, "expected two fields".into()))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| bad(n, format!("invalid score '{value}'")))?;
        match kind.trim() {
            "genuine" => genuine.push(v),
            "impostor" => impostor.push(v),
            other => return Err(bad(n, format!("unknown kind '{other}'"))),
        }
    }
    Ok(ScoreSet::new(genuine, impostor)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmr_labels() {
        assert_eq!(fmr_label(0.001), "0.1%");
        assert_eq!(fmr_label(0.0001), "0.01%");
        assert_eq!(fmr_label(0.2), "20%");
        assert_eq!(pct(0.25), "25.0%");
    }

    #[test]
    fn labels() {
        assert_eq!(parse_labeled("o2=a/b.csv").unwrap(), ("o2".into(), PathBuf::from("a/b.csv")));
        assert_eq!(parse_labeled("dir/att_o1.csv").unwrap().0, "att_o1");
        assert!(parse_labeled("a b=x.csv").is_err());
        assert!(parse_labeled("=x.csv").is_err());
    }

    #[test]
    fn scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = ScoreSet::new(vec![0.9, 0.7], vec![0.1, -0.2, 0.3]).unwrap();
        save_scores(&s, &p).unwrap();
        assert_eq!(load_scores(&p).unwrap(), s);
        fs::write(&p, "kind,score\nfoo,0.1\n").unwrap();
        assert!(matches!(load_scores(&p), Err(CliError::Core(Error::Format { line: 2, .. }))));
    }
}
