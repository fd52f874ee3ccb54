//! Run configuration: defaults, then an optional `key = value` file, then
//! command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use polyprotect::attack::{AttackConfig, SolverKind};
use polyprotect::embeddings::{EmbeddingSet, MinMaxStats, Normalization};
use polyprotect::keyselect::SelectionConfig;
use polyprotect::seed;
use polyprotect::solvers::{LmOptions, QnOptions};
use serde::{Serialize, Serializer};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    L2,
    Minmax,
    None,
}

impl FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "l2" => Ok(NormMode::L2),
            "minmax" => Ok(NormMode::Minmax),
            "none" => Ok(NormMode::None),
            _ => Err(format!("unknown normalization '{s}' (expected l2, minmax or none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Solver(pub SolverKind);

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse().map(Solver).map_err(|_| format!("unknown solver '{s}' (expected euclidean or cosine)"))
    }
}

impl Serialize for Solver {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.as_str())
    }
}

/// Comma-separated list value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|part| part.trim().parse().map_err(|_| format!("invalid list element '{}'", part.trim())))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

macro_rules! tunables {
    ($($field:ident : $ty:ty = $default:expr, $help:literal;)*) => {
        #[derive(Debug, Clone, PartialEq, Serialize)]
        pub struct RunConfig {
            pub seed: Option<u64>,
            $(pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { seed: None, $($field: $default,)* }
            }
        }

        impl RunConfig {
            /// Sets one tunable from its textual form.
            pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
                let bad = |e: String| CliError::usage(format!("{key}: {e}"));
                match key.replace('-', "_").as_str() {
                    "seed" => self.seed = Some(value.parse().map_err(|_| bad(format!("invalid seed '{value}'")))?),
                    $(stringify!($field) => {
                        self.$field = parse_value::<$ty>(value).map_err(bad)?;
                    })*
                    _ => return Err(CliError::usage(format!("unknown setting '{key}'"))),
                }
                Ok(())
            }
        }

        /// Experiment tunables shared by every command.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct Tunables {
            /// `key = value` settings file; flags given here override it
            #[arg(long, value_name = "FILE")]
            pub config: Option<PathBuf>,
            /// Master seed for every random stream
            #[arg(long)]
            pub seed: Option<u64>,
            $(
                #[doc = $help]
                #[arg(long)]
                pub $field: Option<$ty>,
            )*
        }

        impl Tunables {
            /// Defaults, then the config file, then explicit flags; validated.
            pub fn resolve(&self) -> CliResult<RunConfig> {
                let mut cfg = RunConfig::default();
                if let Some(path) = &self.config {
                    cfg.load_file(path)?;
                }
                if let Some(s) = self.seed {
                    cfg.seed = Some(s);
                }
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })*
                cfg.validate()?;
                Ok(cfg)
            }
        }
    };
}

fn parse_value<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| format!("invalid value '{value}': {e}"))
}

tunables! {
    identities: usize = 50, "Synthetic identities";
    samples: usize = 10, "Synthetic samples per identity";
    dim: usize = 512, "Embedding dimension";
    class_spread: f64 = 0.15, "Within-class noise norm relative to the unit centroid";
    scale: f64 = 1.0, "Global scale of synthetic embeddings";
    m: usize = 5, "Elements per polynomial window";
    overlap: usize = 0, "Window overlap (0..m-1)";
    overlaps: List<usize> = List(vec![0, 1, 2, 3, 4]), "Overlaps run by the pipeline";
    c_range: u32 = 50, "Coefficients are drawn from -c_range..=c_range without 0";
    normalization: NormMode = NormMode::L2, "Embedding normalization before protection: l2, minmax or none";
    solver: Solver = Solver(SolverKind::CosineQn), "Attack solver: euclidean or cosine";
    guesses: usize = 10, "Initial guesses per attacked template";
    max_iters: usize = 500, "Solver iteration cap";
    f_tol: f64 = 1e-10, "Relative objective-change tolerance";
    x_tol: f64 = 1e-10, "Relative step tolerance (least squares)";
    g_tol: f64 = 1e-8, "Gradient infinity-norm tolerance (quasi-Newton)";
    damping: f64 = 1e-3, "Initial Levenberg-Marquardt damping";
    fmr_anchors: List<f64> = List(vec![1e-3, 1e-4]), "FMR anchors for FNMR and ISR tables";
    selection_fmr: f64 = 0.2, "FMR anchor of the key-selection threshold";
    selection_guesses: usize = 3, "Attack guesses per key-selection attempt";
    max_attempts: usize = 200, "Key-selection attempts per subject";
    det_points: usize = 200, "Thresholds per DET curve (0 = every distinct score)";
    bins: usize = 40, "Histogram bins";
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::usage(msg()))
    }
}

fn fmr_ok(t: f64) -> bool {
    t > 0.0 && t <= 1.0
}

impl RunConfig {
    pub fn load_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::usage(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        check(self.identities >= 2, || "identities must be >= 2".into())?;
        check(self.samples >= 1, || "samples must be >= 1".into())?;
        check(self.m >= 1 && self.m <= self.dim, || format!("m = {} must be in 1..=dim ({})", self.m, self.dim))?;
        check(self.overlap < self.m, || format!("overlap {} must be at most m - 1 = {}", self.overlap, self.m - 1))?;
        check(!self.overlaps.0.is_empty(), || "overlaps must not be empty".into())?;
        for &o in &self.overlaps.0 {
            check(o < self.m, || format!("overlap {o} in overlaps must be at most m - 1 = {}", self.m - 1))?;
        }
        check(self.c_range as usize >= self.m, || {
            format!("c_range {} too small for {} distinct coefficients", self.c_range, self.m)
        })?;
        check(self.class_spread >= 0.0 && self.class_spread.is_finite(), || "class_spread must be >= 0".into())?;
        check(self.scale > 0.0 && self.scale.is_finite(), || "scale must be > 0".into())?;
        check(self.guesses >= 1, || "guesses must be >= 1".into())?;
        for (name, v) in [("f_tol", self.f_tol), ("x_tol", self.x_tol), ("g_tol", self.g_tol)] {
            check(v >= 0.0 && v.is_finite(), || format!("{name} must be a finite value >= 0"))?;
        }
        check(self.damping > 0.0 && self.damping.is_finite(), || "damping must be > 0".into())?;
        check(!self.fmr_anchors.0.is_empty(), || "fmr_anchors must not be empty".into())?;
        for &t in &self.fmr_anchors.0 {
            check(fmr_ok(t), || format!("FMR anchor {t} not in (0, 1]"))?;
        }
        check(fmr_ok(self.selection_fmr), || format!("selection_fmr {} not in (0, 1]", self.selection_fmr))?;
        check(self.selection_guesses >= 1, || "selection_guesses must be >= 1".into())?;
        check(self.max_attempts >= 1, || "max_attempts must be >= 1".into())?;
        check(self.bins >= 1, || "bins must be >= 1".into())
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::usage("--seed is required for this command (or `seed = N` in the config file)"))
    }

    /// Independent stream seed for one purpose.
    pub fn stream(&self, purpose: &str) -> CliResult<u64> {
        Ok(seed::derive(&[self.require_seed()?, seed::label_hash(purpose)]))
    }

    pub fn lm(&self) -> LmOptions {
        LmOptions {
            max_iters: self.max_iters,
            f_tol: self.f_tol,
            x_tol: self.x_tol,
            initial_damping: self.damping,
        }
    }

    pub fn qn(&self) -> QnOptions {
        QnOptions {
            max_iters: self.max_iters,
            g_tol: self.g_tol,
            f_tol: self.f_tol,
            check_gradient: None,
        }
    }

    pub fn attack_config(&self, solver: SolverKind) -> CliResult<AttackConfig> {
        Ok(AttackConfig {
            solver,
            guesses_per_template: self.guesses,
            guess_seed: self.stream("attack-guesses")?,
            lm: self.lm(),
            qn: self.qn(),
        })
    }

    pub fn selection_config(&self) -> CliResult<SelectionConfig> {
        Ok(SelectionConfig {
            target_fmr: self.selection_fmr,
            selection_guesses: self.selection_guesses,
            max_attempts: self.max_attempts,
            c_range: self.c_range,
            m: self.m,
            overlap: self.overlap,
            key_seed: self.stream("selection-keys")?,
            guess_seed: self.stream("selection-guesses")?,
            qn: self.qn(),
        })
    }

    /// The normalization to apply to `set`, if any.
    pub fn normalization_for(&self, set: &EmbeddingSet) -> CliResult<Option<Normalization>> {
        Ok(match self.normalization {
            NormMode::L2 => Some(Normalization::L2),
            NormMode::Minmax => Some(Normalization::MinMax(MinMaxStats::from_set(set)?)),
            NormMode::None => None,
        })
    }
}
