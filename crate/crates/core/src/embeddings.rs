//! Unprotected face embeddings: data model, CSV IO, normalization, a
//! synthetic identity-clustered generator, and the per-dimension statistics
//! an attacker uses to draw initial guesses.
//!
//! The CSV layout is `identity,sample,f0,...,f{n-1}` with one embedding per
//! row. Values are written in Rust's shortest round-trip float notation, so
//! `load(save(set))` is exact.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;
use crate::vecops::{first_non_finite, norm};

/// Smallest standard deviation reported by [`estimate_distribution`].
pub const STDDEV_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    identity: String,
    sample: String,
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(
        identity: impl Into<String>,
        sample: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let identity = identity.into();
        let sample = sample.into();
        if identity.is_empty() || sample.is_empty() {
            return Err(Error::Parameter(
                "identity and sample labels must be non-empty".into(),
            ));
        }
        if values.is_empty() {
            return Err(Error::Parameter("embedding must have at least one element".into()));
        }
        if let Some(index) = first_non_finite(&values) {
            return Err(Error::NonFinite { index });
        }
        Ok(Embedding {
            identity,
            sample,
            values,
        })
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn sample(&self) -> &str {
        &self.sample
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Same labels, new values (re-validated).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Embedding::new(self.identity.clone(), self.sample.clone(), values)
    }
}

/// An ordered collection of embeddings sharing one dimension, with unique
/// `(identity, sample)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    embeddings: Vec<Embedding>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("embedding dimension must be >= 1".into()));
        }
        Ok(EmbeddingSet {
            dim,
            embeddings: Vec::new(),
        })
    }

    pub fn from_embeddings(dim: usize, embeddings: Vec<Embedding>) -> Result<Self> {
        let mut set = EmbeddingSet::new(dim)?;
        let mut seen = HashSet::with_capacity(embeddings.len());
        for e in embeddings {
            set.check_member(&e, &mut seen)?;
            set.embeddings.push(e);
        }
        Ok(set)
    }

    fn check_member(
        &self,
        e: &Embedding,
        seen: &mut HashSet<(String, String)>,
    ) -> Result<()> {
        if e.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: e.dim(),
            });
        }
        if !seen.insert((e.identity.clone(), e.sample.clone())) {
            return Err(Error::DuplicateSample {
                identity: e.identity.clone(),
                sample: e.sample.clone(),
            });
        }
        Ok(())
    }

    pub fn push(&mut self, e: Embedding) -> Result<()> {
        let mut seen: HashSet<_> = self
            .embeddings
            .iter()
            .map(|x| (x.identity.clone(), x.sample.clone()))
            .collect();
        self.check_member(&e, &mut seen)?;
        self.embeddings.push(e);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Embedding> {
        self.embeddings.iter()
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    /// Distinct identities in first-appearance order.
    pub fn identities(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.embeddings
            .iter()
            .map(|e| e.identity())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    /// The first sample of every identity, in first-appearance order.
    pub fn references(&self) -> Vec<&Embedding> {
        let mut seen = HashSet::new();
        self.embeddings
            .iter()
            .filter(|e| seen.insert(e.identity()))
            .collect()
    }

    /// Applies `f` to every value vector, keeping labels.
    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let embeddings = self
            .embeddings
            .iter()
            .map(|e| e.with_values(f(e.values())?))
            .collect::<Result<Vec<_>>>()?;
        let dim = embeddings.first().map_or(self.dim, Embedding::dim);
        EmbeddingSet::from_embeddings(dim, embeddings)
    }
}

impl<'a> IntoIterator for &'a EmbeddingSet {
    type Item = &'a Embedding;
    type IntoIter = std::slice::Iter<'a, Embedding>;

    fn into_iter(self) -> Self::IntoIter {
        self.embeddings.iter()
    }
}

/// Parses a header of the form `<fixed[0]>,...,<fixed[j]>,<prefix>0,<prefix>1,...`
/// and returns the number of trailing numbered columns.
pub(crate) fn parse_numbered_header(
    header: &csv::StringRecord,
    fixed: &[&str],
    prefix: &str,
) -> Result<usize> {
    let bad = || {
        let expected = fixed.join(",");
        Error::format(1, format!("expected header `{expected},{prefix}0,...`"))
    };
    if header.len() < fixed.len() {
        return Err(bad());
    }
    for (got, want) in header.iter().zip(fixed) {
        if got.trim() != *want {
            return Err(bad());
        }
    }
    for (i, col) in header.iter().skip(fixed.len()).enumerate() {
        if col.trim() != format!("{prefix}{i}") {
            return Err(bad());
        }
    }
    Ok(header.len() - fixed.len())
}

pub(crate) fn parse_finite(field: &str, line: u64) -> Result<f64> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::format(line, format!("not a number: `{field}`")))?;
    if !x.is_finite() {
        return Err(Error::format(line, format!("non-finite value `{field}`")));
    }
    Ok(x)
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| Error::from_csv(path, e))?.clone();
    let dim = parse_numbered_header(&header, &["identity", "sample"], "f")?;
    if dim == 0 {
        return Err(Error::format(1, "header declares no feature columns"));
    }
    let mut set = EmbeddingSet::new(dim)?;
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::from_csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 2 {
            return Err(Error::format(
                line,
                format!("expected {} fields, found {}", dim + 2, record.len()),
            ));
        }
        let values = record
            .iter()
            .skip(2)
            .map(|f| parse_finite(f, line))
            .collect::<Result<Vec<_>>>()?;
        let e = Embedding::new(&record[0], &record[1], values)
            .map_err(|err| Error::format(line, err.to_string()))?;
        set.check_member(&e, &mut seen)?;
        set.embeddings.push(e);
    }
    Ok(set)
}

pub(crate) fn write_numbered_header<W: Write>(
    w: &mut W,
    fixed: &[&str],
    prefix: &str,
    count: usize,
) -> std::io::Result<()> {
    write!(w, "{}", fixed.join(","))?;
    for i in 0..count {
        write!(w, ",{prefix}{i}")?;
    }
    writeln!(w)
}

pub(crate) fn write_values<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        write!(w, ",{v}")?;
    }
    writeln!(w)
}

/// Rejects labels that would need CSV quoting; the writers emit plain fields.
pub(crate) fn check_label(label: &str) -> Result<()> {
    if label.contains([',', '"', '\n', '\r']) {
        return Err(Error::Parameter(format!(
            "label `{label}` contains a CSV delimiter or quote"
        )));
    }
    Ok(())
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for e in set {
        check_label(e.identity())?;
        check_label(e.sample())?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write_numbered_header(&mut w, &["identity", "sample"], "f", set.dim()).map_err(io)?;
    for e in set {
        write!(w, "{},{}", e.identity(), e.sample()).map_err(io)?;
        write_values(&mut w, e.values()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-element range used by min-max normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxStats {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxStats {
    pub fn from_set(set: &EmbeddingSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut mins = vec![f64::INFINITY; set.dim()];
        let mut maxs = vec![f64::NEG_INFINITY; set.dim()];
        for e in set {
            for (i, &v) in e.values().iter().enumerate() {
                mins[i] = mins[i].min(v);
                maxs[i] = maxs[i].max(v);
            }
        }
        Ok(MinMaxStats { mins, maxs })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Normalization {
    /// Unit Euclidean norm.
    #[default]
    L2,
    /// Affine map of each element from `[min_i, max_i]` onto `[-1, 1]`.
    MinMax(MinMaxStats),
}

pub fn normalize(v: &[f64], mode: &Normalization) -> Result<Vec<f64>> {
    match mode {
        Normalization::L2 => {
            let n = norm(v);
            if n == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(v.iter().map(|x| x / n).collect())
        }
        Normalization::MinMax(stats) => {
            if stats.mins.len() != v.len() || stats.maxs.len() != v.len() {
                return Err(Error::Dimension {
                    expected: stats.mins.len(),
                    found: v.len(),
                });
            }
            v.iter()
                .zip(stats.mins.iter().zip(&stats.maxs))
                .enumerate()
                .map(|(index, (&x, (&lo, &hi)))| {
                    if hi <= lo {
                        return Err(Error::DegenerateRange { index });
                    }
                    Ok(2.0 * (x - lo) / (hi - lo) - 1.0)
                })
                .collect()
        }
    }
}

pub fn normalize_set(set: &EmbeddingSet, mode: &Normalization) -> Result<EmbeddingSet> {
    set.try_map(|v| normalize(v, mode))
}

/// Parameters of the synthetic identity-clustered generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    /// Within-class noise norm relative to the unit centroid.
    pub class_spread: f64,
    /// Euclidean norm of every generated sample.
    pub scale: f64,
    pub seed: u64,
}

/// Draws one unit-sphere centroid per identity and, for each sample,
/// `scale * normalize(centroid + class_spread * noise)`, where `noise` is an
/// isotropic Gaussian with per-element variance `1 / dim`.
///
/// Identity labels are `id0000, id0001, ...`, sample labels `s00, s01, ...`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EmbeddingSet> {
    if spec.identities == 0 || spec.samples_per_identity == 0 {
        return Err(Error::Parameter(
            "identity and sample counts must be >= 1".into(),
        ));
    }
    if spec.dim < 2 {
        return Err(Error::Parameter("synthetic dimension must be >= 2".into()));
    }
    if !(spec.class_spread >= 0.0 && spec.class_spread.is_finite()) {
        return Err(Error::Parameter("class_spread must be finite and >= 0".into()));
    }
    if !(spec.scale > 0.0 && spec.scale.is_finite()) {
        return Err(Error::Parameter("scale must be finite and > 0".into()));
    }

    let mut rng = seed::rng(spec.seed);
    let noise_sd = spec.class_spread / (spec.dim as f64).sqrt();
    let gaussian = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mut out = Vec::with_capacity(spec.identities * spec.samples_per_identity);
    for id in 0..spec.identities {
        let centroid = loop {
            let raw: Vec<f64> = (0..spec.dim).map(|_| gaussian(&mut rng)).collect();
            if let Ok(c) = normalize(&raw, &Normalization::L2) {
                break c;
            }
        };
        for s in 0..spec.samples_per_identity {
            let values = loop {
                let raw: Vec<f64> = centroid
                    .iter()
                    .map(|c| c + noise_sd * gaussian(&mut rng))
                    .collect();
                if let Ok(u) = normalize(&raw, &Normalization::L2) {
                    break u.into_iter().map(|x| spec.scale * x).collect();
                }
            };
            out.push(Embedding::new(format!("id{id:04}"), format!("s{s:02}"), values)?);
        }
    }
    EmbeddingSet::from_embeddings(spec.dim, out)
}

/// Independent per-dimension Gaussian model of an embedding population.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementDistribution {
    means: Vec<f64>,
    stddevs: Vec<f64>,
}

impl ElementDistribution {
    pub fn new(means: Vec<f64>, stddevs: Vec<f64>) -> Result<Self> {
        if means.len() != stddevs.len() {
            return Err(Error::Dimension {
                expected: means.len(),
                found: stddevs.len(),
            });
        }
        if means.is_empty() {
            return Err(Error::EmptySet);
        }
        if let Some(index) = first_non_finite(&means).or_else(|| first_non_finite(&stddevs)) {
            return Err(Error::NonFinite { index });
        }
        let stddevs = stddevs.into_iter().map(|s| s.max(STDDEV_FLOOR)).collect();
        Ok(ElementDistribution { means, stddevs })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stddevs(&self) -> &[f64] {
        &self.stddevs
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// Sample mean and (N-1)-denominator standard deviation per dimension.
pub fn estimate_distribution(set: &EmbeddingSet) -> Result<ElementDistribution> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let count = set.len() as f64;
    let mut means = vec![0.0; set.dim()];
    for e in set {
        for (m, v) in means.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= count);

    let stddevs = if set.len() < 2 {
        vec![STDDEV_FLOOR; set.dim()]
    } else {
        let mut ss = vec![0.0; set.dim()];
        for e in set {
            for ((s, v), m) in ss.iter_mut().zip(e.values()).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        ss.into_iter().map(|s| (s / (count - 1.0)).sqrt()).collect()
    };
    ElementDistribution::new(means, stddevs)
}
