//! The polynomial protection transform.
//!
//! An embedding `v` of length `n` is cut into windows of `m` consecutive
//! elements taken at stride `m - overlap`; the last window is completed with
//! zeros. Each window maps to one protected element
//!
//! ```text
//! p_j = c_1 * v[j*s + 0]^e_1 + ... + c_m * v[j*s + m-1]^e_m,   s = m - overlap
//! ```
//!
//! where the subject's coefficients `C` are distinct non-zero integers and its
//! exponents `E` are a permutation of `1..=m`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::embeddings::{check_label, csv_reader, parse_finite, parse_numbered_header, write_values, Embedding};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::seed;
use crate::vecops::{first_non_finite, powi};

pub const DEFAULT_SET_SIZE: usize = 5;
pub const DEFAULT_C_RANGE: u32 = 50;

/// Number of windows of width `m` at stride `m - overlap` needed to cover
/// `n` elements, padding the last window with zeros.
pub fn output_dim(n: usize, m: usize, overlap: usize) -> Result<usize> {
    if m == 0 || m > n {
        return Err(Error::Parameter(format!(
            "window size m={m} must satisfy 1 <= m <= n={n}"
        )));
    }
    if overlap >= m {
        return Err(Error::Parameter(format!(
            "overlap {overlap} must be at most m - 1 = {}",
            m - 1
        )));
    }
    let stride = m - overlap;
    Ok((n - m).div_ceil(stride) + 1)
}

/// A subject's secret parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keys {
    subject: String,
    overlap: usize,
    coefficients: Vec<i32>,
    exponents: Vec<u32>,
}

impl Keys {
    pub fn new(
        subject: impl Into<String>,
        overlap: usize,
        coefficients: Vec<i32>,
        exponents: Vec<u32>,
    ) -> Result<Self> {
        let keys = Keys {
            subject: subject.into(),
            overlap,
            coefficients,
            exponents,
        };
        keys.validate()?;
        Ok(keys)
    }

    fn validate(&self) -> Result<()> {
        let m = self.coefficients.len();
        if self.subject.is_empty() {
            return Err(Error::Invariant("empty subject label".into()));
        }
        if m == 0 {
            return Err(Error::Invariant("empty coefficient list".into()));
        }
        if self.exponents.len() != m {
            return Err(Error::Invariant(format!(
                "{} exponents for {m} coefficients",
                self.exponents.len()
            )));
        }
        if self.coefficients.contains(&0) {
            return Err(Error::Invariant("coefficients must be non-zero".into()));
        }
        let distinct: HashSet<_> = self.coefficients.iter().collect();
        if distinct.len() != m {
            return Err(Error::Invariant("coefficients must be unique".into()));
        }
        let mut sorted = self.exponents.clone();
        sorted.sort_unstable();
        if sorted.iter().zip(1u32..).any(|(&e, want)| e != want) {
            return Err(Error::Invariant(format!(
                "exponents {:?} are not a permutation of 1..={m}",
                self.exponents
            )));
        }
        if self.overlap >= m {
            return Err(Error::Invariant(format!(
                "overlap {} must be at most m - 1 = {}",
                self.overlap,
                m - 1
            )));
        }
        Ok(())
    }

    /// Checks `|c_i| <= c_range` for every coefficient.
    pub fn check_range(&self, c_range: u32) -> Result<()> {
        match self.coefficients.iter().find(|c| c.unsigned_abs() > c_range) {
            Some(c) => Err(Error::Invariant(format!(
                "coefficient {c} outside [-{c_range}, {c_range}]"
            ))),
            None => Ok(()),
        }
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn m(&self) -> usize {
        self.coefficients.len()
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn stride(&self) -> usize {
        self.m() - self.overlap
    }

    pub fn coefficients(&self) -> &[i32] {
        &self.coefficients
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    /// Same exponents and overlap, different coefficients.
    pub fn with_coefficients(&self, coefficients: Vec<i32>) -> Result<Self> {
        Keys::new(self.subject.clone(), self.overlap, coefficients, self.exponents.clone())
    }
}

/// Draws `m` distinct coefficients uniformly from `{-c_range..-1, 1..c_range}`
/// and a uniform permutation of `1..=m` as exponents.
pub fn generate_random_keys(
    subject: &str,
    m: usize,
    overlap: usize,
    c_range: u32,
    seed: u64,
) -> Result<Keys> {
    if m == 0 {
        return Err(Error::Parameter("m must be >= 1".into()));
    }
    if (c_range as usize) < m {
        return Err(Error::Parameter(format!(
            "c_range {c_range} too small for {m} distinct coefficients"
        )));
    }
    if overlap >= m {
        return Err(Error::Parameter(format!(
            "overlap {overlap} must be at most m - 1 = {}",
            m - 1
        )));
    }
    let mut rng = seed::rng(seed);
    let range = c_range as i32;
    let coefficients = rand::seq::index::sample(&mut rng, 2 * c_range as usize, m)
        .into_iter()
        .map(|i| {
            let i = i as i32;
            if i < range {
                i - range
            } else {
                i - range + 1
            }
        })
        .collect();
    let mut exponents: Vec<u32> = (1..=m as u32).collect();
    exponents.shuffle(&mut rng);
    Keys::new(subject, overlap, coefficients, exponents)
}

fn check_input(v: &[f64], keys: &Keys) -> Result<()> {
    if v.len() < keys.m() {
        return Err(Error::Dimension {
            expected: keys.m(),
            found: v.len(),
        });
    }
    if let Some(index) = first_non_finite(v) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// Writes the protected vector of `v` into `out`, which must have length
/// `output_dim(v.len(), m, overlap)`. No validation; used in solver loops.
pub(crate) fn protect_into(v: &[f64], keys: &Keys, out: &mut [f64]) {
    windows_into(v, &keys.coefficients, &keys.exponents, keys.stride(), out);
}

fn windows_into<C: Copy + Into<f64>>(v: &[f64], coefficients: &[C], exponents: &[u32], stride: usize, out: &mut [f64]) {
    let n = v.len();
    for (j, p) in out.iter_mut().enumerate() {
        *p = coefficients
            .iter()
            .zip(exponents)
            .zip(j * stride..n)
            .map(|((&c, &e), i)| c.into() * powi(v[i], e))
            .sum();
    }
}

/// Window polynomial with arbitrary real coefficients and no key invariants.
///
/// `protect_values(v, keys)` equals this with the keys' coefficients; it is
/// exposed for algebraic checks (the transform is linear in `C` for fixed
/// `E`) where combined coefficient vectors need not be valid keys.
pub fn evaluate_windows(v: &[f64], coefficients: &[f64], exponents: &[u32], overlap: usize) -> Result<Vec<f64>> {
    let m = coefficients.len();
    if exponents.len() != m {
        return Err(Error::Dimension { expected: m, found: exponents.len() });
    }
    if let Some(index) = first_non_finite(v).or_else(|| first_non_finite(coefficients)) {
        return Err(Error::NonFinite { index });
    }
    let k = output_dim(v.len(), m, overlap)?;
    let mut out = vec![0.0; k];
    windows_into(v, coefficients, exponents, m - overlap, &mut out);
    Ok(out)
}

/// Applies the transform to a raw vector.
pub fn protect_values(v: &[f64], keys: &Keys) -> Result<Vec<f64>> {
    check_input(v, keys)?;
    let k = output_dim(v.len(), keys.m(), keys.overlap())?;
    let mut out = vec![0.0; k];
    protect_into(v, keys, &mut out);
    Ok(out)
}

/// A protected template: the transform output for one sample of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectedTemplate {
    subject: String,
    sample: String,
    overlap: usize,
    values: Vec<f64>,
}

impl ProtectedTemplate {
    pub fn new(
        subject: impl Into<String>,
        sample: impl Into<String>,
        overlap: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let subject = subject.into();
        let sample = sample.into();
        if subject.is_empty() || sample.is_empty() {
            return Err(Error::Parameter("template labels must be non-empty".into()));
        }
        if values.is_empty() {
            return Err(Error::Parameter("template must have at least one element".into()));
        }
        if let Some(index) = first_non_finite(&values) {
            return Err(Error::NonFinite { index });
        }
        Ok(ProtectedTemplate {
            subject,
            sample,
            overlap,
            values,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn sample(&self) -> &str {
        &self.sample
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Protects one embedding with the given keys. The template is labelled with
/// the key's subject and the embedding's sample.
pub fn protect(embedding: &Embedding, keys: &Keys) -> Result<ProtectedTemplate> {
    let values = protect_values(embedding.values(), keys)?;
    ProtectedTemplate::new(keys.subject(), embedding.sample(), keys.overlap(), values)
}

/// Sparse `k x n` Jacobian of the transform at `v`.
///
/// Entry `(j, i)` is `c_r * e_r * v_i^(e_r - 1)` where `i = j*s + r`;
/// padding positions past `n` have no column.
pub fn jacobian(v: &[f64], keys: &Keys) -> Result<SparseMatrix> {
    check_input(v, keys)?;
    let k = output_dim(v.len(), keys.m(), keys.overlap())?;
    let mut jac = SparseMatrix::with_capacity(v.len(), k * keys.m());
    jacobian_into(v, keys, k, &mut jac);
    Ok(jac)
}

pub(crate) fn jacobian_into(v: &[f64], keys: &Keys, k: usize, jac: &mut SparseMatrix) {
    let stride = keys.stride();
    let n = v.len();
    jac.clear(n);
    for j in 0..k {
        let start = j * stride;
        for ((&c, &e), i) in keys.coefficients.iter().zip(&keys.exponents).zip(start..n) {
            jac.push(i, f64::from(c) * f64::from(e) * powi(v[i], e - 1));
        }
        jac.end_row();
    }
}

pub fn save_keys(keys: &[Keys], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = keys.first().map_or(DEFAULT_SET_SIZE, Keys::m);
    if let Some(bad) = keys.iter().find(|k| k.m() != m) {
        return Err(Error::Parameter(format!(
            "mixed set sizes in one key file ({} vs {m})",
            bad.m()
        )));
    }
    for k in keys {
        check_label(k.subject())?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = String::from("subject,m,overlap");
    (1..=m).for_each(|i| header.push_str(&format!(",c{i}")));
    (1..=m).for_each(|i| header.push_str(&format!(",e{i}")));
    writeln!(w, "{header}").map_err(io)?;
    for k in keys {
        write!(w, "{},{},{}", k.subject(), k.m(), k.overlap()).map_err(io)?;
        for c in k.coefficients() {
            write!(w, ",{c}").map_err(io)?;
        }
        for e in k.exponents() {
            write!(w, ",{e}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_keys(path: impl AsRef<Path>) -> Result<Vec<Keys>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| Error::from_csv(path, e))?.clone();
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    let bad_header = || Error::format(1, "expected header `subject,m,overlap,c1..cm,e1..em`");
    if fields.len() < 5 || fields[..3] != ["subject", "m", "overlap"] || (fields.len() - 3) % 2 != 0 {
        return Err(bad_header());
    }
    let m = (fields.len() - 3) / 2;
    for i in 0..m {
        if fields[3 + i] != format!("c{}", i + 1) || fields[3 + m + i] != format!("e{}", i + 1) {
            return Err(bad_header());
        }
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::from_csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != fields.len() {
            return Err(Error::format(
                line,
                format!("expected {} fields, found {}", fields.len(), record.len()),
            ));
        }
        let int = |s: &str| -> Result<i64> {
            s.trim()
                .parse()
                .map_err(|_| Error::format(line, format!("not an integer: `{s}`")))
        };
        let row_m = int(&record[1])?;
        if row_m != m as i64 {
            return Err(Error::format(line, format!("row m={row_m} but header has m={m}")));
        }
        let overlap = usize::try_from(int(&record[2])?)
            .map_err(|_| Error::Invariant("negative overlap".into()))?;
        let coefficients = (0..m)
            .map(|i| {
                let c = int(&record[3 + i])?;
                i32::try_from(c).map_err(|_| Error::format(line, format!("coefficient {c} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let exponents = (0..m)
            .map(|i| {
                let e = int(&record[3 + m + i])?;
                u32::try_from(e).map_err(|_| Error::Invariant(format!("exponent {e} is negative")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Keys::new(&record[0], overlap, coefficients, exponents)?);
    }
    Ok(out)
}

pub fn save_templates(templates: &[ProtectedTemplate], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let k = templates.first().map_or(0, |t| t.values().len());
    if templates.iter().any(|t| t.values().len() != k) {
        return Err(Error::Parameter("templates of different lengths in one file".into()));
    }
    for t in templates {
        check_label(t.subject())?;
        check_label(t.sample())?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    crate::embeddings::write_numbered_header(&mut w, &["subject", "sample", "overlap"], "p", k)
        .map_err(io)?;
    for t in templates {
        write!(w, "{},{},{}", t.subject(), t.sample(), t.overlap()).map_err(io)?;
        write_values(&mut w, t.values()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<ProtectedTemplate>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| Error::from_csv(path, e))?.clone();
    let k = parse_numbered_header(&header, &["subject", "sample", "overlap"], "p")?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::from_csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != k + 3 {
            return Err(Error::format(
                line,
                format!("expected {} fields, found {}", k + 3, record.len()),
            ));
        }
        let overlap: usize = record[2]
            .trim()
            .parse()
            .map_err(|_| Error::format(line, "bad overlap"))?;
        let values = record
            .iter()
            .skip(3)
            .map(|f| parse_finite(f, line))
            .collect::<Result<Vec<_>>>()?;
        if !seen.insert((record[0].to_string(), record[1].to_string())) {
            return Err(Error::DuplicateSample {
                identity: record[0].to_string(),
                sample: record[1].to_string(),
            });
        }
        out.push(
            ProtectedTemplate::new(&record[0], &record[1], overlap, values)
                .map_err(|e| Error::format(line, e.to_string()))?,
        );
    }
    Ok(out)
}
