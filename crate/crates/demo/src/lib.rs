//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; seeds are `u32` so JavaScript can pass plain numbers.

use polyprotect::attack::{attack_template, AttackConfig, AttackTarget, SolverKind};
use polyprotect::embeddings::{estimate_distribution, generate_synthetic, EmbeddingSet, SyntheticSpec};
use polyprotect::metrics::{det_curve, score_embeddings, score_templates, threshold_at_fmr, DetCurve};
use polyprotect::seed;
use polyprotect::transform::{generate_random_keys, output_dim, protect, DEFAULT_C_RANGE, DEFAULT_SET_SIZE};
use polyprotect::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const PREVIEW: usize = 12;

fn to_js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Parameter(e.to_string()))
}

fn synthetic(identities: usize, samples: usize, dim: usize, spread: f64, seed: u32) -> Result<EmbeddingSet> {
    generate_synthetic(&SyntheticSpec {
        identities,
        samples_per_identity: samples,
        dim,
        class_spread: spread,
        scale: 1.0,
        seed: seed.into(),
    })
}

#[derive(Serialize)]
struct DimRow {
    overlap: usize,
    stride: usize,
    output_dim: usize,
}

pub fn dimension_rows(n: usize, m: usize) -> Result<String> {
    let rows = (0..m)
        .map(|o| Ok(DimRow { overlap: o, stride: m - o, output_dim: output_dim(n, m, o)? }))
        .collect::<Result<Vec<_>>>()?;
    json(&rows)
}

/// Output dimension for every overlap of windows of `m` over `n` elements.
#[wasm_bindgen]
pub fn dimensions(n: usize, m: usize) -> std::result::Result<String, JsError> {
    to_js(dimension_rows(n, m))
}

#[derive(Serialize)]
struct ProtectView {
    coefficients: Vec<i32>,
    exponents: Vec<u32>,
    input_dim: usize,
    output_dim: usize,
    embedding: Vec<f64>,
    protected: Vec<f64>,
}

pub fn protect_view(n: usize, overlap: usize, seed: u32) -> Result<String> {
    let set = synthetic(1, 1, n, 0.0, seed)?;
    let keys = generate_random_keys("id0000", DEFAULT_SET_SIZE, overlap, DEFAULT_C_RANGE, u64::from(seed) + 1)?;
    let e = &set.embeddings()[0];
    let p = protect(e, &keys)?;
    json(&ProtectView {
        coefficients: keys.coefficients().to_vec(),
        exponents: keys.exponents().to_vec(),
        input_dim: n,
        output_dim: p.values().len(),
        embedding: e.values().iter().take(PREVIEW).copied().collect(),
        protected: p.values().iter().take(PREVIEW).copied().collect(),
    })
}

/// Protects a random unit embedding of dimension `n` with random keys and
/// previews both vectors.
#[wasm_bindgen]
pub fn protect_random(n: usize, overlap: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(protect_view(n, overlap, seed))
}

#[derive(Serialize)]
struct InversionView {
    solver: &'static str,
    tau_strict: f64,
    tau_loose: f64,
    similarities: Vec<f64>,
    iterations: Vec<usize>,
}

pub fn inversion(dim: usize, overlap: usize, solver: &str, guesses: usize, seed: u32) -> Result<String> {
    let solver: SolverKind = solver.parse()?;
    let set = synthetic(20, 4, dim, 0.15, seed)?;
    let unprotected = score_embeddings(&set)?;
    let dist = estimate_distribution(&set)?;
    let victim = &set.embeddings()[0];
    let keys = generate_random_keys(victim.identity(), DEFAULT_SET_SIZE, overlap, DEFAULT_C_RANGE, u64::from(seed) + 1)?;
    let template = protect(victim, &keys)?;
    let cfg = AttackConfig {
        solver,
        guesses_per_template: guesses.clamp(1, 20),
        guess_seed: u64::from(seed) + 2,
        ..AttackConfig::default()
    };
    let target = AttackTarget { template: &template, keys: &keys, truth: victim.values() };
    let results = attack_template(&target, &dist, &cfg)?;
    json(&InversionView {
        solver: solver.as_str(),
        tau_strict: threshold_at_fmr(&unprotected, 1e-2)?,
        tau_loose: threshold_at_fmr(&unprotected, 0.2)?,
        similarities: results.iter().map(|r| r.inversion_similarity).collect(),
        iterations: results.iter().map(|r| r.iterations).collect(),
    })
}

/// Inverts one protected template of a small synthetic population with the
/// subject's keys known; `solver` is `euclidean` or `cosine`.
#[wasm_bindgen]
pub fn invert(dim: usize, overlap: usize, solver: &str, guesses: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(inversion(dim, overlap, solver, guesses, seed))
}

#[derive(Serialize)]
struct DetView {
    unprotected: Vec<[f64; 2]>,
    protected: Vec<[f64; 2]>,
}

fn points(c: &DetCurve) -> Vec<[f64; 2]> {
    c.points.iter().map(|p| [p.fmr, p.fnmr]).collect()
}

pub fn det_view(identities: usize, dim: usize, spread: f64, overlap: usize, seed: u32) -> Result<String> {
    let set = synthetic(identities, 5, dim, spread, seed)?;
    let templates = set
        .iter()
        .map(|e| {
            let s = seed::derive(&[u64::from(seed), seed::label_hash(e.identity())]);
            protect(e, &generate_random_keys(e.identity(), DEFAULT_SET_SIZE, overlap, DEFAULT_C_RANGE, s)?)
        })
        .collect::<Result<Vec<_>>>()?;
    json(&DetView {
        unprotected: points(&det_curve(&score_embeddings(&set)?, 100)?),
        protected: points(&det_curve(&score_templates(&templates)?, 100)?),
    })
}

/// DET curves of a synthetic population before and after protection.
#[wasm_bindgen]
pub fn det(identities: usize, dim: usize, spread: f64, overlap: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(det_view(identities, dim, spread, overlap, seed))
}
