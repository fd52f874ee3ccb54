//! Cross-module flows: synthesize, protect, score, attack and select keys.

use polyprotect::attack::{
    attack_campaign, load_attack_records, save_attack_records, AttackConfig, AttackTarget, SolverKind,
};
use polyprotect::embeddings::{
    estimate_distribution, generate_synthetic, load_embeddings, save_embeddings, EmbeddingSet, SyntheticSpec,
};
use polyprotect::keyselect::{select_keys_for_dataset, SelectionConfig};
use polyprotect::metrics::{
    fnmr_at_fmr, isr_at_threshold, score_embeddings, score_templates, threshold_at_fmr, IsrAggregation,
};
use polyprotect::transform::{
    generate_random_keys, load_keys, load_templates, protect, save_keys, save_templates, Keys, ProtectedTemplate,
};
use polyprotect::seed;

fn population(seed: u64) -> EmbeddingSet {
    generate_synthetic(&SyntheticSpec {
        identities: 12,
        samples_per_identity: 4,
        dim: 40,
        class_spread: 0.3,
        scale: 1.0,
        seed,
    })
    .unwrap()
}

fn keys_for(set: &EmbeddingSet, overlap: usize) -> Vec<Keys> {
    set.identities()
        .iter()
        .map(|id| generate_random_keys(id, 5, overlap, 50, seed::derive(&[9, seed::label_hash(id)])).unwrap())
        .collect()
}

fn protect_all(set: &EmbeddingSet, keys: &[Keys]) -> Vec<ProtectedTemplate> {
    set.iter()
        .map(|e| protect(e, keys.iter().find(|k| k.subject() == e.identity()).unwrap()).unwrap())
        .collect()
}

#[test]
fn files_round_trip_through_the_whole_flow() {
    let dir = tempfile::tempdir().unwrap();
    let set = population(1);
    let keys = keys_for(&set, 2);
    let templates = protect_all(&set, &keys);

    save_embeddings(&set, dir.path().join("e.csv")).unwrap();
    save_keys(&keys, dir.path().join("k.csv")).unwrap();
    save_templates(&templates, dir.path().join("t.csv")).unwrap();
    let set2 = load_embeddings(dir.path().join("e.csv")).unwrap();
    let keys2 = load_keys(dir.path().join("k.csv")).unwrap();
    assert_eq!(keys2, keys);
    assert_eq!(protect_all(&set2, &keys2), load_templates(dir.path().join("t.csv")).unwrap());
}

#[test]
fn protected_domain_still_verifies() {
    let set = population(2);
    let unprotected = score_embeddings(&set).unwrap();
    let protected = score_templates(&protect_all(&set, &keys_for(&set, 3))).unwrap();
    assert_eq!(protected.genuine().len(), unprotected.genuine().len());
    assert_eq!(protected.impostor().len(), unprotected.impostor().len());
    // Different keys per subject push impostors apart; genuine pairs stay close.
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(protected.genuine()) > mean(protected.impostor()) + 0.3);
    let (_, fnmr) = fnmr_at_fmr(&protected, 0.05).unwrap();
    assert!(fnmr < 0.2, "fnmr {fnmr}");
}

#[test]
fn cosine_attack_beats_euclidean_and_records_persist() {
    let dir = tempfile::tempdir().unwrap();
    let set = population(3);
    let keys = keys_for(&set, 1);
    let templates = protect_all(&set, &keys);
    let dist = estimate_distribution(&set).unwrap();
    let refs = set.references();
    let targets: Vec<AttackTarget> = refs
        .iter()
        .map(|e| AttackTarget {
            template: templates.iter().find(|t| t.subject() == e.identity() && t.sample() == e.sample()).unwrap(),
            keys: keys.iter().find(|k| k.subject() == e.identity()).unwrap(),
            truth: e.values(),
        })
        .collect();

    let run = |solver| {
        let cfg = AttackConfig { solver, guesses_per_template: 3, guess_seed: 5, ..AttackConfig::default() };
        attack_campaign(&targets, &dist, &cfg).unwrap()
    };
    let cosine = run(SolverKind::CosineQn);
    let euclid = run(SolverKind::EuclideanLm);
    assert!(cosine.mean_similarity() > euclid.mean_similarity());

    let path = dir.path().join("a.csv");
    save_attack_records(&cosine.records(), &path).unwrap();
    let records = load_attack_records(&path).unwrap();
    assert_eq!(records.len(), 12 * 3);

    let unprotected = score_embeddings(&set).unwrap();
    let tau = threshold_at_fmr(&unprotected, 0.01).unwrap();
    let best = isr_at_threshold(&records, tau, IsrAggregation::BestOfGuesses, false).unwrap();
    let per = isr_at_threshold(&records, tau, IsrAggregation::PerAttack, false).unwrap();
    assert!(best >= per);
}

#[test]
fn selection_at_full_overlap_exhausts_with_fallback() {
    // With overlap m - 1 the transform is nearly invertible, so a loose
    // threshold cannot be resisted and every subject falls back.
    let set = population(4);
    let refs = set.references();
    let dist = estimate_distribution(&set).unwrap();
    let cfg = SelectionConfig {
        overlap: 4,
        max_attempts: 2,
        selection_guesses: 1,
        key_seed: 11,
        guess_seed: 12,
        ..SelectionConfig::default()
    };
    let sel = select_keys_for_dataset(&refs[..4], &dist, &score_embeddings(&set).unwrap(), &cfg).unwrap();
    assert!(sel.outcomes.is_empty());
    assert_eq!(sel.exhausted.len(), 4);
    let order: Vec<&str> = refs[..4].iter().map(|e| e.identity()).collect();
    let fallback = sel.keys_with_fallback(&order);
    assert_eq!(fallback.iter().map(|k| k.subject()).collect::<Vec<_>>(), order);
    assert!(sel.exhausted.iter().all(|b| b.max_similarity >= sel.tau));
}
