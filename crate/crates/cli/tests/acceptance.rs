//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Criteria 6, 7, 8, 10 and 12 share one benchmark `pipeline` run (seed 1,
//! default configuration). Key selection dominates the runtime; expect about
//! 15 minutes in the test profile.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use polyprotect::attack::{attack_template, build_cosine_problem, load_attack_records, AttackRecord, AttackTarget};
use polyprotect::embeddings::{estimate_distribution, load_embeddings, normalize_set, Normalization};
use polyprotect::linalg::SparseMatrix;
use polyprotect::metrics::{
    det_curve, fnmr_at_fmr, isr_at_threshold, score_embeddings, score_templates, threshold_at_fmr, IsrAggregation,
    ScoreSet,
};
use polyprotect::seed;
use polyprotect::solvers::{minimize_qn, solve_lm, FnLeastSquares, FnScalar, LmOptions, QnOptions, ScalarProblem};
use polyprotect::transform::{
    evaluate_windows, generate_random_keys, jacobian, load_keys, load_templates, output_dim, protect_values, Keys,
    ProtectedTemplate,
};
use polyprotect_cli::config::RunConfig;
use rand::Rng;

const SEED: u64 = 1;
const BIN: &str = env!("CARGO_BIN_EXE_polyprotect");
const ANCHOR: f64 = 1e-3;
const SELECTION_ANCHOR: f64 = 0.2;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn outcome(pass: bool, summary: impl Into<String>, details: Vec<String>) -> Outcome {
    Outcome { pass, summary: summary.into(), details }
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temp dir");
    WORK.set(work.path().to_path_buf()).expect("set once");

    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("dimensionality law", c1_dimensions),
        ("transform oracle equivalence", c2_oracle),
        ("coefficient linearity", c3_linearity),
        ("gradient checks", c4_gradients),
        ("solver sanity", c5_solvers),
        ("cosine beats euclidean", c6_solver_trend),
        ("similarity rises with overlap", c7_overlap_trend),
        ("key selection effectiveness", c8_key_selection),
        ("normalization lowers FNMR", c9_normalization),
        ("FNMR non-increasing in overlap", c10_accuracy_trend),
        ("metric contracts", c11_metric_contracts),
        ("pipeline determinism", c12_determinism),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        for d in &o.details {
            println!("      {d}");
        }
        println!(
            "{} [{:2}] {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.summary,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- helpers

static WORK: OnceLock<PathBuf> = OnceLock::new();
static BENCH: OnceLock<PathBuf> = OnceLock::new();

fn work(name: &str) -> PathBuf {
    let p = WORK.get().expect("work dir").join(name);
    fs::create_dir_all(&p).expect("create work dir");
    p
}

/// The benchmark pipeline output, produced on first use.
fn bench() -> &'static Path {
    BENCH.get_or_init(|| {
        let dir = work("bench_a");
        run_cli(&["pipeline", "--seed", "1", "--out-dir", s(&dir)]);
        dir
    })
}

fn run_cli(args: &[&str]) -> String {
    let out = Command::new(BIN).args(args).output().expect("spawn polyprotect");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "polyprotect {} failed ({}):\n{stdout}\n{}",
        args.join(" "),
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn rng(label: &str) -> impl Rng {
    seed::rng(seed::derive(&[SEED, seed::label_hash(label)]))
}

fn random_keys(r: &mut impl Rng, m: usize, overlap: usize) -> Keys {
    generate_random_keys("s", m, overlap, 50, r.random()).expect("valid key parameters")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn attack_records(overlap: usize, solver: &str) -> Vec<AttackRecord> {
    load_attack_records(bench().join(format!("attack_o{overlap}_{solver}.csv"))).expect("attack records")
}

fn unprotected_scores() -> ScoreSet {
    let set = load_embeddings(bench().join("embeddings.csv")).expect("embeddings");
    score_embeddings(&normalize_set(&set, &Normalization::L2).unwrap()).unwrap()
}

fn protected_fnmr(file: &Path) -> (f64, usize) {
    let scores = score_templates(&load_templates(file).expect("templates")).unwrap();
    (fnmr_at_fmr(&scores, ANCHOR).unwrap().1, scores.genuine().len())
}

// ------------------------------------------------------- structural checks

fn c1_dimensions() -> Outcome {
    let expected = [(0, 103), (1, 128), (2, 170), (3, 255), (4, 508)];
    let got: Vec<(usize, usize)> = expected.iter().map(|&(o, _)| (o, output_dim(512, 5, o).unwrap())).collect();
    outcome(
        got == expected,
        format!("dims for overlaps 0..4 = {:?}", got.iter().map(|g| g.1).collect::<Vec<_>>()),
        vec![],
    )
}

/// Window-by-window evaluation written from the definition, zero padding past
/// the end of the vector.
fn naive_protect(v: &[f64], c: &[f64], e: &[u32], overlap: usize) -> Vec<f64> {
    let (n, m) = (v.len(), c.len());
    let stride = m - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let mut p = 0.0;
        for i in 0..m {
            let x = if start + i < n { v[start + i] } else { 0.0 };
            p += c[i] * x.powi(e[i] as i32);
        }
        out.push(p);
        if start + m >= n {
            break;
        }
        start += stride;
    }
    out
}

fn c2_oracle() -> Outcome {
    let mut r = rng("c2");
    let mut worst = 0.0f64;
    let mut len_mismatch = 0;
    for _ in 0..1000 {
        let m = r.random_range(1..=7);
        let overlap = r.random_range(0..m);
        let n = r.random_range(m..=80);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let keys = random_keys(&mut r, m, overlap);
        let got = protect_values(&v, &keys).unwrap();
        let c: Vec<f64> = keys.coefficients().iter().map(|&x| x as f64).collect();
        let want = naive_protect(&v, &c, keys.exponents(), overlap);
        if got.len() != want.len() {
            len_mismatch += 1;
            continue;
        }
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        len_mismatch == 0 && worst <= 1e-12,
        format!("1000 cases, max |deviation| {worst:.2e} (limit 1e-12), {len_mismatch} length mismatches"),
        vec![],
    )
}

fn c3_linearity() -> Outcome {
    let mut r = rng("c3");
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m = r.random_range(1..=7);
        let overlap = r.random_range(0..m);
        let n = r.random_range(m..=80);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let k1 = random_keys(&mut r, m, overlap);
        let e = k1.exponents().to_vec();
        let k2 = Keys::new("s", overlap, random_keys(&mut r, m, overlap).coefficients().to_vec(), e.clone()).unwrap();
        let (a, b): (f64, f64) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let combined: Vec<f64> = k1
            .coefficients()
            .iter()
            .zip(k2.coefficients())
            .map(|(&c1, &c2)| a * c1 as f64 + b * c2 as f64)
            .collect();
        let lhs = evaluate_windows(&v, &combined, &e, overlap).unwrap();
        let p1 = protect_values(&v, &k1).unwrap();
        let p2 = protect_values(&v, &k2).unwrap();
        let rhs: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| a * x + b * y).collect();
        let scale = rhs.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);
        let err = lhs.iter().zip(&rhs).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs())) / scale;
        worst = worst.max(err);
    }
    outcome(worst <= 1e-9, format!("200 cases, max relative error {worst:.2e} (limit 1e-9)"), vec![])
}

/// Entries uniform in `[-1, -0.1] U [0.1, 1]`.
fn bounded_point(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x: f64 = r.random_range(0.1..=1.0);
            if r.random() { x } else { -x }
        })
        .collect()
}

fn central_difference(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    // Column i holds d f / d x_i.
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    cols
}

fn c4_gradients() -> Outcome {
    let mut r = rng("c4");
    let h = 1e-6;
    let (mut jac_worst, mut grad_worst) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = 16;
        let overlap = r.random_range(0..5);
        let keys = random_keys(&mut r, 5, overlap);
        let v = bounded_point(&mut r, n);

        // Jacobian: entrywise relative error over the structurally non-zero
        // entries, which the 0.1 bound keeps away from zero.
        let dense = jacobian(&v, &keys).unwrap().to_dense();
        let fd = central_difference(&|x| protect_values(x, &keys).unwrap(), &v, h);
        for (j, row) in dense.iter().enumerate() {
            for (i, &a) in row.iter().enumerate() {
                let b = fd[i][j];
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                jac_worst = jac_worst.max((a - b).abs() / a.abs().max(b.abs()));
            }
        }

        // Cosine objective toward the template of another point; gradient
        // error relative to the gradient's largest component.
        let w = bounded_point(&mut r, n);
        let p = ProtectedTemplate::new("s", "t", overlap, protect_values(&w, &keys).unwrap()).unwrap();
        let problem = build_cosine_problem(&p, &keys, n).unwrap();
        let g = problem.gradient(&v);
        let fd = central_difference(&|x| vec![problem.value(x)], &v, h);
        let scale = g.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let err = g.iter().zip(&fd).fold(0.0f64, |acc, (a, b)| acc.max((a - b[0]).abs())) / scale;
        grad_worst = grad_worst.max(err);
    }
    outcome(
        jac_worst <= 1e-5 && grad_worst <= 1e-4,
        format!("100 points, Jacobian max rel err {jac_worst:.2e} (<= 1e-5), cosine gradient {grad_worst:.2e} (<= 1e-4)"),
        vec![],
    )
}

fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det
}

fn c5_solvers() -> Outcome {
    let mut r = rng("c5");
    let mut lm_worst = 0.0f64;
    let mut systems = 0;
    while systems < 100 {
        let a: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        if determinant(a.clone()).abs() < 1e-2 {
            continue;
        }
        systems += 1;
        let x_true: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&x_true).map(|(p, q)| p * q).sum()).collect();
        let problem = FnLeastSquares {
            residual: |x: &[f64]| {
                a.iter()
                    .zip(&b)
                    .map(|(row, bi)| row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - bi)
                    .collect()
            },
            jacobian: |_: &[f64]| SparseMatrix::from_dense(&a),
        };
        let report = solve_lm(&problem, &[0.0; 5], &LmOptions::default()).expect("lm");
        for (x, t) in report.solution.iter().zip(&x_true) {
            lm_worst = lm_worst.max((x - t).abs());
        }
    }

    let n = 32;
    let target: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let tn = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cosine = |x: &[f64]| {
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>() / (xn * tn)
    };
    let problem = FnScalar {
        objective: |x: &[f64]| 1.0 - cosine(x),
        gradient: |x: &[f64]| {
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let c = cosine(x);
            x.iter().zip(&target).map(|(xi, ti)| -(ti / (xn * tn) - c * xi / (xn * xn))).collect()
        },
    };
    let mut qn_worst = 1.0f64;
    for _ in 0..20 {
        let x0: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let report = minimize_qn(&problem, &x0, &QnOptions::default()).expect("qn");
        qn_worst = qn_worst.min(cosine(&report.solution));
    }
    outcome(
        lm_worst <= 1e-8 && qn_worst >= 1.0 - 1e-6,
        format!("LM max |x - x*| {lm_worst:.2e} over 100 systems (<= 1e-8); QN min similarity 1 - {:.2e} over 20 starts", 1.0 - qn_worst),
        vec![],
    )
}

// --------------------------------------------------------- benchmark trends

fn c6_solver_trend() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for o in 0..=3 {
        let sim = |solver| mean(&attack_records(o, solver).iter().map(|r| r.inversion_similarity).collect::<Vec<_>>());
        let (euc, cos) = (sim("euclidean_lm"), sim("cosine_qn"));
        pass &= cos > euc;
        details.push(format!("overlap {o}: mean similarity euclidean {euc:.4}, cosine {cos:.4}"));
    }
    outcome(pass, "cosine mean similarity above euclidean at overlaps 0..3", details)
}

fn c7_overlap_trend() -> Outcome {
    let means: Vec<f64> = (0..=4)
        .map(|o| mean(&attack_records(o, "cosine_qn").iter().map(|r| r.inversion_similarity).collect::<Vec<_>>()))
        .collect();
    let pass = means.windows(2).all(|w| w[1] > w[0]);
    outcome(
        pass,
        format!(
            "cosine mean similarity by overlap 0..4: {}",
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" < ")
        ),
        vec![],
    )
}

fn c8_key_selection() -> Outcome {
    let bench = bench();
    let emb = bench.join("embeddings.csv");
    let unprotected = unprotected_scores();
    let tau = threshold_at_fmr(&unprotected, ANCHOR).unwrap();
    let tau_sel = threshold_at_fmr(&unprotected, SELECTION_ANCHOR).unwrap();
    let set = normalize_set(&load_embeddings(&emb).unwrap(), &Normalization::L2).unwrap();
    let dist = estimate_distribution(&set).unwrap();
    let refs = set.references().len();

    let mut isr_ok = true;
    let mut accepted_total = 0;
    let mut accepted_breaches = 0;
    let mut details = vec![format!("tau at FMR 0.1% = {tau:.4}, at FMR 20% = {tau_sel:.4}")];
    for o in 0..=3 {
        let dir = work(&format!("select_o{o}"));
        let (keys, log, exhausted) = (dir.join("keys.csv"), dir.join("log.csv"), dir.join("exhausted.csv"));
        let prot = dir.join("protected.csv");
        let att = dir.join("attack.csv");
        let ov = o.to_string();
        let common = ["--seed", "1", "--overlap", ov.as_str()];
        run_cli(
            &[
                &["select-keys", "--emb", s(&emb), "--keys-out", s(&keys), "--log-out", s(&log)][..],
                &["--exhausted-out", s(&exhausted), "--fill-exhausted"],
                &common,
            ]
            .concat(),
        );
        run_cli(&[&["protect", "--emb", s(&emb), "--keys", s(&keys), "--out", s(&prot)][..], &common].concat());
        run_cli(
            &[
                &["attack", "--protected", s(&prot), "--keys", s(&keys), "--emb", s(&emb), "--out", s(&att)][..],
                &common,
            ]
            .concat(),
        );

        let random = attack_records(o, "cosine_qn");
        let selected = load_attack_records(&att).unwrap();
        let isr_random = isr_at_threshold(&random, tau, IsrAggregation::BestOfGuesses, false).unwrap();
        let isr_selected = isr_at_threshold(&selected, tau, IsrAggregation::BestOfGuesses, false).unwrap();
        isr_ok &= isr_selected <= isr_random;

        // Accepted subjects, re-attacked with the selection-time guesses.
        // One log row per guess; an accepted attempt logs all of its guesses.
        let mut accepted: Vec<String> = fs::read_to_string(&log)
            .unwrap()
            .lines()
            .skip(1)
            .filter(|l| l.split(',').nth(2) == Some("true"))
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect();
        accepted.dedup();
        let n_exhausted = fs::read_to_string(&exhausted).unwrap().lines().count() - 1;
        let cfg = RunConfig { seed: Some(SEED), overlap: o, ..RunConfig::default() };
        let sel_attack = cfg.selection_config().unwrap().attack_config();
        let key_list = load_keys(&keys).unwrap();
        let templates = load_templates(&prot).unwrap();
        let mut breaches = 0;
        for subject in &accepted {
            let k = key_list.iter().find(|k| k.subject() == subject).unwrap();
            let t = templates.iter().find(|t| t.subject() == subject).unwrap();
            let truth = set.iter().find(|e| e.identity() == subject && e.sample() == t.sample()).unwrap();
            let target = AttackTarget { template: t, keys: k, truth: truth.values() };
            let results = attack_template(&target, &dist, &sel_attack).unwrap();
            breaches += usize::from(results.iter().any(|r| r.inversion_similarity >= tau_sel));
        }
        accepted_total += accepted.len();
        accepted_breaches += breaches;
        details.push(format!(
            "overlap {o}: ISR@0.1% random {:.2}, selected {:.2}; accepted {}, exhausted {} (best-effort keys attacked)",
            isr_random,
            isr_selected,
            accepted.len(),
            n_exhausted
        ));
    }
    let by_construction = accepted_total > 0 && accepted_breaches == 0;
    let summary = if accepted_total == 0 {
        format!(
            "ISR(selected) <= ISR(random): {}; selection-seed ISR@20% = 0 not demonstrated: no subject accepted keys within {} attempts",
            if isr_ok { "yes" } else { "no" },
            RunConfig::default().max_attempts
        )
    } else {
        format!(
            "ISR(selected) <= ISR(random): {}; selection-seed ISR@20% over {accepted_total} accepted of {} selections: {accepted_breaches} breaches",
            if isr_ok { "yes" } else { "no" },
            4 * refs
        )
    };
    outcome(isr_ok && by_construction, summary, details)
}

fn c9_normalization() -> Outcome {
    let dir = work("norm");
    let base = dir.join("scale1.csv");
    let scaled = dir.join("scale6.csv");
    for (p, scale) in [(&base, "1"), (&scaled, "6")] {
        run_cli(&["gen-synth", "--seed", "1", "--class-spread", "1.0", "--scale", scale, "--out", s(p)]);
    }
    let mut pass = true;
    let mut details = vec!["spread 1.0 sets at scale 1 and 6, same seed".to_string()];
    for o in 0..=3 {
        let ov = o.to_string();
        let keys = dir.join(format!("keys_o{o}.csv"));
        let norm = dir.join(format!("norm_o{o}.csv"));
        let raw = dir.join(format!("raw_o{o}.csv"));
        run_cli(&["protect", "--seed", "1", "--overlap", &ov, "--emb", s(&base), "--keys-out", s(&keys), "--out", s(&norm)]);
        run_cli(&[
            "protect", "--normalization", "none", "--emb", s(&scaled), "--keys", s(&keys), "--out", s(&raw),
        ]);
        let (f_norm, _) = protected_fnmr(&norm);
        let (f_raw, _) = protected_fnmr(&raw);
        pass &= f_norm <= f_raw;
        details.push(format!("overlap {o}: FNMR@0.1% normalized {f_norm:.4}, unnormalized x6 {f_raw:.4}"));
    }
    outcome(pass, "normalized FNMR <= unnormalized FNMR at overlaps 0..3", details)
}

fn c10_accuracy_trend() -> Outcome {
    let rows: Vec<(f64, usize)> = (0..=3).map(|o| protected_fnmr(&bench().join(format!("protected_o{o}.csv")))).collect();
    let step = 1.0 / rows[0].1 as f64;
    let pass = rows.windows(2).all(|w| w[1].0 <= w[0].0 + step);
    let mut details = Vec::new();
    // The benchmark's genuine scores sit far above the impostors, so also show
    // the trend on the harder spread 1.0 set from criterion 9 when available.
    let norm = WORK.get().unwrap().join("norm");
    if norm.join("norm_o3.csv").exists() {
        let hard: Vec<String> = (0..=3)
            .map(|o| format!("{:.4}", protected_fnmr(&norm.join(format!("norm_o{o}.csv"))).0))
            .collect();
        details.push(format!("spread 1.0 set, FNMR@0.1% by overlap 0..3: {}", hard.join(", ")));
    }
    outcome(
        pass,
        format!(
            "benchmark FNMR@0.1% by overlap 0..3: {} (step {step:.1e})",
            rows.iter().map(|r| format!("{:.4}", r.0)).collect::<Vec<_>>().join(", ")
        ),
        details,
    )
}

// ---------------------------------------------------------- metric contracts

fn random_scores(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let levels = if r.random_bool(0.3) { Some(r.random_range(2..8)) } else { None };
    (0..n)
        .map(|_| match levels {
            Some(l) => (r.random_range(0..l) as f64 / l as f64) * 2.0 - 1.0,
            None => r.random_range(-1.0..=1.0),
        })
        .collect()
}

fn c11_metric_contracts() -> Outcome {
    let mut r = rng("c11");
    let mut violations = Vec::new();
    for case in 0..1000 {
        let (ng, ni) = (r.random_range(1..40), r.random_range(1..300));
        let g = random_scores(&mut r, ng);
        let i = random_scores(&mut r, ni);
        let t = if r.random_bool(0.2) { 1e-4 } else { r.random_range(1e-3..=1.0) };
        let s = ScoreSet::new(g, i.clone()).unwrap();
        let tau = threshold_at_fmr(&s, t).unwrap();
        let fmr = i.iter().filter(|&&x| x >= tau).count() as f64 / i.len() as f64;
        if fmr > t || s.fmr(tau) != fmr {
            violations.push(format!("case {case}: fmr {fmr} > target {t}"));
        }
        let det = det_curve(&s, r.random_range(0..50)).unwrap();
        let ok = det.points.windows(2).all(|w| {
            w[1].threshold > w[0].threshold && w[1].fmr <= w[0].fmr && w[1].fnmr >= w[0].fnmr
        }) && det.points.last().is_some_and(|p| p.fmr == 0.0 && p.fnmr == 1.0);
        if !ok {
            violations.push(format!("case {case}: DET not monotone"));
        }
    }

    let mut campaigns = 0;
    let unprotected = unprotected_scores();
    for entry in fs::read_dir(bench()).unwrap() {
        let p = entry.unwrap().path();
        if !p.file_name().unwrap().to_string_lossy().starts_with("attack_") || p.extension().unwrap() != "csv" {
            continue;
        }
        let records = load_attack_records(&p).unwrap();
        for t in [1e-4, 1e-3, 1e-2, 0.2] {
            let tau = threshold_at_fmr(&unprotected, t).unwrap();
            let best = isr_at_threshold(&records, tau, IsrAggregation::BestOfGuesses, false).unwrap();
            let per = isr_at_threshold(&records, tau, IsrAggregation::PerAttack, false).unwrap();
            if best < per {
                violations.push(format!("{}: best-of {best} < per-attack {per}", p.display()));
            }
        }
        campaigns += 1;
    }
    let pass = violations.is_empty() && campaigns == 10;
    violations.truncate(5);
    outcome(
        pass,
        format!("1000 score sets and {campaigns} benchmark campaigns checked, {} violations", violations.len()),
        violations,
    )
}

// -------------------------------------------------------------- determinism

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c12_determinism() -> Outcome {
    let a = csv_files(bench());
    let dir = work("bench_b");
    run_cli(&["pipeline", "--seed", "1", "--out-dir", s(&dir)]);
    let b = csv_files(&dir);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && !a.is_empty(),
        format!("{} CSV files compared, {} differ", a.len().max(b.len()), differing.len()),
        differing,
    )
}
