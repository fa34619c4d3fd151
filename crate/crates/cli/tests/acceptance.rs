//! Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
//! when any criterion fails.
//!
//! Run alone with `cargo test -p mixclust-cli --test acceptance`; a name
//! argument (e.g. `hungarian`) selects matching criteria.

use std::fs;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mixclust::corpus::{CountMatrix, DocCounts, Vocabulary};
use mixclust::em::{dirichlet_init, hard_assign, label_init, run_em, run_iterative, run_kmeans, run_restarts};
use mixclust::em::{EmConfig, Inner, IterativeSchedule};
use mixclust::eval::{cooccurrence_score, enumerate_joint, hungarian, restart_correlation_report, Clustering};
use mixclust::gibbs::{chain_table, collapsed_conditional, collapsed_gibbs_sweep, naive_gibbs_sweep};
use mixclust::gibbs::{random_assignment, run_chain, ChainConfig, ChainKind, ChainState};
use mixclust::model::{suff_stats, Hyperparams, ModelParams, SuffStats, ThemeAssignment};
use mixclust::rng;
use mixclust::supervised::{bayes_predictive_log_posterior, naive_bayes_log_posterior, predictive_table};
use mixclust::synthetic::TextLike;
use rand::seq::SliceRandom;
use rand::Rng;
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_counts<R: Rng>(n_docs: usize, n_words: usize, max: u32, rng: &mut R) -> CountMatrix {
    loop {
        let rows: Vec<Vec<u32>> = (0..n_docs)
            .map(|_| (0..n_words).map(|_| rng.random_range(0..=max)).collect())
            .collect();
        if rows.iter().flatten().any(|&c| c > 0) {
            return CountMatrix::from_dense(&rows).unwrap();
        }
    }
}

/// Uniform on `(0, hi]`.
fn positive<R: Rng>(hi: f64, rng: &mut R) -> f64 {
    hi * (1.0 - rng.random::<f64>())
}

fn collapsed_conditional_oracle() -> Verdict {
    let mut r = rng::seeded(101);
    let instances = 30;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n_d = r.random_range(1..=8);
        let n_w = r.random_range(1..=6);
        let n_t = r.random_range(2..=3);
        let hyper = Hyperparams::new(positive(3.0, &mut r), positive(3.0, &mut r)).unwrap();
        let counts = random_counts(n_d, n_w, 3, &mut r);
        let joint = enumerate_joint(&counts, &hyper, n_t).unwrap();
        let table = chain_table(&counts, &hyper);
        let themes: Vec<usize> = (0..n_d).map(|_| r.random_range(0..n_t)).collect();
        let assignment = ThemeAssignment::new(themes.clone(), n_t).unwrap();
        for d in 0..n_d {
            let mut stats = suff_stats(&counts, &assignment, n_t).unwrap();
            stats.remove_doc(counts.doc(d), themes[d], d).unwrap();
            let got = collapsed_conditional(&stats, counts.doc(d), &hyper, &table).unwrap();
            for (g, w) in got.iter().zip(joint.conditional(d, &themes)) {
                worst = worst.max((g - w).abs());
            }
        }
    }
    verdict(
        worst <= 1e-10,
        format!("{instances} instances, max |Δ log p| = {worst:.2e} (tolerance 1e-10)"),
    )
}

/// Total variation between the empirical distribution of `samples` and `probs`.
fn total_variation(samples: &[ThemeAssignment], probs: &[f64], index: impl Fn(&[usize]) -> usize) -> f64 {
    let mut freq = vec![0.0; probs.len()];
    for s in samples {
        freq[index(s.themes())] += 1.0 / samples.len() as f64;
    }
    freq.iter().zip(probs).map(|(f, p)| (f - p).abs()).sum::<f64>() / 2.0
}

fn gibbs_stationarity() -> Verdict {
    let counts = CountMatrix::from_dense(&[
        vec![2, 0, 1, 0, 1],
        vec![0, 3, 0, 1, 0],
        vec![1, 0, 2, 0, 0],
        vec![0, 1, 0, 2, 1],
    ])
    .unwrap();
    let hyper = Hyperparams::new(1.0, 0.5).unwrap();
    let joint = enumerate_joint(&counts, &hyper, 2).unwrap();
    let probs = joint.probs();
    let config = ChainConfig {
        n_sweeps: 200_000,
        burn_in: 10_000,
        thin: 1,
        snapshot_every: 0,
        target: None,
    };
    let tv = |kind, seed| {
        let init = random_assignment(4, 2, &mut rng::stream(seed, 0)).unwrap();
        let trace = run_chain(&counts, init, &hyper, kind, &config, rng::stream(seed, 1)).unwrap();
        total_variation(&trace.samples, &probs, |t| joint.index_of(t))
    };
    let collapsed = tv(ChainKind::Collapsed, 21);
    let naive = tv(ChainKind::Naive, 22);
    verdict(
        collapsed <= 0.02 && naive <= 0.05,
        format!("TV collapsed {collapsed:.4} (≤ 0.02), naive {naive:.4} (≤ 0.05) over 16 assignments"),
    )
}

fn em_monotonicity() -> Verdict {
    let mut r = rng::seeded(103);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for i in 0..100 {
        let n_d = r.random_range(3..=60);
        let n_w = r.random_range(2..=40);
        let n_t = r.random_range(1..=5);
        let counts = random_counts(n_d, n_w, r.random_range(1..=6), &mut r);
        let hyper = Hyperparams::new(r.random_range(1.0..3.0), r.random_range(1.0..3.0) + f64::EPSILON).unwrap();
        let init = dirichlet_init(n_d, n_t, &mut r).unwrap();
        let config = EmConfig {
            n_iters: 25,
            ..EmConfig::default()
        };
        match run_em(&counts, init, &hyper, &config) {
            Ok(trace) => {
                for w in trace.iterations.windows(2) {
                    worst = worst.max(w[0].log_posterior - w[1].log_posterior);
                }
            }
            Err(e) => failures.push(format!("corpus {i}: {e}")),
        }
    }
    verdict(
        failures.is_empty() && worst <= 1e-8,
        format!(
            "100 corpora, largest decrease {worst:.2e} (tolerance 1e-8){}",
            failures.first().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn hungarian_correctness() -> Verdict {
    let mut r = rng::seeded(104);
    let perms = permutations(6);
    let mut mismatches = 0;
    for _ in 0..100 {
        let w: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| r.random::<f64>()).collect()).collect();
        let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| w[i][j]).sum::<f64>();
        let best = perms.iter().max_by(|a, b| total(a).total_cmp(&total(b))).unwrap();
        let got = hungarian(&w).unwrap();
        if &got != best {
            mismatches += 1;
        }
    }
    let mut exact = 0;
    for _ in 0..100 {
        let k = r.random_range(1..=6);
        let labels: Vec<usize> = (0..r.random_range(1..50)).map(|_| r.random_range(0..k)).collect();
        let mut relabel: Vec<usize> = (0..k).collect();
        relabel.shuffle(&mut r);
        let a = Clustering::new(labels.clone(), k).unwrap();
        let b = Clustering::new(labels.iter().map(|&l| relabel[l]).collect(), k).unwrap();
        if cooccurrence_score(&a, &a).unwrap().score == 1.0 && cooccurrence_score(&a, &b).unwrap().score == 1.0 {
            exact += 1;
        }
    }
    verdict(
        mismatches == 0 && exact == 100,
        format!("{mismatches}/100 matchings differ from exhaustive search; {exact}/100 relabelings score exactly 1.0"),
    )
}

fn rule_equivalence() -> Verdict {
    let mut r = rng::seeded(105);
    let (n_t, n_w, max_len) = (3, 40, 20);
    let hyper = Hyperparams::default();
    let mut stats = SuffStats::zeros(n_t, n_w);
    let words: Vec<u32> = (0..n_w as u32).collect();
    for t in 0..n_t {
        // one heavy document carries the word counts, the others set the theme sizes
        let profile: Vec<f64> = (0..n_w).map(|_| r.random_range(0.5..1.5)).collect();
        let z: f64 = profile.iter().sum();
        let heavy: Vec<u32> = profile.iter().map(|p| (p / z * 4.0e5).round() as u32).collect();
        stats.add_doc(DocCounts::new(&words, &heavy), t).unwrap();
        for d in 0..(2000 + 500 * t) {
            let w = [(d % n_w) as u32];
            stats.add_doc(DocCounts::new(&w, &[1]), t).unwrap();
        }
    }
    let min_total = *stats.theme_totals().iter().min().unwrap();
    let rows: Vec<Vec<u32>> = (0..1000)
        .map(|_| {
            let mut ids: Vec<usize> = (0..n_w).collect();
            ids.shuffle(&mut r);
            let l = r.random_range(1..=max_len);
            let mut row = vec![0; n_w];
            for &w in &ids[..l] {
                row[w] = 1;
            }
            row
        })
        .collect();
    let test = CountMatrix::from_dense(&rows).unwrap();
    let table = predictive_table(&stats, &hyper, &test);
    let (mut worst, mut disagreements) = (0.0f64, 0);
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    for doc in test.docs() {
        let naive = naive_bayes_log_posterior(doc, &stats, &hyper).unwrap();
        let bayes = bayes_predictive_log_posterior(doc, &stats, &hyper, &table).unwrap();
        for (a, b) in naive.iter().zip(&bayes) {
            worst = worst.max((a - b).abs());
        }
        disagreements += usize::from(argmax(&naive) != argmax(&bayes));
    }
    let ratio = min_total as f64 / max_len as f64;
    verdict(
        ratio >= 1e4 && worst <= 1e-3 && disagreements == 0,
        format!(
            "min K_t / max l = {ratio:.0}; max |Δ log posterior| = {worst:.2e} (≤ 1e-3); {disagreements}/1000 argmax differ"
        ),
    )
}

fn soft_hard_convergence() -> Verdict {
    let shape = TextLike {
        doc_length: (200, 200),
        ..TextLike::new(5, 5000, 500)
    };
    let g = shape.generate(&mut rng::seeded(106)).unwrap();
    let hyper = Hyperparams::default();
    let config = EmConfig {
        n_iters: 5,
        ..EmConfig::default()
    };
    let soft = run_em(&g.counts, label_init(&g.themes, 5).unwrap(), &hyper, &config).unwrap();
    let hard = run_kmeans(&g.counts, g.themes.clone(), &hyper, &config).unwrap();
    let agreement = cooccurrence_score(
        &Clustering::from(&soft.clustering()),
        &Clustering::from(&hard.clustering()),
    )
    .unwrap()
    .score;
    let init = dirichlet_init(500, 5, &mut rng::seeded(107)).unwrap();
    let fit = run_em(&g.counts, init, &hyper, &config).unwrap();
    let sharp = fit
        .responsibilities
        .rows()
        .filter(|row| row.iter().any(|&p| p > 1.0 - 1e-6))
        .count();
    verdict(
        agreement >= 0.99 && sharp * 10 >= 500 * 9,
        format!("EM/k-means cooccurrence {agreement:.4} (≥ 0.99); {sharp}/500 rows sharp (≥ 90%)"),
    )
}

struct Suite {
    vocab: Vocabulary,
    train: CountMatrix,
    test: CountMatrix,
    reference: Clustering,
    schedule: IterativeSchedule,
    hyper: Hyperparams,
}

/// Five themes over 5000 words with a Zipf background: most words are rare.
fn suite() -> Suite {
    let shape = TextLike::new(5, 5000, 500);
    let (train, test) = shape.generate_split(500, &mut rng::seeded(42)).unwrap();
    Suite {
        vocab: Vocabulary::from_words((0..5000).map(|w| format!("w{w:04}")).collect()).unwrap(),
        train: train.counts,
        test: test.counts,
        reference: Clustering::from(&test.themes),
        schedule: IterativeSchedule::default_for(5000, 15),
        hyper: Hyperparams::default(),
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var)
}

fn iterative_benefit() -> Verdict {
    let s = suite();
    let flat = EmConfig {
        n_iters: s.schedule.total_iterations(),
        ..EmConfig::default()
    };
    let staged = EmConfig {
        n_iters: 0,
        ..EmConfig::default()
    };
    let score = |params: &ModelParams| {
        let predicted = hard_assign(&s.test, params).unwrap();
        cooccurrence_score(&Clustering::from(&predicted), &s.reference)
            .unwrap()
            .score
    };
    let (mut f, mut it) = (Vec::new(), Vec::new());
    for seed in 0..30 {
        let init = || dirichlet_init(500, 5, &mut rng::stream(7, seed)).unwrap();
        f.push(score(&run_em(&s.train, init(), &s.hyper, &flat).unwrap().params));
        let trace = run_iterative(&s.train, &s.vocab, &s.schedule, init(), &s.hyper, &staged).unwrap();
        it.push(score(&trace.params));
    }
    let ((mf, vf), (mi, vi)) = (mean_var(&f), mean_var(&it));
    verdict(
        mi > mf && vi < vf,
        format!("test cooccurrence over 30 seeds: staged mean {mi:.4} var {vi:.4}; flat mean {mf:.4} var {vf:.4}"),
    )
}

fn restart_selection() -> Verdict {
    let s = suite();
    let inner = Inner::Iterative {
        vocab: &s.vocab,
        schedule: &s.schedule,
        config: EmConfig {
            n_iters: 0,
            ..EmConfig::default()
        },
    };
    let restarts = run_restarts(&s.train, 5, 30, &s.hyper, 8, inner).unwrap();
    let report = restart_correlation_report(&restarts.traces, &s.test, &s.reference).unwrap();
    verdict(
        report.spearman <= -0.3 && !report.degenerate,
        format!(
            "Spearman(train perplexity, test cooccurrence) = {:.3} over 30 restarts (≤ -0.3)",
            report.spearman
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn sweep_speed() -> Verdict {
    let shape = TextLike {
        doc_length: (200, 200),
        ..TextLike::new(5, 40_000, 4_500)
    };
    let g = shape.generate(&mut rng::seeded(109)).unwrap();
    let c = &g.counts;
    let hyper = Hyperparams::default();
    let table = chain_table(c, &hyper);
    let init = random_assignment(c.n_docs(), 5, &mut rng::seeded(110)).unwrap();
    let mut naive = ChainState::new(c, init.clone(), &hyper, ChainKind::Naive, rng::stream(111, 0)).unwrap();
    let mut collapsed = ChainState::new(c, init, &hyper, ChainKind::Collapsed, rng::stream(111, 1)).unwrap();
    // burn in first, then time single sweeps; the first few sweeps, while
    // indicators still move, are timed for the record
    let (mut early_n, mut early_c) = (0.0, 0.0);
    for s in 0..20 {
        let t = Instant::now();
        naive_gibbs_sweep(&mut naive, c, &hyper).unwrap();
        let mid = Instant::now();
        collapsed_gibbs_sweep(&mut collapsed, c, &hyper, &table).unwrap();
        if s < 3 {
            early_n += (mid - t).as_secs_f64();
            early_c += mid.elapsed().as_secs_f64();
        }
    }
    // each chain's sweeps run back to back, as they do in a real run
    let tn = median(
        (0..15)
            .map(|_| {
                let t = Instant::now();
                naive_gibbs_sweep(&mut naive, c, &hyper).unwrap();
                t.elapsed().as_secs_f64()
            })
            .collect(),
    );
    // collapsed sweeps reuse a document's word terms while nothing moves, so
    // report how settled the chain was
    let mut changed = 0;
    let tc = median(
        (0..15)
            .map(|_| {
                let before = collapsed.assignment().clone();
                let t = Instant::now();
                collapsed_gibbs_sweep(&mut collapsed, c, &hyper, &table).unwrap();
                let dt = t.elapsed().as_secs_f64();
                changed += (0..c.n_docs())
                    .filter(|&d| before.get(d) != collapsed.assignment().get(d))
                    .count();
                dt
            })
            .collect(),
    );
    let ratio = tn / tc;
    verdict(
        ratio >= 5.0,
        format!(
            "n_W=40000 n_T=5 n_D=4500 l_d=200: naive {:.2} ms, collapsed {:.2} ms per sweep ({changed} indicator changes in 15 timed sweeps), speed-up {ratio:.2}× (≥ 5×); first 3 sweeps {:.2}×",
            tn * 1e3,
            tc * 1e3,
            early_n / early_c
        ),
    )
}

fn word(mut w: usize) -> String {
    let mut name = String::from("w");
    loop {
        name.push((b'a' + (w % 26) as u8) as char);
        w /= 26;
        if w == 0 {
            return name;
        }
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.txt")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn mixclust(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mixclust"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn reproducibility() -> Verdict {
    let dir = TempDir::new().unwrap();
    let g = TextLike::new(4, 500, 120).generate(&mut rng::seeded(112)).unwrap();
    let mut text = String::new();
    for d in 0..g.counts.n_docs() {
        let tokens: Vec<String> = g
            .counts
            .doc(d)
            .iter()
            .flat_map(|(w, c)| vec![word(w); c as usize])
            .collect();
        text.push_str(&format!("t{}\t{}\n", g.themes.get(d), tokens.join(" ")));
    }
    let tsv = dir.path().join("docs.tsv");
    fs::write(&tsv, text).unwrap();
    let corpus = dir.path().join("corpus");
    let p = |p: &Path| p.to_str().unwrap().to_owned();
    mixclust(&["ingest", "--input", &p(&tsv), "--out", &p(&corpus)]);
    let methods: [&[&str]; 6] = [
        &["--method", "em"],
        &["--method", "kmeans"],
        &["--method", "iterative"],
        &["--method", "restarts", "--runs", "4"],
        &["--method", "gibbs-naive", "--sweeps", "50"],
        &["--method", "gibbs-collapsed", "--sweeps", "50"],
    ];
    let mut differing = Vec::new();
    for m in methods {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|tag| {
                let out = dir.path().join(format!("{}-{tag}", m[1]));
                let mut args = vec![
                    "train".to_owned(),
                    "--corpus".into(),
                    p(&corpus),
                    "--out".into(),
                    p(&out),
                ];
                args.extend(["--themes", "4", "--seed", "13"].map(String::from));
                args.extend(m.iter().map(|s| s.to_string()));
                mixclust(&args.iter().map(String::as_str).collect::<Vec<_>>());
                files(&out)
            })
            .collect();
        if runs[0] != runs[1] || !runs[0].iter().any(|(n, _)| n == "trace.csv") {
            differing.push(m[1]);
        }
    }
    verdict(
        differing.is_empty(),
        format!("6 methods trained twice, outputs differing: {differing:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("collapsed-conditional-oracle", collapsed_conditional_oracle),
        ("gibbs-stationarity", gibbs_stationarity),
        ("em-monotonicity", em_monotonicity),
        ("hungarian-correctness", hungarian_correctness),
        ("rule-equivalence", rule_equivalence),
        ("soft-hard-convergence", soft_hard_convergence),
        ("iterative-em-benefit", iterative_benefit),
        ("restart-selection", restart_selection),
        ("collapsed-sweep-speed", sweep_speed),
        ("train-reproducibility", reproducibility),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
