//! Cross-module agreement: closed-form conditionals against brute-force
//! enumeration, the supervised predictive rule against the collapsed
//! conditional, and chains against exact posteriors.

use mixclust::corpus::CountMatrix;
use mixclust::em::{dirichlet_init, e_step, label_init, m_step, run_em, run_kmeans, EmConfig};
use mixclust::eval::{cooccurrence_score, enumerate_joint, log_posterior, Clustering};
use mixclust::gibbs::{chain_table, collapsed_conditional, random_assignment, run_chain, ChainConfig, ChainKind};
use mixclust::model::{suff_stats, Hyperparams, LogGammaTable, SuffStats, ThemeAssignment};
use mixclust::rng;
use mixclust::supervised::{bayes_predictive_log_posterior, predictive_table};
use mixclust::synthetic::TextLike;
use rand::Rng;

fn random_counts<R: Rng>(n_docs: usize, n_words: usize, rng: &mut R) -> CountMatrix {
    let rows: Vec<Vec<u32>> = (0..n_docs)
        .map(|_| (0..n_words).map(|_| rng.random_range(0..4)).collect())
        .collect();
    CountMatrix::from_dense(&rows).unwrap()
}

fn without_doc(counts: &CountMatrix, themes: &[usize], d: usize, n_t: usize) -> SuffStats {
    let mut stats = suff_stats(counts, &ThemeAssignment::new(themes.to_vec(), n_t).unwrap(), n_t).unwrap();
    stats.remove_doc(counts.doc(d), themes[d], d).unwrap();
    stats
}

#[test]
fn collapsed_conditional_matches_enumeration() {
    let mut r = rng::seeded(11);
    for _ in 0..25 {
        let n_d = r.random_range(2..=6);
        let n_w = r.random_range(1..=6);
        let n_t = r.random_range(2..=3);
        let hyper = Hyperparams::new(r.random_range(0.05..3.0), r.random_range(0.05..3.0)).unwrap();
        let counts = random_counts(n_d, n_w, &mut r);
        let joint = enumerate_joint(&counts, &hyper, n_t).unwrap();
        let table = chain_table(&counts, &hyper);
        let themes: Vec<usize> = (0..n_d).map(|_| r.random_range(0..n_t)).collect();
        for d in 0..n_d {
            let stats = without_doc(&counts, &themes, d, n_t);
            let got = collapsed_conditional(&stats, counts.doc(d), &hyper, &table).unwrap();
            let want = joint.conditional(d, &themes);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn predictive_rule_is_the_collapsed_conditional() {
    // classifying a held-out document with the fully Bayesian rule is the
    // collapsed conditional with the training documents as the other indicators
    let mut r = rng::seeded(12);
    for _ in 0..20 {
        let n_t = 3;
        let train = random_counts(9, 5, &mut r);
        let labels = ThemeAssignment::new((0..9).map(|d| d % n_t).collect(), n_t).unwrap();
        let stats = suff_stats(&train, &labels, n_t).unwrap();
        let test = random_counts(4, 5, &mut r);
        let hyper = Hyperparams::new(r.random_range(0.1..2.0), r.random_range(0.1..2.0)).unwrap();
        let table = predictive_table(&stats, &hyper, &test);
        let wide = LogGammaTable::build(&hyper, 5, 1000);
        for d in 0..test.n_docs() {
            let a = bayes_predictive_log_posterior(test.doc(d), &stats, &hyper, &table).unwrap();
            let b = collapsed_conditional(&stats, test.doc(d), &hyper, &wide).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn collapsed_chain_visits_the_exact_posterior() {
    let counts = CountMatrix::from_dense(&[vec![2, 0, 1], vec![0, 3, 1], vec![1, 1, 0]]).unwrap();
    let hyper = Hyperparams::new(1.0, 0.5).unwrap();
    let joint = enumerate_joint(&counts, &hyper, 2).unwrap();
    let init = random_assignment(3, 2, &mut rng::seeded(1)).unwrap();
    let config = ChainConfig::with_sweeps(40_000);
    let trace = run_chain(&counts, init, &hyper, ChainKind::Collapsed, &config, rng::seeded(2)).unwrap();
    let mut freq = vec![0.0; joint.n_states()];
    for s in &trace.samples {
        freq[joint.index_of(s.themes())] += 1.0 / trace.samples.len() as f64;
    }
    let tv: f64 = freq.iter().zip(joint.probs()).map(|(f, p)| (f - p).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.03, "total variation {tv}");
}

#[test]
fn em_recovers_generating_clusters() {
    let spec = TextLike {
        theme_weight: 0.5,
        ..TextLike::new(3, 800, 150)
    };
    let g = spec.generate(&mut rng::seeded(5)).unwrap();
    let hyper = Hyperparams::default();
    let truth = Clustering::from(&g.themes);
    let trace = run_em(
        &g.counts,
        label_init(&g.themes, 3).unwrap(),
        &hyper,
        &EmConfig::default(),
    )
    .unwrap();
    let fit = Clustering::from(&trace.clustering());
    assert!(cooccurrence_score(&fit, &truth).unwrap().score > 0.95);

    let lp = log_posterior(&g.counts, &trace.params, &hyper).unwrap();
    assert!((lp - trace.iterations.last().unwrap().log_posterior).abs() < 1e-9 * lp.abs());
}

#[test]
fn soft_and_hard_em_agree_from_category_labels() {
    let spec = TextLike {
        doc_length: (150, 250),
        ..TextLike::new(4, 2000, 200)
    };
    let g = spec.generate(&mut rng::seeded(6)).unwrap();
    let hyper = Hyperparams::default();
    let init = g.themes.clone();
    let config = EmConfig {
        n_iters: 5,
        ..EmConfig::default()
    };
    let soft = run_em(&g.counts, label_init(&init, 4).unwrap(), &hyper, &config).unwrap();
    let hard = run_kmeans(&g.counts, init, &hyper, &config).unwrap();
    let score = cooccurrence_score(
        &Clustering::from(&soft.clustering()),
        &Clustering::from(&hard.clustering()),
    )
    .unwrap();
    assert!(score.score >= 0.99, "{}", score.score);
}

#[test]
fn responsibilities_harden_in_high_dimension() {
    let spec = TextLike {
        doc_length: (200, 200),
        ..TextLike::new(4, 3000, 200)
    };
    let g = spec.generate(&mut rng::seeded(8)).unwrap();
    let hyper = Hyperparams::default();
    let mut resp = dirichlet_init(200, 4, &mut rng::seeded(9)).unwrap();
    for _ in 0..5 {
        resp = e_step(&g.counts, &m_step(&g.counts, &resp, &hyper).unwrap()).unwrap();
    }
    let sharp = resp.rows().filter(|row| row.iter().any(|&p| p > 1.0 - 1e-6)).count();
    assert!(sharp as f64 >= 0.9 * 200.0, "{sharp} of 200 rows are sharp");
}
