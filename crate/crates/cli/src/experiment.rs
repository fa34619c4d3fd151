//! Named experiment protocols. Each writes one CSV per curve into the output
//! directory, on a labeled corpus (`--corpus`, with `--test` or folds) or on a
//! synthetic text-like corpus drawn from the mixture.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mixclust::corpus::{project_counts, reduce_vocabulary, split_folds, CountMatrix, VocabPolicy, Vocabulary};
use mixclust::em::{
    dirichlet_init, hard_assign, label_init, run_em, run_iterative, run_kmeans, run_restarts, EmConfig, Inner,
    IterativeSchedule, Responsibilities,
};
use mixclust::eval::{cooccurrence_score, perplexity, restart_correlation_report, Clustering, Summary};
use mixclust::gibbs::{random_assignment, run_chain, ChainConfig, ChainKind, ScoreTarget};
use mixclust::model::{Hyperparams, ModelParams, ThemeAssignment};
use mixclust::rng::{self, ChainRng};
use mixclust::supervised::{compare_rules, LabeledCorpus};
use mixclust::synthetic::TextLike;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;
use crate::store::{self, StoredCorpus};

pub const NAMES: [&str; 7] = [
    "smoothing-sweep",
    "vocab-sweep",
    "iterative-vs-flat",
    "restart-correlation",
    "rule-comparison",
    "em-vs-kmeans",
    "gibbs-comparison",
];

/// Values of `λ_β − 1` (or `λ` for the rule comparison) swept by default.
pub const SMOOTHING_GRID: [f64; 9] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
/// Vocabulary sizes kept (or most frequent words dropped) by default.
pub const VOCAB_GRID: [usize; 9] = [100, 200, 300, 500, 800, 1000, 1500, 2000, 3000];

/// Labeled training and test corpora over one vocabulary.
pub struct Data {
    pub vocab: Vocabulary,
    pub train: CountMatrix,
    pub train_labels: ThemeAssignment,
    pub test: CountMatrix,
    pub test_labels: Clustering,
    pub names: Vec<String>,
}

impl Data {
    pub fn n_themes(&self) -> usize {
        self.train_labels.n_themes()
    }

    pub fn synthetic(shape: TextLike, n_test: usize, seed: u64) -> CliResult<Self> {
        let (train, test) = shape.generate_split(n_test, &mut rng::seeded(seed))?;
        let width = shape.n_words.to_string().len();
        let vocab = Vocabulary::from_words((0..shape.n_words).map(|w| format!("w{w:0width$}")).collect())?;
        Ok(Data {
            vocab,
            train: train.counts,
            train_labels: train.themes,
            test: test.counts,
            test_labels: Clustering::from(&test.themes),
            names: (0..shape.n_themes).map(|t| format!("theme{t}")).collect(),
        })
    }

    pub fn from_corpora(train: &StoredCorpus, test: &StoredCorpus) -> CliResult<Self> {
        let (train_labels, names) = train.label_assignment(None)?;
        let (test_labels, _) = test.label_assignment(Some(&names))?;
        Ok(Data {
            vocab: train.vocab.clone(),
            train: train.counts.clone(),
            train_labels,
            test: test.project(&train.vocab)?,
            test_labels: Clustering::from(&test_labels),
            names,
        })
    }

    /// Cooccurrence between the hard clustering of the test set under `params` and its labels.
    pub fn test_cooccurrence(&self, params: &ModelParams) -> CliResult<f64> {
        self.test_cooccurrence_of(&self.test, params)
    }

    fn test_cooccurrence_of(&self, test: &CountMatrix, params: &ModelParams) -> CliResult<f64> {
        let predicted = hard_assign(test, params)?;
        Ok(cooccurrence_score(&Clustering::from(&predicted), &self.test_labels)?.score)
    }

    /// Both corpora restricted to `policy`'s vocabulary.
    fn reduced(&self, policy: VocabPolicy) -> CliResult<(CountMatrix, CountMatrix)> {
        let kept = reduce_vocabulary(&self.vocab, &self.train, policy)?;
        Ok((
            project_counts(&self.train, &self.vocab, &kept)?,
            project_counts(&self.test, &self.vocab, &kept)?,
        ))
    }
}

pub struct Experiment {
    pub name: String,
    pub out: PathBuf,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub runs: Option<usize>,
    pub iterations: Option<usize>,
    pub sweeps: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub data: Data,
}

/// Random stream of run `r`; stream 0 of the seed is kept for corpus generation.
fn run_rng(seed: u64, r: usize) -> ChainRng {
    rng::stream(seed, r as u64 + 1)
}

fn em_config(n_iters: usize) -> EmConfig {
    EmConfig {
        n_iters,
        ..EmConfig::default()
    }
}

fn csv(out: &Path, name: &str, header: &str, rows: &[String]) -> CliResult<()> {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    store::write_string(&out.join(name), &text)
}

fn summary_line(label: &str, values: &[f64]) -> String {
    match Summary::of(values) {
        Some(s) => format!(
            "{label}: n={} mean={:.4} min={:.4} q1={:.4} median={:.4} q3={:.4} max={:.4}",
            s.n, s.mean, s.min, s.q1, s.median, s.q3, s.max
        ),
        None => format!("{label}: no values"),
    }
}

impl Experiment {
    fn runs(&self, default: usize) -> usize {
        self.runs.unwrap_or(default)
    }

    fn iterations(&self, default: usize) -> usize {
        self.iterations.unwrap_or(default)
    }

    fn dirichlet(&self, r: usize) -> CliResult<Responsibilities> {
        Ok(dirichlet_init(
            self.data.train.n_docs(),
            self.data.n_themes(),
            &mut run_rng(self.seed, r),
        )?)
    }

    fn categories(&self) -> CliResult<Responsibilities> {
        Ok(label_init(&self.data.train_labels, self.data.n_themes())?)
    }

    /// Training perplexity, test perplexity and test cooccurrence against `λ_β − 1`,
    /// for Dirichlet and category initializations.
    fn smoothing_sweep(&self) -> CliResult<Vec<String>> {
        let grid = self.grid.clone().unwrap_or(SMOOTHING_GRID.to_vec());
        let config = em_config(self.iterations(30));
        let runs = self.runs(5);
        let d = &self.data;
        let header = "lambda_beta_minus_1,run,train_perplexity,test_perplexity,test_cooccurrence";
        let mut lines = Vec::new();
        for (init, n) in [("dirichlet", runs), ("labels", 1)] {
            let jobs: Vec<(f64, usize)> = grid.iter().flat_map(|&g| (0..n).map(move |r| (g, r))).collect();
            let rows = jobs
                .par_iter()
                .map(|&(g, r)| {
                    let hyper = Hyperparams::new(self.hyper.lambda_alpha, 1.0 + g)?;
                    let start = if init == "labels" {
                        self.categories()?
                    } else {
                        self.dirichlet(r)?
                    };
                    let trace = run_em(&d.train, start, &hyper, &config)?;
                    Ok(format!(
                        "{g},{},{},{},{}",
                        r + 1,
                        trace.final_perplexity(),
                        perplexity(&d.test, &trace.params)?,
                        d.test_cooccurrence(&trace.params)?
                    ))
                })
                .collect::<CliResult<Vec<_>>>()?;
            csv(&self.out, &format!("smoothing_{init}.csv"), header, &rows)?;
            lines.push(format!("smoothing_{init}.csv: {} rows", rows.len()));
        }
        Ok(lines)
    }

    /// Test cooccurrence after EM on reduced vocabularies: keeping the most
    /// frequent words, or dropping them.
    fn vocab_sweep(&self) -> CliResult<Vec<String>> {
        let sizes: Vec<usize> = match &self.grid {
            Some(g) => g.iter().map(|&v| v as usize).collect(),
            None => VOCAB_GRID.to_vec(),
        };
        let config = em_config(self.iterations(30));
        let runs = self.runs(5);
        let n_w = self.data.vocab.len();
        let mut lines = Vec::new();
        for (strategy, policy) in [
            ("keep", VocabPolicy::KeepMostFrequent as fn(usize) -> VocabPolicy),
            ("drop", VocabPolicy::DropMostFrequent),
        ] {
            let sizes: Vec<usize> = sizes.iter().copied().filter(|&n| n > 0 && n < n_w).collect();
            for (init, n) in [("dirichlet", runs), ("labels", 1)] {
                let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&s| (0..n).map(move |r| (s, r))).collect();
                let rows = jobs
                    .par_iter()
                    .map(|&(size, r)| {
                        let (train, test) = self.data.reduced(policy(size))?;
                        let start = if init == "labels" {
                            self.categories()?
                        } else {
                            self.dirichlet(r)?
                        };
                        let trace = run_em(&train, start, &self.hyper, &config)?;
                        let vocab_size = if strategy == "keep" { size } else { n_w - size };
                        Ok(format!(
                            "{size},{vocab_size},{},{}",
                            r + 1,
                            self.data.test_cooccurrence_of(&test, &trace.params)?
                        ))
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                let name = format!("vocab_{strategy}_{init}.csv");
                let header = format!("{strategy},vocab_size,run,test_cooccurrence");
                csv(&self.out, &name, &header, &rows)?;
                lines.push(format!("{name}: {} rows", rows.len()));
            }
        }
        Ok(lines)
    }

    /// Flat EM against staged EM over the same Dirichlet initializations.
    fn iterative_vs_flat(&self) -> CliResult<Vec<String>> {
        let d = &self.data;
        let schedule = IterativeSchedule::default_for(d.vocab.len(), self.iterations(15));
        let flat = em_config(schedule.total_iterations());
        let staged = em_config(0);
        let header = "run,train_perplexity,test_cooccurrence";
        let results = (0..self.runs(30))
            .into_par_iter()
            .map(|r| {
                let f = run_em(&d.train, self.dirichlet(r)?, &self.hyper, &flat)?;
                let s = run_iterative(&d.train, &d.vocab, &schedule, self.dirichlet(r)?, &self.hyper, &staged)?;
                Ok([
                    (f.final_perplexity(), d.test_cooccurrence(&f.params)?),
                    (s.final_perplexity(), d.test_cooccurrence(&s.params)?),
                ])
            })
            .collect::<CliResult<Vec<_>>>()?;
        let mut lines = Vec::new();
        for (i, name) in ["flat", "iterative"].iter().enumerate() {
            let rows: Vec<String> = results
                .iter()
                .enumerate()
                .map(|(r, p)| format!("{},{},{}", r + 1, p[i].0, p[i].1))
                .collect();
            csv(&self.out, &format!("{name}.csv"), header, &rows)?;
            let cooc: Vec<f64> = results.iter().map(|p| p[i].1).collect();
            lines.push(summary_line(&format!("{name} test cooccurrence"), &cooc));
        }
        Ok(lines)
    }

    /// Final training perplexity against test cooccurrence over staged-EM restarts.
    fn restart_correlation(&self) -> CliResult<Vec<String>> {
        let d = &self.data;
        let schedule = IterativeSchedule::default_for(d.vocab.len(), self.iterations(15));
        let inner = Inner::Iterative {
            vocab: &d.vocab,
            schedule: &schedule,
            config: em_config(0),
        };
        let restarts = run_restarts(&d.train, d.n_themes(), self.runs(30), &self.hyper, self.seed, inner)?;
        let report = restart_correlation_report(&restarts.traces, &d.test, &d.test_labels)?;
        let rows: Vec<String> = report
            .points
            .iter()
            .enumerate()
            .map(|(r, p)| {
                format!(
                    "{},{},{},{}",
                    r + 1,
                    p.train_perplexity,
                    p.test_cooccurrence,
                    u8::from(r == restarts.best)
                )
            })
            .collect();
        csv(
            &self.out,
            "restart_correlation.csv",
            "run,train_perplexity,test_cooccurrence,best",
            &rows,
        )?;
        let best = &report.points[restarts.best];
        Ok(vec![
            format!(
                "spearman={}{}",
                report.spearman,
                if report.degenerate { " (degenerate)" } else { "" }
            ),
            format!(
                "lowest training perplexity {} has test cooccurrence {}",
                best.train_perplexity, best.test_cooccurrence
            ),
        ])
    }

    /// Error rates of naive Bayes and the predictive rule over the smoothing grid.
    fn rule_comparison(&self) -> CliResult<Vec<String>> {
        let d = &self.data;
        let grid = self.grid.clone().unwrap_or(SMOOTHING_GRID.to_vec());
        let train = LabeledCorpus::new(d.train.clone(), d.train_labels.clone(), d.names.clone())?;
        let test_labels = ThemeAssignment::new(d.test_labels.labels().to_vec(), d.n_themes())?;
        let test = LabeledCorpus::new(d.test.clone(), test_labels, d.names.clone())?;
        let rows: Vec<String> = compare_rules(&train, &test, &grid)?
            .iter()
            .map(|c| format!("{},{},{}", c.lambda, c.naive_error, c.bayes_error))
            .collect();
        csv(
            &self.out,
            "rule_comparison.csv",
            "lambda,naive_error,bayes_error",
            &rows,
        )?;
        Ok(vec![format!("rule_comparison.csv: {} rows", rows.len())])
    }

    /// Per-iteration agreement between soft EM and k-means from shared label-style starts.
    fn em_vs_kmeans(&self) -> CliResult<Vec<String>> {
        let d = &self.data;
        let config = EmConfig {
            record_assignments: true,
            ..em_config(self.iterations(10))
        };
        let n_t = d.n_themes();
        let per_run = (0..self.runs(5))
            .into_par_iter()
            .map(|r| {
                let start = random_assignment(d.train.n_docs(), n_t, &mut run_rng(self.seed, r))?;
                let soft = run_em(&d.train, label_init(&start, n_t)?, &self.hyper, &config)?;
                let hard = run_kmeans(&d.train, start, &self.hyper, &config)?;
                let mut rows = Vec::new();
                for (i, rec) in soft.iterations.iter().enumerate() {
                    // k-means stops at a fixed point; its clustering stays put from there.
                    let k = hard
                        .iterations
                        .get(i)
                        .or(hard.iterations.last())
                        .and_then(|x| x.assignment.as_ref());
                    if let (Some(a), Some(b)) = (rec.assignment.as_ref(), k) {
                        let score = cooccurrence_score(&Clustering::from(a), &Clustering::from(b))?.score;
                        rows.push(format!("{},{},{score}", r + 1, i + 1));
                    }
                }
                Ok(rows)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let rows: Vec<String> = per_run.into_iter().flatten().collect();
        csv(&self.out, "em_vs_kmeans.csv", "run,iteration,cooccurrence", &rows)?;
        Ok(vec![format!("em_vs_kmeans.csv: {} rows", rows.len())])
    }

    /// Training perplexity and test cooccurrence along naive and collapsed chains,
    /// with wall time per sweep.
    fn gibbs_comparison(&self) -> CliResult<Vec<String>> {
        let d = &self.data;
        let sweeps = self.sweeps.unwrap_or(200);
        let config = ChainConfig {
            snapshot_every: (sweeps / 20).max(1),
            target: Some(ScoreTarget {
                counts: &d.test,
                reference: &d.test_labels,
            }),
            ..ChainConfig::with_sweeps(sweeps)
        };
        let mut lines = Vec::new();
        let mut timing = Vec::new();
        for kind in [ChainKind::Naive, ChainKind::Collapsed] {
            let name = match kind {
                ChainKind::Naive => "naive",
                ChainKind::Collapsed => "collapsed",
            };
            let mut rows = Vec::new();
            let mut finals = Vec::new();
            for r in 0..self.runs(5) {
                let init = random_assignment(d.train.n_docs(), d.n_themes(), &mut run_rng(self.seed, r))?;
                let start = Instant::now();
                let chain_rng = rng::stream(self.seed, 1_000_000 + r as u64);
                let trace = run_chain(&d.train, init, &self.hyper, kind, &config, chain_rng)?;
                let per_sweep = start.elapsed().as_secs_f64() / sweeps as f64;
                timing.push(format!("{name},{},{per_sweep}", r + 1));
                for s in &trace.snapshots {
                    rows.push(format!(
                        "{},{},{},{}",
                        r + 1,
                        s.sweep,
                        s.train_perplexity,
                        s.cooccurrence.unwrap_or(f64::NAN)
                    ));
                }
                finals.push(d.test_cooccurrence(&trace.final_params)?);
            }
            csv(
                &self.out,
                &format!("gibbs_{name}.csv"),
                "chain,sweep,train_perplexity,test_cooccurrence",
                &rows,
            )?;
            lines.push(summary_line(&format!("{name} final test cooccurrence"), &finals));
        }
        csv(
            &self.out,
            "gibbs_timing.csv",
            "chain_kind,chain,seconds_per_sweep",
            &timing,
        )?;
        Ok(lines)
    }

    pub fn run(&self) -> CliResult<Vec<String>> {
        std::fs::create_dir_all(&self.out)?;
        match self.name.as_str() {
            "smoothing-sweep" => self.smoothing_sweep(),
            "vocab-sweep" => self.vocab_sweep(),
            "iterative-vs-flat" => self.iterative_vs_flat(),
            "restart-correlation" => self.restart_correlation(),
            "rule-comparison" => self.rule_comparison(),
            "em-vs-kmeans" => self.em_vs_kmeans(),
            "gibbs-comparison" => self.gibbs_comparison(),
            other => Err(unknown(other)),
        }
    }
}

fn unknown(name: &str) -> CliError {
    CliError::validation(format!(
        "unknown experiment {name:?}; valid names: {}",
        NAMES.join(", ")
    ))
}

fn load_data(s: &mut Settings, seed: u64) -> CliResult<Option<Data>> {
    let corpus: Option<PathBuf> = s.get("corpus");
    let test: Option<PathBuf> = s.get("test");
    let folds: Option<usize> = s.get("folds");
    let fold: Option<usize> = s.get("fold");
    let themes = s.get_or("themes", 5);
    let words = s.get_or("words", 2000);
    let docs = s.get_or("docs", 1000);
    match &corpus {
        Some(_) => {
            s.check(test.is_some() != folds.is_some(), || {
                "with corpus, give either test or folds (with fold)".into()
            });
            for key in ["themes", "words", "docs"] {
                let absent = s.raw(key).is_none();
                s.check(absent, || format!("{key} only applies to the synthetic corpus"));
            }
        }
        None => {
            s.check(test.is_none() && folds.is_none(), || {
                "test and folds need corpus".into()
            });
            s.check(themes >= 1 && words >= 1 && docs >= 2, || {
                "synthetic corpus needs themes, words >= 1, docs >= 2".into()
            });
        }
    }
    if let Some(k) = folds {
        s.check(fold.is_some_and(|i| i < k) && k >= 2, || {
            "need folds >= 2 and fold < folds".into()
        });
    } else {
        s.check(fold.is_none(), || "fold needs folds".into());
    }
    s.finish()?;
    let Some(corpus) = corpus else {
        let n_test = (docs / 4).max(1);
        return Ok(Some(Data::synthetic(TextLike::new(themes, words, docs), n_test, seed)?));
    };
    let full = StoredCorpus::load(&corpus)?;
    let data = match (test, folds) {
        (Some(t), _) => Data::from_corpora(&full, &StoredCorpus::load(&t)?)?,
        (None, Some(k)) => {
            let (train, test) = split_folds(full.n_docs(), k, seed)?.train_test(fold.unwrap());
            Data::from_corpora(&full.select(&train), &full.select(&test))?
        }
        (None, None) => unreachable!("validated"),
    };
    Ok(Some(data))
}

pub fn run(name: &str, s: &mut Settings) -> CliResult<()> {
    if !NAMES.contains(&name) {
        return Err(unknown(name));
    }
    let out = crate::out_dir(s);
    s.check(out.is_some(), || "out is required".into());
    let seed = s.get_or("seed", crate::DEFAULT_SEED);
    let hyper = crate::hyperparams(s);
    if let Some(h) = &hyper {
        if name != "gibbs-comparison" && name != "rule-comparison" {
            if let Err(e) = h.require_map() {
                s.error(e.to_string());
            }
        }
    }
    let runs: Option<usize> = s.get("runs");
    s.check(runs != Some(0), || "runs must be positive".into());
    s.check(name != "restart-correlation" || runs.is_none_or(|r| r >= 3), || {
        "restart-correlation needs at least 3 runs".into()
    });
    let iterations = s.get("iterations");
    let sweeps: Option<usize> = s.get("sweeps");
    s.check(sweeps.is_none_or(|n| n >= 2), || "sweeps must be at least 2".into());
    let grid: Option<Vec<f64>> = s.list("grid");
    s.check(
        grid.as_ref()
            .is_none_or(|g| !g.is_empty() && g.iter().all(|&v| v > 0.0)),
        || "grid values must be positive".into(),
    );
    let data = load_data(s, seed)?.expect("loaded");
    let experiment = Experiment {
        name: name.to_owned(),
        out: out.unwrap(),
        seed,
        hyper: hyper.unwrap(),
        runs,
        iterations,
        sweeps,
        grid,
        data,
    };
    std::fs::create_dir_all(&experiment.out)?;
    let mut settings = s.echo(&["out", "config"]);
    let _ = writeln!(settings, "experiment={name}");
    store::write_string(&experiment.out.join(store::CONFIG_FILE), &settings)?;
    for line in experiment.run()? {
        println!("{line}");
    }
    Ok(())
}
