//! Unsupervised estimation by EM and its variants: soft EM, hard EM
//! (k-means with the multinomial divergence), vocabulary-staged EM and
//! perplexity-selected restarts.
//!
//! Every run starts from responsibilities, i.e. with an M-step.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{project_counts, reduce_vocabulary, CountMatrix, VocabPolicy, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{argmax, check_dims, log_prior, perplexity_from_log_likelihood};
use crate::model::{lse, sample_dirichlet, Hyperparams, ModelParams, ThemeAssignment};
use crate::rng;

/// Row-major `n_D × n_T` matrix of `P(T_d = t | C; α, β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n_themes: usize,
    values: Vec<f64>,
}

pub const ROW_TOLERANCE: f64 = 1e-10;

impl Responsibilities {
    pub fn new(n_themes: usize, values: Vec<f64>) -> Result<Self> {
        if n_themes == 0 || !values.len().is_multiple_of(n_themes) {
            return Err(Error::DimensionMismatch(format!(
                "{} responsibilities are not rows of {n_themes}",
                values.len()
            )));
        }
        for (d, row) in values.chunks_exact(n_themes).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| v.is_nan() || *v < 0.0) || (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "responsibility row {d} is not a distribution (sums to {s})"
                )));
            }
        }
        Ok(Responsibilities { n_themes, values })
    }

    pub fn n_docs(&self) -> usize {
        self.values.len() / self.n_themes
    }

    pub fn n_themes(&self) -> usize {
        self.n_themes
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.values[d * self.n_themes..(d + 1) * self.n_themes]
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[f64]> + ExactSizeIterator + '_ {
        self.values.chunks_exact(self.n_themes)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-theme mass `Σ_d r_dt`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_themes];
        for row in self.rows() {
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        sums
    }

    /// Row-wise argmax, ties to the lowest theme id.
    pub fn hard(&self) -> ThemeAssignment {
        let themes = self.rows().map(argmax).collect();
        ThemeAssignment::new(themes, self.n_themes).expect("argmax is in range")
    }

    /// One row per document, tab-separated.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<responsibilities>", e);
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join("\t")).map_err(io)?;
        }
        Ok(())
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_tsv(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Posterior theme probabilities under `params`, plus each document's
/// log-likelihood `log Σ_t α_t Π_w β_wt^C_wd`.
fn e_step_with_likelihood(counts: &CountMatrix, params: &ModelParams) -> Result<(Responsibilities, Vec<f64>)> {
    check_dims(counts, params)?;
    let n_t = params.n_themes();
    let mut values = vec![0.0; counts.n_docs() * n_t];
    let log_liks = values
        .par_chunks_mut(n_t.max(1))
        .enumerate()
        .map(|(d, row)| {
            params.doc_log_joint(counts.doc(d), row);
            let z = lse(row);
            if z == f64::NEG_INFINITY {
                return Err(Error::ZeroLikelihood { doc: d });
            }
            for r in row.iter_mut() {
                *r = (*r - z).exp();
            }
            Ok(z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Responsibilities { n_themes: n_t, values }, log_liks))
}

pub fn e_step(counts: &CountMatrix, params: &ModelParams) -> Result<Responsibilities> {
    Ok(e_step_with_likelihood(counts, params)?.0)
}

/// Documents per accumulation block: depends on `n_D` only, so the summation
/// order (and the result) is the same for any worker count.
fn block_size(n_docs: usize) -> usize {
    n_docs.div_ceil(16).max(256)
}

/// `α_t ∝ λ_α−1 + Σ_d r_dt`, `β_wt ∝ λ_β−1 + Σ_d C_wd r_dt`.
pub fn m_step(counts: &CountMatrix, resp: &Responsibilities, hyper: &Hyperparams) -> Result<ModelParams> {
    hyper.require_map()?;
    if resp.n_docs() != counts.n_docs() {
        return Err(Error::DimensionMismatch(format!(
            "{} responsibility rows for {} documents",
            resp.n_docs(),
            counts.n_docs()
        )));
    }
    let (n_t, n_w) = (resp.n_themes(), counts.n_words());
    let n_d = counts.n_docs();
    let block = block_size(n_d);
    let blocks: Vec<Vec<f64>> = (0..n_d.div_ceil(block))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; n_w * n_t];
            for d in b * block..((b + 1) * block).min(n_d) {
                let row = resp.row(d);
                for (w, c) in counts.doc(d).iter() {
                    let c = f64::from(c);
                    for (a, r) in acc[w * n_t..(w + 1) * n_t].iter_mut().zip(row) {
                        *a += c * r;
                    }
                }
            }
            acc
        })
        .collect();
    let pb = hyper.lambda_beta - 1.0;
    let mut numer = vec![pb; n_w * n_t];
    for acc in &blocks {
        for (n, a) in numer.iter_mut().zip(acc) {
            *n += a;
        }
    }

    let pa = hyper.lambda_alpha - 1.0;
    let alpha_numer: Vec<f64> = resp.column_sums().iter().map(|s| s + pa).collect();
    let alpha_total: f64 = alpha_numer.iter().sum();
    if alpha_total.is_nan() || alpha_total <= 0.0 {
        return Err(Error::EmptyCorpus);
    }
    let log_alpha = alpha_numer.iter().map(|a| a.ln() - alpha_total.ln()).collect();

    let mut column_totals = vec![0.0; n_t];
    for row in numer.chunks_exact(n_t) {
        for (s, v) in column_totals.iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(t) = column_totals.iter().position(|s| s.is_nan() || *s <= 0.0) {
        return Err(Error::DegenerateTheme { theme: t });
    }
    let log_totals: Vec<f64> = column_totals.iter().map(|s| s.ln()).collect();
    for row in numer.chunks_exact_mut(n_t) {
        for (v, lt) in row.iter_mut().zip(&log_totals) {
            *v = v.ln() - lt;
        }
    }
    ModelParams::from_log(n_w, log_alpha, numer)
}

/// Independent uniform draws on the simplex, one row per document.
pub fn dirichlet_init<R: Rng + ?Sized>(n_docs: usize, n_themes: usize, rng: &mut R) -> Result<Responsibilities> {
    let ones = vec![1.0; n_themes];
    let mut values = Vec::with_capacity(n_docs * n_themes);
    for _ in 0..n_docs {
        values.extend(sample_dirichlet(&ones, rng)?);
    }
    Responsibilities::new(n_themes, values)
}

/// One-hot rows from known themes.
pub fn label_init(labels: &ThemeAssignment, n_themes: usize) -> Result<Responsibilities> {
    if labels.n_themes() > n_themes {
        return Err(Error::DimensionMismatch(format!(
            "labels use {} themes, model has {n_themes}",
            labels.n_themes()
        )));
    }
    let mut values = vec![0.0; labels.len() * n_themes];
    for (d, &t) in labels.themes().iter().enumerate() {
        values[d * n_themes + t] = 1.0;
    }
    Responsibilities::new(n_themes, values)
}

/// `argmax_t [log α_t + Σ_w C_wd log β_wt]`, ties to the lowest theme id.
pub fn hard_assign(counts: &CountMatrix, params: &ModelParams) -> Result<ThemeAssignment> {
    check_dims(counts, params)?;
    let themes = (0..counts.n_docs())
        .into_par_iter()
        .map_init(
            || vec![0.0; params.n_themes()],
            |buf, d| {
                params.doc_log_joint(counts.doc(d), buf);
                argmax(buf)
            },
        )
        .collect();
    ThemeAssignment::new(themes, params.n_themes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmConfig {
    pub n_iters: usize,
    /// Stop once the log-posterior gain falls below `tol·|log-posterior|`.
    pub tol: Option<f64>,
    /// Keep the hard assignment after every iteration.
    pub record_assignments: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            n_iters: 30,
            tol: None,
            record_assignments: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Unnormalized `log p(α, β | C)` of the parameters after this iteration's M-step.
    pub log_posterior: f64,
    pub train_perplexity: f64,
    pub assignment: Option<ThemeAssignment>,
    /// Stage of a staged run (0 otherwise).
    pub stage: usize,
}

#[derive(Debug, Clone)]
pub struct EmTrace {
    pub iterations: Vec<IterationRecord>,
    pub params: ModelParams,
    pub responsibilities: Responsibilities,
    /// Training perplexity of `params` on the full corpus.
    pub final_perplexity: f64,
    pub seed: Option<u64>,
    pub hyper: Hyperparams,
    pub config: EmConfig,
}

impl EmTrace {
    pub fn final_perplexity(&self) -> f64 {
        self.final_perplexity
    }

    pub fn clustering(&self) -> ThemeAssignment {
        self.responsibilities.hard()
    }

    /// `iter,log_posterior,train_perplexity` with 1-based iterations.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<trace>", e);
        writeln!(out, "iter,log_posterior,train_perplexity").map_err(io)?;
        for (i, rec) in self.iterations.iter().enumerate() {
            writeln!(out, "{},{},{}", i + 1, rec.log_posterior, rec.train_perplexity).map_err(io)?;
        }
        Ok(())
    }
}

/// Allowed decrease of the objective between iterations, absorbing rounding in
/// sums over many documents.
fn monotone_slack(value: f64) -> f64 {
    (1e-12 * value.abs()).max(1e-8)
}

/// EM iterations on one corpus, appending to `records`.
fn em_loop(
    counts: &CountMatrix,
    mut resp: Responsibilities,
    hyper: &Hyperparams,
    config: &EmConfig,
    stage: usize,
    records: &mut Vec<IterationRecord>,
) -> Result<(ModelParams, Responsibilities)> {
    let mut params = m_step(counts, &resp, hyper)?;
    let mut previous: Option<f64> = None;
    for iteration in 0..config.n_iters {
        if iteration > 0 {
            params = m_step(counts, &resp, hyper)?;
        }
        let (next, log_liks) = e_step_with_likelihood(counts, &params)?;
        resp = next;
        let log_lik: f64 = log_liks.iter().sum();
        let lp = log_lik + log_prior(&params, hyper);
        if let Some(prev) = previous {
            if lp < prev - monotone_slack(prev) {
                return Err(Error::NonMonotone {
                    iteration: records.len(),
                    previous: prev,
                    current: lp,
                });
            }
        }
        records.push(IterationRecord {
            log_posterior: lp,
            train_perplexity: perplexity_from_log_likelihood(log_lik, counts.total_length())?,
            assignment: config.record_assignments.then(|| resp.hard()),
            stage,
        });
        if let (Some(tol), Some(prev)) = (config.tol, previous) {
            if lp - prev <= tol * prev.abs() {
                break;
            }
        }
        previous = Some(lp);
    }
    Ok((params, resp))
}

fn check_init(counts: &CountMatrix, init: &Responsibilities) -> Result<()> {
    if counts.total_length() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if init.n_docs() != counts.n_docs() {
        return Err(Error::DimensionMismatch(format!(
            "{} initial rows for {} documents",
            init.n_docs(),
            counts.n_docs()
        )));
    }
    Ok(())
}

fn final_perplexity(counts: &CountMatrix, params: &ModelParams) -> Result<f64> {
    crate::eval::perplexity(counts, params)
}

/// Alternates M- and E-steps from initial responsibilities.
///
/// With `n_iters = 0` the trace is empty and holds the M-step of `init`.
pub fn run_em(counts: &CountMatrix, init: Responsibilities, hyper: &Hyperparams, config: &EmConfig) -> Result<EmTrace> {
    check_init(counts, &init)?;
    let mut iterations = Vec::new();
    let (params, responsibilities) = em_loop(counts, init, hyper, config, 0, &mut iterations)?;
    let final_perplexity = match iterations.last() {
        Some(rec) => rec.train_perplexity,
        None => final_perplexity(counts, &params)?,
    };
    Ok(EmTrace {
        iterations,
        params,
        responsibilities,
        final_perplexity,
        seed: None,
        hyper: *hyper,
        config: *config,
    })
}

/// Hard EM: alternate an M-step on one-hot responsibilities with
/// [`hard_assign`], stopping early at an assignment fixed point.
pub fn run_kmeans(
    counts: &CountMatrix,
    init: ThemeAssignment,
    hyper: &Hyperparams,
    config: &EmConfig,
) -> Result<EmTrace> {
    let n_t = init.n_themes();
    check_init(counts, &label_init(&init, n_t)?)?;
    let mut assignment = init;
    let mut params = m_step(counts, &label_init(&assignment, n_t)?, hyper)?;
    let mut iterations = Vec::new();
    for iteration in 0..config.n_iters {
        if iteration > 0 {
            params = m_step(counts, &label_init(&assignment, n_t)?, hyper)?;
        }
        let next = hard_assign(counts, &params)?;
        let log_lik = crate::eval::log_likelihood(counts, &params)?;
        iterations.push(IterationRecord {
            log_posterior: log_lik + log_prior(&params, hyper),
            train_perplexity: perplexity_from_log_likelihood(log_lik, counts.total_length())?,
            assignment: config.record_assignments.then(|| next.clone()),
            stage: 0,
        });
        let fixed = next == assignment;
        assignment = next;
        if fixed {
            break;
        }
    }
    let final_perplexity = match iterations.last() {
        Some(rec) => rec.train_perplexity,
        None => final_perplexity(counts, &params)?,
    };
    Ok(EmTrace {
        iterations,
        params,
        responsibilities: label_init(&assignment, n_t)?,
        final_perplexity,
        seed: None,
        hyper: *hyper,
        config: *config,
    })
}

/// Vocabulary size of a stage; `None` is the full vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub vocab_size: Option<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IterativeSchedule {
    stages: Vec<Stage>,
}

impl IterativeSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.last().map(|s| s.vocab_size) != Some(None) {
            return Err(Error::InvalidArgument(
                "the last stage must use the full vocabulary".into(),
            ));
        }
        let sizes: Vec<usize> = stages.iter().map(|s| s.vocab_size.unwrap_or(usize::MAX)).collect();
        if sizes.windows(2).any(|w| w[0] > w[1]) || sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "stage vocabulary sizes must be positive and non-decreasing".into(),
            ));
        }
        Ok(IterativeSchedule { stages })
    }

    /// Four stages of `iterations` each at `⌈n_W/50⌉`, `⌈n_W/16⌉`, `⌈n_W/5⌉` and all words.
    pub fn default_for(n_words: usize, iterations: usize) -> Self {
        let stage = |vocab_size| Stage { vocab_size, iterations };
        IterativeSchedule {
            stages: vec![
                stage(Some(n_words.div_ceil(50).max(1))),
                stage(Some(n_words.div_ceil(16).max(1))),
                stage(Some(n_words.div_ceil(5).max(1))),
                stage(None),
            ],
        }
    }

    /// A single full-vocabulary stage.
    pub fn flat(iterations: usize) -> Self {
        IterativeSchedule {
            stages: vec![Stage {
                vocab_size: None,
                iterations,
            }],
        }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    /// Parses `size:iters,...` where the size `full` (or `FULL`) denotes all words.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad schedule {spec:?} (expected size:iters,...,full:iters)"));
        let stages = spec
            .split(',')
            .map(|part| {
                let (size, iters) = part.trim().split_once(':').ok_or_else(bad)?;
                let vocab_size = if size.eq_ignore_ascii_case("full") {
                    None
                } else {
                    Some(size.parse().map_err(|_| bad())?)
                };
                Ok(Stage {
                    vocab_size,
                    iterations: iters.parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(stages)
    }
}

/// EM on growing vocabularies: each stage keeps the most frequent words and
/// starts from the responsibilities left by the previous one.
pub fn run_iterative(
    counts_full: &CountMatrix,
    vocab: &Vocabulary,
    schedule: &IterativeSchedule,
    init: Responsibilities,
    hyper: &Hyperparams,
    config: &EmConfig,
) -> Result<EmTrace> {
    check_init(counts_full, &init)?;
    let mut resp = init;
    let mut iterations = Vec::new();
    let mut params = None;
    for (i, stage) in schedule.stages().iter().enumerate() {
        let stage_config = EmConfig {
            n_iters: stage.iterations,
            ..*config
        };
        let fit = match stage.vocab_size {
            Some(n) if n < vocab.len() => {
                let kept = reduce_vocabulary(vocab, counts_full, VocabPolicy::KeepMostFrequent(n))?;
                let reduced = project_counts(counts_full, vocab, &kept)?;
                if reduced.total_length() == 0 {
                    return Err(Error::EmptyCorpus);
                }
                em_loop(&reduced, resp, hyper, &stage_config, i, &mut iterations)?
            }
            _ => em_loop(counts_full, resp, hyper, &stage_config, i, &mut iterations)?,
        };
        resp = fit.1;
        params = Some(fit.0);
    }
    let params = params.expect("schedules end with a full stage");
    let final_perplexity = match iterations.last() {
        Some(rec) if rec.stage == schedule.stages().len() - 1 => rec.train_perplexity,
        _ => final_perplexity(counts_full, &params)?,
    };
    Ok(EmTrace {
        iterations,
        params,
        responsibilities: resp,
        final_perplexity,
        seed: None,
        hyper: *hyper,
        config: *config,
    })
}

/// What each restart runs after its Dirichlet initialization.
#[derive(Debug, Clone, Copy)]
pub enum Inner<'a> {
    Em(EmConfig),
    Iterative {
        vocab: &'a Vocabulary,
        schedule: &'a IterativeSchedule,
        config: EmConfig,
    },
}

#[derive(Debug, Clone)]
pub struct Restarts {
    /// Index of the run with the lowest final training perplexity (first on ties).
    pub best: usize,
    pub traces: Vec<EmTrace>,
}

impl Restarts {
    pub fn best_trace(&self) -> &EmTrace {
        &self.traces[self.best]
    }
}

/// Run `i` draws its initialization from `rng::stream(seed, i)`; runs execute in parallel.
pub fn run_restarts(
    counts: &CountMatrix,
    n_themes: usize,
    n_runs: usize,
    hyper: &Hyperparams,
    seed: u64,
    inner: Inner<'_>,
) -> Result<Restarts> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("at least one run is required".into()));
    }
    let traces = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let init = dirichlet_init(counts.n_docs(), n_themes, &mut r)?;
            let mut trace = match inner {
                Inner::Em(config) => run_em(counts, init, hyper, &config)?,
                Inner::Iterative {
                    vocab,
                    schedule,
                    config,
                } => run_iterative(counts, vocab, schedule, init, hyper, &config)?,
            };
            trace.seed = Some(seed);
            Ok(trace)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, t) in traces.iter().enumerate() {
        if t.final_perplexity < traces[best].final_perplexity {
            best = i;
        }
    }
    Ok(Restarts { best, traces })
}
