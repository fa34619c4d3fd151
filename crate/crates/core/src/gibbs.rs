//! Gibbs samplers over theme indicators.
//!
//! The naive chain alternates between indicators and explicit `(α, β)` draws;
//! the collapsed chain integrates the parameters out and resamples each
//! indicator from its Dirichlet-multinomial conditional, keeping sufficient
//! statistics up to date incrementally.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{CountMatrix, DocCounts};
use crate::em::hard_assign;
use crate::error::{Error, Result};
use crate::eval::{cooccurrence_score, perplexity, Clustering};
use crate::model::{
    cached_word_terms, log_normalize, predictive_log_weights, sample_log_categorical, sample_log_gamma, theme_terms,
    Hyperparams, LogGammaTable, ModelParams, SplitDocs, StepCache, SuffStats, ThemeAssignment,
};
use crate::rng::{self, ChainRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Naive,
    Collapsed,
}

impl std::str::FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(ChainKind::Naive),
            "collapsed" => Ok(ChainKind::Collapsed),
            _ => Err(Error::InvalidArgument(format!(
                "unknown chain {s:?} (expected naive|collapsed)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    assignment: ThemeAssignment,
    /// Statistics of `assignment`; kept current by both chains.
    stats: SuffStats,
    /// Current `(α, β)` draw of the naive chain.
    pub params: Option<ModelParams>,
    pub rng: ChainRng,
    pub sweeps: usize,
    scratch: Vec<f64>,
    weights: Vec<f64>,
    /// Collapsed chains only, tagged with the `(offset_word, n_max)` of the
    /// table it was read from.
    cache: Option<((f64, usize), StepCache)>,
    /// Collapsed chains only; a chain stays bound to the corpus it started on.
    split: Option<SplitDocs>,
    /// Indicator changes so far, by either chain.
    moves: u64,
    /// Collapsed chains only, valid alongside `cache`.
    sums: Option<WordSums>,
}

/// Each document's word terms under every theme, as of its last visit. They
/// depend only on the word counts, so they stay exact while no indicator moves.
#[derive(Debug, Clone)]
struct WordSums {
    values: Vec<f64>,
    /// `moves` when each document's row was computed.
    seen: Vec<u64>,
}

impl WordSums {
    fn new(n_docs: usize, n_themes: usize) -> Self {
        WordSums {
            values: vec![0.0; n_docs * n_themes],
            seen: vec![u64::MAX; n_docs],
        }
    }
}

impl ChainState {
    /// Collapsed chains start from `init` directly; naive chains first draw
    /// `(α, β)` from their conditional given `init`.
    pub fn new(
        counts: &CountMatrix,
        init: ThemeAssignment,
        hyper: &Hyperparams,
        kind: ChainKind,
        mut rng: ChainRng,
    ) -> Result<Self> {
        let n_t = init.n_themes();
        let stats = SuffStats::compute(counts, &init, n_t)?;
        let params = match kind {
            ChainKind::Collapsed => None,
            ChainKind::Naive => Some(sample_params(&stats, hyper, &mut rng)?),
        };
        Ok(ChainState {
            assignment: init,
            stats,
            params,
            rng,
            sweeps: 0,
            scratch: Vec::with_capacity(n_t),
            weights: vec![0.0; n_t],
            cache: None,
            split: None,
            moves: 0,
            sums: None,
        })
    }

    pub fn assignment(&self) -> &ThemeAssignment {
        &self.assignment
    }

    pub fn stats(&self) -> &SuffStats {
        &self.stats
    }

    pub fn kind(&self) -> ChainKind {
        if self.params.is_some() {
            ChainKind::Naive
        } else {
            ChainKind::Collapsed
        }
    }
}

/// `α ~ Dir(λ_α + S)` and `β_t ~ Dir(λ_β + K_·t)`, drawn in log domain.
fn sample_params<R: Rng + ?Sized>(stats: &SuffStats, hyper: &Hyperparams, rng: &mut R) -> Result<ModelParams> {
    let (n_t, n_w) = (stats.n_themes(), stats.n_words());
    let mut log_alpha: Vec<f64> = stats
        .doc_counts()
        .iter()
        .map(|&s| sample_log_gamma(s as f64 + hyper.lambda_alpha, rng))
        .collect();
    log_normalize(&mut log_alpha);
    let mut log_beta = vec![0.0; n_w * n_t];
    let mut column = vec![0.0; n_w];
    for t in 0..n_t {
        for (w, c) in column.iter_mut().enumerate() {
            *c = sample_log_gamma(stats.word_count(w, t) as f64 + hyper.lambda_beta, rng);
        }
        log_normalize(&mut column);
        for (w, c) in column.iter().enumerate() {
            log_beta[w * n_t + t] = *c;
        }
    }
    ModelParams::from_log(n_w, log_alpha, log_beta)
}

fn check_state(state: &ChainState, counts: &CountMatrix) -> Result<()> {
    if state.assignment.len() != counts.n_docs() || state.stats.n_words() != counts.n_words() {
        return Err(Error::DimensionMismatch(format!(
            "chain covers {} documents over {} words, corpus has {} over {}",
            state.assignment.len(),
            state.stats.n_words(),
            counts.n_docs(),
            counts.n_words()
        )));
    }
    Ok(())
}

/// One sweep of the naive chain: every indicator from its posterior under the
/// current `(α, β)`, then fresh `(α, β)` given the indicators.
pub fn naive_gibbs_sweep(state: &mut ChainState, counts: &CountMatrix, hyper: &Hyperparams) -> Result<()> {
    check_state(state, counts)?;
    let params = state
        .params
        .take()
        .ok_or_else(|| Error::InvalidArgument("naive sweep on a chain without parameters".into()))?;
    for d in 0..counts.n_docs() {
        let doc = counts.doc(d);
        params.doc_log_joint(doc, &mut state.weights);
        let t = sample_log_categorical(&state.weights, &mut state.scratch, &mut state.rng);
        move_doc(state, doc, d, t)?;
    }
    state.cache = None;
    state.sums = None;
    state.params = Some(sample_params(&state.stats, hyper, &mut state.rng)?);
    state.sweeps += 1;
    Ok(())
}

fn move_doc(state: &mut ChainState, doc: DocCounts<'_>, d: usize, t: usize) -> Result<()> {
    let old = state.assignment.get(d);
    if old != t {
        state.stats.remove_doc(doc, old, d)?;
        state.stats.add_doc(doc, t)?;
        state.assignment.set(d, t);
        state.moves += 1;
    }
    Ok(())
}

/// Normalized `log P(T_d = t | T_{−d}, C)` from statistics that exclude `doc`.
pub fn collapsed_conditional(
    stats_minus_d: &SuffStats,
    doc: DocCounts<'_>,
    hyper: &Hyperparams,
    table: &LogGammaTable,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; stats_minus_d.n_themes()];
    predictive_log_weights(stats_minus_d, doc, None, hyper, table, &mut out)?;
    log_normalize(&mut out);
    Ok(out)
}

/// Table covering every conditional a chain on `counts` can request.
pub fn chain_table(counts: &CountMatrix, hyper: &Hyperparams) -> LogGammaTable {
    LogGammaTable::for_corpus(hyper, counts, 0)
}

/// One systematic-scan sweep of the collapsed chain, in document order: each
/// document leaves its theme, is resampled from its conditional, and rejoins.
///
/// Unit-count word terms are read from a [`StepCache`] carried across sweeps,
/// since most words in a document occur once, and a document's word terms are
/// reused outright when no indicator has moved since its last visit. The chain is bound to `counts`:
/// later sweeps must pass the same corpus.
pub fn collapsed_gibbs_sweep(
    state: &mut ChainState,
    counts: &CountMatrix,
    hyper: &Hyperparams,
    table: &LogGammaTable,
) -> Result<()> {
    check_state(state, counts)?;
    if state.stats.theme_totals().iter().any(|&k| k > table.n_max()) {
        return Err(Error::InvalidArgument(format!(
            "log-gamma table of size {} is too small for this chain",
            table.n_max()
        )));
    }
    let key = (table.offset_word(), table.n_max());
    let (mut cache, mut sums) = match (state.cache.take(), state.split.as_ref(), state.sums.take()) {
        (Some((k, cache)), Some(split), Some(sums)) if k == key && split.fits(counts) => (cache, sums),
        _ => (
            StepCache::build(&state.stats, table),
            WordSums::new(counts.n_docs(), state.stats.n_themes()),
        ),
    };
    let split = match state.split.take() {
        Some(split) if split.fits(counts) => split,
        _ => SplitDocs::build(counts),
    };
    let n_t = state.stats.n_themes();
    for d in 0..counts.n_docs() {
        let doc = counts.doc(d);
        let old = state.assignment.get(d);
        let words = &mut sums.values[d * n_t..(d + 1) * n_t];
        theme_terms(&state.stats, &doc, Some(old), hyper, table, &mut state.weights)
            .and_then(|()| {
                if sums.seen[d] != state.moves {
                    cached_word_terms(&state.stats, doc, split.doc(d), old, table, &cache, words)?;
                    sums.seen[d] = state.moves;
                }
                Ok(())
            })
            .map_err(|e| match e {
                Error::InconsistentStats(_) => {
                    Error::InconsistentStats(format!("document {d} is not counted in theme {old}"))
                }
                e => e,
            })?;
        for (w, x) in state.weights.iter_mut().zip(words.iter()) {
            *w += x;
        }
        let t = sample_log_categorical(&state.weights, &mut state.scratch, &mut state.rng);
        if t != old {
            move_doc(state, doc, d, t)?;
            cache.refresh(&state.stats, &doc, old, table);
            cache.refresh(&state.stats, &doc, t, table);
        }
    }
    state.cache = Some((key, cache));
    state.split = Some(split);
    state.sums = Some(sums);
    state.sweeps += 1;
    Ok(())
}

/// `α_t ∝ S_t + λ_α`, `β_wt ∝ K_wt + λ_β`: the parameters' posterior mean
/// given the indicators.
pub fn posterior_mean(stats: &SuffStats, hyper: &Hyperparams) -> Result<ModelParams> {
    let (n_t, n_w) = (stats.n_themes(), stats.n_words());
    let alpha_total = (stats.n_assigned() as f64 + n_t as f64 * hyper.lambda_alpha).ln();
    let log_alpha = stats
        .doc_counts()
        .iter()
        .map(|&s| (s as f64 + hyper.lambda_alpha).ln() - alpha_total)
        .collect();
    let totals: Vec<f64> = stats
        .theme_totals()
        .iter()
        .map(|&k| (k as f64 + n_w as f64 * hyper.lambda_beta).ln())
        .collect();
    let mut log_beta = Vec::with_capacity(n_w * n_t);
    for w in 0..n_w {
        for (&k, lt) in stats.word_row(w).iter().zip(&totals) {
            log_beta.push((f64::from(k) + hyper.lambda_beta).ln() - lt);
        }
    }
    ModelParams::from_log(n_w, log_alpha, log_beta)
}

/// Documents and reference clustering scored at every snapshot.
#[derive(Debug, Clone, Copy)]
pub struct ScoreTarget<'a> {
    pub counts: &'a CountMatrix,
    pub reference: &'a Clustering,
}

#[derive(Debug, Clone, Copy)]
pub struct ChainConfig<'a> {
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Snapshot cadence in sweeps; 0 disables snapshots.
    pub snapshot_every: usize,
    pub target: Option<ScoreTarget<'a>>,
}

impl ChainConfig<'_> {
    /// Burn-in of 10% and no thinning.
    pub fn with_sweeps(n_sweeps: usize) -> Self {
        ChainConfig {
            n_sweeps,
            burn_in: n_sweeps / 10,
            thin: 1,
            snapshot_every: 0,
            target: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_sweeps {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be below the sweep count {}",
                self.burn_in, self.n_sweeps
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thinning interval must be positive".into()));
        }
        Ok(())
    }

    /// Whether sweep `s` (1-based) is kept.
    pub fn retains(&self, s: usize) -> bool {
        s > self.burn_in && (s - self.burn_in - 1).is_multiple_of(self.thin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub sweep: usize,
    pub train_perplexity: f64,
    pub cooccurrence: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub kind: ChainKind,
    pub snapshots: Vec<Snapshot>,
    /// Assignments retained after burn-in and thinning.
    pub samples: Vec<ThemeAssignment>,
    /// `n_D × n_T` counts of each document's theme over retained samples.
    pub occupancy: Vec<u64>,
    pub final_assignment: ThemeAssignment,
    /// Last parameter draw (naive) or posterior mean given the last assignment (collapsed).
    pub final_params: ModelParams,
}

impl ChainTrace {
    /// Per-document empirical theme frequencies over retained samples.
    ///
    /// Theme labels may switch during a run, which blurs these averages.
    pub fn theme_frequencies(&self) -> Vec<Vec<f64>> {
        let n_t = self.final_assignment.n_themes();
        let n = self.samples.len().max(1) as f64;
        self.occupancy
            .chunks_exact(n_t)
            .map(|row| row.iter().map(|&c| c as f64 / n).collect())
            .collect()
    }

    /// `sweep,train_perplexity[,cooccurrence]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<chain trace>", e);
        let scored = self.snapshots.iter().any(|s| s.cooccurrence.is_some());
        writeln!(
            out,
            "sweep,train_perplexity{}",
            if scored { ",cooccurrence" } else { "" }
        )
        .map_err(io)?;
        for s in &self.snapshots {
            match s.cooccurrence {
                Some(c) if scored => writeln!(out, "{},{},{}", s.sweep, s.train_perplexity, c),
                _ => writeln!(out, "{},{}", s.sweep, s.train_perplexity),
            }
            .map_err(io)?;
        }
        Ok(())
    }

    /// One retained assignment per line, space-separated.
    pub fn write_samples<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<chain samples>", e);
        for s in &self.samples {
            let line: Vec<String> = s.themes().iter().map(usize::to_string).collect();
            writeln!(out, "{}", line.join(" ")).map_err(io)?;
        }
        Ok(())
    }
}

fn current_params(state: &ChainState, hyper: &Hyperparams) -> Result<ModelParams> {
    match &state.params {
        Some(p) => Ok(p.clone()),
        None => posterior_mean(&state.stats, hyper),
    }
}

fn snapshot(
    state: &ChainState,
    counts: &CountMatrix,
    hyper: &Hyperparams,
    target: Option<ScoreTarget<'_>>,
) -> Result<Snapshot> {
    let params = current_params(state, hyper)?;
    let cooccurrence = match target {
        Some(target) => {
            let predicted = hard_assign(target.counts, &params)?;
            Some(cooccurrence_score(&Clustering::from(&predicted), target.reference)?.score)
        }
        None => None,
    };
    Ok(Snapshot {
        sweep: state.sweeps,
        train_perplexity: perplexity(counts, &params)?,
        cooccurrence,
    })
}

pub fn run_chain(
    counts: &CountMatrix,
    init: ThemeAssignment,
    hyper: &Hyperparams,
    kind: ChainKind,
    config: &ChainConfig<'_>,
    rng: ChainRng,
) -> Result<ChainTrace> {
    config.validate()?;
    let n_t = init.n_themes();
    let mut state = ChainState::new(counts, init, hyper, kind, rng)?;
    let table = (kind == ChainKind::Collapsed).then(|| chain_table(counts, hyper));
    let mut snapshots = Vec::new();
    let mut samples = Vec::new();
    let mut occupancy = vec![0u64; counts.n_docs() * n_t];
    for s in 1..=config.n_sweeps {
        match &table {
            Some(table) => collapsed_gibbs_sweep(&mut state, counts, hyper, table)?,
            None => naive_gibbs_sweep(&mut state, counts, hyper)?,
        }
        if config.retains(s) {
            for (d, &t) in state.assignment.themes().iter().enumerate() {
                occupancy[d * n_t + t] += 1;
            }
            samples.push(state.assignment.clone());
        }
        if config.snapshot_every > 0 && (s % config.snapshot_every == 0 || s == config.n_sweeps) {
            snapshots.push(snapshot(&state, counts, hyper, config.target)?);
        }
    }
    Ok(ChainTrace {
        kind,
        snapshots,
        samples,
        occupancy,
        final_params: current_params(&state, hyper)?,
        final_assignment: state.assignment,
    })
}

/// Independent chains in parallel; chain `i` uses `rng::stream(seed, i)`.
pub fn run_chains(
    counts: &CountMatrix,
    inits: Vec<ThemeAssignment>,
    hyper: &Hyperparams,
    kind: ChainKind,
    config: &ChainConfig<'_>,
    seed: u64,
) -> Result<Vec<ChainTrace>> {
    inits
        .into_par_iter()
        .enumerate()
        .map(|(i, init)| run_chain(counts, init, hyper, kind, config, rng::stream(seed, i as u64)))
        .collect()
}

/// Uniformly random initial indicators.
pub fn random_assignment<R: Rng + ?Sized>(n_docs: usize, n_themes: usize, rng: &mut R) -> Result<ThemeAssignment> {
    ThemeAssignment::new((0..n_docs).map(|_| rng.random_range(0..n_themes)).collect(), n_themes)
}
