//! Shared numerical machinery for the multinomial mixture: parameters,
//! sufficient statistics, log-gamma tabulation and sampling.

mod math;
mod params;
mod sampling;
mod stats;

pub(crate) use math::{log_normalize, lse};
pub use math::{log_sum_exp, LogGammaTable};
pub use params::{Hyperparams, ModelParams, ALPHA_TOLERANCE, BETA_TOLERANCE, MODEL_MAGIC};
pub use sampling::{generate_corpus, sample_dirichlet, sample_log_dirichlet, GeneratedCorpus, Generator};
pub(crate) use sampling::{sample_log_categorical, sample_log_gamma};
pub use stats::{SuffStats, ThemeAssignment};

use crate::corpus::{CountMatrix, DocCounts};
use crate::error::{Error, Result};

/// Calls `$fixed` with the const `$n` bound to `$width` when it is at most 8
/// (so per-theme accumulators can live in registers), `$fallback` otherwise.
macro_rules! dispatch_width {
    ($width:expr, |$n:ident| $fixed:expr, $fallback:expr) => {
        match $width {
            1 => {
                const $n: usize = 1;
                $fixed
            }
            2 => {
                const $n: usize = 2;
                $fixed
            }
            3 => {
                const $n: usize = 3;
                $fixed
            }
            4 => {
                const $n: usize = 4;
                $fixed
            }
            5 => {
                const $n: usize = 5;
                $fixed
            }
            6 => {
                const $n: usize = 6;
                $fixed
            }
            7 => {
                const $n: usize = 7;
                $fixed
            }
            8 => {
                const $n: usize = 8;
                $fixed
            }
            _ => $fallback,
        }
    };
}
pub(crate) use dispatch_width;

pub fn suff_stats(counts: &CountMatrix, assignment: &ThemeAssignment, n_themes: usize) -> Result<SuffStats> {
    SuffStats::compute(counts, assignment, n_themes)
}

/// Unnormalized Dirichlet-multinomial predictive log-weights of `doc` under each theme:
///
/// `ln(S_t + λ_α) + Σ_w [lnΓ(K_wt + C_w + λ_β) − lnΓ(K_wt + λ_β)]
///   − [lnΓ(K_t + l + n_W λ_β) − lnΓ(K_t + n_W λ_β)]`
///
/// With `exclude = None`, `stats` must not contain `doc`. With `Some(old)`,
/// `stats` counts `doc` in theme `old` and the weights are those of the
/// statistics with it removed, computed without modifying `stats`.
pub(crate) fn predictive_log_weights(
    stats: &SuffStats,
    doc: DocCounts<'_>,
    exclude: Option<usize>,
    hyper: &Hyperparams,
    table: &LogGammaTable,
    out: &mut [f64],
) -> Result<()> {
    theme_terms(stats, &doc, exclude, hyper, table, out)?;
    let old = exclude.unwrap_or(usize::MAX);
    let terms = WordTerms {
        stats,
        doc,
        word: table.word_slice(),
        step: table.word_step_slice(),
        exclude,
    };
    let ok = dispatch_width!(stats.n_themes(), |N| terms.accumulate::<N>(out), {
        let mut words = vec![0.0; out.len()];
        let ok = terms.accumulate_dyn(&mut words);
        for (o, w) in out.iter_mut().zip(&words) {
            *o += w;
        }
        ok
    });
    if !ok {
        return Err(inconsistent(old));
    }
    Ok(())
}

fn inconsistent(old: usize) -> Error {
    Error::InconsistentStats(format!("document is not counted in theme {old}"))
}

/// Prior and length parts of the predictive weights, written to `out`.
///
/// `K_wt + C_w <= K_t + l`, so the range check on each theme total here covers
/// every later word lookup.
pub(crate) fn theme_terms(
    stats: &SuffStats,
    doc: &DocCounts<'_>,
    exclude: Option<usize>,
    hyper: &Hyperparams,
    table: &LogGammaTable,
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(out.len(), stats.n_themes());
    if let Some(&w) = doc.words.last() {
        if w as usize >= stats.n_words() {
            return Err(Error::out_of_range("word id", w, format!("[0, {})", stats.n_words())));
        }
    }
    let old = exclude.unwrap_or(usize::MAX);
    for (t, ((o, &s), &k_t)) in out
        .iter_mut()
        .zip(stats.doc_counts())
        .zip(stats.theme_totals())
        .enumerate()
    {
        let (s, k_t) = if t == old {
            if s == 0 || k_t < doc.length {
                return Err(inconsistent(old));
            }
            (s - 1, k_t - doc.length)
        } else {
            (s, k_t)
        };
        *o = table.alpha_term(s, hyper.lambda_alpha) - table.theme_rise(k_t, doc.length)?;
    }
    Ok(())
}

/// Per word, `ln(K_wt + λ_β)` for every theme followed by `ln(K_wt − 1 + λ_β)`
/// (NaN when `K_wt = 0`), copied from a table and kept in step with the
/// statistics by [`StepCache::refresh`]. The second half is what a document
/// counted once in its own theme contributes there once it is taken out.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    n_themes: usize,
    values: Vec<f64>,
}

impl StepCache {
    pub(crate) fn build(stats: &SuffStats, table: &LogGammaTable) -> Self {
        let n_t = stats.n_themes();
        let mut cache = StepCache {
            n_themes: n_t,
            values: vec![0.0; 2 * stats.word_counts_raw().len()],
        };
        for (w, row) in stats.word_counts_raw().chunks_exact(n_t.max(1)).enumerate() {
            for (t, &k) in row.iter().enumerate() {
                cache.set(w, t, k as usize, table);
            }
        }
        cache
    }

    #[inline]
    fn set(&mut self, w: usize, t: usize, k: usize, table: &LogGammaTable) {
        let step = table.word_step_slice();
        let base = 2 * w * self.n_themes;
        self.values[base + t] = step[k];
        self.values[base + self.n_themes + t] = if k > 0 { step[k - 1] } else { f64::NAN };
    }

    /// Re-reads the entries of theme `t` for the words of `doc`.
    pub(crate) fn refresh(&mut self, stats: &SuffStats, doc: &DocCounts<'_>, t: usize, table: &LogGammaTable) {
        for (w, _) in doc.iter() {
            self.set(w, t, stats.word_count(w, t), table);
        }
    }
}

/// Every document's entries split into words counted once and the rest, each
/// in word order. Built once per chain: most entries of text are unit counts,
/// and a separate list spares the inner loop a branch on the count.
#[derive(Debug, Clone)]
pub(crate) struct SplitDocs {
    unit: Vec<u32>,
    unit_ptr: Vec<usize>,
    multi_words: Vec<u32>,
    multi_counts: Vec<u32>,
    multi_ptr: Vec<usize>,
    shape: (usize, usize, usize),
}

fn shape(counts: &CountMatrix) -> (usize, usize, usize) {
    (counts.n_docs(), counts.nnz(), counts.total_length())
}

impl SplitDocs {
    pub(crate) fn build(counts: &CountMatrix) -> Self {
        let mut split = SplitDocs {
            unit: Vec::new(),
            unit_ptr: vec![0],
            multi_words: Vec::new(),
            multi_counts: Vec::new(),
            multi_ptr: vec![0],
            shape: shape(counts),
        };
        for doc in counts.docs() {
            for (&w, &c) in doc.words.iter().zip(doc.counts) {
                if c == 1 {
                    split.unit.push(w);
                } else {
                    split.multi_words.push(w);
                    split.multi_counts.push(c);
                }
            }
            split.unit_ptr.push(split.unit.len());
            split.multi_ptr.push(split.multi_words.len());
        }
        split
    }

    /// Cheap check that `counts` is the corpus this split was built from.
    pub(crate) fn fits(&self, counts: &CountMatrix) -> bool {
        self.shape == shape(counts)
    }

    pub(crate) fn doc(&self, d: usize) -> (&[u32], DocCounts<'_>) {
        let unit = &self.unit[self.unit_ptr[d]..self.unit_ptr[d + 1]];
        let range = self.multi_ptr[d]..self.multi_ptr[d + 1];
        let multi = DocCounts {
            words: &self.multi_words[range.clone()],
            counts: &self.multi_counts[range],
            length: 0,
        };
        (unit, multi)
    }
}

/// [`predictive_log_weights`] with `exclude = Some(old)`, reading unit-count
/// terms from `cache`; the result is bit-identical. `unit` and `multi` are
/// `doc`'s entries as split by [`SplitDocs`].
#[cfg(test)]
#[allow(clippy::too_many_arguments)]
pub(crate) fn predictive_log_weights_cached(
    stats: &SuffStats,
    doc: DocCounts<'_>,
    split: (&[u32], DocCounts<'_>),
    old: usize,
    hyper: &Hyperparams,
    table: &LogGammaTable,
    cache: &StepCache,
    out: &mut [f64],
) -> Result<()> {
    theme_terms(stats, &doc, Some(old), hyper, table, out)?;
    let mut words = vec![0.0; out.len()];
    cached_word_terms(stats, doc, split, old, table, cache, &mut words)?;
    for (o, w) in out.iter_mut().zip(&words) {
        *o += w;
    }
    Ok(())
}

/// Word part alone of [`predictive_log_weights_cached`], written to `words`;
/// adding [`theme_terms`] to it gives the full weights.
pub(crate) fn cached_word_terms(
    stats: &SuffStats,
    doc: DocCounts<'_>,
    (unit, multi): (&[u32], DocCounts<'_>),
    old: usize,
    table: &LogGammaTable,
    cache: &StepCache,
    words: &mut [f64],
) -> Result<()> {
    let cached = CachedTerms {
        stats,
        unit,
        multi,
        word: table.word_slice(),
        cache: &cache.values,
        old,
    };
    let ok = dispatch_width!(stats.n_themes(), |N| cached.accumulate::<N>(words), {
        WordTerms {
            stats,
            doc,
            word: table.word_slice(),
            step: table.word_step_slice(),
            exclude: Some(old),
        }
        .accumulate_dyn(words)
    });
    if !ok {
        return Err(inconsistent(old));
    }
    Ok(())
}

struct CachedTerms<'a> {
    stats: &'a SuffStats,
    unit: &'a [u32],
    multi: DocCounts<'a>,
    word: &'a [f64],
    cache: &'a [f64],
    old: usize,
}

impl CachedTerms<'_> {
    #[inline]
    fn accumulate<const N: usize>(&self, out: &mut [f64]) -> bool {
        let mut acc = [0.0; N];
        let mut own_acc = 0.0;
        for &w in self.unit {
            let base = 2 * N * w as usize;
            let row = &self.cache[base..base + 2 * N];
            for t in 0..N {
                acc[t] += row[t];
            }
            own_acc += row[N + self.old];
        }
        // a NaN entry means the document's word is missing from its own theme
        if own_acc.is_nan() {
            return false;
        }
        // the own theme's slot of `acc` is overwritten by `own_acc` below, so its
        // index only needs to stay in range
        let top = self.word.len() - 1;
        for (w, c) in self.multi.iter() {
            let c = c as usize;
            let row: &[u32; N] = self.stats.word_row(w).try_into().expect("one count per theme");
            let k = row[self.old] as usize;
            if k < c {
                return false;
            }
            own_acc += self.word[k] - self.word[k - c];
            for t in 0..N {
                let k = row[t] as usize;
                acc[t] += self.word[(k + c).min(top)] - self.word[k];
            }
        }
        acc[self.old] = own_acc;
        out.copy_from_slice(&acc);
        true
    }
}

/// Word part of the predictive weights: `Σ_w lnΓ(K_wt + C_w + λ_β) − lnΓ(K_wt + λ_β)`.
struct WordTerms<'a> {
    stats: &'a SuffStats,
    doc: DocCounts<'a>,
    word: &'a [f64],
    step: &'a [f64],
    exclude: Option<usize>,
}

impl WordTerms<'_> {
    #[inline]
    fn rise(&self, k: usize, c: usize) -> f64 {
        if c == 1 {
            self.step[k]
        } else {
            self.word[k + c] - self.word[k]
        }
    }

    /// Adds every theme's terms to `out`; with an excluded theme, that slot
    /// gets the terms with the document's own counts removed. False when the
    /// excluded theme does not hold the document's counts.
    ///
    /// Word terms are summed from zero, unit counts first, and only then added
    /// to `out`, matching the order of the cached path.
    #[inline]
    fn accumulate<const N: usize>(&self, out: &mut [f64]) -> bool {
        let mut acc = [0.0; N];
        let mut own = 0.0;
        for unit in [true, false] {
            for (w, c) in self.doc.iter().filter(|&(_, c)| (c == 1) == unit) {
                let c = c as usize;
                let mut row: [u32; N] = self.stats.word_row(w).try_into().expect("one count per theme");
                if let Some(old) = self.exclude {
                    let k = row[old] as usize;
                    if k < c {
                        return false;
                    }
                    own += self.rise(k - c, c);
                    // the excluded theme's slot is replaced by `own`; zero keeps
                    // its placeholder term inside the table
                    row[old] = 0;
                }
                if c == 1 {
                    for t in 0..N {
                        acc[t] += self.step[row[t] as usize];
                    }
                } else {
                    for t in 0..N {
                        let k = row[t] as usize;
                        acc[t] += self.word[k + c] - self.word[k];
                    }
                }
            }
        }
        if let Some(old) = self.exclude {
            acc[old] = own;
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o += a;
        }
        true
    }

    /// Writes the word terms alone to `out`, any width.
    fn accumulate_dyn(&self, out: &mut [f64]) -> bool {
        out.fill(0.0);
        let mut own = 0.0;
        for unit in [true, false] {
            for (w, c) in self.doc.iter().filter(|&(_, c)| (c == 1) == unit) {
                let c = c as usize;
                let row = self.stats.word_row(w);
                if let Some(old) = self.exclude {
                    let k = row[old] as usize;
                    if k < c {
                        return false;
                    }
                    own += self.rise(k - c, c);
                }
                for (t, (o, &k)) in out.iter_mut().zip(row).enumerate() {
                    let k = if Some(t) == self.exclude { 0 } else { k as usize };
                    *o += self.rise(k, c);
                }
            }
        }
        if let Some(old) = self.exclude {
            out[old] = own;
        }
        true
    }
}
