//! Evaluation: perplexity, the MAP objective, Hungarian-matched cooccurrence
//! between clusterings, exact enumeration of the collapsed posterior on tiny
//! corpora, and rank correlation across restarts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::corpus::CountMatrix;
use crate::em::EmTrace;
use crate::error::{Error, Result};
use crate::model::{lse, Hyperparams, ModelParams, ThemeAssignment};

/// Hard cluster label per document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Clustering {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= n_clusters) {
            return Err(Error::out_of_range("cluster label", l, format!("[0, {n_clusters})")));
        }
        Ok(Clustering { labels, n_clusters })
    }

    /// Hardens row-major soft memberships by argmax, ties to the lowest id.
    pub fn from_soft(rows: &[f64], n_clusters: usize) -> Result<Self> {
        if n_clusters == 0 || !rows.len().is_multiple_of(n_clusters) {
            return Err(Error::DimensionMismatch(format!(
                "{} soft entries are not rows of {n_clusters}",
                rows.len()
            )));
        }
        let labels = rows.chunks_exact(n_clusters).map(argmax).collect();
        Ok(Clustering { labels, n_clusters })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl From<&ThemeAssignment> for Clustering {
    fn from(a: &ThemeAssignment) -> Self {
        Clustering {
            labels: a.themes().to_vec(),
            n_clusters: a.n_themes(),
        }
    }
}

/// Index of the largest entry; the first one on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyMatrix {
    k: usize,
    cells: Vec<usize>,
}

impl ContingencyMatrix {
    pub fn new(a: &Clustering, b: &Clustering) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "clusterings cover {} and {} documents",
                a.len(),
                b.len()
            )));
        }
        if a.n_clusters != b.n_clusters {
            return Err(Error::DimensionMismatch(format!(
                "clusterings have {} and {} clusters",
                a.n_clusters, b.n_clusters
            )));
        }
        let k = a.n_clusters;
        let mut cells = vec![0; k * k];
        for (&i, &j) in a.labels.iter().zip(&b.labels) {
            cells[i * k + j] += 1;
        }
        Ok(ContingencyMatrix { k, cells })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.cells[i * self.k + j]
    }

    pub fn total(&self) -> usize {
        self.cells.iter().sum()
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.cells
            .chunks_exact(self.k.max(1))
            .map(|row| row.iter().map(|&c| c as f64).collect())
            .collect()
    }
}

/// Maximum-weight perfect matching on a square matrix, `O(k³)`.
///
/// Returns `σ` with row `i` matched to column `σ[i]`.
pub fn hungarian(weights: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = weights.len();
    if let Some(row) = weights.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is not square ({n} rows, a row of {})",
            row.len()
        )));
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Shortest augmenting paths with potentials, minimizing cost = -weight.
    // Index 0 is a sentinel column; rows and columns are 1-based below.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0; n];
    for j in 1..=n {
        sigma[row_of[j] - 1] = j - 1;
    }
    Ok(sigma)
}

/// Agreement between two clusterings after optimal one-to-one matching.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedScore {
    pub score: f64,
    /// Cluster `i` of the first clustering maps to `mapping[i]` of the second.
    pub mapping: Vec<usize>,
}

/// Fraction of documents lying in Hungarian-matched clusters.
pub fn cooccurrence_score(a: &Clustering, b: &Clustering) -> Result<MatchedScore> {
    let table = ContingencyMatrix::new(a, b)?;
    if a.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mapping = hungarian(&table.weights())?;
    let matched: usize = mapping.iter().enumerate().map(|(i, &j)| table.get(i, j)).sum();
    Ok(MatchedScore {
        score: matched as f64 / a.len() as f64,
        mapping,
    })
}

/// Per-document `log Σ_t α_t Π_w β_wt^C_wd`, multinomial coefficient omitted.
pub fn doc_log_likelihoods(counts: &CountMatrix, params: &ModelParams) -> Result<Vec<f64>> {
    check_dims(counts, params)?;
    Ok((0..counts.n_docs())
        .into_par_iter()
        .map_init(
            || vec![0.0; params.n_themes()],
            |buf, d| {
                params.doc_log_joint(counts.doc(d), buf);
                lse(buf)
            },
        )
        .collect())
}

pub(crate) fn check_dims(counts: &CountMatrix, params: &ModelParams) -> Result<()> {
    if counts.n_words() != params.n_words() {
        return Err(Error::DimensionMismatch(format!(
            "corpus has {} words, model {}",
            counts.n_words(),
            params.n_words()
        )));
    }
    Ok(())
}

/// Mixture log-likelihood of the corpus (sequential sum, so bit-reproducible).
pub fn log_likelihood(counts: &CountMatrix, params: &ModelParams) -> Result<f64> {
    Ok(doc_log_likelihoods(counts, params)?.iter().sum())
}

/// Log-prior terms `Σ_t (λ_α−1) ln α_t + Σ_{t,w} (λ_β−1) ln β_wt`, with `0·ln 0 = 0`.
pub fn log_prior(params: &ModelParams, hyper: &Hyperparams) -> f64 {
    let weighted = |coef: f64, vals: &[f64]| -> f64 {
        if coef == 0.0 {
            0.0
        } else {
            coef * vals.iter().sum::<f64>()
        }
    };
    weighted(hyper.lambda_alpha - 1.0, params.log_alpha()) + weighted(hyper.lambda_beta - 1.0, params.log_beta_matrix())
}

/// Unnormalized log posterior density of `(α, β)` given the corpus.
pub fn log_posterior(counts: &CountMatrix, params: &ModelParams, hyper: &Hyperparams) -> Result<f64> {
    Ok(log_likelihood(counts, params)? + log_prior(params, hyper))
}

pub(crate) fn perplexity_from_log_likelihood(log_lik: f64, total_length: usize) -> Result<f64> {
    if total_length == 0 {
        return Err(Error::InvalidArgument("perplexity of a corpus with no tokens".into()));
    }
    Ok((-log_lik / total_length as f64).exp())
}

/// `exp(−(1/l) Σ_d log Σ_t α_t Π_w β_wt^C_wd)` over in-vocabulary tokens.
pub fn perplexity(counts: &CountMatrix, params: &ModelParams) -> Result<f64> {
    if counts.total_length() == 0 {
        return Err(Error::InvalidArgument("perplexity of a corpus with no tokens".into()));
    }
    perplexity_from_log_likelihood(log_likelihood(counts, params)?, counts.total_length())
}

pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// Exact collapsed posterior `P(T | C)` over all `n_T^n_D` assignments.
///
/// Assignments are indexed in mixed radix with document 0 as the least
/// significant digit.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    n_docs: usize,
    n_themes: usize,
    log_probs: Vec<f64>,
}

impl JointDistribution {
    pub fn n_states(&self) -> usize {
        self.log_probs.len()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn index_of(&self, themes: &[usize]) -> usize {
        debug_assert_eq!(themes.len(), self.n_docs);
        themes.iter().rev().fold(0, |acc, &t| acc * self.n_themes + t)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        (0..self.n_docs)
            .map(|_| {
                let t = index % self.n_themes;
                index /= self.n_themes;
                t
            })
            .collect()
    }

    /// `log P(T_d = t | T_{-d}, C)`; the entry of `themes` at `d` is ignored.
    pub fn conditional(&self, d: usize, themes: &[usize]) -> Vec<f64> {
        let mut probe = themes.to_vec();
        let mut out: Vec<f64> = (0..self.n_themes)
            .map(|t| {
                probe[d] = t;
                self.log_probs[self.index_of(&probe)]
            })
            .collect();
        crate::model::log_normalize(&mut out);
        out
    }

    /// `P(T_d = t | C)`.
    pub fn marginal(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_themes];
        for (i, lp) in self.log_probs.iter().enumerate() {
            out[(i / self.n_themes.pow(d as u32)) % self.n_themes] += lp.exp();
        }
        out
    }
}

/// Enumerates `Π_t Γ(S_t+λ_α) Π_w Γ(K_wt+λ_β) / Γ(Σ_w (K_wt+λ_β))` over every
/// assignment and normalizes. Uses direct `lnΓ` evaluation, no tabulation.
pub fn enumerate_joint(counts: &CountMatrix, hyper: &Hyperparams, n_themes: usize) -> Result<JointDistribution> {
    let n_docs = counts.n_docs();
    let n_words = counts.n_words();
    let n_states = (0..n_docs).try_fold(1usize, |acc, _| {
        acc.checked_mul(n_themes).filter(|&s| s <= ENUMERATION_LIMIT)
    });
    let Some(n_states) = n_states.filter(|_| n_themes > 0) else {
        return Err(Error::InvalidArgument(format!(
            "{n_themes}^{n_docs} assignments exceed the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    };
    let dense: Vec<Vec<f64>> = (0..n_docs)
        .map(|d| {
            let mut row = vec![0.0; n_words];
            for (w, c) in counts.doc(d).iter() {
                row[w] = f64::from(c);
            }
            row
        })
        .collect();
    let (la, lb) = (hyper.lambda_alpha, hyper.lambda_beta);

    let mut log_w: Vec<f64> = (0..n_states)
        .into_par_iter()
        .map(|index| {
            let mut s = vec![0.0; n_themes];
            let mut k = vec![vec![0.0; n_words]; n_themes];
            let mut rest = index;
            for row in &dense {
                let t = rest % n_themes;
                rest /= n_themes;
                s[t] += 1.0;
                for (kw, c) in k[t].iter_mut().zip(row) {
                    *kw += c;
                }
            }
            (0..n_themes)
                .map(|t| {
                    let words: f64 = k[t].iter().map(|&kw| ln_gamma(kw + lb)).sum();
                    let total: f64 = k[t].iter().map(|&kw| kw + lb).sum();
                    ln_gamma(s[t] + la) + words - ln_gamma(total)
                })
                .sum()
        })
        .collect();
    crate::model::log_normalize(&mut log_w);
    Ok(JointDistribution {
        n_docs,
        n_themes,
        log_probs: log_w,
    })
}

/// Spearman rank correlation with average ranks for ties.
///
/// Returns `(0.0, true)` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, bool)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok((0.0, true));
    }
    Ok((sxy / (sxx * syy).sqrt(), false))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartPoint {
    pub train_perplexity: f64,
    pub test_cooccurrence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub points: Vec<RestartPoint>,
    pub spearman: f64,
    /// Set when the coefficient is undefined (constant input) and reported as 0.
    pub degenerate: bool,
}

/// Pairs each run's final training perplexity with the cooccurrence between its
/// hard clustering of `test_counts` and `reference`, and rank-correlates them.
pub fn restart_correlation_report(
    traces: &[EmTrace],
    test_counts: &CountMatrix,
    reference: &Clustering,
) -> Result<CorrelationReport> {
    let points = traces
        .iter()
        .map(|trace| {
            let predicted = crate::em::hard_assign(test_counts, &trace.params)?;
            Ok(RestartPoint {
                train_perplexity: trace.final_perplexity(),
                test_cooccurrence: cooccurrence_score(&Clustering::from(&predicted), reference)?.score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    correlation_of(points)
}

/// Rank correlation over precomputed `(perplexity, cooccurrence)` points; needs at least 3.
pub fn correlation_of(points: Vec<RestartPoint>) -> Result<CorrelationReport> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 runs, got {}",
            points.len()
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| p.train_perplexity).collect();
    let y: Vec<f64> = points.iter().map(|p| p.test_cooccurrence).collect();
    let (spearman, degenerate) = spearman(&x, &y)?;
    Ok(CorrelationReport {
        points,
        spearman,
        degenerate,
    })
}

/// Summary of one or more runs' scores, written as flat JSON by the CLI.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub train_perplexity: Option<f64>,
    pub test_perplexity: Option<f64>,
    pub cooccurrence_train: Option<f64>,
    pub cooccurrence_test: Option<f64>,
    pub mapping: Option<Vec<usize>>,
    pub metadata: BTreeMap<String, String>,
}

/// Mean and quartiles, for box plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Summary {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn brute_force_best(weights: &[Vec<f64>]) -> f64 {
        fn rec(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == w.len() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for j in 0..w.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w[row][j] + rec(w, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(weights, 0, &mut vec![false; weights.len()])
    }

    fn total(weights: &[Vec<f64>], sigma: &[usize]) -> f64 {
        sigma.iter().enumerate().map(|(i, &j)| weights[i][j]).sum()
    }

    #[test]
    fn hungarian_examples() {
        let eye: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 10.0 } else { 1.0 }).collect())
            .collect();
        assert_eq!(hungarian(&eye).unwrap(), vec![0, 1, 2, 3]);

        let perm = [2, 0, 3, 1];
        let p: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if perm[i] == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(hungarian(&p).unwrap(), perm);

        assert!(hungarian(&[vec![1.0, 2.0]]).is_err());
        assert!(hungarian(&[]).unwrap().is_empty());
    }

    #[test]
    fn hungarian_matches_exhaustive_search() {
        let mut r = rng::seeded(17);
        for _ in 0..100 {
            let w: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..6).map(|_| f64::from(r.random_range(0..50u32))).collect())
                .collect();
            let sigma = hungarian(&w).unwrap();
            let mut sorted = sigma.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>());
            assert_eq!(total(&w, &sigma), brute_force_best(&w));
        }
    }

    #[test]
    fn cooccurrence_examples() {
        let a = Clustering::new(vec![0, 0, 1, 2, 2, 1], 3).unwrap();
        assert_eq!(cooccurrence_score(&a, &a).unwrap().score, 1.0);
        let relabeled = Clustering::new(a.labels().iter().map(|&l| (l + 1) % 3).collect(), 3).unwrap();
        let m = cooccurrence_score(&a, &relabeled).unwrap();
        assert_eq!(m.score, 1.0);
        assert_eq!(m.mapping, vec![1, 2, 0]);
        let b = Clustering::new(vec![0, 1, 1, 2, 2, 1], 3).unwrap();
        assert_abs_diff_eq!(cooccurrence_score(&a, &b).unwrap().score, 5.0 / 6.0);
        let other = Clustering::new(vec![0, 0, 1, 1, 1, 1], 2).unwrap();
        assert!(cooccurrence_score(&a, &other).is_err());
    }

    #[test]
    fn random_five_way_agreement_is_one_fifth() {
        let mut r = rng::seeded(5);
        let mut draw = || Clustering::new((0..10_000).map(|_| r.random_range(0..5)).collect(), 5).unwrap();
        let (a, b) = (draw(), draw());
        let s = cooccurrence_score(&a, &b).unwrap().score;
        assert!((s - 0.2).abs() < 0.02, "{s}");
    }

    #[test]
    fn perplexity_examples() {
        let counts = CountMatrix::from_dense(&[vec![3, 0, 1, 2], vec![0, 0, 0, 7]]).unwrap();
        let uniform = ModelParams::from_probabilities(&[0.2, 0.8], &[vec![0.25; 4], vec![0.25; 4]]).unwrap();
        assert_abs_diff_eq!(perplexity(&counts, &uniform).unwrap(), 4.0, epsilon = 1e-12);

        let beta = vec![0.1, 0.2, 0.3, 0.4];
        let unigram = ModelParams::from_probabilities(&[1.0], std::slice::from_ref(&beta)).unwrap();
        let tokens = [(0, 3.0), (2, 1.0), (3, 9.0)];
        let ll: f64 = tokens.iter().map(|&(w, c)| c * f64::ln(beta[w])).sum();
        assert_abs_diff_eq!(
            perplexity(&counts, &unigram).unwrap(),
            (-ll / 13.0).exp(),
            epsilon = 1e-12
        );

        let certain = ModelParams::from_probabilities(&[1.0], &[vec![1.0, 0.0]]).unwrap();
        let one = CountMatrix::from_dense(&[vec![1, 0]]).unwrap();
        assert_eq!(perplexity(&one, &certain).unwrap(), 1.0);

        assert!(perplexity(&CountMatrix::from_dense(&[vec![0, 0]]).unwrap(), &certain).is_err());
    }

    #[test]
    fn log_posterior_examples() {
        let unit = Hyperparams::new(1.0, 1.0).unwrap();
        let counts = CountMatrix::from_dense(&[vec![2, 1], vec![0, 4]]).unwrap();
        let params = ModelParams::from_probabilities(&[1.0], &[vec![0.3, 0.7]]).unwrap();
        let expected = 2.0 * 0.3f64.ln() + 5.0 * 0.7f64.ln();
        assert_abs_diff_eq!(
            log_posterior(&counts, &params, &unit).unwrap(),
            expected,
            epsilon = 1e-12
        );
        let empty = CountMatrix::empty(2);
        assert_eq!(log_posterior(&empty, &params, &unit).unwrap(), 0.0);

        let hyper = Hyperparams::new(1.5, 1.2).unwrap();
        let two = ModelParams::from_probabilities(&[0.4, 0.6], &[vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
        let swapped = ModelParams::from_probabilities(&[0.6, 0.4], &[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        assert_abs_diff_eq!(
            log_posterior(&counts, &two, &hyper).unwrap(),
            log_posterior(&counts, &swapped, &hyper).unwrap(),
            epsilon = 1e-12
        );
        // zero weight with λ_α = 1 must not produce NaN
        let dead = ModelParams::from_probabilities(&[1.0, 0.0], &[vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
        assert!(log_posterior(&counts, &dead, &unit).unwrap().is_finite());
    }

    #[test]
    fn enumeration_examples() {
        let hyper = Hyperparams::new(0.7, 0.4).unwrap();
        let single = CountMatrix::from_dense(&[vec![2, 0, 1]]).unwrap();
        let j = enumerate_joint(&single, &hyper, 3).unwrap();
        for p in j.probs() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }

        let twins = CountMatrix::from_dense(&[vec![3, 0, 1], vec![3, 0, 1]]).unwrap();
        let j = enumerate_joint(&twins, &hyper, 2).unwrap();
        let p = j.probs();
        let same = p[j.index_of(&[0, 0])] + p[j.index_of(&[1, 1])];
        assert!(same > 1.0 - same);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let big = CountMatrix::from_dense(&vec![vec![1, 0]; 21]).unwrap();
        assert!(enumerate_joint(&big, &hyper, 2).is_err());
    }

    #[test]
    fn enumeration_is_exchangeable_in_themes() {
        let counts = CountMatrix::from_dense(&[vec![1, 0, 2], vec![0, 3, 0], vec![2, 1, 0], vec![0, 0, 1]]).unwrap();
        let j = enumerate_joint(&counts, &Hyperparams::new(1.3, 0.6).unwrap(), 3).unwrap();
        for i in 0..j.n_states() {
            let relabeled: Vec<usize> = j.decode(i).iter().map(|&t| (t + 1) % 3).collect();
            assert_abs_diff_eq!(j.log_probs()[i], j.log_probs()[j.index_of(&relabeled)], epsilon = 1e-10);
        }
    }

    #[test]
    fn spearman_examples() {
        let (rho, deg) = spearman(&[1.0, 2.0, 3.0, 4.0], &[8.0, 6.0, 4.0, 0.5]).unwrap();
        assert_eq!((rho, deg), (-1.0, false));
        let (rho, deg) = spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!((rho, deg), (0.0, true));
        let (rho, _) = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(rho, 1.0, epsilon = 1e-12);
        assert!(correlation_of(vec![]).is_err());
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(
            (s.min, s.q1, s.median, s.q3, s.max, s.mean),
            (1.0, 2.0, 3.0, 4.0, 5.0, 3.0)
        );
        assert!(Summary::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn cooccurrence_symmetric_and_relabel_invariant(
            labels in prop::collection::vec((0usize..4, 0usize..4), 1..80),
            seed in any::<u64>(),
        ) {
            let a = Clustering::new(labels.iter().map(|p| p.0).collect(), 4).unwrap();
            let b = Clustering::new(labels.iter().map(|p| p.1).collect(), 4).unwrap();
            let ab = cooccurrence_score(&a, &b).unwrap().score;
            prop_assert_eq!(ab, cooccurrence_score(&b, &a).unwrap().score);
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut rng::seeded(seed));
            let b2 = Clustering::new(b.labels().iter().map(|&l| perm[l]).collect(), 4).unwrap();
            prop_assert_eq!(ab, cooccurrence_score(&a, &b2).unwrap().score);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn hungarian_beats_random_permutations(
            w in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 5), 5),
            seed in any::<u64>(),
        ) {
            let sigma = hungarian(&w).unwrap();
            let best = total(&w, &sigma);
            prop_assert!(best >= total(&w, &[0, 1, 2, 3, 4]) - 1e-9);
            let mut r = rng::seeded(seed);
            for _ in 0..100 {
                let mut p: Vec<usize> = (0..5).collect();
                p.shuffle(&mut r);
                prop_assert!(best >= total(&w, &p) - 1e-9);
            }
            prop_assert!((best - brute_force_best(&w)).abs() < 1e-9);
        }
    }
}
