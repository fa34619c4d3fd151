//! Supervised training from labeled documents and the two classification
//! rules: naive Bayes on MAP estimates, and the Dirichlet-multinomial
//! predictive rule that integrates the parameters out.

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{count_matrix, CountMatrix, DocCounts, Document, EmptyCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::model::{
    log_normalize, predictive_log_weights, Hyperparams, LogGammaTable, ModelParams, SuffStats, ThemeAssignment,
};

/// Counts paired with observed themes.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub counts: CountMatrix,
    pub labels: ThemeAssignment,
    /// Label string of each theme id.
    pub theme_names: Vec<String>,
}

impl LabeledCorpus {
    pub fn new(counts: CountMatrix, labels: ThemeAssignment, theme_names: Vec<String>) -> Result<Self> {
        if labels.len() != counts.n_docs() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} documents",
                labels.len(),
                counts.n_docs()
            )));
        }
        if theme_names.len() != labels.n_themes() {
            return Err(Error::DimensionMismatch(format!(
                "{} theme names for {} themes",
                theme_names.len(),
                labels.n_themes()
            )));
        }
        Ok(LabeledCorpus {
            counts,
            labels,
            theme_names,
        })
    }

    /// Builds counts over `vocab` and maps labels to ids.
    ///
    /// With `theme_names` unset, ids follow the sorted distinct labels; otherwise
    /// labels must come from the given list (e.g. a test set reusing training ids).
    pub fn from_documents(docs: &[Document], vocab: &Vocabulary, theme_names: Option<&[String]>) -> Result<Self> {
        if let Some(doc) = docs.iter().find(|d| d.label.is_none()) {
            return Err(Error::Ingestion {
                doc: format!("{} (missing label)", doc.id),
            });
        }
        let names: Vec<String> = match theme_names {
            Some(names) => names.to_vec(),
            None => {
                let mut names: Vec<String> = docs.iter().filter_map(|d| d.label.clone()).collect();
                names.sort();
                names.dedup();
                names
            }
        };
        let themes = docs
            .iter()
            .map(|d| {
                let label = d.label.as_deref().unwrap_or_default();
                names.iter().position(|n| n == label).ok_or_else(|| Error::Ingestion {
                    doc: format!("{} (unknown label {label:?})", d.id),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let counts = count_matrix(docs, vocab, EmptyCorpus::Reject)?;
        let labels = ThemeAssignment::new(themes, names.len())?;
        Self::new(counts, labels, names)
    }

    pub fn n_themes(&self) -> usize {
        self.labels.n_themes()
    }

    pub fn stats(&self) -> Result<SuffStats> {
        SuffStats::compute(&self.counts, &self.labels, self.n_themes())
    }
}

/// Closed-form MAP estimates from complete-data statistics:
/// `α̂_t = (S_t+λ_α−1)/(n_D+n_T(λ_α−1))`, `β̂_wt = (K_wt+λ_β−1)/(K_t+n_W(λ_β−1))`.
pub fn map_from_stats(stats: &SuffStats, hyper: &Hyperparams) -> Result<ModelParams> {
    hyper.require_map()?;
    let (n_t, n_w) = (stats.n_themes(), stats.n_words());
    let (pa, pb) = (hyper.lambda_alpha - 1.0, hyper.lambda_beta - 1.0);
    let alpha_total = stats.n_assigned() as f64 + n_t as f64 * pa;
    if alpha_total <= 0.0 {
        return Err(Error::EmptyCorpus);
    }
    let log_alpha = stats
        .doc_counts()
        .iter()
        .map(|&s| (s as f64 + pa).ln() - alpha_total.ln())
        .collect();
    let mut log_denominators = Vec::with_capacity(n_t);
    for (t, &k_t) in stats.theme_totals().iter().enumerate() {
        let total = k_t as f64 + n_w as f64 * pb;
        if total <= 0.0 {
            return Err(Error::DegenerateTheme { theme: t });
        }
        log_denominators.push(total.ln());
    }
    let mut log_beta = Vec::with_capacity(n_t * n_w);
    for w in 0..n_w {
        for (&k, ld) in stats.word_row(w).iter().zip(&log_denominators) {
            log_beta.push((f64::from(k) + pb).ln() - ld);
        }
    }
    ModelParams::from_log(n_w, log_alpha, log_beta)
}

pub fn map_estimates(train: &LabeledCorpus, hyper: &Hyperparams) -> Result<ModelParams> {
    map_from_stats(&train.stats()?, hyper)
}

fn check_words(doc: &DocCounts<'_>, n_words: usize) -> Result<()> {
    match doc.words.last() {
        Some(&w) if w as usize >= n_words => Err(Error::out_of_range("word id", w, format!("[0, {n_words})"))),
        _ => Ok(()),
    }
}

fn normalized(mut log_w: Vec<f64>) -> Result<Vec<f64>> {
    if log_w.iter().any(|v| v.is_nan()) || log_w.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::InvalidArgument(
            "document has zero probability under every theme".into(),
        ));
    }
    log_normalize(&mut log_w);
    Ok(log_w)
}

/// Normalized log of `(S_t+λ_α−1) Π_w (K_wt+λ_β−1)^C_w / (K_t+n_W(λ_β−1))^l`.
pub fn naive_bayes_log_posterior(doc: DocCounts<'_>, stats: &SuffStats, hyper: &Hyperparams) -> Result<Vec<f64>> {
    hyper.require_map()?;
    check_words(&doc, stats.n_words())?;
    let (pa, pb) = (hyper.lambda_alpha - 1.0, hyper.lambda_beta - 1.0);
    let n_w = stats.n_words() as f64;
    let mut out = Vec::with_capacity(stats.n_themes());
    for (t, (&s, &k_t)) in stats.doc_counts().iter().zip(stats.theme_totals()).enumerate() {
        let denominator = k_t as f64 + n_w * pb;
        if denominator <= 0.0 {
            return Err(Error::DegenerateTheme { theme: t });
        }
        out.push((s as f64 + pa).ln() - doc.length as f64 * denominator.ln());
    }
    for (w, c) in doc.iter() {
        let c = f64::from(c);
        for (o, &k) in out.iter_mut().zip(stats.word_row(w)) {
            *o += c * (f64::from(k) + pb).ln();
        }
    }
    normalized(out)
}

/// Normalized Dirichlet-multinomial predictive log-probabilities, using table lookups only.
pub fn bayes_predictive_log_posterior(
    doc: DocCounts<'_>,
    stats: &SuffStats,
    hyper: &Hyperparams,
    table: &LogGammaTable,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; stats.n_themes()];
    predictive_log_weights(stats, doc, None, hyper, table, &mut out)?;
    normalized(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Naive,
    Bayes,
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Rule::Naive),
            "bayes" => Ok(Rule::Bayes),
            _ => Err(Error::InvalidArgument(format!(
                "unknown rule {s:?} (expected naive|bayes)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    /// Argmax theme per document, ties to the lowest id.
    pub predicted: Vec<usize>,
    pub log_posteriors: Vec<Vec<f64>>,
    /// Fraction misclassified; only known when gold labels were supplied.
    pub error_rate: Option<f64>,
}

/// Predictive table large enough for any document of `test` against `stats`.
pub fn predictive_table(stats: &SuffStats, hyper: &Hyperparams, test: &CountMatrix) -> LogGammaTable {
    let max_theme = stats.theme_totals().iter().copied().max().unwrap_or(0);
    LogGammaTable::build(hyper, stats.n_words(), max_theme + test.max_doc_length())
}

/// Classifies every document of `test` against training statistics.
pub fn classify(
    stats: &SuffStats,
    test: &CountMatrix,
    gold: Option<&ThemeAssignment>,
    rule: Rule,
    hyper: &Hyperparams,
) -> Result<ClassificationReport> {
    if test.n_words() != stats.n_words() {
        return Err(Error::DimensionMismatch(format!(
            "test corpus has {} words, training statistics {}",
            test.n_words(),
            stats.n_words()
        )));
    }
    let table = match rule {
        Rule::Naive => {
            hyper.require_map()?;
            None
        }
        Rule::Bayes => Some(predictive_table(stats, hyper, test)),
    };
    let log_posteriors = (0..test.n_docs())
        .into_par_iter()
        .map(|d| match &table {
            None => naive_bayes_log_posterior(test.doc(d), stats, hyper),
            Some(table) => bayes_predictive_log_posterior(test.doc(d), stats, hyper, table),
        })
        .collect::<Result<Vec<_>>>()?;
    report(log_posteriors, gold)
}

/// Naive-Bayes classification from a fitted parameter checkpoint.
pub fn classify_with_params(
    params: &ModelParams,
    test: &CountMatrix,
    gold: Option<&ThemeAssignment>,
) -> Result<ClassificationReport> {
    crate::eval::check_dims(test, params)?;
    let log_posteriors = (0..test.n_docs())
        .into_par_iter()
        .map(|d| {
            let mut out = vec![0.0; params.n_themes()];
            params.doc_log_joint(test.doc(d), &mut out);
            normalized(out)
        })
        .collect::<Result<Vec<_>>>()?;
    report(log_posteriors, gold)
}

fn report(log_posteriors: Vec<Vec<f64>>, gold: Option<&ThemeAssignment>) -> Result<ClassificationReport> {
    let predicted: Vec<usize> = log_posteriors.iter().map(|lp| argmax(lp)).collect();
    let error_rate = match gold {
        None => None,
        Some(g) if g.len() != predicted.len() => {
            return Err(Error::DimensionMismatch(format!(
                "{} gold labels for {} documents",
                g.len(),
                predicted.len()
            )))
        }
        Some(_) if predicted.is_empty() => Some(0.0),
        Some(g) => {
            let wrong = predicted.iter().zip(g.themes()).filter(|(p, t)| p != t).count();
            Some(wrong as f64 / predicted.len() as f64)
        }
    };
    Ok(ClassificationReport {
        predicted,
        log_posteriors,
        error_rate,
    })
}

/// Hyperparameters under which the two rules are compared at smoothing `λ`:
/// naive Bayes takes `(λ_α, λ_β) = (2, 1+λ)`, the predictive rule `(1, λ)`.
pub fn paired_hyperparams(lambda: f64) -> Result<(Hyperparams, Hyperparams)> {
    Ok((Hyperparams::new(2.0, 1.0 + lambda)?, Hyperparams::new(1.0, lambda)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuleComparison {
    pub lambda: f64,
    pub naive_error: f64,
    pub bayes_error: f64,
}

/// Error rates of both rules over a smoothing grid. The test corpus must be
/// expressed in the training vocabulary.
pub fn compare_rules(train: &LabeledCorpus, test: &LabeledCorpus, lambda_grid: &[f64]) -> Result<Vec<RuleComparison>> {
    if test.n_themes() != train.n_themes() {
        return Err(Error::DimensionMismatch(format!(
            "training has {} themes, test {}",
            train.n_themes(),
            test.n_themes()
        )));
    }
    let stats = train.stats()?;
    lambda_grid
        .par_iter()
        .map(|&lambda| {
            let (naive, bayes) = paired_hyperparams(lambda)?;
            let rate = |rule, hyper| {
                classify(&stats, &test.counts, Some(&test.labels), rule, hyper)
                    .map(|r| r.error_rate.unwrap_or_default())
            };
            Ok(RuleComparison {
                lambda,
                naive_error: rate(Rule::Naive, &naive)?,
                bayes_error: rate(Rule::Bayes, &bayes)?,
            })
        })
        .collect()
}
