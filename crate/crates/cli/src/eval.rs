use std::collections::BTreeMap;
use std::path::PathBuf;

use mixclust::em::hard_assign;
use mixclust::eval::{cooccurrence_score, perplexity, Clustering, EvalReport, Summary};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;
use crate::store::{self, RunArtifact, StoredCorpus};

/// Reference labels as a clustering over `n_clusters` ids; fails when the
/// reference has more distinct labels than that.
fn reference_clustering(labels: &[Option<String>], ids: &[String], n_clusters: usize) -> CliResult<Clustering> {
    let (a, names) = store::label_ids(labels, ids, None)?;
    if names.len() > n_clusters {
        return Err(CliError::runtime(format!(
            "reference has {} clusters, the model {n_clusters} themes",
            names.len()
        )));
    }
    Ok(Clustering::new(a.themes().to_vec(), n_clusters)?)
}

#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub test: Option<StoredCorpus>,
    /// Reference labels for the training documents.
    pub reference: Option<Vec<Option<String>>>,
    pub gold: bool,
}

pub fn evaluate(art: &RunArtifact, inputs: &EvalInputs) -> CliResult<EvalReport> {
    let n_t = art.params.n_themes();
    let full = StoredCorpus::load(&art.config_path("corpus")?)?;
    let (train, heldout) = match &art.heldout {
        Some(test) => {
            let mut held = vec![false; full.n_docs()];
            for &d in test {
                held[d] = true;
            }
            let train: Vec<usize> = (0..full.n_docs()).filter(|&d| !held[d]).collect();
            (full.select(&train), Some(full.select(test)))
        }
        None => (full, None),
    };
    let train_counts = train.project(&art.vocab)?;
    if train_counts.n_docs() != art.assignment.len() {
        return Err(CliError::runtime(format!(
            "{}: {} assignments for {} training documents",
            art.dir.display(),
            art.assignment.len(),
            train_counts.n_docs()
        )));
    }
    let mut report = EvalReport {
        train_perplexity: Some(perplexity(&train_counts, &art.params)?),
        ..EvalReport::default()
    };

    let reference = match (&inputs.reference, inputs.gold) {
        (Some(r), _) => Some(r.clone()),
        (None, true) => Some(train.labels.clone()),
        (None, false) => None,
    };
    if let Some(r) = reference {
        if r.len() != train.n_docs() {
            return Err(CliError::runtime(format!(
                "reference has {} labels for {} training documents",
                r.len(),
                train.n_docs()
            )));
        }
        let m = cooccurrence_score(
            &Clustering::from(&art.assignment),
            &reference_clustering(&r, &train.ids, n_t)?,
        )?;
        report.cooccurrence_train = Some(m.score);
        report.mapping = Some(m.mapping);
    }

    if let Some(test) = inputs.test.as_ref().or(heldout.as_ref()) {
        let counts = test.project(&art.vocab)?;
        report.test_perplexity = Some(perplexity(&counts, &art.params)?);
        if inputs.gold {
            let predicted = hard_assign(&counts, &art.params)?;
            let reference = reference_clustering(&test.labels, &test.ids, n_t)?;
            let m = cooccurrence_score(&Clustering::from(&predicted), &reference)?;
            report.cooccurrence_test = Some(m.score);
            report.mapping.get_or_insert(m.mapping);
        }
    }

    report.metadata.insert("run".into(), art.dir.display().to_string());
    report.metadata.insert("n_themes".into(), n_t.to_string());
    for key in ["method", "seed"] {
        if let Some(v) = art.meta.get(key) {
            report.metadata.insert(key.into(), v.clone());
        }
    }
    Ok(report)
}

/// Quartile summaries of each metric present in every report.
pub fn summarize(reports: &[EvalReport]) -> BTreeMap<&'static str, Summary> {
    type Metric = fn(&EvalReport) -> Option<f64>;
    let metrics: [(&str, Metric); 4] = [
        ("train_perplexity", |r| r.train_perplexity),
        ("test_perplexity", |r| r.test_perplexity),
        ("cooccurrence_train", |r| r.cooccurrence_train),
        ("cooccurrence_test", |r| r.cooccurrence_test),
    ];
    metrics
        .iter()
        .filter_map(|(name, get)| {
            let values: Option<Vec<f64>> = reports.iter().map(get).collect();
            Some((*name, Summary::of(&values?)?))
        })
        .collect()
}

fn one_line(r: &EvalReport) -> String {
    let mut parts = vec![r.metadata.get("run").cloned().unwrap_or_default()];
    for (name, v) in [
        ("train_perplexity", r.train_perplexity),
        ("test_perplexity", r.test_perplexity),
        ("cooccurrence_train", r.cooccurrence_train),
        ("cooccurrence_test", r.cooccurrence_test),
    ] {
        if let Some(v) = v {
            parts.push(format!("{name}={v}"));
        }
    }
    parts.join(" ")
}

#[derive(Serialize)]
struct Output<'a> {
    reports: &'a [EvalReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<BTreeMap<&'static str, Summary>>,
}

pub fn run(s: &mut Settings) -> CliResult<()> {
    let runs: Vec<PathBuf> = s.list("run").unwrap_or_default();
    s.check(!runs.is_empty(), || "at least one run is required".into());
    let test: Option<PathBuf> = s.get("test");
    let reference: Option<PathBuf> = s.get("reference");
    let gold = s.get_or("gold", false);
    let out = crate::out_dir(s);
    s.finish()?;

    let test = test.map(|p| StoredCorpus::load(&p)).transpose()?;
    if gold {
        if let Some(t) = test.as_ref().filter(|t| !t.is_labeled()) {
            return Err(CliError::validation(format!(
                "gold requested but the test corpus of {} documents is not fully labeled",
                t.n_docs()
            )));
        }
    }
    let inputs = EvalInputs {
        test,
        reference: reference.map(|p| store::read_reference(&p)).transpose()?,
        gold,
    };
    let reports = runs
        .iter()
        .map(|dir| evaluate(&RunArtifact::load(dir)?, &inputs))
        .collect::<CliResult<Vec<_>>>()?;
    let output = Output {
        reports: &reports,
        summary: (reports.len() > 1).then(|| summarize(&reports)),
    };
    let json = serde_json::to_string_pretty(&output).map_err(|e| CliError::runtime(e.to_string()))? + "\n";
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            store::write_string(&dir.join("eval.json"), &json)?;
            for r in &reports {
                println!("{}", one_line(r));
            }
        }
        None => print!("{json}"),
    }
    Ok(())
}
