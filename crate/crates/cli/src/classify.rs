use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mixclust::corpus::Vocabulary;
use mixclust::model::{Hyperparams, ModelParams, ThemeAssignment};
use mixclust::supervised::{classify, classify_with_params, ClassificationReport, LabeledCorpus, Rule};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;
use crate::store::{self, StoredCorpus};

/// Gold labels of `test` in the id order of `names`; `None` unless every
/// document carries a known label.
fn gold(test: &StoredCorpus, names: &[String]) -> Option<ThemeAssignment> {
    if !test.is_labeled() {
        return None;
    }
    store::label_ids(&test.labels, &test.ids, Some(names))
        .ok()
        .map(|(a, _)| a)
}

fn sibling(model: &Path, name: &str) -> PathBuf {
    model.parent().unwrap_or(Path::new(".")).join(name)
}

pub struct Classified {
    pub report: ClassificationReport,
    pub names: Vec<String>,
}

pub fn run_model(model: &Path, test: &StoredCorpus) -> CliResult<Classified> {
    let (params, _) = ModelParams::load_checkpoint(model)?;
    let vocab = Vocabulary::load(&sibling(model, store::VOCAB_FILE))?;
    let themes = sibling(model, store::THEMES_FILE);
    let names = if themes.exists() {
        store::read_lines(&themes)?
    } else {
        (0..params.n_themes()).map(|t| t.to_string()).collect()
    };
    if names.len() != params.n_themes() {
        return Err(CliError::runtime(format!(
            "{} lists {} themes, the model has {}",
            themes.display(),
            names.len(),
            params.n_themes()
        )));
    }
    let counts = test.project(&vocab)?;
    let report = classify_with_params(&params, &counts, gold(test, &names).as_ref())?;
    Ok(Classified { report, names })
}

pub fn run_train(train: &StoredCorpus, test: &StoredCorpus, rule: Rule, hyper: &Hyperparams) -> CliResult<Classified> {
    let (labels, names) = train.label_assignment(None)?;
    let labeled = LabeledCorpus::new(train.counts.clone(), labels, names.clone())?;
    let counts = test.project(&train.vocab)?;
    let report = classify(&labeled.stats()?, &counts, gold(test, &names).as_ref(), rule, hyper)?;
    Ok(Classified { report, names })
}

/// `docid predicted gold logpost_<theme>...` with a header line.
pub fn to_tsv(test: &StoredCorpus, c: &Classified) -> String {
    let mut out = String::from("docid\tpredicted\tgold");
    for n in &c.names {
        let _ = write!(out, "\tlogpost_{n}");
    }
    out.push('\n');
    for (d, lp) in c.report.log_posteriors.iter().enumerate() {
        let gold = test.labels[d].as_deref().unwrap_or("");
        let _ = write!(out, "{}\t{}\t{gold}", test.ids[d], c.names[c.report.predicted[d]]);
        for v in lp {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

pub fn run(s: &mut Settings) -> CliResult<()> {
    let test: Option<PathBuf> = s.require("test");
    let model: Option<PathBuf> = s.get("model");
    let train: Option<PathBuf> = s.get("train");
    let rule: Option<String> = s.get("rule");
    let rule = match rule.as_deref().map(str::parse::<Rule>).transpose() {
        Ok(r) => r,
        Err(e) => {
            s.error(e.to_string());
            None
        }
    };
    match (&model, &train) {
        (Some(_), Some(_)) | (None, None) => s.error("give exactly one of model and train"),
        (Some(_), None) if rule == Some(Rule::Bayes) => {
            s.error("the predictive rule needs the training counts; use train instead of model")
        }
        _ => {}
    }
    let out = crate::out_dir(s);
    let hyper = if model.is_some() { None } else { crate::hyperparams(s) };
    if let Some(Err(e)) = hyper.filter(|_| rule != Some(Rule::Bayes)).map(|h| h.require_map()) {
        s.error(e.to_string());
    }
    if model.is_some() {
        for key in ["lambda_alpha", "lambda_beta"] {
            let absent = s.raw(key).is_none();
            s.check(absent, || format!("{key} is fixed by the model checkpoint"));
        }
    }
    s.finish()?;
    let test = StoredCorpus::load(&test.unwrap())?;
    let classified = match (model, train) {
        (Some(m), _) => run_model(&m, &test)?,
        (_, Some(t)) => {
            let hyper = hyper.expect("validated");
            run_train(&StoredCorpus::load(&t)?, &test, rule.unwrap_or(Rule::Naive), &hyper)?
        }
        _ => unreachable!(),
    };
    let tsv = to_tsv(&test, &classified);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            store::write_string(&dir.join("classification.tsv"), &tsv)?;
        }
        None => print!("{tsv}"),
    }
    match classified.report.error_rate {
        Some(e) => eprintln!("classified {} documents, error rate {e}", test.n_docs()),
        None => eprintln!("classified {} documents (no gold labels)", test.n_docs()),
    }
    Ok(())
}
