//! On-disk layout of ingested corpora and run artifacts.
//!
//! A corpus directory holds `counts.txt`, `vocab.txt` and `docs.tsv`
//! (`id<TAB>label` per document, label possibly empty). A run directory holds
//! `config.txt`, `meta.txt`, `model.txt`, `vocab.txt`, `assignments.txt`,
//! `heldout.txt` for fold runs and method-specific traces; wall time goes to
//! `timing.txt` alone so that every other file is reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mixclust::corpus::{count_matrix, project_counts, CountMatrix, Document, EmptyCorpus, Vocabulary};
use mixclust::model::{Hyperparams, ModelParams, ThemeAssignment};

use crate::error::{CliError, CliResult};

pub const COUNTS_FILE: &str = "counts.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const DOCS_FILE: &str = "docs.tsv";
pub const CONFIG_FILE: &str = "config.txt";
pub const META_FILE: &str = "meta.txt";
pub const MODEL_FILE: &str = "model.txt";
pub const ASSIGNMENTS_FILE: &str = "assignments.txt";
pub const THEMES_FILE: &str = "themes.txt";
pub const TIMING_FILE: &str = "timing.txt";
/// Held-out document indices of a fold run, one per line.
pub const HELDOUT_FILE: &str = "heldout.txt";

#[derive(Debug, Clone)]
pub struct StoredCorpus {
    pub counts: CountMatrix,
    pub vocab: Vocabulary,
    pub ids: Vec<String>,
    pub labels: Vec<Option<String>>,
}

impl StoredCorpus {
    /// Counts `docs` over `vocab`, or over a vocabulary built from them.
    pub fn from_documents(docs: &[Document], vocab: Option<Vocabulary>) -> CliResult<Self> {
        let vocab = match vocab {
            Some(v) => v,
            None => mixclust::corpus::build_vocabulary(docs)?,
        };
        Ok(StoredCorpus {
            counts: count_matrix(docs, &vocab, EmptyCorpus::Reject)?,
            vocab,
            ids: docs.iter().map(|d| d.id.clone()).collect(),
            labels: docs.iter().map(|d| d.label.clone()).collect(),
        })
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir)?;
        self.counts.save(&dir.join(COUNTS_FILE))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        write_file(&dir.join(DOCS_FILE), |out| {
            for (id, label) in self.ids.iter().zip(&self.labels) {
                writeln!(out, "{id}\t{}", label.as_deref().unwrap_or(""))?;
            }
            Ok(())
        })
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let counts = CountMatrix::load(&dir.join(COUNTS_FILE))?;
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        let path = dir.join(DOCS_FILE);
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for line in read_lines(&path)? {
            let (id, label) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            ids.push(id.to_owned());
            labels.push((!label.is_empty()).then(|| label.to_owned()));
        }
        if ids.len() != counts.n_docs() || vocab.len() != counts.n_words() {
            return Err(CliError::runtime(format!(
                "{}: {} documents and {} words listed, counts have {} and {}",
                dir.display(),
                ids.len(),
                vocab.len(),
                counts.n_docs(),
                counts.n_words()
            )));
        }
        Ok(StoredCorpus {
            counts,
            vocab,
            ids,
            labels,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.counts.n_docs()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    pub fn select(&self, docs: &[usize]) -> StoredCorpus {
        StoredCorpus {
            counts: self.counts.select_docs(docs),
            vocab: self.vocab.clone(),
            ids: docs.iter().map(|&d| self.ids[d].clone()).collect(),
            labels: docs.iter().map(|&d| self.labels[d].clone()).collect(),
        }
    }

    /// Counts re-expressed over `to`; words outside it are dropped.
    pub fn project(&self, to: &Vocabulary) -> CliResult<CountMatrix> {
        if self.vocab == *to {
            return Ok(self.counts.clone());
        }
        Ok(project_counts(&self.counts, &self.vocab, to)?)
    }

    /// Labels as theme ids: `names` fixes the id order, otherwise sorted distinct labels.
    pub fn label_assignment(&self, names: Option<&[String]>) -> CliResult<(ThemeAssignment, Vec<String>)> {
        label_ids(&self.labels, &self.ids, names)
    }
}

pub fn label_ids(
    labels: &[Option<String>],
    ids: &[String],
    names: Option<&[String]>,
) -> CliResult<(ThemeAssignment, Vec<String>)> {
    if let Some(d) = labels.iter().position(Option::is_none) {
        return Err(CliError::runtime(format!("document {} has no label", ids[d])));
    }
    let names: Vec<String> = match names {
        Some(n) => n.to_vec(),
        None => {
            let mut n: Vec<String> = labels.iter().flatten().cloned().collect();
            n.sort();
            n.dedup();
            n
        }
    };
    let themes = labels
        .iter()
        .zip(ids)
        .map(|(l, id)| {
            let l = l.as_deref().unwrap_or_default();
            names
                .iter()
                .position(|n| n == l)
                .ok_or_else(|| CliError::runtime(format!("document {id} has unknown label {l:?}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((ThemeAssignment::new(themes, names.len().max(1))?, names))
}

/// A finished training run read back from its directory.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub config: BTreeMap<String, String>,
    pub meta: BTreeMap<String, String>,
    pub params: ModelParams,
    pub hyper: Hyperparams,
    pub vocab: Vocabulary,
    pub assignment: ThemeAssignment,
    /// Held-out documents of the source corpus, for fold runs.
    pub heldout: Option<Vec<usize>>,
}

impl RunArtifact {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let (params, hyper) = ModelParams::load_checkpoint(&dir.join(MODEL_FILE))?;
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        let assignment = read_assignment(&dir.join(ASSIGNMENTS_FILE), params.n_themes())?;
        let heldout_path = dir.join(HELDOUT_FILE);
        let heldout = if heldout_path.exists() {
            let ids = read_lines(&heldout_path)?
                .iter()
                .map(|l| l.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::runtime(format!("{}: {e}", heldout_path.display())))?;
            Some(ids)
        } else {
            None
        };
        Ok(RunArtifact {
            dir: dir.to_owned(),
            config: read_key_values(&dir.join(CONFIG_FILE))?,
            meta: read_key_values(&dir.join(META_FILE))?,
            params,
            hyper,
            vocab,
            assignment,
            heldout,
        })
    }

    pub fn config_path(&self, key: &str) -> CliResult<PathBuf> {
        self.config
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::runtime(format!("{}: run config has no {key}", self.dir.display())))
    }
}

pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).and_then(|_| out.flush()).map_err(|e| io_error(path, e))
}

pub fn write_string(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

pub fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| io_error(path, e))
}

pub fn read_key_values(path: &Path) -> CliResult<BTreeMap<String, String>> {
    Ok(read_lines(path)?
        .iter()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect())
}

pub fn key_values(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn write_assignment(path: &Path, assignment: &ThemeAssignment) -> CliResult<()> {
    write_file(path, |out| {
        for t in assignment.themes() {
            writeln!(out, "{t}")?;
        }
        Ok(())
    })
}

pub fn read_assignment(path: &Path, n_themes: usize) -> CliResult<ThemeAssignment> {
    let themes = read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::runtime(format!("{}:{}: bad theme id {l:?}", path.display(), i + 1)))
        })
        .collect::<CliResult<Vec<usize>>>()?;
    Ok(ThemeAssignment::new(themes, n_themes)?)
}

/// A reference clustering file: one label per line, any strings.
pub fn read_reference(path: &Path) -> CliResult<Vec<Option<String>>> {
    Ok(read_lines(path)?
        .into_iter()
        .map(|l| {
            let l = l.trim().to_owned();
            (!l.is_empty()).then_some(l)
        })
        .collect())
}
