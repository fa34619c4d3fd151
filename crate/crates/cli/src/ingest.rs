use std::path::PathBuf;

use mixclust::corpus::{read_dir_corpus, read_tsv_corpus, Vocabulary};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;
use crate::store::StoredCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Dir,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "dir" => Ok(Format::Dir),
            _ => Err(format!("unknown format {s:?} (expected tsv|dir)")),
        }
    }
}

pub fn run(s: &mut Settings) -> CliResult<()> {
    let input: Option<PathBuf> = s.require("input");
    let out = crate::out_dir(s);
    s.check(out.is_some(), || "out is required".into());
    let format: Option<Format> = s.get("format");
    let vocab_path: Option<PathBuf> = s.get("vocab");
    s.finish()?;
    let (input, out) = (input.unwrap(), out.unwrap());
    let format = format.unwrap_or(if input.is_dir() { Format::Dir } else { Format::Tsv });

    let docs = match format {
        Format::Tsv => read_tsv_corpus(&input),
        Format::Dir => read_dir_corpus(&input),
    }
    .map_err(|e| CliError::runtime(format!("{}: {e}", input.display())))?;
    let vocab = vocab_path.map(|p| Vocabulary::load(&p)).transpose()?;
    let corpus = StoredCorpus::from_documents(&docs, vocab)?;
    corpus.save(&out)?;
    let c = &corpus.counts;
    println!(
        "n_D={} n_W={} total_length={} dropped_tokens={}",
        c.n_docs(),
        c.n_words(),
        c.total_length(),
        c.dropped_tokens()
    );
    Ok(())
}
