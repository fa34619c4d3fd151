//! Corpus ingestion: tokenization, vocabularies, sparse count matrices and
//! cross-validation folds.
//!
//! Documents are reduced to bags of words. A [`Vocabulary`] is always ordered
//! by descending corpus frequency with ties broken lexicographically, so that
//! "keep the `n` most frequent words" is just a prefix of the word list.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

pub const COUNTS_MAGIC: &str = "MIXCLUST-COUNTS v1";

/// Splits text into lowercased maximal runs of alphabetic characters.
///
/// Everything else (digits, punctuation, whitespace, symbols) separates tokens.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    raw_text
        .split(|c: char| !c.is_alphabetic())
        .filter(|tok| !tok.is_empty())
        .map(|tok| tok.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub label: Option<String>,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn from_text(id: impl Into<String>, label: Option<String>, text: &str) -> Self {
        Document {
            id: id.into(),
            label: label.filter(|l| !l.is_empty()),
            tokens: tokenize(text),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from an already ordered word list.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        for w in &self.words {
            buf.push_str(w);
            buf.push('\n');
        }
        out.write_all(buf.as_bytes()).map_err(|e| Error::io("<vocabulary>", e))
    }

    pub fn read_from<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut words = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(name, i + 1, e))?;
            if line.is_empty() {
                return Err(Error::parse(name, i + 1, "empty vocabulary entry"));
            }
            words.push(line);
        }
        Self::from_words(words)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }
}

/// Orders `(word, frequency)` pairs by descending frequency, then lexicographically.
fn rank_words<'a>(freqs: impl IntoIterator<Item = (&'a str, u64)>) -> Vec<String> {
    let mut ranked: Vec<(&str, u64)> = freqs.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().map(|(w, _)| w.to_owned()).collect()
}

/// Collects every distinct token of `docs`, most frequent first.
pub fn build_vocabulary(docs: &[Document]) -> Result<Vocabulary> {
    let mut freqs: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for tok in &doc.tokens {
            *freqs.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    if freqs.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::from_words(rank_words(freqs))
}

/// Borrowed sparse count vector of a single document.
#[derive(Debug, Clone, Copy)]
pub struct DocCounts<'a> {
    pub words: &'a [u32],
    pub counts: &'a [u32],
    pub length: usize,
}

impl<'a> DocCounts<'a> {
    /// `words` must be strictly increasing and `counts` positive.
    pub fn new(words: &'a [u32], counts: &'a [u32]) -> Self {
        debug_assert_eq!(words.len(), counts.len());
        let length = counts.iter().map(|&c| c as usize).sum();
        DocCounts { words, counts, length }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + 'a {
        self.words.iter().zip(self.counts).map(|(&w, &c)| (w as usize, c))
    }

    pub fn nnz(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }
}

/// Whether an empty document list is acceptable when counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyCorpus {
    Reject,
    Allow,
}

/// Sparse document x word count matrix stored row-wise (one row per document).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    n_words: usize,
    doc_ptr: Vec<usize>,
    word_ids: Vec<u32>,
    counts: Vec<u32>,
    doc_lengths: Vec<usize>,
    total_length: usize,
    dropped_tokens: usize,
}

impl CountMatrix {
    /// Builds a matrix from `(doc, word, count)` triplets.
    ///
    /// Triplets may come in any order; duplicates are summed and zero counts skipped.
    pub fn from_triplets(
        n_docs: usize,
        n_words: usize,
        triplets: impl IntoIterator<Item = (usize, usize, u32)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_docs];
        for (d, w, c) in triplets {
            if d >= n_docs {
                return Err(Error::out_of_range("document id", d, format!("[0, {n_docs})")));
            }
            if w >= n_words {
                return Err(Error::out_of_range("word id", w, format!("[0, {n_words})")));
            }
            if c > 0 {
                rows[d].push((w as u32, c));
            }
        }
        let mut builder = Builder::new(n_words);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let mut merged: Vec<(u32, u32)> = Vec::with_capacity(row.len());
            for (w, c) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == w => last.1 += c,
                    _ => merged.push((w, c)),
                }
            }
            builder.push_row(&merged);
        }
        Ok(builder.finish(0))
    }

    /// Builds a matrix from dense per-document count rows.
    pub fn from_dense(rows: &[Vec<u32>]) -> Result<Self> {
        let n_words = rows.first().map_or(0, Vec::len);
        let mut builder = Builder::new(n_words);
        for (d, row) in rows.iter().enumerate() {
            if row.len() != n_words {
                return Err(Error::DimensionMismatch(format!(
                    "row {d} has {} entries, expected {n_words}",
                    row.len()
                )));
            }
            let sparse: Vec<(u32, u32)> = row
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(w, &c)| (w as u32, c))
                .collect();
            builder.push_row(&sparse);
        }
        Ok(builder.finish(0))
    }

    pub fn empty(n_words: usize) -> Self {
        Builder::new(n_words).finish(0)
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn nnz(&self) -> usize {
        self.word_ids.len()
    }

    pub fn total_length(&self) -> usize {
        self.total_length
    }

    pub fn doc_length(&self, d: usize) -> usize {
        self.doc_lengths[d]
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    /// Out-of-vocabulary tokens discarded while counting.
    pub fn dropped_tokens(&self) -> usize {
        self.dropped_tokens
    }

    pub fn doc(&self, d: usize) -> DocCounts<'_> {
        let range = self.doc_ptr[d]..self.doc_ptr[d + 1];
        DocCounts {
            words: &self.word_ids[range.clone()],
            counts: &self.counts[range],
            length: self.doc_lengths[d],
        }
    }

    pub fn docs(&self) -> impl Iterator<Item = DocCounts<'_>> + '_ {
        (0..self.n_docs()).map(move |d| self.doc(d))
    }

    /// All `(doc, word, count)` entries in ascending `(doc, word)` order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.n_docs()).flat_map(move |d| self.doc(d).iter().map(move |(w, c)| (d, w, c)))
    }

    /// Total occurrences of each word over the corpus.
    pub fn word_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.n_words];
        for (&w, &c) in self.word_ids.iter().zip(&self.counts) {
            totals[w as usize] += u64::from(c);
        }
        totals
    }

    /// Largest single count `C_wd` in the matrix.
    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn max_doc_length(&self) -> usize {
        self.doc_lengths.iter().copied().max().unwrap_or(0)
    }

    /// Keeps the listed documents, in the given order.
    pub fn select_docs(&self, docs: &[usize]) -> CountMatrix {
        let mut builder = Builder::new(self.n_words);
        let mut row = Vec::new();
        for &d in docs {
            row.clear();
            row.extend(self.doc(d).iter().map(|(w, c)| (w as u32, c)));
            builder.push_row(&row);
        }
        builder.finish(0)
    }

    /// Re-indexes words through `mapping` (old id -> new id); unmapped words are dropped.
    ///
    /// `mapping` must be injective on its mapped entries.
    pub fn remap_words(&self, mapping: &[Option<usize>], n_words: usize) -> Result<CountMatrix> {
        if mapping.len() != self.n_words {
            return Err(Error::DimensionMismatch(format!(
                "word mapping covers {} words, matrix has {}",
                mapping.len(),
                self.n_words
            )));
        }
        let mut builder = Builder::new(n_words);
        let mut row = Vec::new();
        let mut dropped = 0usize;
        for doc in self.docs() {
            row.clear();
            for (w, c) in doc.iter() {
                match mapping[w] {
                    Some(nw) if nw < n_words => row.push((nw as u32, c)),
                    Some(nw) => return Err(Error::out_of_range("word id", nw, format!("[0, {n_words})"))),
                    None => dropped += c as usize,
                }
            }
            row.sort_unstable_by_key(|e| e.0);
            builder.push_row(&row);
        }
        Ok(builder.finish(dropped))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(32 + self.nnz() * 12);
        buf.push_str(COUNTS_MAGIC);
        buf.push('\n');
        buf.push_str(&format!("{} {} {}\n", self.n_docs(), self.n_words, self.total_length));
        for (d, w, c) in self.entries() {
            buf.push_str(&format!("{d} {w} {c}\n"));
        }
        out.write_all(buf.as_bytes()).map_err(|e| Error::io("<counts>", e))
    }

    pub fn read_from<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next_line = |expect: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::parse(name, i + 1, e)),
                None => Err(Error::parse(name, 0, format!("missing {expect}"))),
            }
        };
        let (_, magic) = next_line("header")?;
        if magic.trim_end() != COUNTS_MAGIC {
            return Err(Error::parse(name, 1, format!("expected {COUNTS_MAGIC:?}")));
        }
        let (lno, dims) = next_line("dimensions")?;
        let dims: Vec<usize> = dims
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(name, lno, e))?;
        let [n_docs, n_words, total] = dims[..] else {
            return Err(Error::parse(name, lno, "expected `n_D n_W total_length`"));
        };

        let mut builder = Builder::new(n_words);
        let mut row: Vec<(u32, u32)> = Vec::new();
        let mut current = 0usize;
        let mut last: Option<(usize, usize)> = None;
        for (i, line) in lines {
            let lno = i + 1;
            let line = line.map_err(|e| Error::parse(name, lno, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace().map(str::parse::<usize>);
            let (Some(Ok(d)), Some(Ok(w)), Some(Ok(c)), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(name, lno, "expected `d w c`"));
            };
            if d >= n_docs || w >= n_words || c == 0 || c > u32::MAX as usize {
                return Err(Error::parse(name, lno, "triplet out of range"));
            }
            if last.is_some_and(|prev| prev >= (d, w)) {
                return Err(Error::parse(name, lno, "triplets not in ascending (d, w) order"));
            }
            last = Some((d, w));
            while current < d {
                builder.push_row(&row);
                row.clear();
                current += 1;
            }
            row.push((w as u32, c as u32));
        }
        while current < n_docs {
            builder.push_row(&row);
            row.clear();
            current += 1;
        }
        let matrix = builder.finish(0);
        if matrix.total_length != total {
            return Err(Error::parse(
                name,
                2,
                format!("total_length {total} disagrees with entries ({})", matrix.total_length),
            ));
        }
        Ok(matrix)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }
}

struct Builder {
    n_words: usize,
    doc_ptr: Vec<usize>,
    word_ids: Vec<u32>,
    counts: Vec<u32>,
    doc_lengths: Vec<usize>,
}

impl Builder {
    fn new(n_words: usize) -> Self {
        Builder {
            n_words,
            doc_ptr: vec![0],
            word_ids: Vec::new(),
            counts: Vec::new(),
            doc_lengths: Vec::new(),
        }
    }

    /// `row` must be sorted by word id with positive counts.
    fn push_row(&mut self, row: &[(u32, u32)]) {
        let mut length = 0usize;
        for &(w, c) in row {
            self.word_ids.push(w);
            self.counts.push(c);
            length += c as usize;
        }
        self.doc_ptr.push(self.word_ids.len());
        self.doc_lengths.push(length);
    }

    fn finish(self, dropped_tokens: usize) -> CountMatrix {
        let total_length = self.doc_lengths.iter().sum();
        CountMatrix {
            n_words: self.n_words,
            doc_ptr: self.doc_ptr,
            word_ids: self.word_ids,
            counts: self.counts,
            doc_lengths: self.doc_lengths,
            total_length,
            dropped_tokens,
        }
    }
}

/// Counts in-vocabulary tokens of every document; other tokens are dropped.
pub fn count_matrix(docs: &[Document], vocab: &Vocabulary, empty: EmptyCorpus) -> Result<CountMatrix> {
    if docs.is_empty() && empty == EmptyCorpus::Reject {
        return Err(Error::EmptyCorpus);
    }
    let rows: Vec<(Vec<(u32, u32)>, usize)> = docs
        .par_iter()
        .map(|doc| {
            let mut ids: Vec<u32> = Vec::with_capacity(doc.tokens.len());
            let mut dropped = 0usize;
            for tok in &doc.tokens {
                match vocab.id(tok) {
                    Some(id) => ids.push(id as u32),
                    None => dropped += 1,
                }
            }
            ids.sort_unstable();
            let mut row: Vec<(u32, u32)> = Vec::new();
            for id in ids {
                match row.last_mut() {
                    Some(last) if last.0 == id => last.1 += 1,
                    _ => row.push((id, 1)),
                }
            }
            (row, dropped)
        })
        .collect();
    let mut builder = Builder::new(vocab.len());
    let mut dropped = 0;
    for (row, d) in &rows {
        builder.push_row(row);
        dropped += d;
    }
    Ok(builder.finish(dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabPolicy {
    KeepMostFrequent(usize),
    DropMostFrequent(usize),
}

/// Reduces `vocab` by frequency rank, where frequencies are the word totals of `counts`.
///
/// The result is ordered by that same rank.
pub fn reduce_vocabulary(vocab: &Vocabulary, counts: &CountMatrix, policy: VocabPolicy) -> Result<Vocabulary> {
    if counts.n_words() != vocab.len() {
        return Err(Error::DimensionMismatch(format!(
            "vocabulary has {} words, count matrix {}",
            vocab.len(),
            counts.n_words()
        )));
    }
    let n_words = vocab.len();
    let totals = counts.word_totals();
    let ranked = rank_words(vocab.words().iter().zip(&totals).map(|(w, &f)| (w.as_str(), f)));
    let words = match policy {
        VocabPolicy::KeepMostFrequent(n) => {
            if n == 0 || n > n_words {
                return Err(Error::out_of_range(
                    "kept vocabulary size",
                    n,
                    format!("[1, {n_words}]"),
                ));
            }
            ranked[..n].to_vec()
        }
        VocabPolicy::DropMostFrequent(n) => {
            if n >= n_words {
                return Err(Error::out_of_range("dropped word count", n, format!("[0, {n_words})")));
            }
            ranked[n..].to_vec()
        }
    };
    Vocabulary::from_words(words)
}

/// Re-expresses `counts` (indexed by `from`) in the word ids of `to`.
///
/// Words of `from` missing from `to` are dropped.
pub fn project_counts(counts: &CountMatrix, from: &Vocabulary, to: &Vocabulary) -> Result<CountMatrix> {
    let mapping: Vec<Option<usize>> = from.words().iter().map(|w| to.id(w)).collect();
    counts.remap_words(&mapping, to.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    /// Fold index of each document.
    pub assignments: Vec<usize>,
}

impl FoldSplit {
    pub fn fold(&self, i: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&d| self.assignments[d] == i)
            .collect()
    }

    /// `(train, test)` document ids with fold `i` held out.
    pub fn train_test(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&d| self.assignments[d] != i)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Random balanced partition of `n_docs` documents into `k` folds.
pub fn split_folds(n_docs: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 || k > n_docs {
        return Err(Error::out_of_range("fold count", k, format!("[2, {n_docs}]")));
    }
    let mut order: Vec<usize> = (0..n_docs).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut assignments = vec![0; n_docs];
    for (pos, &d) in order.iter().enumerate() {
        assignments[d] = pos % k;
    }
    Ok(FoldSplit { k, assignments })
}

fn decode(bytes: Vec<u8>, doc: impl Fn() -> String) -> Result<String> {
    String::from_utf8(bytes).map_err(|_| Error::Ingestion { doc: doc() })
}

/// Reads a corpus with one `label<TAB>text` document per line.
///
/// Lines without a tab are unlabeled text. Document ids are 1-based line numbers.
pub fn read_tsv_corpus(path: &Path) -> Result<Vec<Document>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut raw: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if raw.last().is_some_and(|l| l.is_empty()) {
        raw.pop();
    }
    if raw.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    raw.into_par_iter()
        .enumerate()
        .map(|(i, line)| {
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            let id = (i + 1).to_string();
            let text = decode(line.to_vec(), || format!("{}:{}", path.display(), i + 1))?;
            let (label, body) = match text.split_once('\t') {
                Some((l, b)) => (Some(l.to_owned()), b),
                None => (None, text.as_str()),
            };
            Ok(Document::from_text(id, label, body))
        })
        .collect()
}

/// Reads a corpus laid out as `<label>/<docid>.txt`, sorted by label then document id.
pub fn read_dir_corpus(root: &Path) -> Result<Vec<Document>> {
    let sorted_entries = |dir: &Path| -> Result<Vec<_>> {
        let mut entries = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(dir, e))?;
        entries.sort_by_key(|e| e.file_name());
        Ok(entries)
    };
    let mut files = Vec::new();
    for label_dir in sorted_entries(root)? {
        let path = label_dir.path();
        if !path.is_dir() {
            continue;
        }
        let label = label_dir.file_name().to_string_lossy().into_owned();
        for entry in sorted_entries(&path)? {
            let file = entry.path();
            if file.extension().is_some_and(|e| e == "txt") && file.is_file() {
                files.push((label.clone(), file));
            }
        }
    }
    if files.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    files
        .into_par_iter()
        .map(|(label, file)| {
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let text = decode(bytes, || file.display().to_string())?;
            let id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Document::from_text(id, Some(label), &text))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(text: &str) -> Document {
        Document::from_text("d", None, text)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Sports2000, results!"), vec!["sports", "results"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a-b a"), vec!["a", "b", "a"]);
        assert_eq!(tokenize("Éclair café"), vec!["éclair", "café"]);
    }

    #[test]
    fn vocabulary_frequency_then_lexicographic() {
        let v = build_vocabulary(&[doc("a b a")]).unwrap();
        assert_eq!(v.words(), ["a", "b"]);
        let v = build_vocabulary(&[doc("zeta alpha")]).unwrap();
        assert_eq!(v.words(), ["alpha", "zeta"]);
        let v = build_vocabulary(&[doc("a b"), doc("c d"), doc("e a")]).unwrap();
        assert_eq!(v.len(), 5);
        assert!(matches!(
            build_vocabulary(&[doc("123 ...")]),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn counting_drops_oov() {
        let vocab = Vocabulary::from_words(vec!["a".into(), "b".into()]).unwrap();
        let m = count_matrix(&[doc("a a b"), doc("c c")], &vocab, EmptyCorpus::Reject).unwrap();
        assert_eq!(m.doc(0).iter().collect::<Vec<_>>(), vec![(0, 2), (1, 1)]);
        assert_eq!(m.doc_length(0), 3);
        assert_eq!(m.doc_length(1), 0);
        assert!(m.doc(1).is_empty());
        assert_eq!(m.dropped_tokens(), 2);
        assert_eq!(m.total_length(), 3);

        assert!(matches!(
            count_matrix(&[], &vocab, EmptyCorpus::Reject),
            Err(Error::EmptyCorpus)
        ));
        let empty = count_matrix(&[], &vocab, EmptyCorpus::Allow).unwrap();
        assert_eq!((empty.n_docs(), empty.n_words()), (0, 2));
    }

    fn abc() -> (Vocabulary, CountMatrix) {
        let docs = [doc("a a a b"), doc("a a b b c")];
        let vocab = build_vocabulary(&docs).unwrap();
        let counts = count_matrix(&docs, &vocab, EmptyCorpus::Reject).unwrap();
        (vocab, counts)
    }

    #[test]
    fn reduce_by_rank() {
        let (vocab, counts) = abc();
        assert_eq!(vocab.words(), ["a", "b", "c"]);
        let same = reduce_vocabulary(&vocab, &counts, VocabPolicy::KeepMostFrequent(3)).unwrap();
        assert_eq!(same, vocab);
        let keep = reduce_vocabulary(&vocab, &counts, VocabPolicy::KeepMostFrequent(2)).unwrap();
        assert_eq!(keep.words(), ["a", "b"]);
        let drop = reduce_vocabulary(&vocab, &counts, VocabPolicy::DropMostFrequent(1)).unwrap();
        assert_eq!(drop.words(), ["b", "c"]);
        assert!(reduce_vocabulary(&vocab, &counts, VocabPolicy::KeepMostFrequent(4)).is_err());
        assert!(reduce_vocabulary(&vocab, &counts, VocabPolicy::DropMostFrequent(3)).is_err());

        let projected = project_counts(&counts, &vocab, &drop).unwrap();
        assert_eq!(projected.doc(1).iter().collect::<Vec<_>>(), vec![(0, 2), (1, 1)]);
        assert_eq!(projected.dropped_tokens(), 5);
    }

    #[test]
    fn folds_are_balanced_and_reproducible() {
        let s = split_folds(10, 10, 7).unwrap();
        assert!(s.fold_sizes().iter().all(|&n| n == 1));
        assert_eq!(s, split_folds(10, 10, 7).unwrap());
        let mut sizes = split_folds(11, 10, 3).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, [1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
        assert!(split_folds(5, 1, 0).is_err());
        assert!(split_folds(5, 6, 0).is_err());
    }

    #[test]
    fn counts_persistence_format() {
        let (_, counts) = abc();
        let mut buf = Vec::new();
        counts.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "MIXCLUST-COUNTS v1\n2 3 9\n0 0 3\n0 1 1\n1 0 2\n1 1 2\n1 2 1\n");
        let back = CountMatrix::read_from(&buf[..], "mem").unwrap();
        assert_eq!(back, counts);
        let bad = "MIXCLUST-COUNTS v1\n2 3 2\n1 0 1\n0 0 1\n";
        assert!(CountMatrix::read_from(bad.as_bytes(), "mem").is_err());
    }

    #[test]
    fn tsv_reader_flags_bad_utf8() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        fs::write(&path, b"x\tgood text\ny\t\xff\xfe\n").unwrap();
        match read_tsv_corpus(&path) {
            Err(Error::Ingestion { doc }) => assert!(doc.ends_with(":2")),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, b"sports\tGoal! 3-1\n\tno label here\nplain line\n").unwrap();
        let docs = read_tsv_corpus(&path).unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].label.as_deref(), Some("sports"));
        assert_eq!(docs[1].label, None);
        assert_eq!(docs[2].tokens, ["plain", "line"]);
        fs::write(&path, b"").unwrap();
        assert!(matches!(read_tsv_corpus(&path), Err(Error::EmptyCorpus)));
    }

    fn word_docs() -> impl Strategy<Value = Vec<Vec<u8>>> {
        prop::collection::vec(prop::collection::vec(0u8..12, 0..15), 1..12)
    }

    fn to_docs(raw: &[Vec<u8>]) -> Vec<Document> {
        raw.iter()
            .enumerate()
            .map(|(i, toks)| Document {
                id: i.to_string(),
                label: None,
                tokens: toks.iter().map(|t| format!("w{}", (b'a' + t) as char)).collect(),
            })
            .collect()
    }

    proptest! {
        #[test]
        fn row_sums_reproduce_lengths(raw in word_docs()) {
            let docs = to_docs(&raw);
            prop_assume!(docs.iter().any(|d| !d.is_empty()));
            let vocab = build_vocabulary(&docs).unwrap();
            let m = count_matrix(&docs, &vocab, EmptyCorpus::Reject).unwrap();
            for (d, doc) in docs.iter().enumerate() {
                let s: usize = m.doc(d).iter().map(|(_, c)| c as usize).sum();
                prop_assert_eq!(s, doc.tokens.len());
                prop_assert_eq!(m.doc_length(d), doc.tokens.len());
            }
            prop_assert_eq!(m.total_length(), m.doc_lengths().iter().sum::<usize>());
        }

        #[test]
        fn nested_keep_equals_direct(raw in word_docs(), a in 1usize..12, b in 1usize..12) {
            let docs = to_docs(&raw);
            prop_assume!(docs.iter().any(|d| !d.is_empty()));
            let vocab = build_vocabulary(&docs).unwrap();
            let (a, b) = (a.min(vocab.len()), b.min(vocab.len()));
            let (a, b) = (a.max(b), a.min(b));
            let counts = count_matrix(&docs, &vocab, EmptyCorpus::Reject).unwrap();
            let va = reduce_vocabulary(&vocab, &counts, VocabPolicy::KeepMostFrequent(a)).unwrap();
            let ca = project_counts(&counts, &vocab, &va).unwrap();
            let vab = reduce_vocabulary(&va, &ca, VocabPolicy::KeepMostFrequent(b)).unwrap();
            let vb = reduce_vocabulary(&vocab, &counts, VocabPolicy::KeepMostFrequent(b)).unwrap();
            prop_assert_eq!(vab, vb);
        }

        #[test]
        fn vocabulary_ignores_document_order(raw in word_docs(), seed in any::<u64>()) {
            let docs = to_docs(&raw);
            prop_assume!(docs.iter().any(|d| !d.is_empty()));
            let mut shuffled = docs.clone();
            shuffled.shuffle(&mut rng::seeded(seed));
            prop_assert_eq!(build_vocabulary(&docs).unwrap(), build_vocabulary(&shuffled).unwrap());
        }

        #[test]
        fn folds_partition(n in 2usize..60, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let split = split_folds(n, k, seed).unwrap();
            let mut seen = vec![0; n];
            for f in 0..k {
                for d in split.fold(f) {
                    seen[d] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes = split.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
