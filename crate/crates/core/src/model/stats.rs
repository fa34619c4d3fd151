use crate::corpus::{CountMatrix, DocCounts};
use crate::error::{Error, Result};

/// One theme id per document.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThemeAssignment {
    themes: Vec<usize>,
    n_themes: usize,
}

impl ThemeAssignment {
    pub fn new(themes: Vec<usize>, n_themes: usize) -> Result<Self> {
        if let Some((d, &t)) = themes.iter().enumerate().find(|(_, &t)| t >= n_themes) {
            return Err(Error::out_of_range(
                "theme id",
                format!("{t} (document {d})"),
                format!("[0, {n_themes})"),
            ));
        }
        Ok(ThemeAssignment { themes, n_themes })
    }

    pub fn constant(n_docs: usize, theme: usize, n_themes: usize) -> Result<Self> {
        Self::new(vec![theme; n_docs], n_themes)
    }

    pub fn themes(&self) -> &[usize] {
        &self.themes
    }

    pub fn n_themes(&self) -> usize {
        self.n_themes
    }

    pub fn len(&self) -> usize {
        self.themes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.themes.is_empty()
    }

    pub fn get(&self, d: usize) -> usize {
        self.themes[d]
    }

    pub(crate) fn set(&mut self, d: usize, t: usize) {
        debug_assert!(t < self.n_themes);
        self.themes[d] = t;
    }
}

/// Per-theme document counts `S_t`, word counts `K_wt` and totals `K_t`.
///
/// `K` is word-major like [`super::ModelParams`]' `log_beta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffStats {
    n_themes: usize,
    n_words: usize,
    doc_counts: Vec<usize>,
    word_counts: Vec<u32>,
    theme_totals: Vec<usize>,
}

impl SuffStats {
    pub fn zeros(n_themes: usize, n_words: usize) -> Self {
        SuffStats {
            n_themes,
            n_words,
            doc_counts: vec![0; n_themes],
            word_counts: vec![0; n_themes * n_words],
            theme_totals: vec![0; n_themes],
        }
    }

    /// Statistics of `counts` under `assignment`, computed from scratch.
    pub fn compute(counts: &CountMatrix, assignment: &ThemeAssignment, n_themes: usize) -> Result<Self> {
        if assignment.len() != counts.n_docs() {
            return Err(Error::DimensionMismatch(format!(
                "{} theme ids for {} documents",
                assignment.len(),
                counts.n_docs()
            )));
        }
        let mut stats = Self::zeros(n_themes, counts.n_words());
        for (d, &t) in assignment.themes().iter().enumerate() {
            if t >= n_themes {
                return Err(Error::out_of_range("theme id", t, format!("[0, {n_themes})")));
            }
            stats.add_doc(counts.doc(d), t)?;
        }
        Ok(stats)
    }

    pub fn n_themes(&self) -> usize {
        self.n_themes
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    /// `S_t`.
    pub fn doc_counts(&self) -> &[usize] {
        &self.doc_counts
    }

    /// `K_wt`.
    #[inline]
    pub fn word_count(&self, w: usize, t: usize) -> usize {
        self.word_counts[w * self.n_themes + t] as usize
    }

    /// The `n_T` counts `K_w·` of word `w`.
    #[inline]
    pub fn word_row(&self, w: usize) -> &[u32] {
        let k = self.n_themes;
        &self.word_counts[w * k..(w + 1) * k]
    }

    pub(crate) fn word_counts_raw(&self) -> &[u32] {
        &self.word_counts
    }

    /// `K_t`.
    pub fn theme_totals(&self) -> &[usize] {
        &self.theme_totals
    }

    pub fn n_assigned(&self) -> usize {
        self.doc_counts.iter().sum()
    }

    fn check_doc(&self, doc: &DocCounts<'_>, t: usize) -> Result<()> {
        if t >= self.n_themes {
            return Err(Error::out_of_range("theme id", t, format!("[0, {})", self.n_themes)));
        }
        if let Some(&w) = doc.words.last() {
            if w as usize >= self.n_words {
                return Err(Error::out_of_range("word id", w, format!("[0, {})", self.n_words)));
            }
        }
        Ok(())
    }

    pub fn add_doc(&mut self, doc: DocCounts<'_>, t: usize) -> Result<()> {
        self.check_doc(&doc, t)?;
        let k = self.n_themes;
        for (w, c) in doc.iter() {
            self.word_counts[w * k + t] += c;
        }
        self.doc_counts[t] += 1;
        self.theme_totals[t] += doc.length;
        Ok(())
    }

    /// Inverse of [`add_doc`](Self::add_doc). Leaves the statistics untouched on error.
    pub fn remove_doc(&mut self, doc: DocCounts<'_>, t: usize, doc_id: usize) -> Result<()> {
        self.check_doc(&doc, t)?;
        let k = self.n_themes;
        let underflow = Error::CountUnderflow { doc: doc_id, theme: t };
        if self.doc_counts[t] == 0 || self.theme_totals[t] < doc.length {
            return Err(underflow);
        }
        if doc.iter().any(|(w, c)| self.word_counts[w * k + t] < c) {
            return Err(underflow);
        }
        for (w, c) in doc.iter() {
            self.word_counts[w * k + t] -= c;
        }
        self.doc_counts[t] -= 1;
        self.theme_totals[t] -= doc.length;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_docs() -> CountMatrix {
        CountMatrix::from_dense(&[vec![1, 0], vec![0, 2]]).unwrap()
    }

    #[test]
    fn direct_counts() {
        let counts = two_docs();
        let s = SuffStats::compute(&counts, &ThemeAssignment::new(vec![0, 1], 2).unwrap(), 2).unwrap();
        assert_eq!(s.word_row(0), [1, 0]);
        assert_eq!(s.word_row(1), [0, 2]);
        assert_eq!(s.theme_totals(), [1, 2]);
        assert_eq!(s.doc_counts(), [1, 1]);

        let all0 = SuffStats::compute(&counts, &ThemeAssignment::constant(2, 0, 3).unwrap(), 3).unwrap();
        assert_eq!(all0.doc_counts(), [2, 0, 0]);
        assert_eq!((all0.word_count(0, 0), all0.word_count(1, 0)), (1, 2));

        let empty = SuffStats::compute(&CountMatrix::empty(4), &ThemeAssignment::new(vec![], 2).unwrap(), 2).unwrap();
        assert_eq!(empty, SuffStats::zeros(2, 4));

        assert!(ThemeAssignment::new(vec![0, 2], 2).is_err());
        assert!(SuffStats::compute(&counts, &ThemeAssignment::new(vec![0], 2).unwrap(), 2).is_err());
    }

    #[test]
    fn remove_add_edge_cases() {
        let counts = CountMatrix::from_dense(&[vec![1, 0], vec![0, 2], vec![0, 0]]).unwrap();
        let a = ThemeAssignment::new(vec![0, 1, 1], 2).unwrap();
        let orig = SuffStats::compute(&counts, &a, 2).unwrap();

        let mut s = orig.clone();
        s.remove_doc(counts.doc(0), 0, 0).unwrap();
        assert_eq!(s.doc_counts()[0], 0);
        assert_eq!((s.word_count(0, 0), s.word_count(1, 0), s.theme_totals()[0]), (0, 0, 0));
        s.add_doc(counts.doc(0), 0).unwrap();
        assert_eq!(s, orig);

        let mut s = orig.clone();
        s.remove_doc(counts.doc(2), 1, 2).unwrap();
        assert_eq!(s.doc_counts()[1], 1);
        assert_eq!(s.word_row(1), orig.word_row(1));

        let mut s = orig.clone();
        assert!(matches!(
            s.remove_doc(counts.doc(1), 0, 1),
            Err(Error::CountUnderflow { doc: 1, theme: 0 })
        ));
        assert_eq!(s, orig);
    }

    proptest! {
        #[test]
        fn incremental_equals_scratch(
            rows in prop::collection::vec(prop::collection::vec(0u32..4, 5), 1..10),
            moves in prop::collection::vec((0usize..10, 0usize..3), 0..40),
        ) {
            let counts = CountMatrix::from_dense(&rows).unwrap();
            let n = rows.len();
            let mut a = ThemeAssignment::constant(n, 0, 3).unwrap();
            let mut s = SuffStats::compute(&counts, &a, 3).unwrap();
            for (d, t) in moves {
                let d = d % n;
                s.remove_doc(counts.doc(d), a.get(d), d).unwrap();
                s.add_doc(counts.doc(d), t).unwrap();
                a.set(d, t);
            }
            prop_assert_eq!(&s, &SuffStats::compute(&counts, &a, 3).unwrap());
            prop_assert_eq!(s.n_assigned(), n);
            for t in 0..3 {
                let tot: usize = (0..5).map(|w| s.word_count(w, t)).sum();
                prop_assert_eq!(tot, s.theme_totals()[t]);
            }
        }
    }
}
