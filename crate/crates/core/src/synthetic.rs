//! Text-like synthetic corpora drawn from the mixture itself.
//!
//! Each theme's word distribution mixes a shared Zipf background over the
//! whole vocabulary (which produces the long tail of rare words real text
//! has) with a Zipf distribution over a theme-specific set of words.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{generate_corpus, GeneratedCorpus, Generator, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TextLike {
    pub n_themes: usize,
    pub n_words: usize,
    pub n_docs: usize,
    /// Document lengths are uniform on this inclusive range.
    pub doc_length: (usize, usize),
    /// Exponent of the rank-frequency law.
    pub zipf_exponent: f64,
    /// Share of a theme's probability mass on its own words.
    pub theme_weight: f64,
    /// Size of each theme's own word set.
    pub theme_words: usize,
}

impl TextLike {
    pub fn new(n_themes: usize, n_words: usize, n_docs: usize) -> Self {
        TextLike {
            n_themes,
            n_words,
            n_docs,
            doc_length: (50, 150),
            zipf_exponent: 1.0,
            theme_weight: 0.3,
            theme_words: (n_words / (4 * n_themes.max(1))).max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.doc_length;
        if self.n_themes == 0 || self.n_words == 0 || lo == 0 || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "invalid synthetic corpus shape {self:?}"
            )));
        }
        if !(0.0..=1.0).contains(&self.theme_weight) || self.theme_words == 0 || self.theme_words > self.n_words {
            return Err(Error::InvalidArgument(format!("invalid theme vocabulary in {self:?}")));
        }
        Ok(())
    }

    /// Mixture parameters: balanced themes, words ranked by a random permutation.
    pub fn params<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelParams> {
        self.validate()?;
        let zipf = |n: usize| -> Vec<f64> {
            let w: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-self.zipf_exponent)).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        };
        let mut order: Vec<usize> = (0..self.n_words).collect();
        order.shuffle(rng);
        let background = zipf(self.n_words);
        let own = zipf(self.theme_words);
        let columns = (0..self.n_themes)
            .map(|_| {
                let mut column = vec![0.0; self.n_words];
                for (rank, &w) in order.iter().enumerate() {
                    column[w] = (1.0 - self.theme_weight) * background[rank];
                }
                let mut words: Vec<usize> = (0..self.n_words).collect();
                words.shuffle(rng);
                for (p, &w) in own.iter().zip(&words) {
                    column[w] += self.theme_weight * p;
                }
                column
            })
            .collect::<Vec<_>>();
        ModelParams::from_probabilities(&vec![1.0 / self.n_themes as f64; self.n_themes], &columns)
    }

    pub fn doc_lengths<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let (lo, hi) = self.doc_length;
        (0..self.n_docs).map(|_| rng.random_range(lo..=hi)).collect()
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GeneratedCorpus> {
        let params = self.params(rng)?;
        let lengths = self.doc_lengths(rng);
        generate_corpus(Generator::Params(&params), &lengths, rng)
    }

    /// Training and test corpora drawn from the same parameters.
    pub fn generate_split<R: Rng + ?Sized>(
        &self,
        n_test: usize,
        rng: &mut R,
    ) -> Result<(GeneratedCorpus, GeneratedCorpus)> {
        let params = self.params(rng)?;
        let train = generate_corpus(Generator::Params(&params), &self.doc_lengths(rng), rng)?;
        let (lo, hi) = self.doc_length;
        let lengths: Vec<usize> = (0..n_test).map(|_| rng.random_range(lo..=hi)).collect();
        let test = generate_corpus(Generator::Params(&params), &lengths, rng)?;
        Ok((train, test))
    }
}
