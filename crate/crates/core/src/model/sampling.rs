use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Gamma};

use super::math::log_normalize;
use super::{Hyperparams, ModelParams, ThemeAssignment};
use crate::corpus::CountMatrix;
use crate::error::{Error, Result};

/// `ln G` for `G ~ Gamma(shape, 1)`.
///
/// Shapes below one use `G(a) = G(a+1)·U^(1/a)` in log form, so tiny shapes do
/// not underflow to zero.
#[inline]
pub(crate) fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u = 1.0 - rng.random::<f64>();
        g.ln() + u.ln() / shape
    }
}

fn check_concentration(concentration: &[f64]) -> Result<()> {
    if concentration.is_empty() {
        return Err(Error::InvalidArgument("empty Dirichlet concentration".into()));
    }
    if let Some(c) = concentration.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet concentration must be positive, got {c}"
        )));
    }
    Ok(())
}

/// Log of a Dirichlet draw, by normalizing independent Gamma variates.
pub fn sample_log_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    check_concentration(concentration)?;
    let mut out: Vec<f64> = concentration.iter().map(|&a| sample_log_gamma(a, rng)).collect();
    log_normalize(&mut out);
    Ok(out)
}

pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if concentration.len() == 1 {
        check_concentration(concentration)?;
        return Ok(vec![1.0]);
    }
    Ok(sample_log_dirichlet(concentration, rng)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// `scratch` is reused for the shifted weights; at least one weight must be finite.
#[inline]
pub(crate) fn sample_log_categorical<R: Rng + ?Sized>(
    log_weights: &[f64],
    scratch: &mut Vec<f64>,
    rng: &mut R,
) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max.is_finite());
    scratch.clear();
    let mut total = 0.0;
    for &lw in log_weights {
        total += (lw - max).exp();
        scratch.push(total);
    }
    let u = rng.random::<f64>() * total;
    scratch.iter().position(|&c| u < c).unwrap_or(log_weights.len() - 1)
}

/// Where the generating parameters come from.
#[derive(Debug, Clone, Copy)]
pub enum Generator<'a> {
    /// Use fixed parameters.
    Params(&'a ModelParams),
    /// Draw `α` and every `β_t` from their symmetric Dirichlet priors first.
    Prior {
        hyper: Hyperparams,
        n_themes: usize,
        n_words: usize,
    },
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub counts: CountMatrix,
    pub themes: ThemeAssignment,
    /// Parameters the corpus was drawn from.
    pub params: ModelParams,
}

/// Samples a corpus from the mixture: a theme per document from `α`, then
/// `doc_lengths[d]` words from that theme's `β`.
pub fn generate_corpus<R: Rng + ?Sized>(
    source: Generator<'_>,
    doc_lengths: &[usize],
    rng: &mut R,
) -> Result<GeneratedCorpus> {
    if let Some(d) = doc_lengths.iter().position(|&l| l == 0) {
        return Err(Error::InvalidArgument(format!("document {d} has zero length")));
    }
    let params = match source {
        Generator::Params(p) => p.clone(),
        Generator::Prior {
            hyper,
            n_themes,
            n_words,
        } => {
            let log_alpha = sample_log_dirichlet(&vec![hyper.lambda_alpha; n_themes], rng)?;
            let mut log_beta = vec![0.0; n_words * n_themes];
            let prior = vec![hyper.lambda_beta; n_words];
            for t in 0..n_themes {
                for (w, lb) in sample_log_dirichlet(&prior, rng)?.into_iter().enumerate() {
                    log_beta[w * n_themes + t] = lb;
                }
            }
            ModelParams::from_log(n_words, log_alpha, log_beta)?
        }
    };

    let invalid = |e: rand_distr::weighted::Error| Error::InvalidArgument(format!("sampling weights: {e}"));
    let theme_dist = WeightedAliasIndex::new(params.alpha()).map_err(invalid)?;
    let word_dists = (0..params.n_themes())
        .map(|t| WeightedAliasIndex::new(params.beta_column(t)).map_err(invalid))
        .collect::<Result<Vec<_>>>()?;

    let mut themes = Vec::with_capacity(doc_lengths.len());
    let mut triplets = Vec::new();
    let mut bag = vec![0u32; params.n_words()];
    let mut touched = Vec::new();
    for (d, &len) in doc_lengths.iter().enumerate() {
        let t = theme_dist.sample(rng);
        themes.push(t);
        for _ in 0..len {
            let w = word_dists[t].sample(rng);
            if bag[w] == 0 {
                touched.push(w);
            }
            bag[w] += 1;
        }
        touched.sort_unstable();
        for &w in &touched {
            triplets.push((d, w, bag[w]));
            bag[w] = 0;
        }
        touched.clear();
    }
    let counts = CountMatrix::from_triplets(doc_lengths.len(), params.n_words(), triplets)?;
    Ok(GeneratedCorpus {
        counts,
        themes: ThemeAssignment::new(themes, params.n_themes())?,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn mean_of_draws(concentration: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        let mut mean = vec![0.0; concentration.len()];
        for _ in 0..n {
            let x = sample_dirichlet(concentration, &mut r).unwrap();
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n as f64;
            }
        }
        mean
    }

    #[test]
    fn dirichlet_means() {
        // E[X_i] = a_i / sum(a)
        let m = mean_of_draws(&[1.0; 4], 100_000, 1);
        assert!(m.iter().all(|x| (x - 0.25).abs() < 0.01), "{m:?}");
        let m = mean_of_draws(&[2.0, 5.0], 100_000, 2);
        assert!((m[0] - 2.0 / 7.0).abs() < 0.01, "{m:?}");
        let m = mean_of_draws(&[0.05, 0.15], 100_000, 3);
        assert!((m[0] - 0.25).abs() < 0.01, "{m:?}");
    }

    #[test]
    fn dirichlet_edge_cases() {
        let mut r = rng::seeded(0);
        assert_eq!(sample_dirichlet(&[3.7], &mut r).unwrap(), vec![1.0]);
        assert!(sample_dirichlet(&[1.0, 0.0], &mut r).is_err());
        assert!(sample_dirichlet(&[], &mut r).is_err());
        let tiny = sample_log_dirichlet(&[1e-3; 50], &mut r).unwrap();
        assert!(tiny.iter().all(|x| !x.is_nan()));
        assert_eq!(
            sample_dirichlet(&[1.0, 2.0, 3.0], &mut rng::seeded(11)).unwrap(),
            sample_dirichlet(&[1.0, 2.0, 3.0], &mut rng::seeded(11)).unwrap()
        );
    }

    #[test]
    fn categorical_frequencies() {
        let mut r = rng::seeded(4);
        let lw = [0.1f64.ln(), 0.6f64.ln(), f64::NEG_INFINITY, 0.3f64.ln()];
        let mut hist = [0usize; 4];
        let mut scratch = Vec::new();
        for _ in 0..100_000 {
            hist[sample_log_categorical(&lw, &mut scratch, &mut r)] += 1;
        }
        assert_eq!(hist[2], 0);
        assert!((hist[1] as f64 / 1e5 - 0.6).abs() < 0.01);
    }

    #[test]
    fn degenerate_generators() {
        let params = ModelParams::from_probabilities(&[1.0, 0.0], &[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let g = generate_corpus(Generator::Params(&params), &[5; 20], &mut rng::seeded(3)).unwrap();
        assert!(g.themes.themes().iter().all(|&t| t == 0));
        assert!(g.counts.docs().all(|d| d.iter().collect::<Vec<_>>() == vec![(0, 5)]));

        let params = ModelParams::from_probabilities(&[0.5, 0.5], &[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let g = generate_corpus(Generator::Params(&params), &[4; 50], &mut rng::seeded(8)).unwrap();
        for (d, doc) in g.counts.docs().enumerate() {
            let w = if g.themes.get(d) == 0 { 0 } else { 2 };
            assert_eq!(doc.iter().collect::<Vec<_>>(), vec![(w, 4)]);
        }
        assert!(generate_corpus(Generator::Params(&params), &[3, 0], &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn word_frequencies_converge_to_beta() {
        let beta = [vec![0.7, 0.2, 0.1], vec![0.05, 0.15, 0.8]];
        let params = ModelParams::from_probabilities(&[0.5, 0.5], &beta).unwrap();
        let g = generate_corpus(Generator::Params(&params), &[100; 1000], &mut rng::seeded(21)).unwrap();
        let mut freq = [[0.0f64; 3]; 2];
        for (d, doc) in g.counts.docs().enumerate() {
            for (w, c) in doc.iter() {
                freq[g.themes.get(d)][w] += f64::from(c);
            }
        }
        for t in 0..2 {
            let total: f64 = freq[t].iter().sum();
            for w in 0..3 {
                assert!((freq[t][w] / total - beta[t][w]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let source = Generator::Prior {
            hyper: Hyperparams::new(1.0, 0.5).unwrap(),
            n_themes: 3,
            n_words: 40,
        };
        let a = generate_corpus(source, &[30; 25], &mut rng::seeded(99)).unwrap();
        let b = generate_corpus(source, &[30; 25], &mut rng::seeded(99)).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.themes, b.themes);
        assert_eq!(a.params, b.params);
    }
}
