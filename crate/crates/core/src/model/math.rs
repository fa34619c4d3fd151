use statrs::function::gamma::ln_gamma;

use super::Hyperparams;
use crate::corpus::CountMatrix;
use crate::error::{Error, Result};

/// `log(sum(exp(values)))`, shifted by the maximum. All `-inf` gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("log_sum_exp of an empty vector".into()));
    }
    Ok(lse(values))
}

#[inline]
pub(crate) fn lse(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights in place and returns their log normalizer.
#[inline]
pub(crate) fn log_normalize(values: &mut [f64]) -> f64 {
    let z = lse(values);
    for v in values.iter_mut() {
        *v -= z;
    }
    z
}

/// Tabulated `lnΓ(n + λ_β)` and `lnΓ(n + n_W·λ_β)` for integer `n`.
///
/// Every Dirichlet-multinomial ratio in the collapsed computations is a
/// difference of these entries. Unit steps `ln(n + λ_β)` and the prior terms
/// `ln(n + λ_α)` are tabulated as well.
#[derive(Debug, Clone)]
pub struct LogGammaTable {
    offset_word: f64,
    offset_theme: f64,
    word: Vec<f64>,
    theme: Vec<f64>,
    word_step: Vec<f64>,
    alpha_step: Vec<f64>,
}

impl LogGammaTable {
    pub fn build(hyper: &Hyperparams, n_words: usize, n_max: usize) -> Self {
        let offset_word = hyper.lambda_beta;
        let offset_theme = n_words as f64 * hyper.lambda_beta;
        let tabulate = |offset: f64| -> Vec<f64> { (0..=n_max).map(|n| ln_gamma(n as f64 + offset)).collect() };
        LogGammaTable {
            offset_word,
            offset_theme,
            word: tabulate(offset_word),
            theme: tabulate(offset_theme),
            word_step: (0..=n_max).map(|n| (n as f64 + offset_word).ln()).collect(),
            alpha_step: (0..=n_max).map(|n| (n as f64 + hyper.lambda_alpha).ln()).collect(),
        }
    }

    /// Sized for every query that statistics of `counts` (plus `extra` tokens) can produce.
    pub fn for_corpus(hyper: &Hyperparams, counts: &CountMatrix, extra: usize) -> Self {
        Self::build(hyper, counts.n_words(), counts.total_length() + extra)
    }

    pub fn n_max(&self) -> usize {
        self.word.len() - 1
    }

    pub fn offset_word(&self) -> f64 {
        self.offset_word
    }

    pub fn offset_theme(&self) -> f64 {
        self.offset_theme
    }

    /// `lnΓ(n + λ_β)`.
    #[inline]
    pub fn word(&self, n: usize) -> Result<f64> {
        self.word.get(n).copied().ok_or(Error::TableOverflow {
            index: n,
            max: self.n_max(),
        })
    }

    /// `lnΓ(n + n_W·λ_β)`.
    #[inline]
    pub fn theme(&self, n: usize) -> Result<f64> {
        self.theme.get(n).copied().ok_or(Error::TableOverflow {
            index: n,
            max: self.n_max(),
        })
    }

    pub(crate) fn word_slice(&self) -> &[f64] {
        &self.word
    }

    /// `ln(n + λ_β)` at index `n`.
    pub(crate) fn word_step_slice(&self) -> &[f64] {
        &self.word_step
    }

    /// `ln(s + λ_α)`; computed directly past the tabulated range.
    #[inline]
    pub(crate) fn alpha_term(&self, s: usize, lambda_alpha: f64) -> f64 {
        match self.alpha_step.get(s) {
            Some(&v) => v,
            None => (s as f64 + lambda_alpha).ln(),
        }
    }

    /// `lnΓ(k + c + n_W·λ_β) − lnΓ(k + n_W·λ_β)`.
    #[inline]
    pub(crate) fn theme_rise(&self, k: usize, c: usize) -> Result<f64> {
        Ok(self.theme(k + c)? - self.theme[k])
    }

    /// Largest deviation from `lnΓ(a+1) = ln a + lnΓ(a)`, relative to `max(1, |lnΓ(a+1)|)`.
    pub fn recurrence_residual(&self) -> f64 {
        let check = |table: &[f64], offset: f64| {
            table
                .windows(2)
                .enumerate()
                .map(|(n, w)| {
                    let a = n as f64 + offset;
                    (w[1] - (a.ln() + w[0])).abs() / w[1].abs().max(1.0)
                })
                .fold(0.0, f64::max)
        };
        check(&self.word, self.offset_word).max(check(&self.theme, self.offset_theme))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn lse_examples() {
        assert_abs_diff_eq!(log_sum_exp(&[0.5f64.ln(), 0.5f64.ln()]).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        assert_abs_diff_eq!(log_sum_exp(&[0.0, 0.0, 0.0]).unwrap(), 3f64.ln(), epsilon = 1e-15);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(), f64::NEG_INFINITY);
        assert_abs_diff_eq!(log_sum_exp(&[f64::NEG_INFINITY, 1.0]).unwrap(), 1.0);
        assert!(log_sum_exp(&[]).is_err());
        // no overflow far from zero
        assert_abs_diff_eq!(
            log_sum_exp(&[-1000.0, -1000.0]).unwrap(),
            -1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            log_sum_exp(&[800.0, 800.0]).unwrap(),
            800.0 + 2f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn table_examples() {
        let hyper = Hyperparams::new(1.0, 0.37).unwrap();
        let t = LogGammaTable::build(&hyper, 7, 50);
        assert_abs_diff_eq!(t.word(1).unwrap() - t.word(0).unwrap(), 0.37f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(t.theme(0).unwrap(), ln_gamma(7.0 * 0.37), epsilon = 1e-15);
        assert!(matches!(t.word(51), Err(Error::TableOverflow { index: 51, max: 50 })));
        assert!(t.theme_rise(45, 6).is_err());

        let unit = LogGammaTable::build(&Hyperparams::new(1.0, 1.0).unwrap(), 3, 20);
        let mut log_fact = 0.0;
        for n in 0..=20usize {
            if n > 0 {
                log_fact += (n as f64).ln();
            }
            assert_abs_diff_eq!(unit.word(n).unwrap(), log_fact, epsilon = 1e-10);
        }
    }

    proptest! {
        #[test]
        fn recurrence_holds(lambda in 0.01f64..5.0, n_words in 1usize..5000) {
            let t = LogGammaTable::build(&Hyperparams::new(1.0, lambda).unwrap(), n_words, 2000);
            prop_assert!(t.recurrence_residual() < 1e-10);
        }

        #[test]
        fn lse_matches_direct_sum(v in prop::collection::vec(-30.0f64..30.0, 1..20)) {
            let direct = v.iter().map(|x| x.exp()).sum::<f64>().ln();
            let got = log_sum_exp(&v).unwrap();
            prop_assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}
