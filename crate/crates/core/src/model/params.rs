use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "MIXCLUST-MODEL v1";

/// Symmetric Dirichlet hyperparameters on the mixture weights and on each
/// theme's word distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda_alpha: 1.0,
            lambda_beta: 1.1,
        }
    }
}

impl Hyperparams {
    pub fn new(lambda_alpha: f64, lambda_beta: f64) -> Result<Self> {
        for (name, v) in [("lambda_alpha", lambda_alpha), ("lambda_beta", lambda_beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Hyperparams {
            lambda_alpha,
            lambda_beta,
        })
    }

    /// MAP estimation needs `λ ≥ 1` so that `λ − 1 + count` is never negative.
    pub fn require_map(&self) -> Result<()> {
        if self.lambda_alpha < 1.0 || self.lambda_beta < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "MAP estimation requires lambda_alpha >= 1 and lambda_beta >= 1, got ({}, {})",
                self.lambda_alpha, self.lambda_beta
            )));
        }
        Ok(())
    }
}

/// Mixture weights and theme word distributions, in log domain.
///
/// `log_beta` is stored word-major: the `n_T` entries of word `w` are contiguous,
/// which is the access pattern of every per-document loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    n_themes: usize,
    n_words: usize,
    log_alpha: Vec<f64>,
    log_beta: Vec<f64>,
}

pub const ALPHA_TOLERANCE: f64 = 1e-12;
pub const BETA_TOLERANCE: f64 = 1e-10;

impl ModelParams {
    /// Takes ownership of log-domain parameters; `log_beta` is word-major (`w * n_T + t`).
    pub fn from_log(n_words: usize, log_alpha: Vec<f64>, log_beta: Vec<f64>) -> Result<Self> {
        let n_themes = log_alpha.len();
        if n_themes == 0 {
            return Err(Error::InvalidArgument("model needs at least one theme".into()));
        }
        if log_beta.len() != n_words * n_themes {
            return Err(Error::DimensionMismatch(format!(
                "log_beta has {} entries, expected {n_words} x {n_themes}",
                log_beta.len()
            )));
        }
        let params = ModelParams {
            n_themes,
            n_words,
            log_alpha,
            log_beta,
        };
        params.check_normalized()?;
        Ok(params)
    }

    /// Builds from linear-domain `alpha` and one probability vector per theme.
    pub fn from_probabilities(alpha: &[f64], beta_columns: &[Vec<f64>]) -> Result<Self> {
        if alpha.len() != beta_columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} mixture weights for {} themes",
                alpha.len(),
                beta_columns.len()
            )));
        }
        let n_words = beta_columns.first().map_or(0, Vec::len);
        let n_themes = alpha.len();
        let mut log_beta = vec![0.0; n_words * n_themes];
        for (t, col) in beta_columns.iter().enumerate() {
            if col.len() != n_words {
                return Err(Error::DimensionMismatch(format!(
                    "theme {t} has {} word probabilities, expected {n_words}",
                    col.len()
                )));
            }
            for (w, &p) in col.iter().enumerate() {
                log_beta[w * n_themes + t] = p.ln();
            }
        }
        Self::from_log(n_words, alpha.iter().map(|a| a.ln()).collect(), log_beta)
    }

    /// Every theme uses the same word distribution; uniform weights.
    pub fn uniform(n_themes: usize, n_words: usize) -> Result<Self> {
        let la = -(n_themes as f64).ln();
        let lb = -(n_words as f64).ln();
        Self::from_log(n_words, vec![la; n_themes], vec![lb; n_words * n_themes])
    }

    pub fn n_themes(&self) -> usize {
        self.n_themes
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn log_alpha(&self) -> &[f64] {
        &self.log_alpha
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.log_alpha.iter().map(|a| a.exp()).collect()
    }

    #[inline]
    pub fn log_beta(&self, w: usize, t: usize) -> f64 {
        self.log_beta[w * self.n_themes + t]
    }

    /// The `n_T` log-probabilities of word `w`.
    #[inline]
    pub fn log_beta_row(&self, w: usize) -> &[f64] {
        let k = self.n_themes;
        &self.log_beta[w * k..(w + 1) * k]
    }

    /// Word-major `n_W × n_T` log-probabilities.
    pub fn log_beta_matrix(&self) -> &[f64] {
        &self.log_beta
    }

    pub fn beta_column(&self, t: usize) -> Vec<f64> {
        (0..self.n_words).map(|w| self.log_beta(w, t).exp()).collect()
    }

    pub fn check_normalized(&self) -> Result<()> {
        let sum_alpha: f64 = self.log_alpha.iter().map(|a| a.exp()).sum();
        if (sum_alpha - 1.0).abs() > ALPHA_TOLERANCE || self.log_alpha.iter().any(|a| a.is_nan()) {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {sum_alpha}")));
        }
        let mut sums = vec![0.0; self.n_themes];
        for row in self.log_beta.chunks_exact(self.n_themes) {
            for (s, lb) in sums.iter_mut().zip(row) {
                if lb.is_nan() || *lb > 0.0 {
                    return Err(Error::InvalidArgument(format!("invalid log-probability {lb}")));
                }
                *s += lb.exp();
            }
        }
        for (t, s) in sums.iter().enumerate() {
            if (s - 1.0).abs() > BETA_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "word distribution of theme {t} sums to {s}"
                )));
            }
        }
        Ok(())
    }

    /// Log-likelihood of each theme for one document, without the multinomial coefficient.
    #[inline]
    pub(crate) fn doc_log_joint(&self, doc: crate::corpus::DocCounts<'_>, out: &mut [f64]) {
        out.copy_from_slice(&self.log_alpha);
        super::dispatch_width!(self.n_themes, |N| self.doc_log_joint_fixed::<N>(doc, out), {
            for (w, c) in doc.iter() {
                let c = f64::from(c);
                for (o, lb) in out.iter_mut().zip(self.log_beta_row(w)) {
                    *o += c * lb;
                }
            }
        })
    }

    #[inline]
    fn doc_log_joint_fixed<const N: usize>(&self, doc: crate::corpus::DocCounts<'_>, out: &mut [f64]) {
        let mut acc: [f64; N] = (&*out).try_into().expect("one weight per theme");
        for (w, c) in doc.iter() {
            let c = f64::from(c);
            let row: &[f64; N] = self.log_beta_row(w).try_into().expect("one weight per theme");
            for t in 0..N {
                acc[t] += c * row[t];
            }
        }
        out.copy_from_slice(&acc);
    }

    pub fn write_checkpoint<W: Write>(&self, hyper: &Hyperparams, mut out: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        writeln!(out, "{MODEL_MAGIC}").map_err(io)?;
        writeln!(
            out,
            "{} {} {} {}",
            self.n_themes, self.n_words, hyper.lambda_alpha, hyper.lambda_beta
        )
        .map_err(io)?;
        let join = |vals: &mut dyn Iterator<Item = f64>| vals.map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "{}", join(&mut self.log_alpha.iter().copied())).map_err(io)?;
        for t in 0..self.n_themes {
            writeln!(out, "{}", join(&mut (0..self.n_words).map(|w| self.log_beta(w, t)))).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(reader: R, name: &str) -> Result<(Self, Hyperparams)> {
        let mut lines = reader.lines();
        let mut lno = 0;
        let mut next = |what: &str| -> Result<(usize, String)> {
            lno += 1;
            match lines.next() {
                Some(Ok(l)) => Ok((lno, l)),
                Some(Err(e)) => Err(Error::parse(name, lno, e)),
                None => Err(Error::parse(name, lno, format!("missing {what}"))),
            }
        };
        let (l, magic) = next("header")?;
        if magic.trim_end() != MODEL_MAGIC {
            return Err(Error::parse(name, l, format!("expected {MODEL_MAGIC:?}")));
        }
        let (l, dims) = next("dimensions")?;
        let fields: Vec<&str> = dims.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(name, l, "expected `n_T n_W lambda_alpha lambda_beta`"));
        }
        let n_themes: usize = fields[0].parse().map_err(|e| Error::parse(name, l, e))?;
        let n_words: usize = fields[1].parse().map_err(|e| Error::parse(name, l, e))?;
        let la: f64 = fields[2].parse().map_err(|e| Error::parse(name, l, e))?;
        let lb: f64 = fields[3].parse().map_err(|e| Error::parse(name, l, e))?;
        let hyper = Hyperparams::new(la, lb)?;

        let parse_row = |l: usize, line: &str, n: usize| -> Result<Vec<f64>> {
            let row = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(name, l, e))?;
            if row.len() != n {
                return Err(Error::parse(name, l, format!("expected {n} values, got {}", row.len())));
            }
            Ok(row)
        };
        let (l, alpha_line) = next("alpha line")?;
        let log_alpha = parse_row(l, &alpha_line, n_themes)?;
        let mut log_beta = vec![0.0; n_words * n_themes];
        for t in 0..n_themes {
            let (l, line) = next("beta line")?;
            for (w, v) in parse_row(l, &line, n_words)?.into_iter().enumerate() {
                log_beta[w * n_themes + t] = v;
            }
        }
        Ok((Self::from_log(n_words, log_alpha, log_beta)?, hyper))
    }

    pub fn save_checkpoint(&self, hyper: &Hyperparams, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_checkpoint(hyper, &mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, Hyperparams)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(BufReader::new(file), &path.display().to_string())
    }
}
