use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "mixclust", version, about = "Multinomial mixture models for text clustering")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed of every random stream used by the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of mixture components.
    #[arg(long, global = true)]
    pub themes: Option<usize>,
    /// Dirichlet hyperparameter on the mixture weights (default 1.0).
    #[arg(long, global = true)]
    pub lambda_alpha: Option<f64>,
    /// Dirichlet hyperparameter on each theme's word distribution (default 1.1).
    #[arg(long, global = true)]
    pub lambda_beta: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `key=value` file; its entries override the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a raw corpus and store its counts and vocabulary.
    Ingest(IngestArgs),
    /// Fit a mixture (EM, k-means, staged EM, restarts or Gibbs sampling).
    Train(TrainArgs),
    /// Classify a test corpus with naive Bayes or the predictive rule.
    Classify(ClassifyArgs),
    /// Score one or more runs: perplexities and matched cooccurrence.
    Eval(EvalArgs),
    /// Run a named experiment and write its curves as CSV.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// TSV file (`label<TAB>text` per line) or `<label>/<docid>.txt` tree.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// tsv or dir; inferred from the input when absent.
    #[arg(long)]
    pub format: Option<String>,
    /// Count against an existing vocabulary file instead of building one.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Ingested corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// em, kmeans, iterative, restarts, gibbs-naive or gibbs-collapsed.
    #[arg(long)]
    pub method: Option<String>,
    /// EM iterations (per stage for `iterative`; default 30, or 15 per stage).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Relative log-posterior gain below which EM stops early.
    #[arg(long)]
    pub tol: Option<f64>,
    /// dirichlet, labels or random.
    #[arg(long)]
    pub init: Option<String>,
    /// Staged vocabulary sizes, e.g. `100:15,300:15,full:15`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Number of restarts.
    #[arg(long)]
    pub runs: Option<usize>,
    /// What each restart runs: em or iterative.
    #[arg(long)]
    pub inner: Option<String>,
    /// Gibbs sweeps (default 200).
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Sweeps discarded before samples are kept (default a tenth).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Keep every n-th sweep after burn-in (default 1).
    #[arg(long)]
    pub thin: Option<usize>,
    /// Score the chain every n sweeps; 0 disables (default 10).
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// all, keep:N (most frequent) or drop:N (most frequent).
    #[arg(long)]
    pub vocab_policy: Option<String>,
    /// Cross-validation fold count; trains on every fold but `--fold`.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Held-out fold, 0-based.
    #[arg(long)]
    pub fold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Ingested corpus to classify.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Checkpoint of a trained model (naive rule only).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labeled training corpus.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// naive or bayes.
    #[arg(long)]
    pub rule: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory; repeat to summarize several runs.
    #[arg(long = "run")]
    pub runs: Vec<PathBuf>,
    /// Ingested test corpus; defaults to the held-out fold of a fold run.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Reference clustering of the training documents, one label per line.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Use the corpus labels as reference clusterings.
    #[arg(long)]
    pub gold: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// smoothing-sweep, vocab-sweep, iterative-vs-flat, restart-correlation,
    /// rule-comparison, em-vs-kmeans or gibbs-comparison.
    pub name: String,
    /// Labeled training corpus; a synthetic one is generated when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Labeled test corpus (required with --corpus unless folds are given).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Cross-validation fold count, instead of `--test`.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Held-out fold, 0-based.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Seeds or restarts per point.
    #[arg(long)]
    pub runs: Option<usize>,
    /// EM iterations, per stage for staged EM.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Gibbs sweeps per chain (default 200).
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Comma-separated values swept by the experiment.
    #[arg(long)]
    pub grid: Option<String>,
    /// Vocabulary size of the synthetic corpus.
    #[arg(long)]
    pub words: Option<usize>,
    /// Training documents of the synthetic corpus.
    #[arg(long)]
    pub docs: Option<usize>,
}

fn path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl Global {
    fn register(&self, s: &mut Settings) {
        s.flag("seed", self.seed)
            .flag("themes", self.themes)
            .flag("lambda_alpha", self.lambda_alpha)
            .flag("lambda_beta", self.lambda_beta)
            .flag("out", path(&self.out));
    }
}

impl Cli {
    /// Flags of the chosen command as settings, before any config file.
    pub fn settings(&self) -> Settings {
        let mut s = Settings::default();
        self.global.register(&mut s);
        match &self.command {
            Command::Ingest(a) => {
                s.flag("input", path(&a.input))
                    .flag("format", a.format.as_ref())
                    .flag("vocab", path(&a.vocab));
            }
            Command::Train(a) => {
                s.flag("corpus", path(&a.corpus))
                    .flag("method", a.method.as_ref())
                    .flag("iterations", a.iterations)
                    .flag("tol", a.tol)
                    .flag("init", a.init.as_ref())
                    .flag("schedule", a.schedule.as_ref())
                    .flag("runs", a.runs)
                    .flag("inner", a.inner.as_ref())
                    .flag("sweeps", a.sweeps)
                    .flag("burn_in", a.burn_in)
                    .flag("thin", a.thin)
                    .flag("snapshot_every", a.snapshot_every)
                    .flag("vocab_policy", a.vocab_policy.as_ref())
                    .flag("folds", a.folds)
                    .flag("fold", a.fold);
            }
            Command::Classify(a) => {
                s.flag("test", path(&a.test))
                    .flag("model", path(&a.model))
                    .flag("train", path(&a.train))
                    .flag("rule", a.rule.as_ref());
            }
            Command::Eval(a) => {
                let runs: Vec<String> = a.runs.iter().map(|p| p.display().to_string()).collect();
                s.flag("run", (!runs.is_empty()).then(|| runs.join(",")))
                    .flag("test", path(&a.test))
                    .flag("reference", path(&a.reference))
                    .flag("gold", a.gold.then_some(true));
            }
            Command::Experiment(a) => {
                s.flag("corpus", path(&a.corpus))
                    .flag("test", path(&a.test))
                    .flag("folds", a.folds)
                    .flag("fold", a.fold)
                    .flag("runs", a.runs)
                    .flag("iterations", a.iterations)
                    .flag("sweeps", a.sweeps)
                    .flag("grid", a.grid.as_ref())
                    .flag("words", a.words)
                    .flag("docs", a.docs);
            }
        }
        s
    }
}
