use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use mixclust::corpus::{reduce_vocabulary, split_folds, CountMatrix, VocabPolicy, Vocabulary};
use mixclust::em::{
    dirichlet_init, hard_assign, label_init, m_step, run_em, run_iterative, run_kmeans, run_restarts, EmConfig,
    EmTrace, Inner, IterativeSchedule, Responsibilities,
};
use mixclust::gibbs::{random_assignment, run_chain, ChainConfig, ChainKind, ChainTrace};
use mixclust::model::{Hyperparams, ModelParams, ThemeAssignment};
use mixclust::rng;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;
use crate::store::{self, StoredCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Em,
    Kmeans,
    Iterative,
    Restarts,
    Gibbs(ChainKind),
}

impl Method {
    pub const NAMES: &'static str = "em|kmeans|iterative|restarts|gibbs-naive|gibbs-collapsed";

    pub fn name(self) -> &'static str {
        match self {
            Method::Em => "em",
            Method::Kmeans => "kmeans",
            Method::Iterative => "iterative",
            Method::Restarts => "restarts",
            Method::Gibbs(ChainKind::Naive) => "gibbs-naive",
            Method::Gibbs(ChainKind::Collapsed) => "gibbs-collapsed",
        }
    }

    /// Keys that only make sense for some methods.
    fn accepts(self, key: &str) -> bool {
        match key {
            "iterations" => !matches!(self, Method::Gibbs(_)),
            "tol" => matches!(self, Method::Em | Method::Iterative | Method::Restarts),
            "schedule" => matches!(self, Method::Iterative | Method::Restarts),
            "runs" | "inner" => self == Method::Restarts,
            "sweeps" | "burn_in" | "thin" | "snapshot_every" => matches!(self, Method::Gibbs(_)),
            _ => true,
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "em" => Method::Em,
            "kmeans" => Method::Kmeans,
            "iterative" => Method::Iterative,
            "restarts" => Method::Restarts,
            "gibbs-naive" => Method::Gibbs(ChainKind::Naive),
            "gibbs-collapsed" => Method::Gibbs(ChainKind::Collapsed),
            _ => return Err(format!("unknown method {s:?} (expected {})", Method::NAMES)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Dirichlet,
    Labels,
    Random,
}

impl FromStr for InitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dirichlet" => Ok(InitKind::Dirichlet),
            "labels" => Ok(InitKind::Labels),
            "random" => Ok(InitKind::Random),
            _ => Err(format!("unknown init {s:?} (expected dirichlet|labels|random)")),
        }
    }
}

/// `all`, `keep:N` or `drop:N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabSpec(pub Option<VocabPolicy>);

impl FromStr for VocabSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(VocabSpec(None));
        }
        let bad = || format!("bad vocabulary policy {s:?} (expected all|keep:N|drop:N)");
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        match kind {
            "keep" => Ok(VocabSpec(Some(VocabPolicy::KeepMostFrequent(n)))),
            "drop" => Ok(VocabSpec(Some(VocabPolicy::DropMostFrequent(n)))),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InnerKind {
    Em,
    Iterative,
}

impl FromStr for InnerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "em" => Ok(InnerKind::Em),
            "iterative" => Ok(InnerKind::Iterative),
            _ => Err(format!("unknown inner method {s:?} (expected em|iterative)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub method: Method,
    pub seed: u64,
    pub themes: Option<usize>,
    pub hyper: Hyperparams,
    pub init: InitKind,
    pub vocab: VocabSpec,
    pub folds: Option<(usize, usize)>,
    pub iterations: usize,
    pub tol: Option<f64>,
    schedule: Option<String>,
    runs: usize,
    inner: InnerKind,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub snapshot_every: usize,
}

impl TrainConfig {
    /// Reads and checks every training setting, reporting all problems together.
    pub fn from_settings(s: &mut Settings) -> CliResult<Self> {
        let corpus = s.require::<PathBuf>("corpus");
        let out = crate::out_dir(s);
        s.check(out.is_some(), || "out is required".into());
        let method = s.get_or("method", Method::Em);
        for key in [
            "iterations",
            "tol",
            "schedule",
            "runs",
            "inner",
            "sweeps",
            "burn_in",
            "thin",
            "snapshot_every",
        ] {
            if s.raw(key).is_some() && !method.accepts(key) {
                s.error(format!("{key} does not apply to method {}", method.name()));
            }
        }
        let seed = s.get_or("seed", crate::DEFAULT_SEED);
        let themes: Option<usize> = s.get("themes");
        let hyper = crate::hyperparams(s);
        let default_init = match method {
            Method::Em | Method::Iterative | Method::Restarts => InitKind::Dirichlet,
            Method::Kmeans | Method::Gibbs(_) => InitKind::Random,
        };
        let init = s.get_or("init", default_init);
        s.check(init != InitKind::Labels || themes.is_none(), || {
            "themes is implied by init=labels; leave it out".into()
        });
        s.check(init == InitKind::Labels || themes.is_some(), || {
            "themes is required".into()
        });
        s.check(themes != Some(0), || "themes must be positive".into());
        s.check(method != Method::Restarts || init == InitKind::Dirichlet, || {
            "restarts always start from Dirichlet draws; init must be dirichlet".into()
        });
        s.check(
            !matches!(method, Method::Gibbs(_)) || init != InitKind::Dirichlet,
            || "Gibbs chains start from indicators; init must be random or labels".into(),
        );
        if let Some(h) = &hyper {
            if !matches!(method, Method::Gibbs(_)) {
                if let Err(e) = h.require_map() {
                    s.error(e.to_string());
                }
            }
        }
        let vocab = s.get_or("vocab_policy", VocabSpec(None));
        let folds: Option<usize> = s.get("folds");
        let fold: Option<usize> = s.get("fold");
        let folds = match (folds, fold) {
            (None, None) => None,
            (Some(k), Some(i)) if k >= 2 && i < k => Some((k, i)),
            (Some(k), Some(i)) => {
                s.error(format!("need folds >= 2 and fold < folds, got folds={k} fold={i}"));
                None
            }
            _ => {
                s.error("folds and fold go together");
                None
            }
        };
        let iterations = s.get_or("iterations", if method == Method::Iterative { 15 } else { 30 });
        let tol: Option<f64> = s.get("tol");
        s.check(tol.is_none_or(|t| t >= 0.0), || "tol must be non-negative".into());
        let schedule: Option<String> = s.get("schedule");
        if let Some(spec) = &schedule {
            if let Err(e) = IterativeSchedule::parse(spec) {
                s.error(e.to_string());
            }
        }
        let runs = s.get_or("runs", 10);
        s.check(runs >= 1, || "runs must be at least 1".into());
        let inner = s.get_or(
            "inner",
            if schedule.is_some() {
                InnerKind::Iterative
            } else {
                InnerKind::Em
            },
        );
        let sweeps = s.get_or("sweeps", 200);
        let burn_in = s.get_or("burn_in", sweeps / 10);
        let thin = s.get_or("thin", 1);
        let snapshot_every = s.get_or("snapshot_every", 10);
        s.check(burn_in < sweeps, || {
            format!("burn_in {burn_in} must be below sweeps {sweeps}")
        });
        s.check(thin >= 1, || "thin must be at least 1".into());
        s.finish()?;
        Ok(TrainConfig {
            corpus: corpus.unwrap(),
            out: out.unwrap(),
            method,
            seed,
            themes,
            hyper: hyper.unwrap(),
            init,
            vocab,
            folds,
            iterations,
            tol,
            schedule,
            runs,
            inner,
            sweeps,
            burn_in,
            thin,
            snapshot_every,
        })
    }

    fn em_config(&self) -> EmConfig {
        EmConfig {
            n_iters: self.iterations,
            tol: self.tol,
            record_assignments: false,
        }
    }

    fn schedule(&self, n_words: usize) -> IterativeSchedule {
        match &self.schedule {
            Some(spec) => IterativeSchedule::parse(spec).expect("validated"),
            None => IterativeSchedule::default_for(n_words, self.iterations),
        }
    }
}

/// Training data after fold selection and vocabulary reduction.
pub struct TrainingData {
    pub corpus: StoredCorpus,
    pub vocab: Vocabulary,
    pub counts: CountMatrix,
    pub heldout: Option<Vec<usize>>,
}

impl TrainingData {
    pub fn load(config: &TrainConfig) -> CliResult<Self> {
        let full = StoredCorpus::load(&config.corpus)?;
        let (corpus, heldout) = match config.folds {
            Some((k, i)) => {
                let split = split_folds(full.n_docs(), k, config.seed)?;
                let (train, test) = split.train_test(i);
                (full.select(&train), Some(test))
            }
            None => (full, None),
        };
        let vocab = match config.vocab.0 {
            None => corpus.vocab.clone(),
            Some(policy) => reduce_vocabulary(&corpus.vocab, &corpus.counts, policy)?,
        };
        let counts = corpus.project(&vocab)?;
        Ok(TrainingData {
            corpus,
            vocab,
            counts,
            heldout,
        })
    }
}

/// Everything a training run produced, before it is written out.
pub struct Outcome {
    pub params: ModelParams,
    pub assignment: ThemeAssignment,
    pub final_perplexity: f64,
    pub responsibilities: Option<Responsibilities>,
    pub em_trace: Option<EmTrace>,
    pub restarts: Vec<(f64, bool)>,
    pub chain: Option<ChainTrace>,
    pub theme_names: Option<Vec<String>>,
}

pub fn fit(config: &TrainConfig, data: &TrainingData) -> CliResult<Outcome> {
    let counts = &data.counts;
    let n_d = counts.n_docs();
    let (labels, theme_names) = match config.init {
        InitKind::Labels => {
            let (a, names) = data.corpus.label_assignment(None)?;
            (Some(a), Some(names))
        }
        _ => (None, None),
    };
    let n_t = labels
        .as_ref()
        .map_or_else(|| config.themes.unwrap(), ThemeAssignment::n_themes);
    let hyper = &config.hyper;
    let soft_init = || -> CliResult<Responsibilities> {
        Ok(match (&labels, config.init) {
            (Some(l), _) => label_init(l, n_t)?,
            (None, InitKind::Random) => label_init(&random_assignment(n_d, n_t, &mut rng::seeded(config.seed))?, n_t)?,
            _ => dirichlet_init(n_d, n_t, &mut rng::seeded(config.seed))?,
        })
    };
    let from_em = |trace: EmTrace, restarts| Outcome {
        params: trace.params.clone(),
        assignment: trace.clustering(),
        final_perplexity: trace.final_perplexity(),
        responsibilities: Some(trace.responsibilities.clone()),
        em_trace: Some(trace),
        restarts,
        chain: None,
        theme_names: theme_names.clone(),
    };
    Ok(match config.method {
        Method::Em => from_em(run_em(counts, soft_init()?, hyper, &config.em_config())?, Vec::new()),
        Method::Iterative => {
            let schedule = config.schedule(data.vocab.len());
            let trace = run_iterative(counts, &data.vocab, &schedule, soft_init()?, hyper, &config.em_config())?;
            from_em(trace, Vec::new())
        }
        Method::Restarts => {
            let schedule = config.schedule(data.vocab.len());
            let inner = match config.inner {
                InnerKind::Em => Inner::Em(config.em_config()),
                InnerKind::Iterative => Inner::Iterative {
                    vocab: &data.vocab,
                    schedule: &schedule,
                    config: config.em_config(),
                },
            };
            let r = run_restarts(counts, n_t, config.runs, hyper, config.seed, inner)?;
            let summary = r
                .traces
                .iter()
                .enumerate()
                .map(|(i, t)| (t.final_perplexity(), i == r.best))
                .collect();
            from_em(r.best_trace().clone(), summary)
        }
        Method::Kmeans => {
            let init = match (&labels, config.init) {
                (Some(l), _) => l.clone(),
                (None, InitKind::Random) => random_assignment(n_d, n_t, &mut rng::seeded(config.seed))?,
                // Hard assignment under the parameters of a Dirichlet-weighted M-step.
                _ => {
                    let params = m_step(counts, &dirichlet_init(n_d, n_t, &mut rng::seeded(config.seed))?, hyper)?;
                    hard_assign(counts, &params)?
                }
            };
            let trace = run_kmeans(counts, init, hyper, &config.em_config())?;
            Outcome {
                responsibilities: None,
                ..from_em(trace, Vec::new())
            }
        }
        Method::Gibbs(kind) => {
            let init = match &labels {
                Some(l) => l.clone(),
                None => random_assignment(n_d, n_t, &mut rng::stream(config.seed, 0))?,
            };
            let chain_config = ChainConfig {
                n_sweeps: config.sweeps,
                burn_in: config.burn_in,
                thin: config.thin,
                snapshot_every: config.snapshot_every,
                target: None,
            };
            let trace = run_chain(counts, init, hyper, kind, &chain_config, rng::stream(config.seed, 1))?;
            Outcome {
                params: trace.final_params.clone(),
                assignment: trace.final_assignment.clone(),
                final_perplexity: mixclust::eval::perplexity(counts, &trace.final_params)?,
                responsibilities: None,
                em_trace: None,
                restarts: Vec::new(),
                chain: Some(trace),
                theme_names,
            }
        }
    })
}

fn save_with(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> mixclust::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn write_outcome(config: &TrainConfig, settings: &Settings, data: &TrainingData, o: &Outcome) -> CliResult<()> {
    let dir = &config.out;
    fs::create_dir_all(dir)?;
    store::write_string(&dir.join(store::CONFIG_FILE), &settings.echo(&["out", "config"]))?;
    let mut meta = BTreeMap::new();
    meta.insert("rng".to_owned(), rng::RNG_ALGORITHM.to_owned());
    meta.insert("seed".to_owned(), config.seed.to_string());
    meta.insert("method".to_owned(), config.method.name().to_owned());
    meta.insert("n_docs".to_owned(), data.counts.n_docs().to_string());
    meta.insert("n_words".to_owned(), data.counts.n_words().to_string());
    meta.insert("n_themes".to_owned(), o.params.n_themes().to_string());
    meta.insert("final_perplexity".to_owned(), o.final_perplexity.to_string());
    meta.insert("version".to_owned(), env!("CARGO_PKG_VERSION").to_owned());
    store::write_string(&dir.join(store::META_FILE), &store::key_values(&meta))?;

    o.params.save_checkpoint(&config.hyper, &dir.join(store::MODEL_FILE))?;
    data.vocab.save(&dir.join(store::VOCAB_FILE))?;
    store::write_assignment(&dir.join(store::ASSIGNMENTS_FILE), &o.assignment)?;
    if let Some(names) = &o.theme_names {
        store::write_string(
            &dir.join(store::THEMES_FILE),
            &names.iter().map(|n| format!("{n}\n")).collect::<String>(),
        )?;
    }
    if let Some(heldout) = &data.heldout {
        let text: String = heldout.iter().map(|d| format!("{d}\n")).collect();
        store::write_string(&dir.join(store::HELDOUT_FILE), &text)?;
    }
    if let Some(r) = &o.responsibilities {
        r.save_tsv(&dir.join("responsibilities.tsv"))?;
    }
    if let Some(t) = &o.em_trace {
        save_with(&dir.join("trace.csv"), |b| t.write_csv(b))?;
    }
    if !o.restarts.is_empty() {
        let mut text = String::from("run,final_perplexity,best\n");
        for (i, (p, best)) in o.restarts.iter().enumerate() {
            text.push_str(&format!("{},{p},{}\n", i + 1, u8::from(*best)));
        }
        store::write_string(&dir.join("restarts.csv"), &text)?;
    }
    if let Some(c) = &o.chain {
        save_with(&dir.join("trace.csv"), |b| c.write_csv(b))?;
        save_with(&dir.join("samples.txt"), |b| c.write_samples(b))?;
    }
    Ok(())
}

pub fn run(s: &mut Settings) -> CliResult<()> {
    let config = TrainConfig::from_settings(s)?;
    let start = Instant::now();
    let data = TrainingData::load(&config)?;
    let outcome = fit(&config, &data)?;
    let elapsed = start.elapsed().as_secs_f64();
    write_outcome(&config, s, &data, &outcome)?;
    store::write_string(
        &config.out.join(store::TIMING_FILE),
        &format!("wall_seconds={elapsed}\n"),
    )?;
    println!(
        "method={} n_D={} n_W={} n_T={} final_perplexity={}",
        config.method.name(),
        data.counts.n_docs(),
        data.counts.n_words(),
        outcome.params.n_themes(),
        outcome.final_perplexity
    );
    Ok(())
}
