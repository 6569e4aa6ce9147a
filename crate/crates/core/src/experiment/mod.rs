//! End-to-end runs: select shots, render the prompt, complete, parse, score,
//! and log every test example to an append-only JSONL file.
//!
//! A run skips test ids already present in its log, so an interrupted run is
//! resumed by starting it again. Records are written in test-set order even
//! when several examples are in flight, which keeps replayed logs
//! byte-identical apart from their `timing` fields.

mod config;
mod log;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, OnceLock};
use std::time::{Duration, Instant};

use chrono::Utc;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::info;

pub use config::{EmbeddingConfig, ExperimentConfig, Selection};
pub use log::{load_log, report_log, report_records, RunRecord, RunReport, ShotRef, Timing};

use crate::dataset::{category_inventory, load_corpus, Corpus, DatasetError, Example};
use crate::llm::{LlmClient, LlmError, Mode, ResponseCache};
use crate::parser::parse_quads;
use crate::prompt::{render_prompt, PromptError, PromptSpec, Shot, ShotOrder};
use crate::retrieval::{
    sample_indices, select_knn, DenseIndex, Embedder, EmbeddingProvider, HttpEmbeddingClient,
    PrecomputedEmbeddings, RetrievalError, TfidfIndex,
};
use crate::scoring::{report_csv, ScoreReport, ScoringError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Per-example seed for random selection, stable under resumption.
pub fn example_seed(seed: u64, test_id: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(test_id.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// A fitted shot selector over the training corpus.
pub enum Selector {
    Tfidf(TfidfIndex),
    Dense(Arc<DenseIndex>),
    Random { seed: u64 },
}

impl Selector {
    /// Shots for `query`, most similar first, as `(training index, similarity)`.
    pub fn select(
        &self,
        train: &Corpus,
        query: &Example,
        k: usize,
    ) -> Result<Vec<(usize, Option<f64>)>, RetrievalError> {
        let from_neighbors = |n: Vec<crate::retrieval::Neighbor>| {
            n.into_iter().map(|n| (n.index, Some(n.similarity))).collect()
        };
        Ok(match self {
            Selector::Tfidf(index) => from_neighbors(select_knn(&query.text, index, k)?),
            Selector::Dense(index) => from_neighbors(select_knn(&query.text, &**index, k)?),
            Selector::Random { seed } => {
                let k = k.min(train.len());
                sample_indices(train.len(), k, example_seed(*seed, &query.id))?
                    .into_iter()
                    .map(|i| (i, None))
                    .collect()
            }
        })
    }
}

/// Builds prompts for test examples from a training corpus.
pub struct PromptBuilder<'a> {
    pub train: &'a Corpus,
    pub categories: Vec<String>,
    pub selector: Selector,
    pub k: usize,
    pub shot_order: ShotOrder,
}

impl<'a> PromptBuilder<'a> {
    pub fn tfidf(train: &'a Corpus, k: usize) -> Result<Self, ExperimentError> {
        Ok(Self {
            train,
            categories: category_inventory(train),
            selector: Selector::Tfidf(TfidfIndex::build(train)?),
            k,
            shot_order: ShotOrder::MostSimilarFirst,
        })
    }

    pub fn build(&self, query: &Example) -> Result<(Vec<ShotRef>, String), ExperimentError> {
        let picked = self
            .shot_order
            .arrange(self.selector.select(self.train, query, self.k)?);
        let examples = self.train.examples();
        let shots = picked.iter().map(|&(i, _)| Shot::from(&examples[i])).collect();
        let refs = picked
            .iter()
            .map(|&(i, similarity)| ShotRef {
                id: examples[i].id.clone(),
                similarity,
            })
            .collect();
        let spec = PromptSpec::new(self.categories.clone(), shots, query.text.clone());
        Ok((refs, render_prompt(&spec)?))
    }
}

pub struct RunOutcome {
    pub log_path: PathBuf,
    pub records: Vec<RunRecord>,
    pub report: RunReport,
    /// Test examples processed by this invocation (excludes resumed ones).
    pub processed: usize,
}

/// One row of a sweep: the variant label and its exact-match report.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub report: ScoreReport,
}

pub fn sweep_csv(key: &str, rows: &[SweepRow]) -> String {
    let rows: Vec<(String, ScoreReport)> = rows.iter().map(|r| (r.label.clone(), r.report)).collect();
    report_csv(key, &rows)
}

/// Loaded corpora plus a completion client, shared across the runs of a sweep.
pub struct Harness {
    config: ExperimentConfig,
    train: Corpus,
    test: Corpus,
    categories: Vec<String>,
    client: LlmClient,
    dense: OnceLock<Result<Arc<DenseIndex>, String>>,
}

impl Harness {
    /// Builds the client from the config: cache for record/replay, HTTP
    /// backend (API key from the environment) for live/record.
    pub fn new(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        let mut client = LlmClient::new(config.completion.clone(), config.mode);
        if let Some(path) = &config.cache {
            client = client.with_cache(Arc::new(ResponseCache::open(path)?));
        }
        if config.mode != Mode::Replay {
            client = client.with_backend(Arc::new(config.completion.http_backend()?));
        }
        Self::with_client(config, client)
    }

    pub fn with_client(config: ExperimentConfig, client: LlmClient) -> Result<Self, ExperimentError> {
        config.validate()?;
        let train = load_corpus(&config.train, config.format)?;
        let test = load_corpus(&config.test, config.format)?;
        let train_ids: HashSet<&str> = train.examples().iter().map(|e| e.id.as_str()).collect();
        if let Some(shared) = test.examples().iter().find(|e| train_ids.contains(e.id.as_str())) {
            return Err(ExperimentError::Config(format!(
                "example id {:?} appears in both train and test",
                shared.id
            )));
        }
        let categories = category_inventory(&train);
        if categories.is_empty() {
            return Err(ExperimentError::Config(
                "training corpus has no categories to put in the prompt".into(),
            ));
        }
        for w in train.warnings().iter().chain(test.warnings()) {
            tracing::warn!("{w}");
        }
        Ok(Self {
            config,
            train,
            test,
            categories,
            client,
            dense: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn train(&self) -> &Corpus {
        &self.train
    }

    pub fn test(&self) -> &Corpus {
        &self.test
    }

    fn embedding_provider(&self) -> Result<Arc<dyn EmbeddingProvider>, ExperimentError> {
        let cfg = &self.config.embeddings;
        if cfg.file.is_none() && cfg.endpoint.is_none() {
            return Err(ExperimentError::Config(
                "knn-embed selection needs [embeddings] file or endpoint".into(),
            ));
        }
        let store = match &cfg.file {
            Some(path) => PrecomputedEmbeddings::load(path)?,
            None => PrecomputedEmbeddings::default(),
        };
        let endpoint = cfg.endpoint.as_ref().map(|url| {
            Box::new(HttpEmbeddingClient::new(
                url.clone(),
                Duration::from_secs(cfg.timeout_secs),
            )) as Box<dyn EmbeddingProvider>
        });
        Ok(Arc::new(Embedder::new(store, endpoint)))
    }

    fn selector(&self, selection: Selection) -> Result<Selector, ExperimentError> {
        Ok(match selection {
            Selection::KnnTfidf => Selector::Tfidf(TfidfIndex::build(&self.train)?),
            Selection::Random => Selector::Random {
                seed: self.config.seed,
            },
            Selection::KnnEmbed => {
                let dense = self.dense.get_or_init(|| {
                    self.embedding_provider()
                        .and_then(|p| Ok(DenseIndex::build(&self.train, p)?))
                        .map(Arc::new)
                        .map_err(|e| e.to_string())
                });
                match dense {
                    Ok(index) => Selector::Dense(Arc::clone(index)),
                    Err(e) => {
                        return Err(ExperimentError::Config(format!(
                            "embedding provider unavailable: {e}"
                        )))
                    }
                }
            }
        })
    }

    /// Runs the configured selection and `k`, logging to the configured path.
    pub fn run(&self) -> Result<RunOutcome, ExperimentError> {
        self.run_variant(self.config.selection, self.config.k, &self.config.log)
    }

    pub fn run_variant(
        &self,
        selection: Selection,
        k: usize,
        log_path: &Path,
    ) -> Result<RunOutcome, ExperimentError> {
        let builder = PromptBuilder {
            train: &self.train,
            categories: self.categories.clone(),
            selector: self.selector(selection)?,
            k,
            shot_order: self.config.shot_order,
        };

        let existing = log::recover_log(log_path)?;
        let done: HashSet<&str> = existing.iter().map(|r| r.test_id.as_str()).collect();
        let pending: Vec<&Example> = self
            .test
            .examples()
            .iter()
            .filter(|e| !done.contains(e.id.as_str()))
            .collect();
        info!(
            log = %log_path.display(),
            selection = %selection,
            k,
            resumed = existing.len(),
            pending = pending.len(),
            "starting run"
        );

        let mut writer = log::LogWriter::open(log_path)?;
        let mut fresh = Vec::with_capacity(pending.len());
        let workers = self.config.parallelism.max(1).min(pending.len().max(1));
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();

        let write_result = std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, abort, pending, builder) = (&next, &abort, &pending, &builder);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= pending.len() || abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let record = self.process(builder, pending[i]);
                    if tx.send((i, record)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            // Reorder so the log follows test-set order.
            let mut buffer: BTreeMap<usize, RunRecord> = BTreeMap::new();
            let mut next_write = 0;
            for (i, record) in rx {
                buffer.insert(i, record);
                while let Some(record) = buffer.remove(&next_write) {
                    if let Err(e) = writer.append(&record) {
                        abort.store(true, Ordering::SeqCst);
                        return Err(e);
                    }
                    fresh.push(record);
                    next_write += 1;
                }
            }
            Ok(())
        });
        write_result?;

        let processed = fresh.len();
        let mut records = existing;
        records.extend(fresh);
        let report = report_records(&records, &self.config.iou_thresholds)?;
        Ok(RunOutcome {
            log_path: log_path.to_path_buf(),
            records,
            report,
            processed,
        })
    }

    fn process(&self, builder: &PromptBuilder<'_>, example: &Example) -> RunRecord {
        let started_at = Utc::now();
        let clock = Instant::now();
        let mut record = RunRecord {
            test_id: example.id.clone(),
            shots: Vec::new(),
            prompt_digest: String::new(),
            raw_response: None,
            error: None,
            gold: example.quads.clone(),
            parsed: Vec::new(),
            diagnostics: Vec::new(),
            timing: Timing {
                started_at,
                elapsed_ms: 0,
                from_cache: false,
            },
        };
        match builder.build(example) {
            Ok((shots, prompt)) => {
                record.shots = shots;
                record.prompt_digest = self.client.config().cache_key(&prompt);
                match self.client.complete(&prompt) {
                    Ok(completion) => {
                        let parsed = parse_quads(&completion.text, &self.categories);
                        record.parsed = parsed.quads;
                        record.diagnostics = parsed.diagnostics;
                        record.raw_response = Some(completion.text);
                        record.timing.from_cache = completion.cached;
                    }
                    Err(e) => record.error = Some(e.to_string()),
                }
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        if let Some(e) = &record.error {
            tracing::warn!(test_id = %example.id, error = %e, "example failed");
        }
        record.timing.elapsed_ms = clock.elapsed().as_millis() as u64;
        record
    }

    /// One run per `k`, logged to `<log stem>.k<k>.jsonl`; rows sorted by `k`.
    pub fn sweep_k(&self, k_values: &[usize]) -> Result<Vec<SweepRow>, ExperimentError> {
        if k_values.is_empty() {
            return Err(ExperimentError::Config("sweep needs at least one k".into()));
        }
        let mut ks = k_values.to_vec();
        ks.sort_unstable();
        ks.dedup();
        ks.into_iter()
            .map(|k| {
                let outcome = self.run_variant(
                    self.config.selection,
                    k,
                    &self.config.variant_log(&format!("k{k}")),
                )?;
                Ok(SweepRow {
                    label: k.to_string(),
                    report: outcome.report.exact,
                })
            })
            .collect()
    }

    /// One run per selection method at the configured `k`.
    pub fn sweep_selection(&self, methods: &[Selection]) -> Result<Vec<SweepRow>, ExperimentError> {
        if methods.is_empty() {
            return Err(ExperimentError::Config("sweep needs at least one method".into()));
        }
        methods
            .iter()
            .map(|&m| {
                let outcome = self.run_variant(m, self.config.k, &self.config.variant_log(m.as_str()))?;
                Ok(SweepRow {
                    label: m.to_string(),
                    report: outcome.report.exact,
                })
            })
            .collect()
    }
}

/// Loads inputs from the config and runs it once.
pub fn run(config: ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    Harness::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendError, ChatBackend, ChatRequest};
    use std::fs;

    /// Answers with the first aspect word of the query, tagged `food quality`.
    struct Echo;

    impl ChatBackend for Echo {
        fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
            let prompt = &request.messages.last().unwrap().content;
            let input = prompt
                .lines()
                .rev()
                .find_map(|l| l.strip_prefix("Input: "))
                .unwrap();
            if input.contains("fail") {
                return Err(BackendError::BadRequest {
                    status: 400,
                    detail: "nope".into(),
                });
            }
            let word = input.split_whitespace().next().unwrap();
            Ok(format!("[('{word}', 'food quality', 'good', 'positive')]"))
        }
    }

    fn corpus_line(id: &str, text: &str, aspect: &str) -> String {
        format!(
            r#"{{"id":"{id}","text":"{text}","quads":[{{"aspect":"{aspect}","category":"food quality","opinion":"good","sentiment":"positive"}}]}}"#
        )
    }

    fn setup(dir: &Path) -> ExperimentConfig {
        let train: Vec<String> = (0..6)
            .map(|i| {
                corpus_line(
                    &format!("tr{i}"),
                    &format!("dish{i} is good"),
                    &format!("dish{i}"),
                )
            })
            .collect();
        let test = [
            corpus_line("te0", "pasta is good", "pasta"),
            corpus_line("te1", "fail soup is good", "soup"),
            corpus_line("te2", "rice is good", "bread"),
            corpus_line("te3", "dish1 is good", "dish1"),
        ];
        fs::write(dir.join("train.jsonl"), train.join("\n")).unwrap();
        fs::write(dir.join("test.jsonl"), test.join("\n")).unwrap();
        let mut cfg = ExperimentConfig::new(
            dir.join("train.jsonl"),
            dir.join("test.jsonl"),
            dir.join("run.jsonl"),
        );
        cfg.mode = Mode::Live;
        cfg.k = 2;
        cfg.iou_thresholds = vec![0.5];
        cfg
    }

    fn harness(cfg: ExperimentConfig) -> Harness {
        let client = LlmClient::new(cfg.completion.clone(), Mode::Live)
            .with_backend(Arc::new(Echo))
            .with_sleeper(|_| {});
        Harness::with_client(cfg, client).unwrap()
    }

    #[test]
    fn run_logs_every_example_and_scores() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = harness(setup(dir.path())).run().unwrap();
        let ids: Vec<&str> = outcome.records.iter().map(|r| r.test_id.as_str()).collect();
        assert_eq!(ids, ["te0", "te1", "te2", "te3"]);
        assert!(outcome.records[1].error.is_some());
        assert_eq!(outcome.records[0].shots.len(), 2);
        // te0 and te3 match; te2 predicts the wrong aspect; te1 failed.
        assert_eq!(outcome.report.exact.true_positives, 2);
        assert_eq!(outcome.report.exact.num_predicted, 3);
        assert_eq!(outcome.report.exact.num_gold, 4);
        assert_eq!(outcome.report.failed_examples, 1);
        assert_eq!(report_log(&outcome.log_path, &[0.5]).unwrap(), outcome.report);
    }

    #[test]
    fn resume_skips_logged_examples() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = setup(dir.path());
        let full = harness(cfg.clone()).run().unwrap();
        let log = fs::read_to_string(&cfg.log).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        fs::write(&cfg.log, format!("{}\n{}", lines[0], &lines[1][..15])).unwrap();

        let resumed = harness(cfg.clone()).run().unwrap();
        assert_eq!(resumed.processed, 3);
        assert_eq!(resumed.report, full.report);
        let again = harness(cfg).run().unwrap();
        assert_eq!(again.processed, 0);
    }

    #[test]
    fn parallel_run_matches_sequential() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path());
        let seq = harness(cfg.clone()).run().unwrap();
        cfg.parallelism = 3;
        cfg.log = dir.path().join("par.jsonl");
        let par = harness(cfg).run().unwrap();
        let strip = |o: &RunOutcome| {
            o.records
                .iter()
                .map(RunRecord::deterministic_json)
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&seq), strip(&par));
    }

    #[test]
    fn random_selection_is_seeded_per_example() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path());
        cfg.selection = Selection::Random;
        cfg.seed = 7;
        let a = harness(cfg.clone()).run().unwrap();
        cfg.log = dir.path().join("b.jsonl");
        let b = harness(cfg).run().unwrap();
        assert_eq!(a.records[0].shots, b.records[0].shots);
        assert!(a.records[0].shots.iter().all(|s| s.similarity.is_none()));
        assert_ne!(example_seed(7, "te0"), example_seed(7, "te1"));
        assert_ne!(example_seed(7, "te0"), example_seed(8, "te0"));
    }

    #[test]
    fn sweeps_write_variant_logs() {
        let dir = tempfile::tempdir().unwrap();
        let h = harness(setup(dir.path()));
        let rows = h.sweep_k(&[2, 0, 2]).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(),
            ["0", "2"]
        );
        assert!(dir.path().join("run.k0.jsonl").is_file());
        let rows = h
            .sweep_selection(&[Selection::KnnTfidf, Selection::Random])
            .unwrap();
        assert!(dir.path().join("run.random.jsonl").is_file());
        assert!(sweep_csv("method", &rows).starts_with("method,precision,recall,f1\nknn-tfidf,"));
        assert!(h.sweep_selection(&[Selection::KnnEmbed]).is_err());
    }

    #[test]
    fn sweep_reuses_cached_prompts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path());
        cfg.mode = Mode::Record;
        let client = LlmClient::new(cfg.completion.clone(), Mode::Record)
            .with_backend(Arc::new(Echo))
            .with_cache(Arc::new(ResponseCache::in_memory()));
        let h = Harness::with_client(cfg, client).unwrap();
        let plain = h.run().unwrap();
        let calls = h.client().backend_calls();
        // Only the failing example (never cached) goes back to the backend.
        let rows = h.sweep_k(&[2]).unwrap();
        assert_eq!(h.client().backend_calls(), calls + 1);
        assert_eq!(rows[0].report, plain.report.exact);
        // k = 2 resumes from its finished log; only k = 1 is new.
        h.sweep_k(&[1, 2]).unwrap();
        assert_eq!(h.client().backend_calls(), calls + 1 + 4);
    }

    #[test]
    fn empty_test_set_gives_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = setup(dir.path());
        fs::write(&cfg.test, "").unwrap();
        let outcome = harness(cfg.clone()).run().unwrap();
        assert!(outcome.records.is_empty());
        assert_eq!(fs::read_to_string(&cfg.log).unwrap(), "");
        let exact = outcome.report.exact;
        assert_eq!(
            (exact.true_positives, exact.num_predicted, exact.num_gold),
            (0, 0, 0)
        );
    }

    #[test]
    fn overlapping_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path());
        cfg.test = cfg.train.clone();
        let client = LlmClient::new(cfg.completion.clone(), Mode::Live).with_backend(Arc::new(Echo));
        assert!(matches!(
            Harness::with_client(cfg, client),
            Err(ExperimentError::Config(_))
        ));
    }
}
