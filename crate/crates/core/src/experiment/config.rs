use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::dataset::CorpusFormat;
use crate::llm::{CompletionConfig, Mode};
use crate::prompt::ShotOrder;

/// How few-shot examples are chosen for each test sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    KnnTfidf,
    KnnEmbed,
    Random,
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Selection::KnnTfidf => "knn-tfidf",
            Selection::KnnEmbed => "knn-embed",
            Selection::Random => "random",
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "knn-tfidf" | "tfidf" => Ok(Selection::KnnTfidf),
            "knn-embed" | "embed" | "bert" => Ok(Selection::KnnEmbed),
            "random" => Ok(Selection::Random),
            other => Err(format!(
                "unknown selection method {other:?} (expected knn-tfidf, knn-embed or random)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// JSONL of `{"key": <sha256>, "vector": [...]}`.
    pub file: Option<PathBuf>,
    /// Service answering `POST {"texts": [...]}` with `{"vectors": [...]}`.
    pub endpoint: Option<String>,
    #[serde(default = "default_embed_timeout")]
    pub timeout_secs: u64,
}

fn default_embed_timeout() -> u64 {
    60
}

/// Everything that defines a run. Loaded from TOML; relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub format: CorpusFormat,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Response cache (JSONL). Required for replay and record.
    pub cache: Option<PathBuf>,
    /// Append-only run log (JSONL).
    pub log: PathBuf,
    /// Relaxed-match thresholds reported next to exact match.
    #[serde(default)]
    pub iou_thresholds: Vec<f64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub shot_order: ShotOrder,
    #[serde(default)]
    pub completion: CompletionConfig,
    #[serde(default)]
    pub embeddings: EmbeddingConfig,
}

fn default_k() -> usize {
    20
}

fn default_parallelism() -> usize {
    1
}

impl ExperimentConfig {
    /// A config with defaults for everything but the paths.
    pub fn new(train: impl Into<PathBuf>, test: impl Into<PathBuf>, log: impl Into<PathBuf>) -> Self {
        Self {
            train: train.into(),
            test: test.into(),
            format: CorpusFormat::Canonical,
            selection: Selection::KnnTfidf,
            k: default_k(),
            seed: 0,
            mode: Mode::Replay,
            cache: None,
            log: log.into(),
            iou_thresholds: Vec::new(),
            parallelism: default_parallelism(),
            shot_order: ShotOrder::MostSimilarFirst,
            completion: CompletionConfig::default(),
            embeddings: EmbeddingConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.train);
        resolve(&mut self.test);
        resolve(&mut self.log);
        if let Some(c) = self.cache.as_mut() {
            resolve(c);
        }
        if let Some(f) = self.embeddings.file.as_mut() {
            resolve(f);
        }
    }

    /// Checks field ranges and that input files exist.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let config_err = |m: String| Err(ExperimentError::Config(m));
        for (name, path) in [("train", &self.train), ("test", &self.test)] {
            if !path.is_file() {
                return config_err(format!("{name} file {} does not exist", path.display()));
            }
        }
        if let Some(f) = &self.embeddings.file {
            if !f.is_file() {
                return config_err(format!("embedding file {} does not exist", f.display()));
            }
        }
        if self.completion.temperature < 0.0 || !self.completion.temperature.is_finite() {
            return config_err(format!(
                "temperature must be >= 0, got {}",
                self.completion.temperature
            ));
        }
        if self.parallelism == 0 {
            return config_err("parallelism must be at least 1".into());
        }
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return config_err(format!("IOU threshold {t} is outside (0, 1]"));
        }
        if self.mode == Mode::Replay && self.parallelism > 1 {
            return config_err("parallelism above 1 is only for live and record modes".into());
        }
        if self.mode == Mode::Replay && self.cache.is_none() {
            return config_err("replay mode needs a cache path".into());
        }
        Ok(())
    }

    /// Log path for one variant of a sweep: `<stem>.<label>.jsonl`.
    pub fn variant_log(&self, label: &str) -> PathBuf {
        let stem = self
            .log
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        self.log.with_file_name(format!("{stem}.{label}.jsonl"))
    }
}
