//! Few-shot aspect-category-opinion-sentiment (ACOS) quadruple extraction
//! through a chat-completion model, with KNN-selected demonstrations and
//! exact / IOU-relaxed evaluation.

pub mod dataset;
pub mod experiment;
pub mod llm;
pub mod parser;
pub mod prompt;
pub mod retrieval;
pub mod scoring;

pub use dataset::{
    category_inventory, load_corpus, Corpus, CorpusFormat, Example, Quadruple, Sentiment, Split, Term,
};
pub use experiment::{ExperimentConfig, Harness, RunOutcome, RunRecord, RunReport, Selection};
pub use parser::{normalize_term, parse_quads, ParseResult};
pub use prompt::{render_prompt, render_shot, PromptSpec};
pub use retrieval::{select_knn, select_random, tokenize, Neighbor, TfidfIndex};
pub use scoring::{score_dataset, score_example, MatchPolicy, ScoreReport};
