//! Prompt rendering: instruction, context with the category list, output
//! format, few-shot examples and the query input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Example, Quadruple, Term};

pub const DEFAULT_INSTRUCTION: &str = "extract aspect-category-opinion-sentiment quadruples from input data";

const TERM_RULE: &str = "an aspect or opinion must be a term existing in input data or null if non-existing;";
const SENTIMENT_RULE: &str = "the sentiment is positive, negative or neutral;";
const NO_QUESTIONS_RULE: &str =
    "do not ask me for more information, I am unable to provide it, and just try your best to finish the task.";
const LEARN_FROM_EXAMPLES: &str = "You can learn from the following examples.";
const OUTPUT_FORMAT: &str = "Output format: (aspect, category, opinion, sentiment)";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("category list is empty")]
    EmptyCategories,
    #[error("query text is empty")]
    EmptyQuery,
}

/// Where the most similar shot goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotOrder {
    #[default]
    MostSimilarFirst,
    MostSimilarLast,
}

impl ShotOrder {
    /// `shots` arrive most similar first.
    pub fn arrange<T>(self, mut shots: Vec<T>) -> Vec<T> {
        if self == ShotOrder::MostSimilarLast {
            shots.reverse();
        }
        shots
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    pub text: String,
    pub quads: Vec<Quadruple>,
}

impl From<&Example> for Shot {
    fn from(ex: &Example) -> Self {
        Self {
            text: ex.text.clone(),
            quads: ex.quads.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub instruction: String,
    pub context_categories: Vec<String>,
    /// In prompt order.
    pub shots: Vec<Shot>,
    pub query_text: String,
}

impl PromptSpec {
    pub fn new(categories: Vec<String>, shots: Vec<Shot>, query_text: impl Into<String>) -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            context_categories: categories,
            shots,
            query_text: query_text.into(),
        }
    }
}

fn render_term(term: &Term) -> String {
    match term {
        Term::Implicit => "null".to_string(),
        // Quote only when the bare form would not parse back.
        Term::Explicit(s) if s.contains([',', '(', ')', '[', ']']) => {
            if s.contains('\'') {
                format!("\"{s}\"")
            } else {
                format!("'{s}'")
            }
        }
        Term::Explicit(s) => s.clone(),
    }
}

pub fn render_quad(q: &Quadruple) -> String {
    format!(
        "({}, {}, {}, {})",
        render_term(&q.aspect),
        q.category,
        render_term(&q.opinion),
        q.sentiment
    )
}

pub fn render_output(quads: &[Quadruple]) -> String {
    let items: Vec<String> = quads.iter().map(render_quad).collect();
    format!("Output: [{}]", items.join(", "))
}

/// `Input: <text>` and `Output: [...]` on two lines.
pub fn render_shot(text: &str, quads: &[Quadruple]) -> String {
    format!("Input: {text}\n{}", render_output(quads))
}

pub fn render_example(ex: &Example) -> String {
    render_shot(&ex.text, &ex.quads)
}

fn category_list(categories: &[String]) -> String {
    let quoted: Vec<String> = categories.iter().map(|c| format!("'{c}'")).collect();
    format!("[{}]", quoted.join(", "))
}

/// Renders the full prompt. Lines are joined by `\n`; the result ends with
/// the bare `Output:` line and no trailing newline.
pub fn render_prompt(spec: &PromptSpec) -> Result<String, PromptError> {
    if spec.context_categories.is_empty() {
        return Err(PromptError::EmptyCategories);
    }
    if spec.query_text.trim().is_empty() {
        return Err(PromptError::EmptyQuery);
    }
    let mut lines = vec![
        format!("Instruction: {}", spec.instruction),
        format!("Context: {TERM_RULE}"),
        format!(
            "the category is one in the predefined list: {};",
            category_list(&spec.context_categories)
        ),
        SENTIMENT_RULE.to_string(),
        NO_QUESTIONS_RULE.to_string(),
    ];
    if !spec.shots.is_empty() {
        lines.push(LEARN_FROM_EXAMPLES.to_string());
    }
    lines.push(OUTPUT_FORMAT.to_string());
    for shot in &spec.shots {
        lines.push(render_shot(&shot.text, &shot.quads));
    }
    lines.push(format!("Input: {}", spec.query_text));
    lines.push("Output:".to_string());
    Ok(lines.join("\n"))
}
