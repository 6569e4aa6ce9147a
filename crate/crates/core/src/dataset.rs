//! ACOS corpora: quadruple types, the canonical JSONL format, and importers
//! for the public dataset distributions.
//!
//! A canonical line looks like
//!
//! ```text
//! {"id":"r1","text":"...","quads":[{"aspect":"surface","category":"Design","opinion":"smooth","sentiment":"positive"}]}
//! ```
//!
//! with implicit aspects/opinions encoded as JSON `null`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::retrieval::tokenize;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown sentiment label {value:?}")]
    UnknownSentiment { line: usize, value: String },
    #[error("line {line}: empty text")]
    EmptyText { line: usize },
    #[error("line {line}: duplicate example id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("unknown corpus format {0:?} (expected one of: canonical, acos-tsv, paraphrase)")]
    UnknownFormat(String),
}

/// Sentiment polarity. Stored and rendered lowercase; parsed case-insensitively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
}

impl Sentiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown sentiment label {0:?}")]
pub struct UnknownSentiment(pub String);

impl FromStr for Sentiment {
    type Err = UnknownSentiment;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "positive" => Ok(Sentiment::Positive),
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            _ => Err(UnknownSentiment(s.to_string())),
        }
    }
}

/// An aspect or opinion: either surface text from the sentence or implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Implicit,
    Explicit(String),
}

impl Term {
    pub fn explicit(text: impl Into<String>) -> Self {
        Term::Explicit(text.into())
    }

    pub fn is_implicit(&self) -> bool {
        matches!(self, Term::Implicit)
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Term::Implicit => None,
            Term::Explicit(s) => Some(s),
        }
    }
}

impl From<Option<String>> for Term {
    fn from(value: Option<String>) -> Self {
        value.map_or(Term::Implicit, Term::Explicit)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_text().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Option::<String>::deserialize(deserializer).map(Term::from)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quadruple {
    pub aspect: Term,
    pub category: String,
    pub opinion: Term,
    pub sentiment: Sentiment,
}

impl Quadruple {
    pub fn new(aspect: Term, category: impl Into<String>, opinion: Term, sentiment: Sentiment) -> Self {
        Self {
            aspect,
            category: category.into(),
            opinion,
            sentiment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub quads: Vec<Quadruple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    /// Guesses the split from a file name (`train`, `dev`/`valid`, `test`),
    /// falling back to `Train`.
    pub fn from_path(path: &Path) -> Self {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if name.contains("test") {
            Split::Test
        } else if name.contains("dev") || name.contains("valid") {
            Split::Validation
        } else {
            Split::Train
        }
    }
}

/// Input layouts understood by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// One JSON [`Example`] per line.
    #[default]
    Canonical,
    /// Restaurant-ACOS / Laptop-ACOS: `sentence\tA_SPAN CATEGORY POLARITY O_SPAN\t...`
    /// with token spans `start,end` (`-1,-1` for implicit) and polarity 0/1/2.
    AcosTsv,
    /// Rest15 / Rest16: `sentence####[['aspect', 'category', 'sentiment', 'opinion'], ...]`
    /// with `NULL` for implicit terms.
    Paraphrase,
}

impl FromStr for CorpusFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" | "canonical-jsonl" | "jsonl" => Ok(CorpusFormat::Canonical),
            "acos-tsv" | "acos" => Ok(CorpusFormat::AcosTsv),
            "paraphrase" | "rest" => Ok(CorpusFormat::Paraphrase),
            other => Err(DatasetError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub example_id: String,
    pub message: String,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} ({}): {}", self.line, self.example_id, self.message)
    }
}

/// An immutable, loaded split.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    split: Split,
    examples: Vec<Example>,
    categories: Vec<String>,
    warnings: Vec<LoadWarning>,
}

impl Corpus {
    /// Builds a corpus from already-parsed examples. Fails on duplicate ids.
    pub fn new(split: Split, examples: Vec<Example>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for (i, ex) in examples.iter().enumerate() {
            if !seen.insert(ex.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    line: i + 1,
                    id: ex.id.clone(),
                });
            }
        }
        let categories = collect_categories(&examples);
        let warnings = examples
            .iter()
            .enumerate()
            .flat_map(|(i, ex)| {
                validate_example(ex).into_iter().map(move |message| LoadWarning {
                    line: i + 1,
                    example_id: ex.id.clone(),
                    message,
                })
            })
            .collect();
        Ok(Self {
            split,
            examples,
            categories,
            warnings,
        })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|ex| ex.id == id)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn warnings(&self) -> &[LoadWarning] {
        &self.warnings
    }

    /// Writes the corpus in canonical JSONL form.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::create(path).map_err(io_err)?;
        let mut out = BufWriter::new(file);
        out.write_all(self.to_jsonl().as_bytes()).map_err(io_err)?;
        out.flush().map_err(io_err)
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = String::new();
        for ex in &self.examples {
            buf.push_str(&serde_json::to_string(ex).expect("examples always serialize"));
            buf.push('\n');
        }
        buf
    }
}

fn collect_categories(examples: &[Example]) -> Vec<String> {
    examples
        .iter()
        .flat_map(|ex| ex.quads.iter().map(|q| q.category.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Distinct categories of the corpus in lexicographic order.
pub fn category_inventory(corpus: &Corpus) -> Vec<String> {
    corpus.categories.clone()
}

/// Returns one warning per quad whose explicit aspect or opinion does not
/// occur as a contiguous word run of the sentence.
pub fn validate_example(ex: &Example) -> Vec<String> {
    let words = tokenize(&ex.text);
    let mut warnings = Vec::new();
    for (i, quad) in ex.quads.iter().enumerate() {
        let missing: Vec<&str> = [("aspect", &quad.aspect), ("opinion", &quad.opinion)]
            .into_iter()
            .filter_map(|(role, term)| {
                let text = term.as_text()?;
                (!contains_run(&words, &tokenize(text))).then_some(role)
            })
            .collect();
        if !missing.is_empty() {
            let terms: Vec<String> = missing
                .iter()
                .map(|role| {
                    let term = if *role == "aspect" {
                        &quad.aspect
                    } else {
                        &quad.opinion
                    };
                    format!("{role} {:?}", term.as_text().unwrap_or_default())
                })
                .collect();
            warnings.push(format!("quad {}: {} not found in text", i + 1, terms.join(", ")));
        }
    }
    warnings
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Loads a corpus file. The split is inferred from the file name.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, DatasetError> {
    let content = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ex".to_string());
    let split = Split::from_path(path);
    parse_corpus(&content, format, &stem, split)
}

/// Parses corpus content already in memory. `id_prefix` names examples for
/// formats that carry no ids (`<prefix>-<line>`).
pub fn parse_corpus(
    content: &str,
    format: CorpusFormat,
    id_prefix: &str,
    split: Split,
) -> Result<Corpus, DatasetError> {
    let mut examples = Vec::new();
    let mut line_of_example = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let ex = match format {
            CorpusFormat::Canonical => parse_canonical_line(line, line_no)?,
            CorpusFormat::AcosTsv => parse_acos_line(line, line_no, id_prefix)?,
            CorpusFormat::Paraphrase => parse_paraphrase_line(line, line_no, id_prefix)?,
        };
        examples.push(ex);
        line_of_example.push(line_no);
    }
    Corpus::new(split, examples).map_err(|e| match e {
        // report the file line rather than the example position
        DatasetError::DuplicateId { line, id } => DatasetError::DuplicateId {
            line: line_of_example[line - 1],
            id,
        },
        other => other,
    })
}

#[derive(Deserialize)]
struct RawQuad {
    aspect: Option<String>,
    category: String,
    opinion: Option<String>,
    sentiment: String,
}

#[derive(Deserialize)]
struct RawExample {
    id: String,
    text: String,
    #[serde(default)]
    quads: Vec<RawQuad>,
}

fn parse_canonical_line(line: &str, line_no: usize) -> Result<Example, DatasetError> {
    let raw: RawExample = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
        line: line_no,
        reason: e.to_string(),
    })?;
    if raw.text.trim().is_empty() {
        return Err(DatasetError::EmptyText { line: line_no });
    }
    let quads = raw
        .quads
        .into_iter()
        .map(|q| {
            if q.category.trim().is_empty() || q.category.trim().eq_ignore_ascii_case("null") {
                return Err(DatasetError::Malformed {
                    line: line_no,
                    reason: "category must not be empty or null".into(),
                });
            }
            let sentiment = q.sentiment.parse().map_err(|_| DatasetError::UnknownSentiment {
                line: line_no,
                value: q.sentiment.clone(),
            })?;
            Ok(Quadruple {
                aspect: q.aspect.into(),
                category: q.category,
                opinion: q.opinion.into(),
                sentiment,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Example {
        id: raw.id,
        text: raw.text,
        quads,
    })
}

fn parse_acos_line(line: &str, line_no: usize, prefix: &str) -> Result<Example, DatasetError> {
    let malformed = |reason: String| DatasetError::Malformed {
        line: line_no,
        reason,
    };
    let mut fields = line.split('\t');
    let text = fields.next().unwrap_or_default().trim().to_string();
    if text.is_empty() {
        return Err(DatasetError::EmptyText { line: line_no });
    }
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let span_term = |span: &str| -> Result<Term, DatasetError> {
        let (start, end) = span
            .split_once(',')
            .ok_or_else(|| malformed(format!("bad span {span:?}")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| malformed(format!("bad span {span:?}")))
        };
        let (start, end) = (parse(start)?, parse(end)?);
        if start < 0 || end < 0 {
            return Ok(Term::Implicit);
        }
        let (start, end) = (start as usize, end as usize);
        if start >= end || end > tokens.len() {
            return Err(malformed(format!(
                "span {span:?} out of range for {} tokens",
                tokens.len()
            )));
        }
        Ok(Term::Explicit(tokens[start..end].join(" ")))
    };
    let mut quads = Vec::new();
    for field in fields.filter(|f| !f.trim().is_empty()) {
        let parts: Vec<&str> = field.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(malformed(format!("expected 4 fields in quad {field:?}")));
        }
        let sentiment = match parts[2] {
            "0" => Sentiment::Negative,
            "1" => Sentiment::Neutral,
            "2" => Sentiment::Positive,
            other => other.parse().map_err(|_| DatasetError::UnknownSentiment {
                line: line_no,
                value: other.to_string(),
            })?,
        };
        quads.push(Quadruple {
            aspect: span_term(parts[0])?,
            category: parts[1].to_string(),
            opinion: span_term(parts[3])?,
            sentiment,
        });
    }
    Ok(Example {
        id: format!("{prefix}-{line_no}"),
        text,
        quads,
    })
}

fn parse_paraphrase_line(line: &str, line_no: usize, prefix: &str) -> Result<Example, DatasetError> {
    let malformed = |reason: String| DatasetError::Malformed {
        line: line_no,
        reason,
    };
    let (text, labels) = line
        .split_once("####")
        .ok_or_else(|| malformed("missing '####' separator".into()))?;
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(DatasetError::EmptyText { line: line_no });
    }
    let rows = parse_python_string_lists(labels.trim()).map_err(malformed)?;
    let mut quads = Vec::with_capacity(rows.len());
    for row in rows {
        let [aspect, category, sentiment, opinion]: [String; 4] = row
            .try_into()
            .map_err(|r: Vec<String>| malformed(format!("expected 4 elements, got {}", r.len())))?;
        let term = |s: String| {
            if s.eq_ignore_ascii_case("null") {
                Term::Implicit
            } else {
                Term::Explicit(s)
            }
        };
        let sentiment = sentiment.parse().map_err(|_| DatasetError::UnknownSentiment {
            line: line_no,
            value: sentiment.clone(),
        })?;
        quads.push(Quadruple {
            aspect: term(aspect),
            category,
            opinion: term(opinion),
            sentiment,
        });
    }
    Ok(Example {
        id: format!("{prefix}-{line_no}"),
        text,
        quads,
    })
}

/// Parses a Python literal of the shape `[['a', 'b'], ["c", 'd']]`.
fn parse_python_string_lists(s: &str) -> Result<Vec<Vec<String>>, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut pos = 0;
    let skip_ws = |pos: &mut usize| {
        while *pos < chars.len() && chars[*pos].is_whitespace() {
            *pos += 1;
        }
    };
    let expect = |pos: &mut usize, c: char| -> Result<(), String> {
        skip_ws(pos);
        if chars.get(*pos) == Some(&c) {
            *pos += 1;
            Ok(())
        } else {
            Err(format!("expected '{c}' at offset {pos}"))
        }
    };
    let string = |pos: &mut usize| -> Result<String, String> {
        skip_ws(pos);
        let quote = match chars.get(*pos) {
            Some(&q @ ('\'' | '"')) => q,
            _ => return Err(format!("expected string at offset {pos}")),
        };
        *pos += 1;
        let mut out = String::new();
        while let Some(&c) = chars.get(*pos) {
            *pos += 1;
            match c {
                '\\' => {
                    if let Some(&next) = chars.get(*pos) {
                        out.push(next);
                        *pos += 1;
                    }
                }
                c if c == quote => return Ok(out),
                c => out.push(c),
            }
        }
        Err("unterminated string".into())
    };

    let mut rows = Vec::new();
    expect(&mut pos, '[')?;
    skip_ws(&mut pos);
    if chars.get(pos) == Some(&']') {
        return Ok(rows);
    }
    loop {
        expect(&mut pos, '[')?;
        let mut row = Vec::new();
        skip_ws(&mut pos);
        if chars.get(pos) != Some(&']') {
            loop {
                row.push(string(&mut pos)?);
                skip_ws(&mut pos);
                match chars.get(pos) {
                    Some(',') => pos += 1,
                    Some(']') => break,
                    _ => return Err(format!("expected ',' or ']' at offset {pos}")),
                }
            }
        }
        expect(&mut pos, ']')?;
        rows.push(row);
        skip_ws(&mut pos);
        match chars.get(pos) {
            Some(',') => pos += 1,
            Some(']') => return Ok(rows),
            _ => return Err(format!("expected ',' or ']' at offset {pos}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REVIEW_LINE: &str = r#"{"id":"r1","text":"Looks nice and the surface is smooth, but certain apps take seconds to respond","quads":[{"aspect":"surface","category":"Design","opinion":"smooth","sentiment":"positive"},{"aspect":null,"category":"Design","opinion":"nice","sentiment":"positive"},{"aspect":"apps","category":"Software","opinion":null,"sentiment":"negative"}]}"#;

    fn canonical(content: &str) -> Result<Corpus, DatasetError> {
        parse_corpus(content, CorpusFormat::Canonical, "t", Split::Train)
    }

    #[test]
    fn loads_review_example() {
        let corpus = canonical(REVIEW_LINE).unwrap();
        assert_eq!(corpus.len(), 1);
        let ex = &corpus.examples()[0];
        assert_eq!(
            ex.quads,
            vec![
                Quadruple::new(
                    Term::explicit("surface"),
                    "Design",
                    Term::explicit("smooth"),
                    Sentiment::Positive
                ),
                Quadruple::new(
                    Term::Implicit,
                    "Design",
                    Term::explicit("nice"),
                    Sentiment::Positive
                ),
                Quadruple::new(
                    Term::explicit("apps"),
                    "Software",
                    Term::Implicit,
                    Sentiment::Negative
                ),
            ]
        );
        assert!(corpus.warnings().is_empty());
        assert_eq!(category_inventory(&corpus), vec!["Design", "Software"]);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let corpus = canonical("").unwrap();
        assert!(corpus.is_empty());
        assert!(category_inventory(&corpus).is_empty());
    }

    #[test]
    fn unknown_sentiment_names_line_and_value() {
        let content = format!(
            "{REVIEW_LINE}\n{}",
            r#"{"id":"r2","text":"ok","quads":[{"aspect":null,"category":"x","opinion":null,"sentiment":"mixed"}]}"#
        );
        let err = canonical(&content).unwrap_err();
        assert!(matches!(&err, DatasetError::UnknownSentiment { line: 2, value } if value == "mixed"));
        assert!(err.to_string().contains("line 2") && err.to_string().contains("mixed"));
    }

    #[test]
    fn sentiment_casing_is_canonicalized() {
        let line = r#"{"id":"a","text":"good food","quads":[{"aspect":"food","category":"food quality","opinion":"good","sentiment":"Positive"}]}"#;
        let corpus = canonical(line).unwrap();
        assert_eq!(corpus.examples()[0].quads[0].sentiment, Sentiment::Positive);
        assert!(corpus.to_jsonl().contains(r#""sentiment":"positive""#));
    }

    #[test]
    fn malformed_and_empty_text_errors() {
        assert!(matches!(
            canonical("{not json"),
            Err(DatasetError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            canonical(r#"{"id":"a","text":"  ","quads":[]}"#),
            Err(DatasetError::EmptyText { line: 1 })
        ));
        let dup = r#"{"id":"a","text":"x","quads":[]}
{"id":"a","text":"y","quads":[]}"#;
        assert!(matches!(
            canonical(dup),
            Err(DatasetError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn inventory_is_sorted_and_deduplicated() {
        let content = r#"{"id":"a","text":"great service","quads":[{"aspect":"service","category":"service general","opinion":"great","sentiment":"positive"}]}
{"id":"b","text":"good food","quads":[{"aspect":"food","category":"food quality","opinion":"good","sentiment":"positive"},{"aspect":null,"category":"service general","opinion":null,"sentiment":"neutral"}]}
{"id":"c","text":"meh","quads":[]}"#;
        let corpus = canonical(content).unwrap();
        assert_eq!(
            category_inventory(&corpus),
            vec!["food quality", "service general"]
        );
        assert_eq!(category_inventory(&corpus), category_inventory(&corpus));
    }

    #[test]
    fn validation_warnings() {
        let ex = Example {
            id: "x".into(),
            text: "great screen".into(),
            quads: vec![Quadruple::new(
                Term::explicit("keyboard"),
                "laptop",
                Term::explicit("great"),
                Sentiment::Positive,
            )],
        };
        assert_eq!(validate_example(&ex).len(), 1);

        let implicit = Example {
            quads: vec![Quadruple::new(
                Term::Implicit,
                "laptop",
                Term::Implicit,
                Sentiment::Neutral,
            )],
            ..ex.clone()
        };
        assert!(validate_example(&implicit).is_empty());

        // Punctuation attached to a word does not hide it.
        let review = canonical(REVIEW_LINE).unwrap();
        assert!(validate_example(&review.examples()[0]).is_empty());
    }

    #[test]
    fn acos_tsv_import() {
        let content = "the food was great but the service slow .\t1,2 FOOD#QUALITY 2 3,4\t6,7 SERVICE#GENERAL 0 -1,-1\n";
        let corpus = parse_corpus(content, CorpusFormat::AcosTsv, "rest_train", Split::Train).unwrap();
        let ex = &corpus.examples()[0];
        assert_eq!(ex.id, "rest_train-1");
        assert_eq!(
            ex.quads,
            vec![
                Quadruple::new(
                    Term::explicit("food"),
                    "FOOD#QUALITY",
                    Term::explicit("great"),
                    Sentiment::Positive
                ),
                Quadruple::new(
                    Term::explicit("service"),
                    "SERVICE#GENERAL",
                    Term::Implicit,
                    Sentiment::Negative
                ),
            ]
        );
        let bad = "a b\t0,9 X 2 -1,-1";
        assert!(matches!(
            parse_corpus(bad, CorpusFormat::AcosTsv, "t", Split::Train),
            Err(DatasetError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn paraphrase_import() {
        let content = "it was really good pizza .####[['pizza', 'food quality', 'positive', 'good']]\n\
                       the place is nice .####[['NULL', 'ambience general', 'positive', 'nice'], ['place', \"restaurant general\", 'Positive', 'nice']]\n";
        let corpus = parse_corpus(content, CorpusFormat::Paraphrase, "rest16", Split::Test).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(
            corpus.examples()[0].quads,
            vec![Quadruple::new(
                Term::explicit("pizza"),
                "food quality",
                Term::explicit("good"),
                Sentiment::Positive
            )]
        );
        assert_eq!(corpus.examples()[1].quads[0].aspect, Term::Implicit);
        assert_eq!(corpus.examples()[1].quads[1].category, "restaurant general");
    }

    #[test]
    fn split_from_file_name() {
        assert_eq!(Split::from_path(Path::new("data/rest16_test.jsonl")), Split::Test);
        assert_eq!(
            Split::from_path(Path::new("laptop_quad_dev.tsv")),
            Split::Validation
        );
        assert_eq!(Split::from_path(Path::new("train.jsonl")), Split::Train);
    }

    #[test]
    fn load_reports_unreadable_file() {
        let err = load_corpus(Path::new("/nonexistent/x.jsonl"), CorpusFormat::Canonical).unwrap_err();
        assert!(matches!(err, DatasetError::Io { .. }));
    }
}
