//! Tolerant parsing of model responses into quadruples.
//!
//! The expected shape is `[(aspect, category, opinion, sentiment), ...]`.
//! Leading prose, code fences and other wrapping text are skipped by locating
//! the first bracketed list whose first item is a parenthesized tuple (or
//! which is empty). Elements may be bare or single/double quoted; `null` in
//! any case marks an implicit term. Nothing here fails: problems become
//! diagnostics so one bad response cannot abort a batch.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::{Quadruple, Sentiment, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    /// Byte range in the raw response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Range<usize>>,
}

impl Diagnostic {
    fn error(message: impl Into<String>, span: Option<Range<usize>>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
            span,
        }
    }

    fn warning(message: impl Into<String>, span: Option<Range<usize>>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
            span,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseResult {
    pub quads: Vec<Quadruple>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseResult {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }
}

/// A term after normalization; `Implicit` never equals any surface text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NormalizedTerm {
    Implicit,
    Text(String),
}

/// Lowercases, trims and collapses internal whitespace runs to one space.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn normalize_term(term: &str) -> NormalizedTerm {
    let text = normalize_text(term);
    if text == "null" {
        NormalizedTerm::Implicit
    } else {
        NormalizedTerm::Text(text)
    }
}

impl From<&Term> for NormalizedTerm {
    fn from(term: &Term) -> Self {
        match term {
            Term::Implicit => NormalizedTerm::Implicit,
            Term::Explicit(s) => NormalizedTerm::Text(normalize_text(s)),
        }
    }
}

/// Parses a model response. `category_inventory` is used only to flag
/// unknown categories; pass an empty slice to skip that check.
pub fn parse_quads(raw: &str, category_inventory: &[String]) -> ParseResult {
    let inventory: Vec<String> = category_inventory.iter().map(|c| normalize_text(c)).collect();
    let cursor = Cursor::new(raw);

    let mut search = 0;
    while let Some(open) = cursor.find('[', search) {
        let after = cursor.skip_ws(open + 1);
        match cursor.peek(after) {
            Some(']') => return ParseResult::default(),
            Some('(') => {
                let mut result = ParseResult::default();
                cursor.parse_tuples(after, true, &inventory, &mut result);
                return result;
            }
            _ => search = open + 1,
        }
    }

    // No list: accept bare tuples only if at least one is a valid quadruple.
    if let Some(open) = cursor.find('(', 0) {
        let mut result = ParseResult::default();
        cursor.parse_tuples(open, false, &inventory, &mut result);
        if !result.quads.is_empty() {
            result.diagnostics.insert(
                0,
                Diagnostic::warning("tuples found without an enclosing list", Some(open..open + 1)),
            );
            return result;
        }
    }

    ParseResult {
        quads: Vec::new(),
        diagnostics: vec![Diagnostic::error("no tuple list found", None)],
    }
}

struct Element {
    text: String,
    span: Range<usize>,
}

enum TupleEnd {
    Closed(usize),
    /// Hit a `]` or end of input before `)`.
    Unclosed(usize),
}

struct Cursor<'a> {
    raw: &'a str,
    /// `(byte offset, char)` pairs; indices into this vector are positions.
    chars: Vec<(usize, char)>,
}

impl<'a> Cursor<'a> {
    fn new(raw: &'a str) -> Self {
        Self {
            raw,
            chars: raw.char_indices().collect(),
        }
    }

    fn peek(&self, pos: usize) -> Option<char> {
        self.chars.get(pos).map(|&(_, c)| c)
    }

    fn byte(&self, pos: usize) -> usize {
        self.chars.get(pos).map_or(self.raw.len(), |&(b, _)| b)
    }

    fn span(&self, from: usize, to: usize) -> Range<usize> {
        self.byte(from)..self.byte(to)
    }

    fn find(&self, c: char, from: usize) -> Option<usize> {
        (from..self.chars.len()).find(|&i| self.chars[i].1 == c)
    }

    fn skip_ws(&self, mut pos: usize) -> usize {
        while self.peek(pos).is_some_and(char::is_whitespace) {
            pos += 1;
        }
        pos
    }

    /// Parses `(..), (..), ...` starting at the `(` at `pos`. In bracketed
    /// mode the sequence ends at `]`; otherwise at the first non-tuple token.
    fn parse_tuples(&self, mut pos: usize, bracketed: bool, inventory: &[String], out: &mut ParseResult) {
        loop {
            pos = self.skip_ws(pos);
            match self.peek(pos) {
                Some('(') => {
                    let start = pos;
                    let (elements, end) = self.parse_tuple(pos + 1);
                    match end {
                        TupleEnd::Closed(next) => {
                            out.push_tuple(elements, self.span(start, next), inventory);
                            pos = next;
                        }
                        TupleEnd::Unclosed(next) => {
                            out.diagnostics.push(Diagnostic::warning(
                                "tuple is missing its closing parenthesis",
                                Some(self.span(start, next)),
                            ));
                            pos = next;
                            if self.peek(pos).is_none() && bracketed {
                                out.diagnostics
                                    .push(Diagnostic::warning("list is not terminated", None));
                            }
                            return;
                        }
                    }
                }
                Some(']') if bracketed => return,
                Some(',') => pos += 1,
                None => {
                    if bracketed {
                        out.diagnostics
                            .push(Diagnostic::warning("list is not terminated", None));
                    }
                    return;
                }
                Some(c) => {
                    if bracketed {
                        out.diagnostics.push(Diagnostic::warning(
                            format!("unexpected {c:?} inside list"),
                            Some(self.span(pos, pos + 1)),
                        ));
                    }
                    return;
                }
            }
        }
    }

    /// Parses elements after an opening `(`.
    fn parse_tuple(&self, mut pos: usize) -> (Vec<Element>, TupleEnd) {
        let mut elements = Vec::new();
        loop {
            let (element, terminator, next) = self.parse_element(pos);
            elements.push(element);
            match terminator {
                Some(',') => pos = next + 1,
                Some(')') => return (elements, TupleEnd::Closed(next + 1)),
                _ => return (elements, TupleEnd::Unclosed(next)),
            }
        }
    }

    /// Returns the element, the terminator found (`,` `)` `]` or none) and
    /// its position.
    fn parse_element(&self, pos: usize) -> (Element, Option<char>, usize) {
        let start = self.skip_ws(pos);
        if let Some(quote) = self.peek(start).filter(|c| is_quote(*c)) {
            // A quote opens a quoted element only if a matching quote is
            // followed by a terminator; otherwise it is literal (e.g. "didn't").
            let mut i = start + 1;
            while let Some(close) = self.find_quote(quote, i) {
                let after = self.skip_ws(close + 1);
                if let Some(t @ (',' | ')')) = self.peek(after) {
                    let text: String = self.chars[start + 1..close].iter().map(|&(_, c)| c).collect();
                    let element = Element {
                        text: text.trim().to_string(),
                        span: self.span(start, close + 1),
                    };
                    return (element, Some(t), after);
                }
                i = close + 1;
            }
        }

        let mut depth = 0usize;
        let mut i = start;
        let terminator = loop {
            match self.peek(i) {
                None => break None,
                Some('(') => depth += 1,
                Some(')') if depth > 0 => depth -= 1,
                Some(c @ (',' | ')' | ']')) if depth == 0 => break Some(c),
                _ => {}
            }
            i += 1;
        };
        let text: String = self.chars[start..i].iter().map(|&(_, c)| c).collect();
        let element = Element {
            text: strip_quotes(text.trim()).to_string(),
            span: self.span(start, i),
        };
        (element, terminator, i)
    }

    fn find_quote(&self, quote: char, from: usize) -> Option<usize> {
        (from..self.chars.len()).find(|&i| closes(quote, self.chars[i].1))
    }
}

fn is_quote(c: char) -> bool {
    matches!(c, '\'' | '"' | '\u{2018}' | '\u{201C}')
}

fn closes(open: char, c: char) -> bool {
    match open {
        '\u{2018}' => c == '\u{2019}',
        '\u{201C}' => c == '\u{201D}',
        other => c == other,
    }
}

fn strip_quotes(s: &str) -> &str {
    let mut chars = s.chars();
    match (chars.next(), chars.next_back()) {
        (Some(a), Some(b)) if is_quote(a) && closes(a, b) => s[a.len_utf8()..s.len() - b.len_utf8()].trim(),
        _ => s,
    }
}

impl ParseResult {
    fn push_tuple(&mut self, elements: Vec<Element>, span: Range<usize>, inventory: &[String]) {
        let [aspect, category, opinion, sentiment]: [Element; 4] = match elements.try_into() {
            Ok(arr) => arr,
            Err(elements) => {
                self.diagnostics.push(Diagnostic::warning(
                    format!("expected 4 elements, found {}; tuple dropped", elements.len()),
                    Some(span),
                ));
                return;
            }
        };

        let term = |e: &Element| -> Option<Term> {
            match normalize_term(&e.text) {
                NormalizedTerm::Implicit => Some(Term::Implicit),
                NormalizedTerm::Text(t) if t.is_empty() => None,
                NormalizedTerm::Text(_) => Some(Term::Explicit(e.text.clone())),
            }
        };
        let (Some(aspect_term), Some(opinion_term)) = (term(&aspect), term(&opinion)) else {
            self.diagnostics.push(Diagnostic::warning(
                "empty aspect or opinion; tuple dropped",
                Some(span),
            ));
            return;
        };
        if category.text.is_empty() || normalize_term(&category.text) == NormalizedTerm::Implicit {
            self.diagnostics.push(Diagnostic::warning(
                "category cannot be empty or null; tuple dropped",
                Some(category.span),
            ));
            return;
        }
        let sentiment_value: Sentiment = match sentiment.text.parse() {
            Ok(s) => s,
            Err(_) => {
                self.diagnostics.push(Diagnostic::warning(
                    format!("unknown sentiment {:?}; tuple dropped", sentiment.text),
                    Some(sentiment.span),
                ));
                return;
            }
        };
        if !inventory.is_empty() && !inventory.contains(&normalize_text(&category.text)) {
            self.diagnostics.push(Diagnostic::warning(
                format!("category {:?} is not in the inventory", category.text),
                Some(category.span.clone()),
            ));
        }
        self.quads.push(Quadruple {
            aspect: aspect_term,
            category: category.text,
            opinion: opinion_term,
            sentiment: sentiment_value,
        });
    }
}
