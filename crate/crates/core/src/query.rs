//! Token-pattern search over a [`CorpusIndex`].
//!
//! A pattern is a whitespace-separated list of elements:
//!
//! * `*` matches exactly one token of any kind (punctuation included),
//! * `_tag` matches a token whose tag equals `tag`, `_tag*` one whose tag
//!   starts with `tag` (both case-insensitive),
//! * anything else matches the normalized token form.
//!
//! Matches never cross a sentence boundary; overlapping matches are all kept.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{join_surfaces, normalize_form, Decade, Token};
use crate::index::{CorpusIndex, TokenRef};
use crate::stats::{FrequencyPoint, FrequencySeries};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("pattern is empty")]
    EmptyPattern,
    #[error("pattern `{0}` has no literal or tag element")]
    AllWildcards(String),
    #[error("pattern `{0}` contains `_` without a tag")]
    BareUnderscore(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternElement {
    Literal { form: String },
    Wildcard,
    Tag { prefix: String, exact: bool },
}

impl PatternElement {
    pub fn matches(&self, token: &Token) -> bool {
        match self {
            Self::Literal { form } => token.norm == *form,
            Self::Wildcard => true,
            Self::Tag { prefix, exact } => {
                let pos = token.pos.to_lowercase();
                if *exact {
                    pos == *prefix
                } else {
                    pos.starts_with(prefix.as_str())
                }
            }
        }
    }
}

impl fmt::Display for PatternElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Literal { form } => f.write_str(form),
            Self::Wildcard => f.write_str("*"),
            Self::Tag { prefix, exact: true } => write!(f, "_{prefix}"),
            Self::Tag { prefix, exact: false } => write!(f, "_{prefix}*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPattern {
    pub elements: Vec<PatternElement>,
    pub source: String,
}

impl QueryPattern {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

impl std::str::FromStr for QueryPattern {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_pattern(s)
    }
}

pub fn parse_pattern(text: &str) -> Result<QueryPattern, QueryError> {
    let mut elements = Vec::new();
    for raw in text.split_whitespace() {
        let element = if raw == "*" {
            PatternElement::Wildcard
        } else if let Some(tag) = raw.strip_prefix('_') {
            let (prefix, exact) = match tag.strip_suffix('*') {
                Some(p) => (p, false),
                None => (tag, true),
            };
            if prefix.is_empty() {
                return Err(QueryError::BareUnderscore(text.to_owned()));
            }
            PatternElement::Tag {
                prefix: prefix.to_lowercase(),
                exact,
            }
        } else {
            PatternElement::Literal {
                form: normalize_form(raw),
            }
        };
        elements.push(element);
    }
    if elements.is_empty() {
        return Err(QueryError::EmptyPattern);
    }
    if elements.iter().all(|e| *e == PatternElement::Wildcard) {
        return Err(QueryError::AllWildcards(text.to_owned()));
    }
    Ok(QueryPattern {
        elements,
        source: text.trim().to_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Match {
    pub doc: u32,
    pub doc_id: String,
    pub year: i32,
    pub decade: Decade,
    pub genre: String,
    pub sentence: u32,
    /// First matched token index.
    pub start: u32,
    /// Last matched token index (inclusive).
    pub end: u32,
}

impl Match {
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Stable identifier of this span within its corpus.
    pub fn key(&self) -> String {
        format!("{}:{}:{}-{}", self.doc_id, self.sentence, self.start, self.end)
    }

    fn order_key(&self) -> (u32, u32, u32, u32) {
        (self.doc, self.sentence, self.start, self.end)
    }
}

/// Matches ordered by (document, sentence, start).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }

    /// Union of several result sets (e.g. the gap variants of one construction),
    /// kept in corpus order. Occurrences are summed, not deduplicated.
    pub fn merge(sets: impl IntoIterator<Item = MatchSet>) -> MatchSet {
        let mut matches: Vec<Match> = sets.into_iter().flat_map(|s| s.matches).collect();
        matches.sort_by_key(Match::order_key);
        MatchSet { matches }
    }

    pub fn in_decade(&self, decade: Decade) -> impl Iterator<Item = &Match> {
        self.matches.iter().filter(move |m| m.decade == decade)
    }
}

fn window_matches(pattern: &QueryPattern, tokens: &[Token], start: usize) -> bool {
    start + pattern.len() <= tokens.len()
        && pattern
            .elements
            .iter()
            .zip(&tokens[start..])
            .all(|(e, t)| e.matches(t))
}

fn make_match(index: &CorpusIndex, doc: u32, sentence: u32, start: usize, len: usize) -> Match {
    let d = index.document(doc);
    Match {
        doc,
        doc_id: d.doc_id.clone(),
        year: d.year,
        decade: d.decade(),
        genre: d.genre.clone(),
        sentence,
        start: start as u32,
        end: (start + len - 1) as u32,
    }
}

/// Every sentence-internal window matching `pattern`.
///
/// The rarest literal element anchors the search through the postings; tag-
/// and wildcard-only patterns fall back to visiting every token.
pub fn match_pattern(index: &CorpusIndex, pattern: &QueryPattern) -> MatchSet {
    let anchor = pattern
        .elements
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match e {
            PatternElement::Literal { form } => Some((i, index.postings(form))),
            _ => None,
        })
        .min_by_key(|(_, postings)| postings.len());

    let mut matches = Vec::new();
    match anchor {
        Some((offset, postings)) => {
            for &TokenRef { doc, sentence, token } in postings {
                let Some(start) = (token as usize).checked_sub(offset) else {
                    continue;
                };
                let tokens = &index.sentence(doc, sentence).tokens;
                if window_matches(pattern, tokens, start) {
                    matches.push(make_match(index, doc, sentence, start, pattern.len()));
                }
            }
        }
        None => {
            for (d, document) in index.documents().iter().enumerate() {
                for (s, sentence) in document.sentences.iter().enumerate() {
                    for start in 0..sentence.len() {
                        if window_matches(pattern, &sentence.tokens, start) {
                            matches.push(make_match(index, d as u32, s as u32, start, pattern.len()));
                        }
                    }
                }
            }
        }
    }
    MatchSet { matches }
}

/// Matches of several patterns summed into one set.
pub fn match_patterns(index: &CorpusIndex, patterns: &[QueryPattern]) -> MatchSet {
    MatchSet::merge(patterns.iter().map(|p| match_pattern(index, p)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcordanceLine {
    pub left: String,
    pub hit: String,
    pub right: String,
    #[serde(rename = "match")]
    pub matched: Match,
}

impl ConcordanceLine {
    /// Left, hit and right joined by single spaces (empty parts skipped).
    pub fn text(&self) -> String {
        [&self.left, &self.hit, &self.right]
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// KWIC line with up to `width` tokens of same-sentence context on each side.
pub fn kwic(index: &CorpusIndex, m: &Match, width: usize) -> ConcordanceLine {
    let tokens = &index.sentence(m.doc, m.sentence).tokens;
    let (start, end) = (m.start as usize, m.end as usize);
    let left_from = start.saturating_sub(width);
    let right_to = (end + 1 + width).min(tokens.len());
    ConcordanceLine {
        left: join_surfaces(&tokens[left_from..start]),
        hit: join_surfaces(&tokens[start..=end]),
        right: join_surfaces(&tokens[end + 1..right_to]),
        matched: m.clone(),
    }
}

/// Per-decade counts and pmw of `matches`, optionally restricted to one genre.
///
/// One point per indexed decade whose (filtered) token total is nonzero;
/// decades without matches get a zero point.
pub fn frequency_series(
    label: impl Into<String>,
    matches: &MatchSet,
    index: &CorpusIndex,
    genre: Option<&str>,
) -> FrequencySeries {
    let mut points = Vec::new();
    for &decade in index.decades() {
        let total = index.token_totals(decade, genre);
        if total == 0 {
            continue;
        }
        let count = matches
            .in_decade(decade)
            .filter(|m| genre.is_none_or(|g| m.genre == g))
            .count() as u64;
        points.push(FrequencyPoint::from_counts(decade, count, total).expect("nonzero total"));
    }
    FrequencySeries {
        label: label.into(),
        points,
    }
}

#[derive(Serialize)]
struct MatchRow<'a> {
    doc_id: &'a str,
    year: i32,
    decade: i32,
    genre: &'a str,
    sentence_no: u32,
    start: u32,
    end: u32,
    hit: &'a str,
    left: &'a str,
    right: &'a str,
}

/// RFC 4180 export of concordance lines.
pub fn write_matches_csv<W: Write>(lines: &[ConcordanceLine], writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if lines.is_empty() {
        wtr.write_record([
            "doc_id", "year", "decade", "genre", "sentence_no", "start", "end", "hit", "left", "right",
        ])?;
    }
    for l in lines {
        let m = &l.matched;
        wtr.serialize(MatchRow {
            doc_id: &m.doc_id,
            year: m.year,
            decade: m.decade.start_year(),
            genre: &m.genre,
            sentence_no: m.sentence,
            start: m.start,
            end: m.end,
            hit: &l.hit,
            left: &l.left,
            right: &l.right,
        })?;
    }
    wtr.flush()?;
    Ok(())
}
