//! Vertical-format corpus ingestion.
//!
//! One token per line (`surface<TAB>pos[<TAB>lemma]`), documents opened by
//! `#doc id=.. year=.. genre=..` header lines, sentences closed by blank
//! lines, `##` lines ignored. LF and CRLF line endings are both accepted.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MIN_YEAR: i32 = 1500;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed document header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: token line needs at least surface and tag separated by a tab")]
    BadTokenLine { line: usize },
    #[error("line {line}: year `{value}` is not an integer")]
    NonNumericYear { line: usize, value: String },
    #[error("line {line}: year {year} outside [{MIN_YEAR}, {MAX_YEAR}]")]
    YearOutOfRange { line: usize, year: i32 },
    #[error("line {line}: duplicate document id `{doc_id}`")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("line {line}: token before the first #doc header")]
    TokenOutsideDocument { line: usize },
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Start year of a ten-year window (1900 covers 1900..=1909).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decade(i32);

impl Decade {
    /// Returns `None` unless `start_year` is a multiple of ten.
    pub fn new(start_year: i32) -> Option<Self> {
        (start_year.rem_euclid(10) == 0).then_some(Self(start_year))
    }

    pub fn start_year(self) -> i32 {
        self.0
    }

    pub fn next(self) -> Self {
        Self(self.0 + 10)
    }
}

impl fmt::Display for Decade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn bucket_decade(year: i32) -> Decade {
    Decade(year - year.rem_euclid(10))
}

/// Case fold used for every comparison against corpus text.
pub fn normalize_form(surface: &str) -> String {
    surface.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub norm: String,
    pub pos: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    pub index: u32,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>, index: u32) -> Self {
        let surface = surface.into();
        Self {
            norm: normalize_form(&surface),
            surface,
            pos: pos.into(),
            lemma: None,
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Builds a sentence from `(surface, pos)` pairs, assigning indexes.
    pub fn from_pairs<S: AsRef<str>, P: AsRef<str>>(pairs: &[(S, P)]) -> Self {
        let tokens = pairs
            .iter()
            .enumerate()
            .map(|(i, (s, p))| Token::new(s.as_ref(), p.as_ref(), i as u32))
            .collect();
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surface forms joined by single spaces.
    pub fn text(&self) -> String {
        join_surfaces(&self.tokens)
    }
}

pub(crate) fn join_surfaces(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.surface);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub year: i32,
    pub genre: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn decade(&self) -> Decade {
        bucket_decade(self.year)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// Hex SHA-256 of raw corpus bytes; stamped into reports and sessions.
pub fn corpus_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_vertical_str(text: &str) -> Result<Vec<Document>, CorpusError> {
    parse_vertical(text.as_bytes())
}

pub fn parse_vertical<R: BufRead>(mut reader: R) -> Result<Vec<Document>, CorpusError> {
    let mut parser = Parser::default();
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let mut raw: &[u8] = &buf;
        if let Some(stripped) = raw.strip_suffix(b"\n") {
            raw = stripped;
        }
        if let Some(stripped) = raw.strip_suffix(b"\r") {
            raw = stripped;
        }
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::InvalidUtf8 { line: line_no })?;
        parser.feed(line_no, line)?;
    }
    Ok(parser.finish())
}

#[derive(Default)]
struct Parser {
    docs: Vec<Document>,
    seen_ids: std::collections::HashSet<String>,
    current: Option<Document>,
    sentence: Vec<Token>,
}

impl Parser {
    fn feed(&mut self, line_no: usize, line: &str) -> Result<(), CorpusError> {
        if line.is_empty() {
            self.close_sentence();
        } else if line.starts_with("##") {
            // comment
        } else if line == "#doc" || line.starts_with("#doc ") {
            let doc = parse_header(line_no, line)?;
            if !self.seen_ids.insert(doc.doc_id.clone()) {
                return Err(CorpusError::DuplicateDocId {
                    line: line_no,
                    doc_id: doc.doc_id,
                });
            }
            self.close_document();
            self.current = Some(doc);
        } else {
            if self.current.is_none() {
                return Err(CorpusError::TokenOutsideDocument { line: line_no });
            }
            let mut fields = line.split('\t');
            let surface = fields.next().unwrap_or_default();
            let pos = fields.next().ok_or(CorpusError::BadTokenLine { line: line_no })?;
            let lemma = fields.next();
            if surface.is_empty() || pos.is_empty() || fields.next().is_some() {
                return Err(CorpusError::BadTokenLine { line: line_no });
            }
            let mut token = Token::new(surface, pos, self.sentence.len() as u32);
            token.lemma = lemma.map(str::to_owned);
            self.sentence.push(token);
        }
        Ok(())
    }

    fn close_sentence(&mut self) {
        if self.sentence.is_empty() {
            return;
        }
        let tokens = std::mem::take(&mut self.sentence);
        if let Some(doc) = self.current.as_mut() {
            doc.sentences.push(Sentence { tokens });
        }
    }

    fn close_document(&mut self) {
        self.close_sentence();
        if let Some(doc) = self.current.take() {
            self.docs.push(doc);
        }
    }

    fn finish(mut self) -> Vec<Document> {
        self.close_document();
        self.docs
    }
}

fn parse_header(line_no: usize, line: &str) -> Result<Document, CorpusError> {
    let malformed = |reason: &str| CorpusError::MalformedHeader {
        line: line_no,
        reason: reason.to_owned(),
    };
    let (mut id, mut year, mut genre) = (None, None, None);
    for field in line["#doc".len()..].split(' ').filter(|f| !f.is_empty()) {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(&format!("field `{field}` is not key=value")))?;
        match key {
            "id" => id = Some(value),
            "year" => year = Some(value),
            "genre" => genre = Some(value),
            _ => {}
        }
    }
    let id = id.filter(|v| !v.is_empty()).ok_or_else(|| malformed("missing id"))?;
    let year_text = year.ok_or_else(|| malformed("missing year"))?;
    let genre = genre.filter(|v| !v.is_empty()).ok_or_else(|| malformed("missing genre"))?;
    let year: i32 = year_text.parse().map_err(|_| CorpusError::NonNumericYear {
        line: line_no,
        value: year_text.to_owned(),
    })?;
    if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
        return Err(CorpusError::YearOutOfRange { line: line_no, year });
    }
    Ok(Document {
        doc_id: id.to_owned(),
        year,
        genre: genre.to_owned(),
        sentences: Vec::new(),
    })
}

/// Writes documents back out in vertical format (LF line endings).
pub fn write_vertical<W: Write>(docs: &[Document], mut out: W) -> io::Result<()> {
    for doc in docs {
        writeln!(out, "#doc id={} year={} genre={}", doc.doc_id, doc.year, doc.genre)?;
        for sentence in &doc.sentences {
            for t in &sentence.tokens {
                match &t.lemma {
                    Some(lemma) => writeln!(out, "{}\t{}\t{}", t.surface, t.pos, lemma)?,
                    None => writeln!(out, "{}\t{}", t.surface, t.pos)?,
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
