//! Immutable corpus index: postings keyed by normalized form plus
//! per-(decade, genre) token totals used as per-million denominators.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Decade, Document, Sentence, Token};

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("decade {0} has no tokens")]
    EmptyDecade(Decade),
}

/// Position of a token: (document, sentence, token) ordinals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenRef {
    pub doc: u32,
    pub sentence: u32,
    pub token: u32,
}

/// Genre shares for each decade; each row sums to 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenreShareTable {
    pub shares: BTreeMap<Decade, BTreeMap<String, f64>>,
}

impl GenreShareTable {
    pub fn share(&self, decade: Decade, genre: &str) -> Option<f64> {
        self.shares.get(&decade)?.get(genre).copied()
    }

    pub fn row(&self, decade: Decade) -> Option<&BTreeMap<String, f64>> {
        self.shares.get(&decade)
    }
}

/// Exact shares from raw per-genre token totals of one decade.
pub fn shares_from_totals(decade: Decade, totals: &BTreeMap<String, u64>) -> Result<BTreeMap<String, f64>, IndexError> {
    let sum: u64 = totals.values().sum();
    if sum == 0 {
        return Err(IndexError::EmptyDecade(decade));
    }
    Ok(totals
        .iter()
        .map(|(g, &c)| (g.clone(), c as f64 / sum as f64))
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    docs: Vec<Document>,
    postings: HashMap<String, Vec<TokenRef>>,
    slice_totals: BTreeMap<(Decade, String), u64>,
    decades: Vec<Decade>,
    genres: BTreeSet<String>,
    total: u64,
}

impl CorpusIndex {
    pub fn build(docs: Vec<Document>) -> Self {
        let mut postings: HashMap<String, Vec<TokenRef>> = HashMap::new();
        let mut slice_totals: BTreeMap<(Decade, String), u64> = BTreeMap::new();
        let mut total = 0u64;
        for (d, doc) in docs.iter().enumerate() {
            let n = doc.token_count() as u64;
            *slice_totals.entry((doc.decade(), doc.genre.clone())).or_default() += n;
            total += n;
            for (s, sentence) in doc.sentences.iter().enumerate() {
                for (t, token) in sentence.tokens.iter().enumerate() {
                    postings.entry(token.norm.clone()).or_default().push(TokenRef {
                        doc: d as u32,
                        sentence: s as u32,
                        token: t as u32,
                    });
                }
            }
        }
        // zero-token slices never become denominators
        slice_totals.retain(|_, c| *c > 0);
        let decades: BTreeSet<Decade> = slice_totals.keys().map(|(d, _)| *d).collect();
        let genres = slice_totals.keys().map(|(_, g)| g.clone()).collect();
        Self {
            docs,
            postings,
            slice_totals,
            decades: decades.into_iter().collect(),
            genres,
            total,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn document(&self, doc: u32) -> &Document {
        &self.docs[doc as usize]
    }

    pub fn sentence(&self, doc: u32, sentence: u32) -> &Sentence {
        &self.docs[doc as usize].sentences[sentence as usize]
    }

    pub fn token(&self, at: TokenRef) -> &Token {
        &self.sentence(at.doc, at.sentence).tokens[at.token as usize]
    }

    /// Positions of every token whose normalized form is `norm`, in document order.
    pub fn postings(&self, norm: &str) -> &[TokenRef] {
        self.postings.get(norm).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn slice_totals(&self) -> &BTreeMap<(Decade, String), u64> {
        &self.slice_totals
    }

    /// Decades with a nonzero token total, ascending.
    pub fn decades(&self) -> &[Decade] {
        &self.decades
    }

    pub fn genres(&self) -> &BTreeSet<String> {
        &self.genres
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// Slice total for one genre, or the decade total when `genre` is `None`.
    pub fn token_totals(&self, decade: Decade, genre: Option<&str>) -> u64 {
        match genre {
            Some(g) => self
                .slice_totals
                .get(&(decade, g.to_owned()))
                .copied()
                .unwrap_or(0),
            None => self
                .slice_totals
                .range((decade, String::new())..)
                .take_while(|((d, _), _)| *d == decade)
                .map(|(_, c)| *c)
                .sum(),
        }
    }

    pub fn decade_genre_totals(&self, decade: Decade) -> BTreeMap<String, u64> {
        self.slice_totals
            .range((decade, String::new())..)
            .take_while(|((d, _), _)| *d == decade)
            .map(|((_, g), c)| (g.clone(), *c))
            .collect()
    }

    pub fn genre_shares(&self, decade: Decade) -> Result<BTreeMap<String, f64>, IndexError> {
        shares_from_totals(decade, &self.decade_genre_totals(decade))
    }

    pub fn share_table(&self) -> GenreShareTable {
        let shares = self
            .decades
            .iter()
            .filter_map(|&d| self.genre_shares(d).ok().map(|row| (d, row)))
            .collect();
        GenreShareTable { shares }
    }
}
