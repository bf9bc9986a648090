//! Diachronic frequency analytics for POS-tagged corpora.
//!
//! Pipeline: [`corpus`] parses vertical files, [`index`] builds postings and
//! per-(decade, genre) denominators, [`query`] finds pattern matches and
//! frequency series, [`stats`] tests trends and [`diagnostics`] turns the
//! results into an obsolescence report.

pub mod corpus;
pub mod diagnostics;
pub mod index;
pub mod query;
pub mod stats;

pub use corpus::{Decade, Document, Sentence, Token};
pub use index::CorpusIndex;
pub use query::{Match, MatchSet, QueryPattern};
pub use stats::{FrequencyPoint, FrequencySeries, TrendResult};
