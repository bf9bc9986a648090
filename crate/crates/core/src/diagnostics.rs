//! Obsolescence symptom battery and competitor analysis.
//!
//! Three symptoms are checked on query-derived series:
//!
//! 1. negative correlation between time and frequency (necessary condition),
//! 2. distributional fragmentation across genres, judged on frequencies
//!    rescaled as if every genre were a quarter of the corpus,
//! 3. paradigmatic atrophy: a trend in the share of clause-initial uses, or
//!    negated uses disappearing faster than the construction as a whole.
//!
//! Every finding keeps the statistics it was decided from, and
//! [`redetect`] recomputes the flag from those alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::Decade;
use crate::index::{CorpusIndex, GenreShareTable};
use crate::query::{frequency_series, Match, MatchSet};
use crate::stats::{self, extrapolate, kendall_trend, trend_of, FrequencySeries, StatsError, TrendResult};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("need at least {needed} genres with 3 or more points, got {got}")]
    TooFewGenres { needed: usize, got: usize },
    #[error("competitor `{0}` does not cover the target's decade range")]
    RangeMismatch(String),
    #[error("target `{0}` does not decline over its range")]
    TargetNotDeclining(String),
    #[error("report is missing the {0:?} finding")]
    MissingFinding(Symptom),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn lift(e: StatsError) -> DiagnosticsError {
    match e {
        StatsError::TooFewPoints { needed, got } => DiagnosticsError::TooFewPoints { needed, got },
        other => DiagnosticsError::Stats(other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionRule {
    #[default]
    SentenceInitial,
}

pub fn default_punctuation_tags() -> BTreeSet<String> {
    ["y", "ycom", "ystp", "yquo", "ycol", "yscol", "ydsh", "yex", "yqu", "ylb", "yrb"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub alpha: f64,
    pub negation_window: usize,
    pub fragmentation_min_genres: usize,
    pub position_rule: PositionRule,
    /// Tags (lowercase, exact) treated as punctuation when locating clause-initial uses.
    pub punctuation_tags: BTreeSet<String>,
    /// Minimum competitor gain as a fraction of the target's loss.
    pub coverage_threshold: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            negation_window: 6,
            fragmentation_min_genres: 3,
            position_rule: PositionRule::SentenceInitial,
            punctuation_tags: default_punctuation_tags(),
            coverage_threshold: 0.5,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DiagnosticsError::InvalidConfig(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if self.negation_window == 0 {
            return Err(DiagnosticsError::InvalidConfig("negation_window must be >= 1".into()));
        }
        if self.coverage_threshold.is_nan() || self.coverage_threshold <= 0.0 {
            return Err(DiagnosticsError::InvalidConfig("coverage_threshold must be > 0".into()));
        }
        Ok(())
    }

    fn is_punctuation(&self, pos: &str) -> bool {
        self.punctuation_tags.contains(&pos.to_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symptom {
    NegativeCorrelation,
    DistributionalFragmentation,
    ParadigmaticAtrophy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomFinding {
    pub symptom: Symptom,
    pub detected: bool,
    pub evidence: BTreeMap<String, Value>,
    pub narrative: String,
}

fn trend_json(t: &TrendResult) -> Value {
    serde_json::to_value(t).expect("trend serializes")
}

fn trend_from(v: Option<&Value>) -> Option<TrendResult> {
    serde_json::from_value(v?.clone()).ok()
}

fn significant_negative(t: &TrendResult, alpha: f64) -> bool {
    t.tau < 0.0 && t.p_value < alpha
}

fn significant_positive(t: &TrendResult, alpha: f64) -> bool {
    t.tau > 0.0 && t.p_value < alpha
}

/// Recomputes a finding's `detected` flag from its stored evidence.
/// Returns `None` when the evidence lacks a required statistic.
pub fn redetect(finding: &SymptomFinding, config: &DiagnosticsConfig) -> Option<bool> {
    let ev = &finding.evidence;
    match finding.symptom {
        Symptom::NegativeCorrelation => {
            let t = trend_from(ev.get("trend"))?;
            Some(significant_negative(&t, config.alpha))
        }
        Symptom::DistributionalFragmentation => {
            let genres = ev.get("genre_trends")?.as_object()?;
            let trends: Vec<TrendResult> = genres.values().filter_map(|v| trend_from(Some(v))).collect();
            Some(
                trends.iter().any(|t| significant_positive(t, config.alpha))
                    && trends.iter().any(|t| significant_negative(t, config.alpha)),
            )
        }
        Symptom::ParadigmaticAtrophy => {
            let position = trend_from(ev.get("position_trend"))?;
            let neg_pmw = trend_from(ev.get("negated_pmw_trend"))?;
            let neg_share = trend_from(ev.get("negated_share_trend"))?;
            Some(
                position.p_value < config.alpha
                    || (significant_negative(&neg_pmw, config.alpha) && significant_negative(&neg_share, config.alpha)),
            )
        }
    }
}

fn series_points(series: &FrequencySeries) -> Value {
    Value::Array(
        series
            .points
            .iter()
            .map(|p| json!({"decade": p.decade, "count": p.count, "token_total": p.token_total, "pmw": p.pmw}))
            .collect(),
    )
}

/// Necessary condition: frequency falls significantly with time.
pub fn check_negative_correlation(
    series: &FrequencySeries,
    config: &DiagnosticsConfig,
) -> Result<SymptomFinding, DiagnosticsError> {
    config.validate()?;
    let trend = kendall_trend(series).map_err(lift)?;
    let detected = significant_negative(&trend, config.alpha);
    let narrative = format!(
        "Kendall tau = {:.7} (S = {}, n = {}, p = {:.4e}, {}); {} at alpha = {}.",
        trend.tau,
        trend.s_statistic,
        trend.n,
        trend.p_value,
        method_name(&trend),
        if detected {
            "significant negative correlation between time and frequency"
        } else {
            "no significant negative correlation"
        },
        config.alpha
    );
    let mut evidence = BTreeMap::new();
    evidence.insert("trend".into(), trend_json(&trend));
    evidence.insert("series".into(), series_points(series));
    Ok(SymptomFinding {
        symptom: Symptom::NegativeCorrelation,
        detected,
        evidence,
        narrative,
    })
}

fn method_name(t: &TrendResult) -> &'static str {
    match t.method {
        stats::PMethod::Exact => "exact",
        stats::PMethod::NormalApprox => "normal approximation",
    }
}

/// Per-genre frequencies rescaled as if each genre made up 25% of its decade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatedSeries {
    pub genre: String,
    pub points: Vec<(Decade, f64)>,
    pub skipped: Vec<Decade>,
}

pub fn extrapolate_genre(genre: &str, series: &FrequencySeries, shares: &GenreShareTable) -> ExtrapolatedSeries {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for p in &series.points {
        match shares.share(p.decade, genre).map(|s| extrapolate(p.pmw, s)) {
            Some(Ok(v)) => points.push((p.decade, v)),
            _ => skipped.push(p.decade),
        }
    }
    ExtrapolatedSeries {
        genre: genre.to_owned(),
        points,
        skipped,
    }
}

/// Opposing significant genre trends after share extrapolation.
pub fn check_fragmentation(
    per_genre: &BTreeMap<String, FrequencySeries>,
    shares: &GenreShareTable,
    config: &DiagnosticsConfig,
) -> Result<SymptomFinding, DiagnosticsError> {
    config.validate()?;
    let extrapolated: Vec<ExtrapolatedSeries> = per_genre
        .iter()
        .map(|(g, s)| extrapolate_genre(g, s, shares))
        .collect();
    let usable: Vec<&ExtrapolatedSeries> = extrapolated.iter().filter(|e| e.points.len() >= 3).collect();
    if usable.len() < config.fragmentation_min_genres {
        return Err(DiagnosticsError::TooFewGenres {
            needed: config.fragmentation_min_genres,
            got: usable.len(),
        });
    }

    let mut genre_trends = serde_json::Map::new();
    let mut rising = Vec::new();
    let mut falling = Vec::new();
    for e in &usable {
        let x: Vec<f64> = e.points.iter().map(|(d, _)| d.start_year() as f64).collect();
        let y: Vec<f64> = e.points.iter().map(|(_, v)| *v).collect();
        let t = trend_of(&x, &y).map_err(lift)?;
        if significant_positive(&t, config.alpha) {
            rising.push(e.genre.clone());
        } else if significant_negative(&t, config.alpha) {
            falling.push(e.genre.clone());
        }
        genre_trends.insert(e.genre.clone(), trend_json(&t));
    }
    let detected = !rising.is_empty() && !falling.is_empty();

    let excluded: Vec<&str> = extrapolated
        .iter()
        .filter(|e| e.points.len() < 3)
        .map(|e| e.genre.as_str())
        .collect();
    let skipped: serde_json::Map<String, Value> = extrapolated
        .iter()
        .filter(|e| !e.skipped.is_empty())
        .map(|e| (e.genre.clone(), json!(e.skipped)))
        .collect();
    let series: serde_json::Map<String, Value> = extrapolated
        .iter()
        .map(|e| {
            let pts: Vec<Value> = e.points.iter().map(|(d, v)| json!({"decade": d, "value": v})).collect();
            (e.genre.clone(), Value::Array(pts))
        })
        .collect();

    let mut narrative = if detected {
        format!(
            "Extrapolated frequency rises significantly in {} while falling in {}.",
            rising.join(", "),
            falling.join(", ")
        )
    } else {
        format!(
            "No opposing significant genre trends (rising: [{}], falling: [{}]).",
            rising.join(", "),
            falling.join(", ")
        )
    };
    narrative.push_str(" The rule requires significance on both sides and can be stricter than visual inspection of the extrapolated curves.");
    if !skipped.is_empty() {
        narrative.push_str(" Points with zero genre share were skipped.");
    }

    let mut evidence = BTreeMap::new();
    evidence.insert("genre_trends".into(), Value::Object(genre_trends));
    evidence.insert("rising".into(), json!(rising));
    evidence.insert("falling".into(), json!(falling));
    evidence.insert("extrapolated".into(), Value::Object(series));
    evidence.insert("skipped_points".into(), Value::Object(skipped));
    evidence.insert("excluded_genres".into(), json!(excluded));
    Ok(SymptomFinding {
        symptom: Symptom::DistributionalFragmentation,
        detected,
        evidence,
        narrative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Initial,
    NonInitial,
}

/// Initial iff only punctuation precedes the match in its sentence.
/// Medial positions fall under `NonInitial`.
pub fn classify_position(index: &CorpusIndex, m: &Match, config: &DiagnosticsConfig) -> Position {
    let tokens = &index.sentence(m.doc, m.sentence).tokens;
    let PositionRule::SentenceInitial = config.position_rule;
    if tokens[..m.start as usize].iter().all(|t| config.is_punctuation(&t.pos)) {
        Position::Initial
    } else {
        Position::NonInitial
    }
}

/// Whether "not" / "n't" follows the match within the negation window.
pub fn is_negated(index: &CorpusIndex, m: &Match, config: &DiagnosticsConfig) -> bool {
    let tokens = &index.sentence(m.doc, m.sentence).tokens;
    let from = m.end as usize + 1;
    let to = (from + config.negation_window).min(tokens.len());
    tokens[from.min(to)..to].iter().any(|t| t.norm == "not" || t.norm == "n't")
}

pub fn check_atrophy(
    index: &CorpusIndex,
    matches: &MatchSet,
    config: &DiagnosticsConfig,
) -> Result<SymptomFinding, DiagnosticsError> {
    config.validate()?;
    #[derive(Default)]
    struct Tally {
        total: u64,
        initial: u64,
        negated: u64,
    }
    let mut tallies: BTreeMap<Decade, Tally> = BTreeMap::new();
    for m in matches.iter() {
        let t = tallies.entry(m.decade).or_default();
        t.total += 1;
        if classify_position(index, m, config) == Position::Initial {
            t.initial += 1;
        }
        if is_negated(index, m, config) {
            t.negated += 1;
        }
    }
    if tallies.len() < 3 {
        return Err(DiagnosticsError::TooFewPoints {
            needed: 3,
            got: tallies.len(),
        });
    }

    let years: Vec<f64> = tallies.keys().map(|d| d.start_year() as f64).collect();
    let initial_share: Vec<f64> = tallies.values().map(|t| t.initial as f64 / t.total as f64).collect();
    let negated_share: Vec<f64> = tallies.values().map(|t| t.negated as f64 / t.total as f64).collect();
    let position_trend = trend_of(&years, &initial_share).map_err(lift)?;
    let negated_share_trend = trend_of(&years, &negated_share).map_err(lift)?;

    let overall = frequency_series("all", matches, index, None);
    let negated_points: Vec<(Decade, f64)> = overall
        .points
        .iter()
        .map(|p| {
            let neg = tallies.get(&p.decade).map_or(0, |t| t.negated);
            (p.decade, stats::per_million(neg, p.token_total).expect("nonzero total"))
        })
        .collect();
    let negated_series = FrequencySeries::from_pmw("negated", &negated_points)?;
    let negated_pmw_trend = kendall_trend(&negated_series).map_err(lift)?;
    let overall_trend = kendall_trend(&overall).map_err(lift)?;

    let position_loss = position_trend.p_value < config.alpha;
    let negation_loss = significant_negative(&negated_pmw_trend, config.alpha)
        && significant_negative(&negated_share_trend, config.alpha);
    let detected = position_loss || negation_loss;

    let mut parts = Vec::new();
    parts.push(if position_loss {
        format!(
            "share of clause-initial uses trends {} (tau = {:.3}, p = {:.4})",
            if position_trend.tau > 0.0 { "upwards" } else { "downwards" },
            position_trend.tau,
            position_trend.p_value
        )
    } else {
        format!("stable position mix (tau = {:.3}, p = {:.4})", position_trend.tau, position_trend.p_value)
    });
    parts.push(if negation_loss {
        format!(
            "negated uses decline faster than the construction (share tau = {:.3}, p = {:.4})",
            negated_share_trend.tau, negated_share_trend.p_value
        )
    } else {
        format!(
            "negated uses keep pace with the construction (share tau = {:.3}, p = {:.4})",
            negated_share_trend.tau, negated_share_trend.p_value
        )
    });
    let narrative = format!("{}. Medial clauses are counted as non-initial.", parts.join("; "));

    let per_decade: Vec<Value> = tallies
        .iter()
        .map(|(d, t)| json!({"decade": d, "matches": t.total, "initial": t.initial, "negated": t.negated}))
        .collect();
    let mut evidence = BTreeMap::new();
    evidence.insert("per_decade".into(), Value::Array(per_decade));
    evidence.insert("initial_share".into(), json!(initial_share));
    evidence.insert("negated_share".into(), json!(negated_share));
    evidence.insert("negated_pmw".into(), series_points(&negated_series));
    evidence.insert("position_trend".into(), trend_json(&position_trend));
    evidence.insert("negated_share_trend".into(), trend_json(&negated_share_trend));
    evidence.insert("negated_pmw_trend".into(), trend_json(&negated_pmw_trend));
    evidence.insert("overall_trend".into(), trend_json(&overall_trend));
    evidence.insert("medial_counted_as".into(), json!("non_initial"));
    evidence.insert("negation_window".into(), json!(config.negation_window));
    Ok(SymptomFinding {
        symptom: Symptom::ParadigmaticAtrophy,
        detected,
        evidence,
        narrative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetitorVerdict {
    MirrorDetected,
    InsufficientGain,
    CompetitorAlsoDeclining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorFinding {
    pub competitor_label: String,
    pub trend: TrendResult,
    pub total_gain: f64,
    pub target_total_loss: f64,
    /// Kendall tau between the two decade-to-decade delta sequences.
    pub delta_mirror_tau: Option<f64>,
    pub coverage_ratio: f64,
    /// True when the competitor's rise counts as a real trend.
    pub rising: bool,
    pub verdict: CompetitorVerdict,
}

/// A trend is rising if significantly positive, or, when n is too small for
/// any outcome to reach `alpha`, strictly increasing throughout.
fn is_rising(t: &TrendResult, alpha: f64) -> bool {
    if significant_positive(t, alpha) {
        return true;
    }
    let max_s = (t.n * (t.n - 1) / 2) as i64;
    let underpowered = stats::exact_p_value(t.n, max_s).is_ok_and(|p| p >= alpha);
    underpowered && t.s_statistic == max_s
}

/// Does the competitor's gain mirror the target's loss?
///
/// The competitor may be sampled at fewer decades than the target, but must
/// start and end on the target's first and last decade; the target is
/// compared at the competitor's decades only.
pub fn competitor_mirror(
    target: &FrequencySeries,
    competitor: &FrequencySeries,
    config: &DiagnosticsConfig,
) -> Result<CompetitorFinding, DiagnosticsError> {
    config.validate()?;
    let mismatch = || DiagnosticsError::RangeMismatch(competitor.label.clone());
    let (Some(tf), Some(tl)) = (target.points.first(), target.points.last()) else {
        return Err(mismatch());
    };
    let (Some(cf), Some(cl)) = (competitor.points.first(), competitor.points.last()) else {
        return Err(mismatch());
    };
    if tf.decade != cf.decade || tl.decade != cl.decade {
        return Err(mismatch());
    }
    let aligned: Vec<f64> = competitor
        .points
        .iter()
        .map(|p| target.get(p.decade).map(|q| q.pmw).ok_or_else(mismatch))
        .collect::<Result<_, _>>()?;

    let target_total = aligned[aligned.len() - 1] - aligned[0];
    if target_total.is_nan() || target_total >= 0.0 {
        return Err(DiagnosticsError::TargetNotDeclining(target.label.clone()));
    }
    let trend = kendall_trend(competitor).map_err(lift)?;
    let comp_values = competitor.values();
    let total_gain = comp_values[comp_values.len() - 1] - comp_values[0];
    let coverage_ratio = total_gain / target_total.abs();

    let deltas = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
    let (td, cd) = (deltas(&aligned), deltas(&comp_values));
    let delta_mirror_tau = (td.len() >= 2).then(|| stats::kendall_tau_b(&td, &cd).tau_b);

    let rising = is_rising(&trend, config.alpha);
    let verdict = if total_gain <= 0.0 {
        CompetitorVerdict::CompetitorAlsoDeclining
    } else if rising && coverage_ratio >= config.coverage_threshold {
        CompetitorVerdict::MirrorDetected
    } else {
        CompetitorVerdict::InsufficientGain
    };
    Ok(CompetitorFinding {
        competitor_label: competitor.label.clone(),
        trend,
        total_gain,
        target_total_loss: target_total,
        delta_mirror_tau,
        coverage_ratio,
        rising,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    ObsolescentLikely,
    DecliningOnly,
    NoEvidence,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub corpus_hash: Option<String>,
    pub seed: u64,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomReport {
    pub version: u32,
    pub target: String,
    pub config: DiagnosticsConfig,
    pub findings: Vec<SymptomFinding>,
    pub competitors: Vec<CompetitorFinding>,
    pub verdict: Verdict,
    pub metadata: ReportMetadata,
}

/// Verdict from the three detection flags.
pub fn verdict_for(negative: bool, fragmentation: bool, atrophy: bool) -> Verdict {
    match (negative, fragmentation || atrophy) {
        (true, true) => Verdict::ObsolescentLikely,
        (true, false) => Verdict::DecliningOnly,
        (false, _) => Verdict::NoEvidence,
    }
}

pub fn compile_report(
    target_label: &str,
    findings: Vec<SymptomFinding>,
    competitors: Vec<CompetitorFinding>,
    config: DiagnosticsConfig,
    metadata: ReportMetadata,
) -> Result<SymptomReport, DiagnosticsError> {
    let mut ordered = Vec::with_capacity(3);
    for symptom in [
        Symptom::NegativeCorrelation,
        Symptom::DistributionalFragmentation,
        Symptom::ParadigmaticAtrophy,
    ] {
        let f = findings
            .iter()
            .find(|f| f.symptom == symptom)
            .ok_or(DiagnosticsError::MissingFinding(symptom))?;
        ordered.push(f.clone());
    }
    let verdict = verdict_for(ordered[0].detected, ordered[1].detected, ordered[2].detected);
    Ok(SymptomReport {
        version: REPORT_VERSION,
        target: target_label.to_owned(),
        config,
        findings: ordered,
        competitors,
        verdict,
        metadata,
    })
}

impl SymptomReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Obsolescence report: {}", self.target);
        let _ = writeln!(out, "Verdict: {}", verdict_label(self.verdict));
        let _ = writeln!(out);
        for f in &self.findings {
            let _ = writeln!(
                out,
                "[{}] {}",
                if f.detected { "x" } else { " " },
                symptom_label(f.symptom)
            );
            let _ = writeln!(out, "    {}", f.narrative);
        }
        if !self.competitors.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Competitors:");
            for c in &self.competitors {
                let _ = writeln!(
                    out,
                    "  {:<28} gain {:+.2} pmw, coverage {:.3}, tau {:+.4} (p = {:.4}) -> {}",
                    c.competitor_label,
                    c.total_gain,
                    c.coverage_ratio,
                    c.trend.tau,
                    c.trend.p_value,
                    competitor_verdict_label(c.verdict)
                );
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "alpha = {}, negation window = {}, seed = {}",
            self.config.alpha, self.config.negation_window, self.metadata.seed
        );
        if let Some(h) = &self.metadata.corpus_hash {
            let _ = writeln!(out, "corpus sha256 = {h}");
        }
        out
    }
}

pub fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::ObsolescentLikely => "OBSOLESCENT_LIKELY",
        Verdict::DecliningOnly => "DECLINING_ONLY",
        Verdict::NoEvidence => "NO_EVIDENCE",
    }
}

pub fn competitor_verdict_label(v: CompetitorVerdict) -> &'static str {
    match v {
        CompetitorVerdict::MirrorDetected => "mirror_detected",
        CompetitorVerdict::InsufficientGain => "insufficient_gain",
        CompetitorVerdict::CompetitorAlsoDeclining => "competitor_also_declining",
    }
}

fn symptom_label(s: Symptom) -> &'static str {
    match s {
        Symptom::NegativeCorrelation => "negative correlation between time and frequency",
        Symptom::DistributionalFragmentation => "distributional fragmentation",
        Symptom::ParadigmaticAtrophy => "paradigmatic atrophy",
    }
}

/// Per-genre frequency series of a match set (genres in index order).
pub fn per_genre_series(label: &str, matches: &MatchSet, index: &CorpusIndex) -> BTreeMap<String, FrequencySeries> {
    index
        .genres()
        .iter()
        .map(|g| (g.clone(), frequency_series(format!("{label} [{g}]"), matches, index, Some(g))))
        .collect()
}

/// Runs all three symptom checks for one target construction.
pub fn symptom_battery(
    label: &str,
    matches: &MatchSet,
    index: &CorpusIndex,
    config: &DiagnosticsConfig,
) -> Result<Vec<SymptomFinding>, DiagnosticsError> {
    let overall = frequency_series(label, matches, index, None);
    let per_genre = per_genre_series(label, matches, index);
    Ok(vec![
        check_negative_correlation(&overall, config)?,
        check_fragmentation(&per_genre, &index.share_table(), config)?,
        check_atrophy(index, matches, config)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_vertical_str, Document, Sentence};
    use crate::query::{match_pattern, parse_pattern};
    use crate::stats::reconstruct_series;

    fn dec(y: i32) -> Decade {
        Decade::new(y).unwrap()
    }

    const IN_ORDER_THAT: [f64; 10] = [0.33, -2.0, -4.92, -3.53, -3.28, -2.13, -1.03, -1.03, -0.36, -0.11];
    const IN_ORDER_FOR_TO: [f64; 10] = [-0.02, 0.43, -0.6, 0.25, 0.6, 0.45, -0.61, 0.2, 0.84, -0.53];
    const SO_THAT: [f64; 10] = [9.62, -6.8, 6.59, 2.74, -10.09, -3.57, 2.05, -10.55, -5.32, -8.69];

    fn cfg() -> DiagnosticsConfig {
        DiagnosticsConfig::default()
    }

    #[test]
    fn negative_correlation_on_reconstructed_series() {
        let s = reconstruct_series("in order that", dec(1900), 19.5, &IN_ORDER_THAT);
        let f = check_negative_correlation(&s, &cfg()).unwrap();
        assert!(f.detected);
        let t = trend_from(f.evidence.get("trend")).unwrap();
        assert!((t.tau + 0.9636364).abs() < 1e-6);
        assert!((t.p_value - 5.511e-7).abs() < 1e-9);
        assert_eq!(redetect(&f, &cfg()), Some(true));

        let s = reconstruct_series("so that", dec(1900), 40.0, &SO_THAT);
        let f = check_negative_correlation(&s, &cfg()).unwrap();
        assert!(f.detected);

        let up = FrequencySeries::from_pmw("up", &[(dec(1900), 1.0), (dec(1910), 2.0), (dec(1920), 3.0)]).unwrap();
        let f = check_negative_correlation(&up, &cfg()).unwrap();
        assert!(!f.detected);
        assert_eq!(trend_from(f.evidence.get("trend")).unwrap().tau, 1.0);

        let short = FrequencySeries::from_pmw("s", &[(dec(1900), 1.0), (dec(1910), 2.0)]).unwrap();
        assert!(matches!(
            check_negative_correlation(&short, &cfg()),
            Err(DiagnosticsError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn detection_is_invariant_under_shift_and_scale() {
        let s = reconstruct_series("x", dec(1900), 30.0, &SO_THAT);
        let base = check_negative_correlation(&s, &cfg()).unwrap().detected;
        for (c, k) in [(0.5, 0.0), (3.0, 100.0), (1.0, -5.0)] {
            let vals: Vec<(Decade, f64)> = s.points.iter().map(|p| (p.decade, p.pmw * c + k)).collect();
            let moved = FrequencySeries::from_pmw("x", &vals).unwrap();
            assert_eq!(check_negative_correlation(&moved, &cfg()).unwrap().detected, base);
        }
    }

    fn share_table(rows: &[(i32, &[(&str, f64)])]) -> GenreShareTable {
        GenreShareTable {
            shares: rows
                .iter()
                .map(|(d, r)| (dec(*d), r.iter().map(|(g, s)| (g.to_string(), *s)).collect()))
                .collect(),
        }
    }

    fn quarter_shares(decades: &[i32]) -> GenreShareTable {
        let row: &[(&str, f64)] = &[("fic", 0.25), ("mag", 0.25), ("news", 0.25), ("nf", 0.25)];
        share_table(&decades.iter().map(|&d| (d, row)).collect::<Vec<_>>())
    }

    fn series(label: &str, vals: &[f64]) -> FrequencySeries {
        let v: Vec<(Decade, f64)> = vals.iter().enumerate().map(|(i, &p)| (dec(1900 + 10 * i as i32), p)).collect();
        FrequencySeries::from_pmw(label, &v).unwrap()
    }

    #[test]
    fn fragmentation_needs_opposing_trends() {
        let decades: Vec<i32> = (0..8).map(|i| 1900 + 10 * i).collect();
        let shares = quarter_shares(&decades);
        let mut per_genre = BTreeMap::new();
        per_genre.insert("nf".into(), series("nf", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        per_genre.insert("mag".into(), series("mag", &[8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]));
        per_genre.insert("news".into(), series("news", &[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.5]));
        per_genre.insert("fic".into(), series("fic", &[5.0, 5.5, 4.9, 5.2, 5.1, 4.8, 5.3, 5.0]));
        let f = check_fragmentation(&per_genre, &shares, &cfg()).unwrap();
        assert!(f.detected, "{}", f.narrative);
        assert_eq!(f.evidence["rising"], json!(["nf"]));
        assert_eq!(f.evidence["falling"], json!(["mag", "news"]));
        assert_eq!(redetect(&f, &cfg()), Some(true));

        let declining = [8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let same: BTreeMap<String, FrequencySeries> = ["fic", "mag", "news", "nf"]
            .iter()
            .map(|g| (g.to_string(), series(g, &declining)))
            .collect();
        let f = check_fragmentation(&same, &shares, &cfg()).unwrap();
        assert!(!f.detected);
        assert_eq!(redetect(&f, &cfg()), Some(false));
    }

    #[test]
    fn fragmentation_uses_share_extrapolation() {
        // Raw pmw is flat for nf but its share shrinks, so the rescaled value rises.
        let decades: Vec<i32> = (0..6).map(|i| 1900 + 10 * i).collect();
        let rows: Vec<(i32, Vec<(&str, f64)>)> = decades
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let nf = 0.30 - 0.04 * i as f64;
                let news = 0.10 + 0.04 * i as f64;
                (d, vec![("fic", 0.35), ("mag", 0.25), ("news", news), ("nf", nf)])
            })
            .collect();
        let rows_ref: Vec<(i32, &[(&str, f64)])> = rows.iter().map(|(d, r)| (*d, r.as_slice())).collect();
        let shares = share_table(&rows_ref);
        let flat = [10.0; 6];
        let mut per_genre = BTreeMap::new();
        for g in ["fic", "mag", "news", "nf"] {
            per_genre.insert(g.to_string(), series(g, &flat));
        }
        let f = check_fragmentation(&per_genre, &shares, &cfg()).unwrap();
        assert!(f.detected);
        assert_eq!(f.evidence["rising"], json!(["nf"]));
        assert_eq!(f.evidence["falling"], json!(["news"]));
        let nf0 = f.evidence["extrapolated"]["nf"][0]["value"].as_f64().unwrap();
        assert!((nf0 - 10.0 * 0.25 / 0.30).abs() < 1e-12);
    }

    #[test]
    fn fragmentation_skips_zero_share_points_and_counts_genres() {
        let decades: Vec<i32> = (0..4).map(|i| 1900 + 10 * i).collect();
        let mut shares = quarter_shares(&decades);
        shares.shares.get_mut(&dec(1910)).unwrap().insert("news".into(), 0.0);
        let mut per_genre = BTreeMap::new();
        for g in ["fic", "mag", "news"] {
            per_genre.insert(g.to_string(), series(g, &[4.0, 3.0, 2.0, 1.0]));
        }
        let f = check_fragmentation(&per_genre, &shares, &cfg()).unwrap();
        assert_eq!(f.evidence["skipped_points"]["news"], json!([1910]));
        assert_eq!(f.evidence["extrapolated"]["news"].as_array().unwrap().len(), 3);

        per_genre.remove("fic");
        assert!(matches!(
            check_fragmentation(&per_genre, &shares, &cfg()),
            Err(DiagnosticsError::TooFewGenres { needed: 3, got: 2 })
        ));
    }

    fn one_sentence_index(pairs: &[(&str, &str)]) -> CorpusIndex {
        CorpusIndex::build(vec![Document {
            doc_id: "d".into(),
            year: 1920,
            genre: "fic".into(),
            sentences: vec![Sentence::from_pairs(pairs)],
        }])
    }

    #[test]
    fn position_classification() {
        let cfg = cfg();
        let initial = one_sentence_index(&[
            ("In", "ii"),
            ("order", "nn1"),
            ("that", "cst"),
            ("this", "dd1"),
            ("might", "vm"),
            ("happen", "vvi"),
            ("quickly", "rr"),
            (",", "ycom"),
            ("they", "pphs2"),
            ("must", "vm"),
            ("govern", "vvi"),
        ]);
        let p = parse_pattern("in order that").unwrap();
        let m = &match_pattern(&initial, &p).matches[0];
        assert_eq!(classify_position(&initial, m, &cfg), Position::Initial);

        let final_ = one_sentence_index(&[
            ("he", "pphs1"),
            ("was", "vbdz"),
            ("compelled", "vvn"),
            ("to", "to"),
            ("find", "vvi"),
            ("work", "nn1"),
            ("in", "ii"),
            ("order", "nn1"),
            ("that", "cst"),
            ("he", "pphs1"),
            ("might", "vm"),
            ("eat", "vvi"),
        ]);
        let m = &match_pattern(&final_, &p).matches[0];
        assert_eq!(classify_position(&final_, m, &cfg), Position::NonInitial);

        let quoted = one_sentence_index(&[("\"", "yquo"), ("In", "ii"), ("order", "nn1"), ("that", "cst")]);
        let m = &match_pattern(&quoted, &p).matches[0];
        assert_eq!(classify_position(&quoted, m, &cfg), Position::Initial);

        let mut no_punct = cfg.clone();
        no_punct.punctuation_tags.clear();
        assert_eq!(classify_position(&quoted, m, &no_punct), Position::NonInitial);
        let m0 = &match_pattern(&initial, &p).matches[0];
        assert_eq!(classify_position(&initial, m0, &no_punct), Position::Initial);
    }

    #[test]
    fn negation_window() {
        let idx = one_sentence_index(&[
            ("in", "ii"),
            ("order", "nn1"),
            ("that", "cst"),
            ("she", "pphs1"),
            ("might", "vm"),
            ("not", "xx"),
            ("feel", "vvi"),
        ]);
        let m = &match_pattern(&idx, &parse_pattern("in order that").unwrap()).matches[0];
        assert!(is_negated(&idx, m, &cfg()));
        let mut narrow = cfg();
        narrow.negation_window = 2;
        assert!(!is_negated(&idx, m, &narrow));
    }

    /// Builds a corpus of `decades` decades, each with `plain[i]` plain uses,
    /// `negated[i]` uses followed by "not", and `initial[i]` clause-initial uses.
    fn atrophy_corpus(plain: &[u32], negated: &[u32], initial: &[u32]) -> CorpusIndex {
        let mut text = String::new();
        for (i, ((&p, &n), &ini)) in plain.iter().zip(negated).zip(initial).enumerate() {
            let year = 1900 + 10 * i;
            text.push_str(&format!("#doc id=d{i} year={year} genre=fic\n"));
            for k in 0..(p + n) {
                let neg = k < n;
                let init = k < ini;
                if !init {
                    text.push_str("we\tppis2\nwork\tvv0\n");
                }
                text.push_str("in\tii\norder\tnn1\nthat\tcst\nthey\tpphs2\nmight\tvm\n");
                if neg {
                    text.push_str("not\txx\n");
                }
                text.push_str("rest\tvvi\n.\tystp\n\n");
            }
            for _ in 0..200 {
                text.push_str("filler\tnn1\n");
            }
            text.push('\n');
        }
        CorpusIndex::build(parse_vertical_str(&text).unwrap())
    }

    #[test]
    fn stable_mix_shows_no_atrophy() {
        let plain = [9, 8, 9, 7, 8, 9, 8, 7];
        let negated = [3, 3, 3, 3, 3, 3, 3, 3];
        let initial = [3, 2, 3, 3, 2, 3, 3, 2];
        let idx = atrophy_corpus(&plain, &negated, &initial);
        let ms = match_pattern(&idx, &parse_pattern("in order that").unwrap());
        let f = check_atrophy(&idx, &ms, &cfg()).unwrap();
        assert!(!f.detected, "{}", f.narrative);
        assert_eq!(redetect(&f, &cfg()), Some(false));
    }

    #[test]
    fn vanishing_negated_forms_show_atrophy() {
        let plain = [6, 6, 6, 9, 9, 9, 9, 9, 9, 9];
        let negated = [3, 3, 3, 0, 0, 0, 0, 0, 0, 0];
        let initial = [3, 3, 3, 3, 3, 3, 3, 3, 3, 3];
        let idx = atrophy_corpus(&plain, &negated, &initial);
        let ms = match_pattern(&idx, &parse_pattern("in order that").unwrap());
        let f = check_atrophy(&idx, &ms, &cfg()).unwrap();
        assert!(f.detected, "{}", f.narrative);
        let pos = trend_from(f.evidence.get("position_trend")).unwrap();
        assert!(pos.p_value >= 0.05, "position sub-check should stay quiet");
        assert_eq!(redetect(&f, &cfg()), Some(true));
    }

    #[test]
    fn atrophy_needs_three_decades() {
        let idx = atrophy_corpus(&[5], &[1], &[1]);
        let ms = match_pattern(&idx, &parse_pattern("in order that").unwrap());
        assert!(matches!(
            check_atrophy(&idx, &ms, &cfg()),
            Err(DiagnosticsError::TooFewPoints { needed: 3, got: 1 })
        ));
    }

    #[test]
    fn competitor_verdicts_from_decade_deltas() {
        let target = reconstruct_series("in order that", dec(1900), 19.5, &IN_ORDER_THAT);
        let for_to = reconstruct_series("in order for * to", dec(1900), 2.0, &IN_ORDER_FOR_TO);
        let f = competitor_mirror(&target, &for_to, &cfg()).unwrap();
        assert_eq!(f.verdict, CompetitorVerdict::InsufficientGain);
        assert!((f.total_gain - 1.01).abs() < 1e-9);
        assert!((f.coverage_ratio - 1.01 / 18.06).abs() < 1e-9);

        let so_that = reconstruct_series("so that", dec(1900), 40.0, &SO_THAT);
        let f = competitor_mirror(&target, &so_that, &cfg()).unwrap();
        assert_eq!(f.verdict, CompetitorVerdict::CompetitorAlsoDeclining);

        let so = FrequencySeries::from_pmw("so", &[(dec(1900), 13.87), (dec(1950), 35.99), (dec(2000), 73.88)]).unwrap();
        let f = competitor_mirror(&target, &so, &cfg()).unwrap();
        assert_eq!(f.verdict, CompetitorVerdict::MirrorDetected);
        assert!((f.total_gain - 60.01).abs() < 1e-9);
        assert!((f.target_total_loss + 18.06).abs() < 1e-9);
        assert!(f.rising);
    }

    #[test]
    fn competitor_range_and_direction_errors() {
        let target = reconstruct_series("t", dec(1900), 19.5, &IN_ORDER_THAT);
        let short = FrequencySeries::from_pmw("c", &[(dec(1900), 1.0), (dec(1950), 2.0), (dec(1990), 3.0)]).unwrap();
        assert!(matches!(
            competitor_mirror(&target, &short, &cfg()),
            Err(DiagnosticsError::RangeMismatch(_))
        ));
        let rising = reconstruct_series("r", dec(1900), 1.0, &[1.0; 10]);
        assert!(matches!(
            competitor_mirror(&rising, &target, &cfg()),
            Err(DiagnosticsError::TargetNotDeclining(_))
        ));
    }

    #[test]
    fn small_positive_but_unsteady_gain_is_insufficient() {
        let target = reconstruct_series("t", dec(1900), 19.5, &IN_ORDER_THAT);
        let wobbly = reconstruct_series("w", dec(1900), 5.0, &[8.0, -8.0, 8.0, -8.0, 8.0, -8.0, 8.0, -8.0, 8.0, 1.0]);
        let f = competitor_mirror(&target, &wobbly, &cfg()).unwrap();
        assert!(!f.rising);
        assert_eq!(f.verdict, CompetitorVerdict::InsufficientGain);
    }

    fn finding(symptom: Symptom, detected: bool) -> SymptomFinding {
        SymptomFinding {
            symptom,
            detected,
            evidence: BTreeMap::new(),
            narrative: String::new(),
        }
    }

    #[test]
    fn report_verdicts() {
        let compile = |a, b, c| {
            compile_report(
                "t",
                vec![
                    finding(Symptom::ParadigmaticAtrophy, c),
                    finding(Symptom::NegativeCorrelation, a),
                    finding(Symptom::DistributionalFragmentation, b),
                ],
                vec![],
                cfg(),
                ReportMetadata::default(),
            )
            .unwrap()
        };
        assert_eq!(compile(true, true, false).verdict, Verdict::ObsolescentLikely);
        assert_eq!(compile(true, false, true).verdict, Verdict::ObsolescentLikely);
        assert_eq!(compile(true, false, false).verdict, Verdict::DecliningOnly);
        assert_eq!(compile(false, false, false).verdict, Verdict::NoEvidence);
        assert_eq!(compile(false, true, true).verdict, Verdict::NoEvidence);
        let r = compile(true, true, false);
        assert_eq!(r.findings[0].symptom, Symptom::NegativeCorrelation);

        let err = compile_report(
            "t",
            vec![finding(Symptom::NegativeCorrelation, true)],
            vec![],
            cfg(),
            ReportMetadata::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DiagnosticsError::MissingFinding(Symptom::DistributionalFragmentation)));
    }

    #[test]
    fn report_json_shape_and_replay() {
        let s = reconstruct_series("in order that", dec(1900), 19.5, &IN_ORDER_THAT);
        let f1 = check_negative_correlation(&s, &cfg()).unwrap();
        let r = compile_report(
            "in order that",
            vec![
                f1,
                finding(Symptom::DistributionalFragmentation, true),
                finding(Symptom::ParadigmaticAtrophy, false),
            ],
            vec![],
            cfg(),
            ReportMetadata {
                corpus_hash: Some("abc".into()),
                seed: 42,
                timestamp: None,
            },
        )
        .unwrap();
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["version", "target", "config", "findings", "competitors", "verdict", "metadata"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["verdict"], "OBSOLESCENT_LIKELY");
        assert_eq!(v["findings"][0]["symptom"], "negative_correlation");
        assert_eq!(v["metadata"]["seed"], 42);
        let back: SymptomReport = serde_json::from_str(&r.to_json()).unwrap();
        let replay = compile_report(&back.target, back.findings.clone(), back.competitors.clone(), back.config.clone(), back.metadata.clone()).unwrap();
        assert_eq!(replay.to_json(), r.to_json());
        assert!(r.render_text().contains("Verdict: OBSOLESCENT_LIKELY"));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.negation_window = 0;
        assert!(c.validate().is_err());
    }
}
