//! Numeric procedures over decade-indexed frequency series.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus::Decade;

/// Largest n for which exact p-values are used by [`kendall_trend`].
pub const EXACT_MAX_N: usize = 30;
/// n! must fit in a u128.
const EXACT_LIMIT_N: usize = 33;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("token total is zero")]
    ZeroDenominator,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("S statistic {s} impossible for n = {n}")]
    InvalidStatistic { n: usize, s: i64 },
    #[error("exact distribution unsupported for n = {0}")]
    ExactTooLarge(usize),
    #[error("decades {from} and {to} are not consecutive")]
    NonConsecutiveDecades { from: Decade, to: Decade },
    #[error("decades must be strictly increasing ({0} repeats or goes backwards)")]
    UnorderedDecades(Decade),
    #[error("genre share must be in (0, 1], got {0}")]
    ZeroShare(f64),
    #[error("cannot sample from an empty match set")]
    EmptyMatchSet,
    #[error("sample size must be at least 1")]
    InvalidSampleSize,
    #[error("invalid purposive counts k = {k}, n = {n}")]
    InvalidCounts { k: u64, n: u64 },
    #[error("series csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("series csv row {row}: {reason}")]
    BadSeriesRow { row: usize, reason: String },
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

pub fn per_million(count: u64, token_total: u64) -> Result<f64> {
    if token_total == 0 {
        return Err(StatsError::ZeroDenominator);
    }
    Ok(count as f64 / token_total as f64 * 1e6)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub decade: Decade,
    pub count: u64,
    pub token_total: u64,
    pub pmw: f64,
}

impl FrequencyPoint {
    pub fn from_counts(decade: Decade, count: u64, token_total: u64) -> Result<Self> {
        Ok(Self {
            decade,
            count,
            token_total,
            pmw: per_million(count, token_total)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub label: String,
    pub points: Vec<FrequencyPoint>,
}

impl FrequencySeries {
    pub fn new(label: impl Into<String>, points: Vec<FrequencyPoint>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].decade <= w[0].decade {
                return Err(StatsError::UnorderedDecades(w[1].decade));
            }
        }
        Ok(Self {
            label: label.into(),
            points,
        })
    }

    /// Series of bare pmw values with no underlying counts.
    pub fn from_pmw(label: impl Into<String>, values: &[(Decade, f64)]) -> Result<Self> {
        let points = values
            .iter()
            .map(|&(decade, pmw)| FrequencyPoint {
                decade,
                count: 0,
                token_total: 0,
                pmw,
            })
            .collect();
        Self::new(label, points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.pmw).collect()
    }

    pub fn decades(&self) -> Vec<Decade> {
        self.points.iter().map(|p| p.decade).collect()
    }

    pub fn get(&self, decade: Decade) -> Option<&FrequencyPoint> {
        self.points
            .binary_search_by_key(&decade, |p| p.decade)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Pointwise sum of series over the union of their decades. Parts must
    /// share denominators (same corpus and genre filter); the first token
    /// total seen for a decade is kept.
    pub fn sum(label: impl Into<String>, parts: &[FrequencySeries]) -> Self {
        let mut acc: std::collections::BTreeMap<Decade, FrequencyPoint> = Default::default();
        for s in parts {
            for p in &s.points {
                acc.entry(p.decade)
                    .and_modify(|q| {
                        q.count += p.count;
                        q.pmw += p.pmw;
                    })
                    .or_insert(*p);
            }
        }
        Self {
            label: label.into(),
            points: acc.into_values().collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    decade: i32,
    count: u64,
    token_total: u64,
    pmw: f64,
}

/// Reads `decade,count,token_total,pmw` CSV (header required).
pub fn read_series_csv<R: Read>(label: impl Into<String>, reader: R) -> Result<FrequencySeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["decade", "count", "token_total", "pmw"];
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(StatsError::BadSeriesRow {
            row: 0,
            reason: format!("header must be {}", expected.join(",")),
        });
    }
    let mut points = Vec::new();
    for (i, row) in rdr.deserialize::<SeriesRow>().enumerate() {
        let row = row?;
        let decade = Decade::new(row.decade).ok_or_else(|| StatsError::BadSeriesRow {
            row: i + 1,
            reason: format!("{} is not a decade start", row.decade),
        })?;
        if !row.pmw.is_finite() || row.pmw < 0.0 {
            return Err(StatsError::BadSeriesRow {
                row: i + 1,
                reason: format!("pmw {} must be finite and non-negative", row.pmw),
            });
        }
        points.push(FrequencyPoint {
            decade,
            count: row.count,
            token_total: row.token_total,
            pmw: row.pmw,
        });
    }
    FrequencySeries::new(label, points)
}

pub fn write_series_csv<W: Write>(series: &FrequencySeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in &series.points {
        wtr.serialize(SeriesRow {
            decade: p.decade.start_year(),
            count: p.count,
            token_total: p.token_total,
            pmw: p.pmw,
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub tau: f64,
    pub p_value: f64,
    pub n: usize,
    pub s_statistic: i64,
    pub method: PMethod,
}

impl TrendResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Pair counts behind Kendall's tau-b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallCounts {
    pub n: usize,
    pub s: i64,
    pub tau_b: f64,
    pub ties_x: bool,
    pub ties_y: bool,
    variance: f64,
}

/// Kendall's tau-b by direct pair enumeration; series here are short.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> KendallCounts {
    assert_eq!(x.len(), y.len(), "kendall_tau_b: length mismatch");
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = sign(x[j] - x[i]);
            let dy = sign(y[j] - y[i]);
            s += dx * dy;
        }
    }
    let tx = tie_groups(x);
    let ty = tie_groups(y);
    let n0 = (n * n.saturating_sub(1) / 2) as f64;
    let pairs = |g: &[usize]| g.iter().map(|&t| (t * (t - 1) / 2) as f64).sum::<f64>();
    let (n1, n2) = (pairs(&tx), pairs(&ty));
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    let tau_b = if denom > 0.0 { s as f64 / denom } else { 0.0 };

    // Tie-corrected variance of S.
    let nf = n as f64;
    let v = |g: &[usize], f: fn(f64) -> f64| g.iter().map(|&t| f(t as f64)).sum::<f64>();
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let vt = v(&tx, |t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = v(&ty, |t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = v(&tx, |t| t * (t - 1.0)) * v(&ty, |t| t * (t - 1.0));
    let v2 = v(&tx, |t| t * (t - 1.0) * (t - 2.0)) * v(&ty, |t| t * (t - 1.0) * (t - 2.0));
    let mut variance = (v0 - vt - vu) / 18.0;
    if n >= 2 {
        variance += v1 / (2.0 * nf * (nf - 1.0));
    }
    if n >= 3 {
        variance += v2 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }

    KendallCounts {
        n,
        s,
        tau_b,
        ties_x: !tx.is_empty(),
        ties_y: !ty.is_empty(),
        variance,
    }
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sizes of groups of equal values (only groups of size >= 2).
fn tie_groups(v: &[f64]) -> Vec<usize> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut groups = Vec::new();
    let mut run = 1usize;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            if run > 1 {
                groups.push(run);
            }
            run = 1;
        }
    }
    if run > 1 {
        groups.push(run);
    }
    groups
}

/// Kendall trend between decade order and pmw values.
pub fn kendall_trend(series: &FrequencySeries) -> Result<TrendResult> {
    let y = series.values();
    let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    trend_of(&x, &y)
}

/// Trend test on arbitrary (x, y) pairs; x is typically time.
pub fn trend_of(x: &[f64], y: &[f64]) -> Result<TrendResult> {
    let n = y.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints { needed: 3, got: n });
    }
    let k = kendall_tau_b(x, y);
    let (p_value, method) = if !k.ties_x && !k.ties_y && n <= EXACT_MAX_N {
        (exact_p_value(n, k.s)?, PMethod::Exact)
    } else {
        (normal_p_value(k.s, k.variance), PMethod::NormalApprox)
    };
    Ok(TrendResult {
        tau: k.tau_b,
        p_value,
        n,
        s_statistic: k.s,
        method,
    })
}

fn normal_p_value(s: i64, variance: f64) -> f64 {
    if variance <= 0.0 {
        return 1.0;
    }
    let z = s as f64 / variance.sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Number of permutations of n elements with exactly k inversions, k = 0..=n(n-1)/2.
pub fn mahonian_row(n: usize) -> Vec<u128> {
    let mut row = vec![1u128];
    for m in 2..=n {
        let max_k = m * (m - 1) / 2;
        let mut prefix = Vec::with_capacity(row.len() + 1);
        prefix.push(0u128);
        for &v in &row {
            prefix.push(prefix.last().unwrap() + v);
        }
        // T(m, k) = sum_{j=0}^{min(k, m-1)} T(m-1, k-j)
        let next = (0..=max_k)
            .map(|k| {
                let hi = k.min(row.len() - 1);
                let lo = k.saturating_sub(m - 1);
                if lo > hi {
                    0
                } else {
                    prefix[hi + 1] - prefix[lo]
                }
            })
            .collect();
        row = next;
    }
    row
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Two-sided P(|S| >= |s|) under the uniform-permutation null, no ties.
pub fn exact_p_value(n: usize, s: i64) -> Result<f64> {
    if n > EXACT_LIMIT_N {
        return Err(StatsError::ExactTooLarge(n));
    }
    let max_pairs = (n * n.saturating_sub(1) / 2) as i64;
    if s.abs() > max_pairs {
        return Err(StatsError::InvalidStatistic { n, s });
    }
    let row = mahonian_row(n);
    // S = n0 - 2 * inversions
    let tail: u128 = row
        .iter()
        .enumerate()
        .filter(|&(k, _)| (max_pairs - 2 * k as i64).abs() >= s.abs())
        .map(|(_, &c)| c)
        .sum();
    Ok(tail as f64 / factorial(n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub from: Decade,
    pub to: Decade,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
    pub total: f64,
}

pub fn delta_table(series: &FrequencySeries) -> Result<DeltaTable> {
    let pts = &series.points;
    if pts.len() < 2 {
        return Err(StatsError::TooFewPoints { needed: 2, got: pts.len() });
    }
    let mut rows = Vec::with_capacity(pts.len() - 1);
    for w in pts.windows(2) {
        if w[1].decade != w[0].decade.next() {
            return Err(StatsError::NonConsecutiveDecades {
                from: w[0].decade,
                to: w[1].decade,
            });
        }
        rows.push(DeltaRow {
            from: w[0].decade,
            to: w[1].decade,
            delta: w[1].pmw - w[0].pmw,
        });
    }
    let total = pts[pts.len() - 1].pmw - pts[0].pmw;
    Ok(DeltaTable { rows, total })
}

/// Rebuilds a series from a baseline and successive decade-to-decade deltas.
pub fn reconstruct_series(label: impl Into<String>, first: Decade, baseline: f64, deltas: &[f64]) -> FrequencySeries {
    let mut points = Vec::with_capacity(deltas.len() + 1);
    let mut decade = first;
    let mut value = baseline;
    points.push(FrequencyPoint {
        decade,
        count: 0,
        token_total: 0,
        pmw: value,
    });
    for d in deltas {
        decade = decade.next();
        value += d;
        points.push(FrequencyPoint {
            decade,
            count: 0,
            token_total: 0,
            pmw: value,
        });
    }
    FrequencySeries {
        label: label.into(),
        points,
    }
}

/// Rescales a genre's pmw as if that genre were a quarter of the corpus.
pub fn extrapolate(pmw: f64, share: f64) -> Result<f64> {
    if !(share > 0.0 && share <= 1.0) {
        return Err(StatsError::ZeroShare(share));
    }
    Ok(pmw * 0.25 / share)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampled<T> {
    pub sample_id: String,
    pub source_index: usize,
    pub item: T,
}

/// Uniform sample of `n` items without replacement, returned in source order.
///
/// Uses xoshiro256++ seeded through `seed_from_u64`, so a seed and an input
/// order fully determine the result.
pub fn draw_sample<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<Sampled<T>>> {
    if n == 0 {
        return Err(StatsError::InvalidSampleSize);
    }
    if items.is_empty() {
        return Err(StatsError::EmptyMatchSet);
    }
    let mut picked: Vec<usize> = if n >= items.len() {
        (0..items.len()).collect()
    } else {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, items.len(), n).into_vec()
    };
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| Sampled {
            sample_id: format!("m{i:06}"),
            source_index: i,
            item: items[i].clone(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurposiveEstimate {
    pub decade: Decade,
    pub sample_size: u64,
    pub k_purposive: u64,
    pub total_pmw: f64,
    pub purposive_pmw: f64,
    pub non_purposive_pmw: f64,
}

/// Splits a total frequency by the purposive share observed in a labeled sample.
pub fn estimate_purposive(decade: Decade, total_pmw: f64, k: u64, n: u64) -> Result<PurposiveEstimate> {
    if n == 0 || k > n {
        return Err(StatsError::InvalidCounts { k, n });
    }
    let purposive_pmw = total_pmw * k as f64 / n as f64;
    Ok(PurposiveEstimate {
        decade,
        sample_size: n,
        k_purposive: k,
        total_pmw,
        purposive_pmw,
        non_purposive_pmw: total_pmw - purposive_pmw,
    })
}
