use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use obsolens_core::corpus::{corpus_hash, parse_vertical, Decade};
use obsolens_core::diagnostics::{
    check_atrophy, check_fragmentation, compile_report, competitor_mirror, competitor_verdict_label, extrapolate_genre,
    per_genre_series, symptom_battery, CompetitorFinding, ReportMetadata, SymptomFinding,
};
use obsolens_core::index::CorpusIndex;
use obsolens_core::query::{frequency_series, kwic, match_patterns, parse_pattern, write_matches_csv, MatchSet, QueryPattern};
use obsolens_core::stats::{delta_table, draw_sample, kendall_trend, read_series_csv, DeltaTable, FrequencySeries};
use serde_json::{json, Value};

use crate::config::{self, Config};
use crate::error::{CliError, Result};
use crate::output::{fmt_p, fmt_pmw, fmt_tau, key_values, write_json, Format, Table};
use crate::server;
use crate::session::{DecadeBase, Label, SessionHeader, SessionStore, TaskEntry};

#[derive(Debug, Parser)]
#[command(
    name = "obsolens",
    version,
    about = "Diachronic frequency trends and obsolescence diagnostics for POS-tagged corpora"
)]
pub struct Cli {
    /// Configuration file (default: $OBSOLENS_CONFIG, then ./obsolens.toml)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for all random draws (default: from the configuration)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus file in vertical format
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Query pattern; repeat to sum several patterns per decade
    #[arg(long = "pattern", short = 'p', value_name = "PATTERN")]
    pub patterns: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Series CSV with columns decade,count,token_total,pmw; repeatable
    #[arg(long, value_name = "CSV", conflicts_with = "corpus")]
    pub series: Vec<PathBuf>,
    /// Derive the series from a corpus query instead
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long = "pattern", short = 'p', value_name = "PATTERN")]
    pub patterns: Vec<String>,
    /// Restrict a corpus-derived series to one genre
    #[arg(long, requires = "corpus")]
    pub genre: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and summarize its decades, genres and token totals
    Ingest {
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
    },
    /// Per-decade frequencies of one or more patterns, or their concordance
    Query {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        genre: Option<String>,
        /// Print KWIC lines instead of the frequency series
        #[arg(long)]
        concordance: bool,
        /// Context tokens on each side of a KWIC hit
        #[arg(long, default_value_t = 8)]
        width: usize,
        /// Maximum number of KWIC lines
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Kendall trend test of frequency against time
    Trend {
        #[command(flatten)]
        source: SeriesArgs,
        /// Write tidy plot data (decade,series,value) to this file
        #[arg(long, value_name = "CSV")]
        plot_data: Option<PathBuf>,
    },
    /// Decade-to-decade frequency changes and their total
    Deltas {
        #[command(flatten)]
        source: SeriesArgs,
    },
    /// Genre composition of each decade
    Genres {
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
    },
    /// Opposing genre trends after rescaling each genre to a quarter share
    Fragment {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_name = "CSV")]
        plot_data: Option<PathBuf>,
    },
    /// Position and negation profile over time
    Atrophy {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Does a competitor's rise mirror the target's decline?
    Compete {
        /// Target series CSV
        #[arg(long, value_name = "CSV")]
        target: PathBuf,
        /// Competitor series CSV; repeatable
        #[arg(long, value_name = "CSV", required = true)]
        competitor: Vec<PathBuf>,
    },
    /// Draw a seeded random sample of matches per decade
    Sample {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Matches drawn per decade
        #[arg(long, default_value_t = 100)]
        size: usize,
        /// Decade to sample (default: every decade with matches); repeatable
        #[arg(long = "decade", value_name = "YEAR")]
        decades: Vec<i32>,
        #[arg(long, default_value_t = 8)]
        width: usize,
        /// Write an annotation session file
        #[arg(long, value_name = "PATH")]
        session: Option<PathBuf>,
        /// Overwrite an existing session file
        #[arg(long)]
        force: bool,
    },
    /// Annotation sessions
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Full symptom battery and verdict for a target construction
    Report {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Competitor pattern queried on the same corpus; repeatable
        #[arg(long = "competitor-pattern", value_name = "PATTERN")]
        competitor_patterns: Vec<String>,
        /// Competitor series CSV compared with the target's corpus series; repeatable
        #[arg(long = "competitor", value_name = "CSV")]
        competitor_series: Vec<PathBuf>,
        /// Record the current time in the report metadata
        #[arg(long)]
        stamp: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCommand {
    /// Serve the annotation API on 127.0.0.1
    Serve {
        #[arg(long, value_name = "PATH")]
        session: PathBuf,
        #[arg(long, default_value_t = 8400)]
        port: u16,
        /// Directory of static files for the browser front end
        #[arg(long, value_name = "DIR")]
        assets: Option<PathBuf>,
    },
    /// Purposive / non-purposive estimate from a session's labels
    Estimate {
        #[arg(long, value_name = "PATH")]
        session: PathBuf,
    },
    /// Record one label without the HTTP service
    Label {
        #[arg(long, value_name = "PATH")]
        session: PathBuf,
        #[arg(long = "id", value_name = "SAMPLE_ID")]
        sample_id: String,
        #[arg(long)]
        label: String,
        #[arg(long, default_value = "anonymous")]
        annotator: String,
    },
}

struct Ctx {
    cfg: Config,
    seed: u64,
    format: Format,
}

/// Parses `args` (program name first) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(cfg.seed),
        cfg,
        format: cli.format,
    };
    match cli.command {
        Command::Ingest { corpus } => ingest(&ctx, &corpus, out),
        Command::Query {
            corpus,
            genre,
            concordance,
            width,
            limit,
        } => query(&ctx, &corpus, genre.as_deref(), concordance, width, limit, out),
        Command::Trend { source, plot_data } => trend(&ctx, &source, plot_data.as_deref(), out),
        Command::Deltas { source } => deltas(&ctx, &source, out),
        Command::Genres { corpus } => genres(&ctx, &corpus, out),
        Command::Fragment { corpus, plot_data } => fragment(&ctx, &corpus, plot_data.as_deref(), out),
        Command::Atrophy { corpus } => atrophy(&ctx, &corpus, out),
        Command::Compete { target, competitor } => compete(&ctx, &target, &competitor, out),
        Command::Sample {
            corpus,
            size,
            decades,
            width,
            session,
            force,
        } => sample(&ctx, &corpus, size, &decades, width, session.as_deref(), force, out),
        Command::Annotate(cmd) => annotate(&ctx, cmd, out, err),
        Command::Report {
            corpus,
            competitor_patterns,
            competitor_series,
            stamp,
        } => report(&ctx, &corpus, &competitor_patterns, &competitor_series, stamp, out),
    }
}

pub struct LoadedCorpus {
    pub index: CorpusIndex,
    pub hash: String,
}

pub fn load_corpus(path: &Path) -> Result<LoadedCorpus> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })?;
    let docs = parse_vertical(bytes.as_slice()).map_err(|source| CliError::Corpus {
        path: path.to_owned(),
        source,
    })?;
    Ok(LoadedCorpus {
        index: CorpusIndex::build(docs),
        hash: corpus_hash(&bytes),
    })
}

fn read_series(path: &Path) -> Result<FrequencySeries> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_series_csv(label, file).map_err(|source| CliError::Series {
        path: path.to_owned(),
        source,
    })
}

fn resolve_patterns(given: &[String], cfg: &Config) -> Result<Vec<QueryPattern>> {
    let sources = if given.is_empty() { &cfg.patterns } else { given };
    if sources.is_empty() {
        return Err(CliError::Usage("no --pattern given and none configured".into()));
    }
    Ok(sources.iter().map(|p| parse_pattern(p)).collect::<std::result::Result<_, _>>()?)
}

fn pattern_label(patterns: &[QueryPattern]) -> String {
    patterns.iter().map(|p| p.source.as_str()).collect::<Vec<_>>().join(" + ")
}

struct Target {
    corpus: LoadedCorpus,
    patterns: Vec<QueryPattern>,
    label: String,
    matches: MatchSet,
}

fn target(ctx: &Ctx, args: &CorpusArgs) -> Result<Target> {
    let patterns = resolve_patterns(&args.patterns, &ctx.cfg)?;
    let corpus = load_corpus(&args.corpus)?;
    let matches = match_patterns(&corpus.index, &patterns);
    Ok(Target {
        label: pattern_label(&patterns),
        corpus,
        patterns,
        matches,
    })
}

fn series_from_source(ctx: &Ctx, source: &SeriesArgs) -> Result<Vec<FrequencySeries>> {
    if !source.series.is_empty() {
        return source.series.iter().map(|p| read_series(p)).collect();
    }
    let Some(corpus) = &source.corpus else {
        return Err(CliError::Usage("give --series CSV or --corpus with --pattern".into()));
    };
    let t = target(
        ctx,
        &CorpusArgs {
            corpus: corpus.clone(),
            patterns: source.patterns.clone(),
        },
    )?;
    let mut label = t.label.clone();
    if let Some(g) = &source.genre {
        label = format!("{label} [{g}]");
    }
    Ok(vec![frequency_series(label, &t.matches, &t.corpus.index, source.genre.as_deref())])
}

fn decade_span(decades: &[Decade]) -> String {
    match (decades.first(), decades.last()) {
        (Some(a), Some(b)) => format!("{a}-{b} ({})", decades.len()),
        _ => "none".into(),
    }
}

fn ingest(ctx: &Ctx, path: &Path, out: &mut dyn Write) -> Result<()> {
    let c = load_corpus(path)?;
    let idx = &c.index;
    let sentences: usize = idx.documents().iter().map(|d| d.sentences.len()).sum();
    let mut slices = Table::new(["decade", "genre", "tokens", "share"]);
    let mut slice_json = Vec::new();
    for &d in idx.decades() {
        let shares = idx.genre_shares(d).unwrap_or_default();
        for (g, n) in idx.decade_genre_totals(d) {
            let share = shares.get(&g).copied().unwrap_or(0.0);
            slices.push([d.to_string(), g.clone(), n.to_string(), format!("{share:.4}")]);
            slice_json.push(json!({"decade": d, "genre": g, "tokens": n, "share": share}));
        }
    }
    match ctx.format {
        Format::Json => write_json(
            out,
            &json!({
                "documents": idx.documents().len(),
                "sentences": sentences,
                "tokens": idx.total_tokens(),
                "vocabulary": idx.vocabulary_size(),
                "decades": idx.decades(),
                "genres": idx.genres(),
                "sha256": c.hash,
                "slices": slice_json,
            }),
        ),
        Format::Csv => slices.write_csv(out),
        Format::Table => {
            key_values(
                out,
                &[
                    ("documents", idx.documents().len().to_string()),
                    ("sentences", sentences.to_string()),
                    ("tokens", idx.total_tokens().to_string()),
                    ("vocabulary", idx.vocabulary_size().to_string()),
                    ("decades", decade_span(idx.decades())),
                    ("genres", idx.genres().iter().cloned().collect::<Vec<_>>().join(", ")),
                    ("sha256", c.hash.clone()),
                ],
            )?;
            writeln!(out)?;
            slices.render(out)
        }
    }
}

fn series_table(series: &FrequencySeries, precise: bool) -> Table {
    let mut t = Table::new(["decade", "count", "token_total", "pmw"]);
    for p in &series.points {
        let pmw = if precise { p.pmw.to_string() } else { fmt_pmw(p.pmw) };
        t.push([p.decade.to_string(), p.count.to_string(), p.token_total.to_string(), pmw]);
    }
    t
}

fn query(
    ctx: &Ctx,
    args: &CorpusArgs,
    genre: Option<&str>,
    concordance: bool,
    width: usize,
    limit: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let t = target(ctx, args)?;
    let idx = &t.corpus.index;
    if concordance {
        let lines: Vec<_> = t
            .matches
            .iter()
            .filter(|m| genre.is_none_or(|g| m.genre == g))
            .take(limit.unwrap_or(usize::MAX))
            .map(|m| kwic(idx, m, width))
            .collect();
        return match ctx.format {
            Format::Csv => Ok(write_matches_csv(&lines, out)?),
            Format::Json => write_json(out, &lines),
            Format::Table => {
                let mut table = Table::new(["doc_id", "decade", "genre", "line"]);
                for l in &lines {
                    table.push([
                        l.matched.doc_id.clone(),
                        l.matched.decade.to_string(),
                        l.matched.genre.clone(),
                        format!("{} [{}] {}", l.left, l.hit, l.right).trim().to_string(),
                    ]);
                }
                table.render(out)
            }
        };
    }
    let series = frequency_series(t.label.clone(), &t.matches, idx, genre);
    match ctx.format {
        Format::Csv => series_table(&series, true).write_csv(out),
        Format::Json => write_json(
            out,
            &json!({
                "label": series.label,
                "patterns": t.patterns.iter().map(|p| &p.source).collect::<Vec<_>>(),
                "genre": genre,
                "points": series.points,
            }),
        ),
        Format::Table => {
            writeln!(out, "{}", series.label)?;
            series_table(&series, false).render(out)?;
            let total: u64 = series.points.iter().map(|p| p.count).sum();
            writeln!(out, "matches: {total}")?;
            Ok(())
        }
    }
}

fn write_plot_data(path: &Path, rows: &[(Decade, String, f64)]) -> Result<()> {
    let file = File::create(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })?;
    let mut t = Table::new(["decade", "series", "value"]);
    for (d, s, v) in rows {
        t.push([d.to_string(), s.clone(), v.to_string()]);
    }
    let mut w = BufWriter::new(file);
    t.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn trend(ctx: &Ctx, source: &SeriesArgs, plot: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let all = series_from_source(ctx, source)?;
    let mut results = Vec::new();
    for s in &all {
        results.push((s, kendall_trend(s)?));
    }
    if let Some(path) = plot {
        let rows: Vec<_> = all
            .iter()
            .flat_map(|s| s.points.iter().map(move |p| (p.decade, s.label.clone(), p.pmw)))
            .collect();
        write_plot_data(path, &rows)?;
    }
    match ctx.format {
        Format::Json => {
            let v: Vec<Value> = results
                .iter()
                .map(|(s, r)| {
                    json!({"series": s.label, "tau": r.tau, "p_value": r.p_value, "n": r.n,
                           "s_statistic": r.s_statistic, "method": r.method})
                })
                .collect();
            write_json(out, &v)
        }
        Format::Csv => {
            let mut t = Table::new(["series", "n", "s", "tau", "p_value", "method"]);
            for (s, r) in &results {
                t.push([
                    s.label.clone(),
                    r.n.to_string(),
                    r.s_statistic.to_string(),
                    r.tau.to_string(),
                    r.p_value.to_string(),
                    method_name(r),
                ]);
            }
            t.write_csv(out)
        }
        Format::Table => {
            let mut t = Table::new(["series", "n", "S", "tau", "p", "method"]);
            for (s, r) in &results {
                t.push([
                    s.label.clone(),
                    r.n.to_string(),
                    r.s_statistic.to_string(),
                    fmt_tau(r.tau),
                    fmt_p(r.p_value),
                    method_name(r),
                ]);
            }
            t.render(out)
        }
    }
}

fn method_name(r: &obsolens_core::stats::TrendResult) -> String {
    serde_json::to_value(r.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn deltas(ctx: &Ctx, source: &SeriesArgs, out: &mut dyn Write) -> Result<()> {
    let all = series_from_source(ctx, source)?;
    let tables: Vec<(String, DeltaTable)> = all
        .iter()
        .map(|s| Ok((s.label.clone(), delta_table(s)?)))
        .collect::<Result<_>>()?;
    if ctx.format == Format::Json {
        let map: BTreeMap<&str, &DeltaTable> = tables.iter().map(|(l, t)| (l.as_str(), t)).collect();
        return write_json(out, &map);
    }
    let mut rows: BTreeMap<(Decade, Decade), Vec<Option<f64>>> = BTreeMap::new();
    for (i, (_, t)) in tables.iter().enumerate() {
        for r in &t.rows {
            rows.entry((r.from, r.to)).or_insert_with(|| vec![None; tables.len()])[i] = Some(r.delta);
        }
    }
    let cell = |v: Option<f64>| match (v, ctx.format) {
        (Some(v), Format::Csv) => format!("{v:.6}"),
        (Some(v), _) => format!("{v:+.2}"),
        (None, _) => String::new(),
    };
    let mut headers = vec!["from".to_string(), "to".to_string()];
    headers.extend(tables.iter().map(|(l, _)| l.clone()));
    let mut t = Table::new(headers);
    for ((from, to), vals) in rows {
        let mut row = vec![from.to_string(), to.to_string()];
        row.extend(vals.into_iter().map(cell));
        t.push(row);
    }
    let mut total = vec!["total".to_string(), String::new()];
    total.extend(tables.iter().map(|(_, t)| cell(Some(t.total))));
    t.push(total);
    t.emit(ctx.format, out)
}

fn genres(ctx: &Ctx, path: &Path, out: &mut dyn Write) -> Result<()> {
    let c = load_corpus(path)?;
    let table = c.index.share_table();
    if ctx.format == Format::Json {
        return write_json(out, &table);
    }
    let genres: Vec<String> = c.index.genres().iter().cloned().collect();
    let mut headers = vec!["decade".to_string()];
    headers.extend(genres.iter().cloned());
    let mut t = Table::new(headers);
    for (d, row) in &table.shares {
        let mut cells = vec![d.to_string()];
        cells.extend(genres.iter().map(|g| format!("{:.4}", row.get(g).copied().unwrap_or(0.0))));
        t.push(cells);
    }
    t.emit(ctx.format, out)
}

fn trend_cell(v: &Value, key: &str) -> (String, String) {
    let tau = v[key]["tau"].as_f64().map(fmt_tau).unwrap_or_default();
    let p = v[key]["p_value"].as_f64().map(fmt_p).unwrap_or_default();
    (tau, p)
}

fn finding_footer(out: &mut dyn Write, f: &SymptomFinding) -> Result<()> {
    writeln!(out)?;
    writeln!(out, "detected: {}", if f.detected { "yes" } else { "no" })?;
    writeln!(out, "{}", f.narrative)?;
    Ok(())
}

fn fragment(ctx: &Ctx, args: &CorpusArgs, plot: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let t = target(ctx, args)?;
    let idx = &t.corpus.index;
    let per_genre = per_genre_series(&t.label, &t.matches, idx);
    let shares = idx.share_table();
    let finding = check_fragmentation(&per_genre, &shares, &ctx.cfg.diagnostics())?;
    if let Some(path) = plot {
        let rows: Vec<_> = per_genre
            .iter()
            .flat_map(|(g, s)| {
                extrapolate_genre(g, s, &shares)
                    .points
                    .into_iter()
                    .map(move |(d, v)| (d, g.clone(), v))
            })
            .collect();
        write_plot_data(path, &rows)?;
    }
    if ctx.format == Format::Json {
        return write_json(out, &finding);
    }
    let trends = &finding.evidence["genre_trends"];
    let direction = |g: &str| {
        let has = |k: &str| finding.evidence[k].as_array().is_some_and(|a| a.iter().any(|v| v == g));
        if has("rising") {
            "rising"
        } else if has("falling") {
            "falling"
        } else {
            "no trend"
        }
    };
    let mut table = Table::new(["genre", "n", "tau", "p", "trend"]);
    for g in per_genre.keys() {
        let Some(v) = trends.get(g) else {
            table.push([g.clone(), String::new(), String::new(), String::new(), "excluded".into()]);
            continue;
        };
        let n = v["n"].as_u64().unwrap_or(0).to_string();
        let (tau, p) = trend_cell(trends, g);
        let (tau, p) = if ctx.format == Format::Csv {
            (v["tau"].to_string(), v["p_value"].to_string())
        } else {
            (tau, p)
        };
        table.push([g.clone(), n, tau, p, direction(g).into()]);
    }
    table.emit(ctx.format, out)?;
    if ctx.format == Format::Table {
        finding_footer(out, &finding)?;
    }
    Ok(())
}

fn atrophy(ctx: &Ctx, args: &CorpusArgs, out: &mut dyn Write) -> Result<()> {
    let t = target(ctx, args)?;
    let finding = check_atrophy(&t.corpus.index, &t.matches, &ctx.cfg.diagnostics())?;
    if ctx.format == Format::Json {
        return write_json(out, &finding);
    }
    let mut table = Table::new(["decade", "matches", "initial", "negated"]);
    for row in finding.evidence["per_decade"].as_array().into_iter().flatten() {
        table.push(["decade", "matches", "initial", "negated"].map(|k| row[k].to_string()));
    }
    table.emit(ctx.format, out)?;
    if ctx.format == Format::Table {
        writeln!(out)?;
        let ev = serde_json::to_value(&finding.evidence)?;
        let mut rows = Vec::new();
        for (name, key) in [
            ("initial share", "position_trend"),
            ("negated share", "negated_share_trend"),
            ("negated pmw", "negated_pmw_trend"),
            ("overall pmw", "overall_trend"),
        ] {
            let (tau, p) = trend_cell(&ev, key);
            rows.push((name, format!("tau {tau}  p {p}")));
        }
        key_values(out, &rows)?;
        finding_footer(out, &finding)?;
    }
    Ok(())
}

fn competitor_table(findings: &[CompetitorFinding], precise: bool) -> Table {
    let num = |v: f64, digits: usize| if precise { v.to_string() } else { format!("{v:.digits$}") };
    let mut t = Table::new([
        "competitor",
        "total_gain",
        "target_loss",
        "coverage_ratio",
        "tau",
        "p",
        "delta_mirror_tau",
        "verdict",
    ]);
    for f in findings {
        t.push([
            f.competitor_label.clone(),
            num(f.total_gain, 2),
            num(f.target_total_loss, 2),
            num(f.coverage_ratio, 3),
            if precise { f.trend.tau.to_string() } else { fmt_tau(f.trend.tau) },
            if precise { f.trend.p_value.to_string() } else { fmt_p(f.trend.p_value) },
            f.delta_mirror_tau.map(|v| num(v, 4)).unwrap_or_default(),
            competitor_verdict_label(f.verdict).to_string(),
        ]);
    }
    t
}

fn compete(ctx: &Ctx, target: &Path, competitors: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let target = read_series(target)?;
    let cfg = ctx.cfg.diagnostics();
    let findings: Vec<CompetitorFinding> = competitors
        .iter()
        .map(|p| Ok(competitor_mirror(&target, &read_series(p)?, &cfg)?))
        .collect::<Result<_>>()?;
    match ctx.format {
        Format::Json => write_json(out, &findings),
        Format::Csv => competitor_table(&findings, true).write_csv(out),
        Format::Table => {
            writeln!(out, "target: {}", target.label)?;
            competitor_table(&findings, false).render(out)
        }
    }
}

fn session_id(hash: &str, patterns: &[String], seed: u64, size: usize, decades: &[Decade]) -> String {
    let key = json!({"corpus": hash, "patterns": patterns, "seed": seed, "size": size, "decades": decades});
    corpus_hash(key.to_string().as_bytes())[..16].to_string()
}

#[allow(clippy::too_many_arguments)]
fn sample(
    ctx: &Ctx,
    args: &CorpusArgs,
    size: usize,
    decades: &[i32],
    width: usize,
    session: Option<&Path>,
    force: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let t = target(ctx, args)?;
    let idx = &t.corpus.index;
    let overall = frequency_series(t.label.clone(), &t.matches, idx, None);
    let chosen: Vec<Decade> = if decades.is_empty() {
        overall.points.iter().filter(|p| p.count > 0).map(|p| p.decade).collect()
    } else {
        decades
            .iter()
            .map(|&y| Decade::new(y).ok_or_else(|| CliError::Usage(format!("{y} is not a decade start year"))))
            .collect::<Result<_>>()?
    };
    let mut tasks = Vec::new();
    let mut bases = Vec::new();
    for &d in &chosen {
        let in_decade: Vec<_> = t.matches.in_decade(d).cloned().collect();
        if in_decade.is_empty() {
            return Err(CliError::Usage(format!("no matches in decade {d}")));
        }
        // Each decade gets its own stream so adding a decade leaves the others unchanged.
        let drawn = draw_sample(&in_decade, size, ctx.seed.wrapping_add(d.start_year() as u64))?;
        for s in drawn {
            tasks.push(TaskEntry {
                sample_id: format!("{d}-{}", s.sample_id),
                decade: d,
                concordance: kwic(idx, &s.item, width),
            });
        }
        let p = overall.get(d).expect("decade comes from the corpus");
        bases.push(DecadeBase {
            decade: d,
            total_pmw: p.pmw,
            match_count: p.count,
            token_total: p.token_total,
        });
    }

    if let Some(path) = session {
        let sources: Vec<String> = t.patterns.iter().map(|p| p.source.clone()).collect();
        let header = SessionHeader {
            session_id: session_id(&t.corpus.hash, &sources, ctx.seed, size, &chosen),
            patterns: sources,
            seed: ctx.seed,
            corpus_hash: t.corpus.hash.clone(),
            sample_size: size,
            decades: bases,
        };
        let id = header.session_id.clone();
        let n = tasks.len();
        SessionStore::create(path, header, tasks.clone(), force)?;
        if ctx.format == Format::Table {
            writeln!(out, "session {id}: {n} tasks written to {}", path.display())?;
            return Ok(());
        }
    }
    match ctx.format {
        Format::Json => write_json(out, &tasks),
        _ => {
            let mut table = Table::new(["sample_id", "decade", "genre", "doc_id", "line"]);
            for task in &tasks {
                let c = &task.concordance;
                table.push([
                    task.sample_id.clone(),
                    task.decade.to_string(),
                    c.matched.genre.clone(),
                    c.matched.doc_id.clone(),
                    format!("{} [{}] {}", c.left, c.hit, c.right).trim().to_string(),
                ]);
            }
            table.emit(ctx.format, out)
        }
    }
}

fn annotate(ctx: &Ctx, cmd: AnnotateCommand, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        AnnotateCommand::Serve { session, port, assets } => {
            let store = SessionStore::open(&session)?;
            if store.progress().pending == 0 {
                writeln!(err, "warning: session has no pending tasks")?;
            }
            let id = store.header().session_id.clone();
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(async move {
                let listener = server::bind(port).await?;
                let addr = listener.local_addr()?;
                writeln!(out, "serving session {id} on http://{addr} (Ctrl-C to stop)")?;
                out.flush()?;
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                server::serve(listener, Arc::new(tokio::sync::RwLock::new(store)), assets, shutdown).await
            })
        }
        AnnotateCommand::Estimate { session } => {
            let store = SessionStore::open(&session)?;
            let rows = store.estimates();
            if ctx.format == Format::Json {
                return write_json(out, &rows);
            }
            let precise = ctx.format == Format::Csv;
            let num = |v: Option<f64>| match v {
                Some(v) if precise => v.to_string(),
                Some(v) => fmt_pmw(v),
                None => String::new(),
            };
            let mut t = Table::new([
                "decade",
                "sample_size",
                "k_purposive",
                "unclear",
                "pending",
                "total_pmw",
                "purposive_pmw",
                "non_purposive_pmw",
            ]);
            for r in &rows {
                t.push([
                    r.decade.to_string(),
                    r.sample_size.to_string(),
                    r.k_purposive.to_string(),
                    r.unclear.to_string(),
                    r.pending.to_string(),
                    num(Some(r.total_pmw)),
                    num(r.purposive_pmw),
                    num(r.non_purposive_pmw),
                ]);
            }
            t.emit(ctx.format, out)
        }
        AnnotateCommand::Label {
            session,
            sample_id,
            label,
            annotator,
        } => {
            let label: Label = label.parse()?;
            let mut store = SessionStore::open(&session)?;
            let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
            let rec = store.record(&sample_id, label, &annotator, now)?;
            if ctx.format == Format::Json {
                write_json(out, &rec)
            } else {
                writeln!(out, "{} -> {}", rec.sample_id, serde_json::to_value(rec.label)?.as_str().unwrap_or(""))?;
                Ok(())
            }
        }
    }
}

fn report(
    ctx: &Ctx,
    args: &CorpusArgs,
    competitor_patterns: &[String],
    competitor_series: &[PathBuf],
    stamp: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let t = target(ctx, args)?;
    let idx = &t.corpus.index;
    let cfg = ctx.cfg.diagnostics();
    let findings = symptom_battery(&t.label, &t.matches, idx, &cfg)?;
    let target_series = frequency_series(t.label.clone(), &t.matches, idx, None);
    let mut competitors = Vec::new();
    for p in competitor_patterns {
        let pattern = parse_pattern(p)?;
        let ms = match_patterns(idx, std::slice::from_ref(&pattern));
        let series = frequency_series(pattern.source.clone(), &ms, idx, None);
        competitors.push(competitor_mirror(&target_series, &series, &cfg)?);
    }
    for path in competitor_series {
        competitors.push(competitor_mirror(&target_series, &read_series(path)?, &cfg)?);
    }
    let metadata = ReportMetadata {
        corpus_hash: Some(t.corpus.hash.clone()),
        seed: ctx.seed,
        timestamp: stamp.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    };
    let report = compile_report(&t.label, findings, competitors, cfg, metadata)?;
    match ctx.format {
        Format::Json => {
            out.write_all(report.to_json().as_bytes())?;
            writeln!(out)?;
            Ok(())
        }
        Format::Table => Ok(out.write_all(report.render_text().as_bytes())?),
        Format::Csv => {
            let mut table = Table::new(["symptom", "detected"]);
            for f in &report.findings {
                let name = serde_json::to_value(f.symptom)?;
                table.push([name.as_str().unwrap_or("").to_string(), f.detected.to_string()]);
            }
            let verdict = serde_json::to_value(report.verdict)?;
            table.push(["verdict".to_string(), verdict.as_str().unwrap_or("").to_string()]);
            table.write_csv(out)
        }
    }
}
