//! Annotation sessions stored as one append-only JSON-lines file.
//!
//! The first line describes the session, task lines follow, and every
//! label is appended as its own line. Reopening replays the log; the most
//! recent label for a sample wins while older ones stay in the file.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use obsolens_core::corpus::Decade;
use obsolens_core::query::ConcordanceLine;
use obsolens_core::stats::{estimate_purposive, PurposiveEstimate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session file {} not found", .0.display())]
    NotFound(PathBuf),
    #[error("session file {} already exists", .0.display())]
    AlreadyExists(PathBuf),
    #[error("{}:{line}: {reason}", path.display())]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("duplicate sample id {0}")]
    DuplicateTask(String),
    #[error("sample {0} is not part of this session")]
    UnknownTask(String),
    #[error("unknown label `{0}` (expected purposive, non_purposive or unclear)")]
    BadLabel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Purposive,
    NonPurposive,
    Unclear,
}

impl std::str::FromStr for Label {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "purposive" => Ok(Label::Purposive),
            "non_purposive" => Ok(Label::NonPurposive),
            "unclear" => Ok(Label::Unclear),
            other => Err(SessionError::BadLabel(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Labeled,
}

/// Per-decade frequency of the sampled construction, the base of estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecadeBase {
    pub decade: Decade,
    pub total_pmw: f64,
    pub match_count: u64,
    pub token_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub patterns: Vec<String>,
    pub seed: u64,
    pub corpus_hash: String,
    pub sample_size: usize,
    pub decades: Vec<DecadeBase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub sample_id: String,
    pub decade: Decade,
    pub concordance: ConcordanceLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub sample_id: String,
    pub concordance: ConcordanceLine,
    pub decade: Decade,
    pub status: TaskStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub label: Label,
    pub annotator: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Session(SessionHeader),
    Task(TaskEntry),
    Annotation(AnnotationRecord),
}

/// Estimate for one decade; the pmw fields are absent until something is labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecadeEstimate {
    pub decade: Decade,
    pub sample_size: u64,
    pub k_purposive: u64,
    pub unclear: u64,
    pub pending: u64,
    pub total_pmw: f64,
    pub purposive_pmw: Option<f64>,
    pub non_purposive_pmw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub labeled: usize,
    pub pending: usize,
    pub purposive: usize,
    pub non_purposive: usize,
    pub unclear: usize,
}

#[derive(Debug)]
pub struct SessionStore {
    path: PathBuf,
    header: SessionHeader,
    tasks: Vec<TaskEntry>,
    by_id: HashMap<String, usize>,
    records: HashMap<String, AnnotationRecord>,
    log: File,
}

fn line_of<T: Serialize>(event: &T) -> String {
    let mut s = serde_json::to_string(event).expect("session events serialize");
    s.push('\n');
    s
}

impl SessionStore {
    /// Writes a fresh session file. Refuses to overwrite unless `overwrite`.
    pub fn create(path: &Path, header: SessionHeader, tasks: Vec<TaskEntry>, overwrite: bool) -> Result<Self, SessionError> {
        let mut by_id = HashMap::new();
        for (i, t) in tasks.iter().enumerate() {
            if by_id.insert(t.sample_id.clone(), i).is_some() {
                return Err(SessionError::DuplicateTask(t.sample_id.clone()));
            }
        }
        let mut opts = OpenOptions::new();
        opts.write(true);
        if overwrite {
            opts.create(true).truncate(true);
        } else {
            opts.create_new(true);
        }
        let mut file = opts.open(path).map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => SessionError::AlreadyExists(path.to_owned()),
            _ => SessionError::Io(e),
        })?;
        let mut buf = line_of(&Event::Session(header.clone()));
        for t in &tasks {
            buf.push_str(&line_of(&Event::Task(t.clone())));
        }
        file.write_all(buf.as_bytes())?;
        file.sync_data()?;
        let log = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            path: path.to_owned(),
            header,
            tasks,
            by_id,
            records: HashMap::new(),
            log,
        })
    }

    /// Replays a session log. A final line cut short by a crash is ignored.
    pub fn open(path: &Path) -> Result<Self, SessionError> {
        let file = File::open(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => SessionError::NotFound(path.to_owned()),
            _ => SessionError::Io(e),
        })?;
        let corrupt = |line: usize, reason: String| SessionError::Corrupt {
            path: path.to_owned(),
            line,
            reason,
        };
        let mut header = None;
        let mut tasks = Vec::new();
        let mut by_id = HashMap::new();
        let mut records = HashMap::new();
        let mut reader = BufReader::new(file);
        let mut raw = String::new();
        let mut lineno = 0;
        loop {
            raw.clear();
            if reader.read_line(&mut raw)? == 0 {
                break;
            }
            lineno += 1;
            let complete = raw.ends_with('\n');
            let text = raw.trim_end();
            if text.is_empty() {
                continue;
            }
            let event: Event = match serde_json::from_str(text) {
                Ok(ev) => ev,
                Err(_) if !complete => break,
                Err(e) => return Err(corrupt(lineno, e.to_string())),
            };
            match event {
                Event::Session(h) if header.is_none() && lineno == 1 => header = Some(h),
                Event::Session(_) => return Err(corrupt(lineno, "unexpected session header".into())),
                _ if header.is_none() => return Err(corrupt(lineno, "missing session header".into())),
                Event::Task(t) => {
                    if by_id.insert(t.sample_id.clone(), tasks.len()).is_some() {
                        return Err(corrupt(lineno, format!("duplicate sample id {}", t.sample_id)));
                    }
                    tasks.push(t);
                }
                Event::Annotation(r) => {
                    if !by_id.contains_key(&r.sample_id) {
                        return Err(corrupt(lineno, format!("label for unknown sample {}", r.sample_id)));
                    }
                    records.insert(r.sample_id.clone(), r);
                }
            }
        }
        let header = header.ok_or_else(|| corrupt(0, "empty session file".into()))?;
        let log = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            path: path.to_owned(),
            header,
            tasks,
            by_id,
            records,
            log,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    /// Appends a label and flushes it to disk before updating memory.
    pub fn record(&mut self, sample_id: &str, label: Label, annotator: &str, timestamp: String) -> Result<AnnotationRecord, SessionError> {
        if !self.by_id.contains_key(sample_id) {
            return Err(SessionError::UnknownTask(sample_id.to_owned()));
        }
        let rec = AnnotationRecord {
            sample_id: sample_id.to_owned(),
            label,
            annotator: annotator.to_owned(),
            timestamp,
        };
        self.log.write_all(line_of(&Event::Annotation(rec.clone())).as_bytes())?;
        self.log.sync_data()?;
        self.records.insert(rec.sample_id.clone(), rec.clone());
        Ok(rec)
    }

    fn view(&self, t: &TaskEntry) -> AnnotationTask {
        let label = self.records.get(&t.sample_id).map(|r| r.label);
        AnnotationTask {
            sample_id: t.sample_id.clone(),
            concordance: t.concordance.clone(),
            decade: t.decade,
            status: if label.is_some() { TaskStatus::Labeled } else { TaskStatus::Pending },
            label,
        }
    }

    pub fn task(&self, sample_id: &str) -> Option<AnnotationTask> {
        self.by_id.get(sample_id).map(|&i| self.view(&self.tasks[i]))
    }

    /// Tasks in session order, optionally filtered by status.
    pub fn tasks(&self, status: Option<TaskStatus>) -> Vec<AnnotationTask> {
        self.tasks
            .iter()
            .map(|t| self.view(t))
            .filter(|t| status.is_none_or(|s| t.status == s))
            .collect()
    }

    pub fn record_for(&self, sample_id: &str) -> Option<&AnnotationRecord> {
        self.records.get(sample_id)
    }

    pub fn progress(&self) -> Progress {
        let mut counts: HashMap<Label, usize> = HashMap::new();
        for r in self.records.values() {
            *counts.entry(r.label).or_default() += 1;
        }
        let labeled = self.records.len();
        Progress {
            total: self.tasks.len(),
            labeled,
            pending: self.tasks.len() - labeled,
            purposive: counts.get(&Label::Purposive).copied().unwrap_or(0),
            non_purposive: counts.get(&Label::NonPurposive).copied().unwrap_or(0),
            unclear: counts.get(&Label::Unclear).copied().unwrap_or(0),
        }
    }

    /// Estimate for one decade from this session's labels; unclear labels
    /// count toward neither k nor n. `None` if the decade is not in the session.
    pub fn estimate(&self, decade: Decade) -> Option<DecadeEstimate> {
        let base = self.header.decades.iter().find(|d| d.decade == decade)?;
        let (mut k, mut n, mut unclear, mut pending) = (0u64, 0u64, 0u64, 0u64);
        for t in self.tasks.iter().filter(|t| t.decade == decade) {
            match self.records.get(&t.sample_id).map(|r| r.label) {
                Some(Label::Purposive) => {
                    k += 1;
                    n += 1;
                }
                Some(Label::NonPurposive) => n += 1,
                Some(Label::Unclear) => unclear += 1,
                None => pending += 1,
            }
        }
        let est: Option<PurposiveEstimate> = estimate_purposive(decade, base.total_pmw, k, n).ok();
        Some(DecadeEstimate {
            decade,
            sample_size: n,
            k_purposive: k,
            unclear,
            pending,
            total_pmw: base.total_pmw,
            purposive_pmw: est.map(|e| e.purposive_pmw),
            non_purposive_pmw: est.map(|e| e.non_purposive_pmw),
        })
    }

    pub fn estimates(&self) -> Vec<DecadeEstimate> {
        self.header.decades.iter().filter_map(|d| self.estimate(d.decade)).collect()
    }

    /// Tasks per decade, in decade order.
    pub fn decade_task_counts(&self) -> BTreeMap<Decade, usize> {
        let mut out = BTreeMap::new();
        for t in &self.tasks {
            *out.entry(t.decade).or_default() += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use obsolens_core::query::Match;

    fn dec(y: i32) -> Decade {
        Decade::new(y).unwrap()
    }

    fn task(id: &str, decade: i32) -> TaskEntry {
        TaskEntry {
            sample_id: id.into(),
            decade: dec(decade),
            concordance: ConcordanceLine {
                left: "he left".into(),
                hit: "so that he might".into(),
                right: "rest .".into(),
                matched: Match {
                    doc: 0,
                    doc_id: "d".into(),
                    year: decade,
                    decade: dec(decade),
                    genre: "fic".into(),
                    sentence: 0,
                    start: 2,
                    end: 5,
                },
            },
        }
    }

    fn header() -> SessionHeader {
        SessionHeader {
            session_id: "s1".into(),
            patterns: vec!["so".into()],
            seed: 1,
            corpus_hash: "h".into(),
            sample_size: 2,
            decades: vec![DecadeBase {
                decade: dec(1900),
                total_pmw: 60.32,
                match_count: 10,
                token_total: 1000,
            }],
        }
    }

    #[test]
    fn last_write_wins_and_log_keeps_history() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut s = SessionStore::create(&path, header(), vec![task("a", 1900), task("b", 1900)], false).unwrap();
        s.record("a", Label::Purposive, "x", "t1".into()).unwrap();
        s.record("a", Label::NonPurposive, "x", "t2".into()).unwrap();
        assert_eq!(s.task("a").unwrap().label, Some(Label::NonPurposive));
        drop(s);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains("\"annotation\"")).count(), 2);
        let s = SessionStore::open(&path).unwrap();
        assert_eq!(s.record_for("a").unwrap().label, Label::NonPurposive);
        assert_eq!(s.tasks(Some(TaskStatus::Pending)).len(), 1);
    }

    #[test]
    fn unknown_sample_and_existing_file_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut s = SessionStore::create(&path, header(), vec![task("a", 1900)], false).unwrap();
        assert!(matches!(s.record("zz", Label::Unclear, "x", "t".into()), Err(SessionError::UnknownTask(_))));
        assert!(matches!(
            SessionStore::create(&path, header(), vec![], false),
            Err(SessionError::AlreadyExists(_))
        ));
        assert!(matches!(
            SessionStore::create(&dir.path().join("t.jsonl"), header(), vec![task("a", 1900), task("a", 1900)], false),
            Err(SessionError::DuplicateTask(_))
        ));
    }

    #[test]
    fn truncated_tail_is_ignored_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut s = SessionStore::create(&path, header(), vec![task("a", 1900)], false).unwrap();
        s.record("a", Label::Purposive, "x", "t".into()).unwrap();
        drop(s);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"annotation\",\"sample_id\":\"a\",\"lab").unwrap();
        drop(f);
        let s = SessionStore::open(&path).unwrap();
        assert_eq!(s.record_for("a").unwrap().label, Label::Purposive);

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, format!("{}not json\n", line_of(&Event::Session(header())))).unwrap();
        assert!(matches!(SessionStore::open(&bad), Err(SessionError::Corrupt { line: 2, .. })));
        assert!(matches!(
            SessionStore::open(&dir.path().join("missing.jsonl")),
            Err(SessionError::NotFound(_))
        ));
    }

    #[test]
    fn estimate_excludes_unclear() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let tasks: Vec<TaskEntry> = (0..4).map(|i| task(&format!("t{i}"), 1900)).collect();
        let mut s = SessionStore::create(&path, header(), tasks, false).unwrap();
        let e = s.estimate(dec(1900)).unwrap();
        assert_eq!(e.purposive_pmw, None);
        assert_eq!(e.pending, 4);
        s.record("t0", Label::Purposive, "x", "t".into()).unwrap();
        s.record("t1", Label::NonPurposive, "x", "t".into()).unwrap();
        s.record("t2", Label::Unclear, "x", "t".into()).unwrap();
        let e = s.estimate(dec(1900)).unwrap();
        assert_eq!((e.k_purposive, e.sample_size, e.unclear, e.pending), (1, 2, 1, 1));
        assert!((e.purposive_pmw.unwrap() - 30.16).abs() < 1e-12);
        assert!(s.estimate(dec(1950)).is_none());
        let p = s.progress();
        assert_eq!((p.total, p.labeled, p.pending, p.unclear), (4, 3, 1, 1));
    }

    #[test]
    fn labels_parse_strictly() {
        assert_eq!("purposive".parse::<Label>().unwrap(), Label::Purposive);
        assert!("Purposive".parse::<Label>().is_err());
        assert!("maybe".parse::<Label>().is_err());
    }
}
