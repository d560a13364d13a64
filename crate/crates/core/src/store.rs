//! On-disk store: registries, the benchmark record log and scorer artifacts.
//!
//! ```text
//! <root>/registry/models.json
//! <root>/registry/hardware.json
//! <root>/registry/tasks.json
//! <root>/records/bench.jsonl
//! <root>/artifacts/scorer-<name>.json
//! ```
//!
//! The record log is JSON lines, append-only, with one writer at a time
//! guarded by a lock file. Readers ignore a trailing line without its
//! newline, so they never see a record that is still being written.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_registry, BenchmarkRecord, HardwareProfile, ModelCard, Phase, TaskDescriptor, ValidationReport,
};
use crate::error::{Error, Result};
use crate::fusion::ScorerParams;
use crate::harness::RecordSink;

/// Environment variable naming the store root.
pub const HOME_ENV: &str = "HWREC_HOME";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistryKind {
    Models,
    Hardware,
    Tasks,
}

impl RegistryKind {
    pub fn file_name(self) -> &'static str {
        match self {
            RegistryKind::Models => "models.json",
            RegistryKind::Hardware => "hardware.json",
            RegistryKind::Tasks => "tasks.json",
        }
    }
}

impl FromStr for RegistryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "models" => Ok(RegistryKind::Models),
            "hardware" => Ok(RegistryKind::Hardware),
            "tasks" => Ok(RegistryKind::Tasks),
            other => Err(Error::invalid(format!("unknown registry kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub kind: RegistryKind,
    pub count: usize,
    pub report: ValidationReport,
}

/// Which records a query returns; unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordFilter {
    pub model_id: Option<String>,
    pub task_id: Option<String>,
    pub hardware_id: Option<String>,
    pub phase: Option<Phase>,
}

impl RecordFilter {
    pub fn matches(&self, r: &BenchmarkRecord) -> bool {
        self.model_id.as_ref().is_none_or(|m| *m == r.model_id)
            && self.task_id.as_ref().is_none_or(|t| *t == r.task_id)
            && self.hardware_id.as_ref().is_none_or(|h| *h == r.hardware_id)
            && self.phase.is_none_or(|p| p == r.phase)
    }
}

fn parse_error(path: &Path, e: &serde_json::Error, line_offset: usize) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line() + line_offset,
        column: e.column(),
        message: e.to_string(),
    }
}

fn read_json_array<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    serde_json::from_str(&text).map_err(|e| parse_error(path, &e, 0))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses complete lines of a JSON-lines buffer. A final fragment without
/// a newline is skipped.
fn parse_lines(path: &Path, bytes: &[u8]) -> Result<Vec<BenchmarkRecord>> {
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(end) => &bytes[..=end],
        None => return Ok(Vec::new()),
    };
    let text = std::str::from_utf8(complete).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_error(path, &e, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let store = Self { root: root.into() };
        for dir in ["registry", "records", "artifacts"] {
            fs::create_dir_all(store.root.join(dir))?;
        }
        Ok(store)
    }

    /// Opens the store named by `HWREC_HOME`, or `./.hwrec`.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(HOME_ENV) {
            Some(p) if !p.is_empty() => Self::open(PathBuf::from(p)),
            _ => Self::open(".hwrec"),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry_path(&self, kind: RegistryKind) -> PathBuf {
        self.root.join("registry").join(kind.file_name())
    }

    pub fn records_path(&self) -> PathBuf {
        self.root.join("records").join("bench.jsonl")
    }

    fn lock_path(&self) -> PathBuf {
        self.root.join("records").join("bench.lock")
    }

    pub fn artifact_path(&self, name: &str) -> PathBuf {
        self.root.join("artifacts").join(format!("scorer-{name}.json"))
    }

    /// Validates a registry file and, if it is clean, replaces the stored
    /// registry of that kind. Nothing is written when any entry is invalid.
    pub fn ingest_registry(&self, path: &Path, kind: RegistryKind) -> Result<IngestReport> {
        let (count, report, canonical) = match kind {
            RegistryKind::Models => check::<ModelCard>(path, |v| validate_registry(v, &[], &[]))?,
            RegistryKind::Hardware => check::<HardwareProfile>(path, |v| validate_registry(&[], v, &[]))?,
            RegistryKind::Tasks => check::<TaskDescriptor>(path, |v| validate_registry(&[], &[], v))?,
        };
        if !report.is_empty() {
            return Err(Error::Validation(report));
        }
        write_atomic(&self.registry_path(kind), canonical.as_bytes())?;
        Ok(IngestReport { kind, count, report })
    }

    fn load<T: DeserializeOwned>(&self, kind: RegistryKind) -> Result<Vec<T>> {
        let path = self.registry_path(kind);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_json_array(&path)
    }

    pub fn models(&self) -> Result<Vec<ModelCard>> {
        self.load(RegistryKind::Models)
    }

    pub fn hardware(&self) -> Result<Vec<HardwareProfile>> {
        self.load(RegistryKind::Hardware)
    }

    pub fn tasks(&self) -> Result<Vec<TaskDescriptor>> {
        self.load(RegistryKind::Tasks)
    }

    pub fn model(&self, id: &str) -> Result<ModelCard> {
        self.models()?.into_iter().find(|m| m.id == id).ok_or_else(|| Error::UnknownId { kind: "model", id: id.into() })
    }

    pub fn hardware_profile(&self, id: &str) -> Result<HardwareProfile> {
        self.hardware()?
            .into_iter()
            .find(|h| h.id == id)
            .ok_or_else(|| Error::UnknownId { kind: "hardware", id: id.into() })
    }

    pub fn task(&self, id: &str) -> Result<TaskDescriptor> {
        self.tasks()?.into_iter().find(|t| t.id == id).ok_or_else(|| Error::UnknownId { kind: "task", id: id.into() })
    }

    /// Takes the single-writer lock on the record log.
    pub fn writer(&self) -> Result<RecordWriter> {
        RecordWriter::open(self.records_path(), self.lock_path())
    }

    /// Every complete record, in append order.
    pub fn records(&self) -> Result<Vec<BenchmarkRecord>> {
        let path = self.records_path();
        match fs::read(&path) {
            Ok(bytes) => parse_lines(&path, &bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn query_records(&self, filter: &RecordFilter) -> Result<Vec<BenchmarkRecord>> {
        Ok(self.records()?.into_iter().filter(|r| filter.matches(r)).collect())
    }

    pub fn save_scorer(&self, name: &str, params: &ScorerParams) -> Result<PathBuf> {
        let path = self.artifact_path(name);
        write_atomic(&path, params.to_json()?.as_bytes())?;
        Ok(path)
    }

    pub fn load_scorer(&self, name: &str) -> Result<ScorerParams> {
        ScorerParams::load(&self.artifact_path(name))
    }
}

fn check<T: DeserializeOwned + Serialize>(
    path: &Path,
    validate: impl Fn(&[T]) -> ValidationReport,
) -> Result<(usize, ValidationReport, String)> {
    let entries: Vec<T> = read_json_array(path)?;
    let report = validate(&entries);
    Ok((entries.len(), report, serde_json::to_string_pretty(&entries)?))
}

/// Exclusive appender to the record log. The lock is released on drop.
#[derive(Debug)]
pub struct RecordWriter {
    file: File,
    path: PathBuf,
    lock: PathBuf,
    end: u64,
}

impl RecordWriter {
    fn open(path: PathBuf, lock: PathBuf) -> Result<Self> {
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(Error::Locked(lock)),
            Err(e) => return Err(e.into()),
        }
        let opened = (|| -> Result<Self> {
            let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(&path)?;
            // drop a torn tail left by an interrupted append
            let mut bytes = Vec::new();
            file.read_to_end(&mut bytes)?;
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i as u64 + 1);
            if keep != bytes.len() as u64 {
                file.set_len(keep)?;
                file.sync_all()?;
            }
            file.seek(SeekFrom::Start(keep))?;
            Ok(Self { file, path: path.clone(), lock: lock.clone(), end: keep })
        })();
        if opened.is_err() {
            let _ = fs::remove_file(&lock);
        }
        opened
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends records as JSON lines in a single write and syncs before
    /// returning. Returns the byte offset at which each record starts.
    pub fn append_records(&mut self, records: &[BenchmarkRecord]) -> Result<Vec<u64>> {
        for r in records {
            r.validate()?;
        }
        let mut buf = Vec::new();
        let mut offsets = Vec::with_capacity(records.len());
        for r in records {
            offsets.push(self.end + buf.len() as u64);
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        if buf.is_empty() {
            return Ok(offsets);
        }
        if let Err(e) = self.file.write_all(&buf).and_then(|_| self.file.sync_data()) {
            // leave no partial line behind
            let _ = self.file.set_len(self.end);
            let _ = self.file.seek(SeekFrom::Start(self.end));
            return Err(e.into());
        }
        self.end += buf.len() as u64;
        Ok(offsets)
    }
}

impl RecordSink for RecordWriter {
    fn append(&mut self, records: &[BenchmarkRecord]) -> Result<()> {
        self.append_records(records).map(|_| ())
    }
}

impl Drop for RecordWriter {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MetricKind;
    use chrono::Utc;
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;

    fn record(model: &str, batch_index: u32, phase: Phase) -> BenchmarkRecord {
        BenchmarkRecord {
            model_id: model.into(),
            task_id: "t".into(),
            hardware_id: "h".into(),
            batch_size: 32,
            batch_index,
            phase,
            metrics: MetricKind::HARDWARE.into_iter().map(|k| (k, 1.0 + batch_index as f64)).collect::<BTreeMap<_, _>>(),
            timestamp: Utc::now(),
            stabilized: true,
        }
    }

    fn models_json(ids: &[&str]) -> String {
        let cards: Vec<ModelCard> =
            ids.iter().map(|id| ModelCard::new(*id, *id, "cnn", 10, vec![1.0, 2.0], "src").unwrap()).collect();
        serde_json::to_string(&cards).unwrap()
    }

    #[test]
    fn ingest_valid_registry() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s")).unwrap();
        let file = dir.path().join("models.json");
        fs::write(&file, models_json(&["a", "b", "c"])).unwrap();
        let r = store.ingest_registry(&file, RegistryKind::Models).unwrap();
        assert_eq!(r.count, 3);
        assert!(r.report.is_empty());
        assert_eq!(store.models().unwrap().len(), 3);
        assert_eq!(store.model("b").unwrap().id, "b");
        assert!(matches!(store.model("z"), Err(Error::UnknownId { .. })));
    }

    #[test]
    fn ingest_is_atomic_on_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let good = dir.path().join("good.json");
        fs::write(&good, models_json(&["a"])).unwrap();
        store.ingest_registry(&good, RegistryKind::Models).unwrap();
        let bad = dir.path().join("bad.json");
        fs::write(&bad, models_json(&["x", "dup", "dup"])).unwrap();
        match store.ingest_registry(&bad, RegistryKind::Models) {
            Err(Error::Validation(report)) => assert!(report.mentions("dup")),
            other => panic!("expected validation error, got {other:?}"),
        }
        assert_eq!(store.models().unwrap().len(), 1);
    }

    #[test]
    fn ingest_empty_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let empty = dir.path().join("empty.json");
        fs::write(&empty, "").unwrap();
        assert_eq!(store.ingest_registry(&empty, RegistryKind::Tasks).unwrap().count, 0);
        let broken = dir.path().join("broken.json");
        fs::write(&broken, "[\n  {\"id\": \"a\",\n  oops\n]").unwrap();
        match store.ingest_registry(&broken, RegistryKind::Tasks) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn append_and_query() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let records: Vec<BenchmarkRecord> = (0..5)
            .map(|i| record(if i % 2 == 0 { "a" } else { "b" }, i, if i < 3 { Phase::BatchSweep } else { Phase::FixedBatch }))
            .collect();
        let offsets = {
            let mut w = store.writer().unwrap();
            let mut o = w.append_records(&records[..2]).unwrap();
            o.extend(w.append_records(&records[2..]).unwrap());
            o
        };
        assert!(offsets.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(offsets[0], 0);
        let text = fs::read_to_string(store.records_path()).unwrap();
        assert_eq!(text.lines().count(), 5);

        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.records().unwrap(), records);
        let only_a = RecordFilter { model_id: Some("a".into()), ..Default::default() };
        assert_eq!(reopened.query_records(&only_a).unwrap().len(), 3);
        let fixed = RecordFilter { phase: Some(Phase::FixedBatch), ..Default::default() };
        assert_eq!(reopened.query_records(&fixed).unwrap(), records[3..].to_vec());
        let absent = RecordFilter { hardware_id: Some("zz".into()), ..Default::default() };
        assert!(reopened.query_records(&absent).unwrap().is_empty());
    }

    #[test]
    fn single_writer() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let w = store.writer().unwrap();
        assert!(matches!(store.writer(), Err(Error::Locked(_))));
        drop(w);
        assert!(store.writer().is_ok());
    }

    #[test]
    fn torn_tail_is_invisible_and_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.writer().unwrap().append_records(&[record("a", 0, Phase::FixedBatch)]).unwrap();
        let mut f = OpenOptions::new().append(true).open(store.records_path()).unwrap();
        f.write_all(b"{\"model_id\":\"half").unwrap();
        assert_eq!(store.records().unwrap().len(), 1);
        let offsets = store.writer().unwrap().append_records(&[record("b", 1, Phase::FixedBatch)]).unwrap();
        let all = store.records().unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].model_id, "b");
        let bytes = fs::read(store.records_path()).unwrap();
        assert_eq!(bytes[offsets[0] as usize - 1], b'\n');
    }

    #[test]
    fn readers_never_see_torn_lines() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let done = Arc::new(AtomicBool::new(false));
        let reader = {
            let store = store.clone();
            let done = Arc::clone(&done);
            std::thread::spawn(move || {
                let mut reads = 0;
                let mut last = 0;
                while !done.load(Ordering::Acquire) || reads == 0 {
                    let n = store.records().expect("every visible line parses").len();
                    assert!(n >= last);
                    last = n;
                    reads += 1;
                }
                reads
            })
        };
        let mut w = store.writer().unwrap();
        for i in 0..200 {
            let batch: Vec<BenchmarkRecord> = (0..5).map(|j| record(&format!("model-{i}-{j}"), j, Phase::FixedBatch)).collect();
            w.append_records(&batch).unwrap();
        }
        done.store(true, Ordering::Release);
        assert!(reader.join().unwrap() > 0);
        assert_eq!(store.records().unwrap().len(), 1000);
    }

    #[test]
    fn scorer_artifacts_round_trip() {
        use crate::domain::FeatureDims;
        use crate::fusion::ScorerConfig;
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let p = ScorerParams::init(ScorerConfig::new(FeatureDims { model: 2, hardware: 2, task: 2 }, 3, 1), 1).unwrap();
        let path = store.save_scorer("fusion", &p).unwrap();
        assert!(path.ends_with("artifacts/scorer-fusion.json"));
        assert_eq!(store.load_scorer("fusion").unwrap(), p);
    }
}
