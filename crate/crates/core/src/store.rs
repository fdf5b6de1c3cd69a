//! Line-delimited artifact files. Each file starts with a schema header line
//! followed by one JSON object per line.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::racing::{ExperimentRecord, ParamSpace, RankedElite};
use crate::record::RunRecord;
use crate::suites::SuiteName;

pub const RUNS_SCHEMA: &str = "cmawizard.runs/1";
pub const RACE_LOG_SCHEMA: &str = "cmawizard.race-log/1";
pub const ELITES_SCHEMA: &str = "cmawizard.elites/1";

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
}

fn header_line(schema: &str) -> String {
    format!("{{\"schema\":\"{schema}\"}}\n")
}

fn to_line<T: Serialize>(value: &T) -> Result<String> {
    let mut line = serde_json::to_string(value).map_err(|e| Error::Parse(e.to_string()))?;
    line.push('\n');
    Ok(line)
}

/// Reads the complete lines of a line-delimited file. A trailing line without
/// a newline (an interrupted write) is dropped and its byte offset returned
/// so callers can truncate it.
fn read_lines<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<(Vec<T>, u64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    let mut lines = text[..complete].lines();
    let header: Header = match lines.next() {
        Some(h) => serde_json::from_str(h)
            .map_err(|e| Error::Parse(format!("{}: bad header: {e}", path.display())))?,
        None => return Ok((Vec::new(), 0)),
    };
    if header.schema != schema {
        return Err(Error::Parse(format!(
            "{}: schema `{}`, expected `{schema}`",
            path.display(),
            header.schema
        )));
    }
    let items = lines
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 2)))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok((items, complete as u64))
}

/// Append-only line log with a schema header. Opening repairs a torn last
/// line left by an interrupted writer.
pub struct LineLog<T> {
    path: PathBuf,
    items: Vec<T>,
    writer: BufWriter<File>,
}

impl<T: Serialize + DeserializeOwned> LineLog<T> {
    pub fn open(path: &Path, schema: &str) -> Result<Self> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let (items, valid) = if path.exists() {
            read_lines(path, schema)?
        } else {
            (Vec::new(), 0)
        };
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(path).map_err(io)?;
        file.set_len(valid).map_err(io)?;
        let mut writer = BufWriter::new(file);
        use std::io::Seek;
        writer.seek(std::io::SeekFrom::End(0)).map_err(io)?;
        if valid == 0 {
            writer.write_all(header_line(schema).as_bytes()).map_err(io)?;
            writer.flush().map_err(io)?;
        }
        Ok(LineLog {
            path: path.to_path_buf(),
            items,
            writer,
        })
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn into_items(self) -> Vec<T> {
        self.items
    }

    /// Appends and flushes every item.
    pub fn extend(&mut self, items: impl IntoIterator<Item = T>) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", self.path.display()));
        for item in items {
            self.writer.write_all(to_line(&item)?.as_bytes()).map_err(io)?;
            self.items.push(item);
        }
        self.writer.flush().map_err(io)
    }
}

/// One stored run together with the suite it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub suite: SuiteName,
    pub record: RunRecord,
}

impl StoredRun {
    fn key(&self) -> RunKey {
        (
            self.record.algorithm.clone(),
            self.suite,
            self.record.instance.key(),
            self.record.seed,
        )
    }
}

type RunKey = (String, SuiteName, String, u64);

/// Run records indexed by (algorithm, suite, instance key, seed).
pub struct RunStore {
    log: LineLog<StoredRun>,
    index: HashSet<RunKey>,
}

impl RunStore {
    pub fn open(path: &Path) -> Result<Self> {
        let log = LineLog::open(path, RUNS_SCHEMA)?;
        let index = log.items().iter().map(StoredRun::key).collect();
        Ok(RunStore { log, index })
    }

    /// Reads a store without opening it for writing.
    pub fn read(path: &Path) -> Result<Vec<StoredRun>> {
        Ok(read_lines(path, RUNS_SCHEMA)?.0)
    }

    pub fn contains(&self, algorithm: &str, suite: SuiteName, instance_key: &str, seed: u64) -> bool {
        self.index
            .contains(&(algorithm.to_string(), suite, instance_key.to_string(), seed))
    }

    pub fn runs(&self) -> &[StoredRun] {
        self.log.items()
    }

    /// Appends `record` unless the same run is already stored. Returns
    /// whether it was written.
    pub fn append(&mut self, suite: SuiteName, record: RunRecord) -> Result<bool> {
        let run = StoredRun { suite, record };
        if !self.index.insert(run.key()) {
            return Ok(false);
        }
        self.log.extend([run])?;
        Ok(true)
    }
}

/// Opens the experiment log of a tuning run for appending.
pub fn open_race_log(path: &Path) -> Result<LineLog<ExperimentRecord>> {
    LineLog::open(path, RACE_LOG_SCHEMA)
}

/// One line of an elites file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteEntry {
    pub rank: usize,
    pub id: u64,
    pub params: serde_json::Map<String, serde_json::Value>,
    pub mean_loss: f64,
    pub instances: usize,
}

impl EliteEntry {
    pub fn new(space: &ParamSpace, elite: &RankedElite) -> Self {
        EliteEntry {
            rank: elite.rank,
            id: elite.candidate.id,
            params: space.to_named(&elite.candidate),
            mean_loss: elite.mean_loss,
            instances: elite.instances,
        }
    }
}

/// Writes an elites file in one go, replacing any previous content.
pub fn write_elites(path: &Path, elites: &[EliteEntry]) -> Result<()> {
    let mut text = header_line(ELITES_SCHEMA);
    for e in elites {
        text.push_str(&to_line(e)?);
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_elites(path: &Path) -> Result<Vec<EliteEntry>> {
    Ok(read_lines(path, ELITES_SCHEMA)?.0)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cma::{run, CmaConfig};
    use crate::suites::{FunctionId, InstanceSpec};

    fn sample(seed: u64) -> RunRecord {
        let inst = InstanceSpec::unbounded(FunctionId::Ellipsoid, 3, 1, 60);
        run(&CmaConfig::DEFAULT, &inst, seed).unwrap()
    }

    #[test]
    fn store_round_trip_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs/runs.jsonl");
        let mut store = RunStore::open(&path).unwrap();
        assert!(store.append(SuiteName::Yabbob, sample(1)).unwrap());
        assert!(store.append(SuiteName::Yabbob, sample(2)).unwrap());
        assert!(!store.append(SuiteName::Yabbob, sample(1)).unwrap());
        drop(store);
        let bytes = fs::read(&path).unwrap();

        let mut store = RunStore::open(&path).unwrap();
        assert_eq!(store.runs().len(), 2);
        assert!(!store.append(SuiteName::Yabbob, sample(2)).unwrap());
        drop(store);
        assert_eq!(fs::read(&path).unwrap(), bytes);
        let runs = RunStore::read(&path).unwrap();
        assert_eq!(runs[0].record, sample(1));
    }

    #[test]
    fn torn_line_is_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let mut store = RunStore::open(&path).unwrap();
        store.append(SuiteName::Yabbob, sample(1)).unwrap();
        drop(store);
        let clean = fs::read(&path).unwrap();
        let mut torn = clean.clone();
        torn.extend_from_slice(b"{\"suite\":\"YABBOB\",\"rec");
        fs::write(&path, torn).unwrap();

        let mut store = RunStore::open(&path).unwrap();
        assert_eq!(store.runs().len(), 1);
        drop(store);
        assert_eq!(fs::read(&path).unwrap(), clean);
        store = RunStore::open(&path).unwrap();
        store.append(SuiteName::Yabbob, sample(2)).unwrap();
        assert_eq!(RunStore::read(&path).unwrap().len(), 2);
    }

    #[test]
    fn schema_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        fs::write(&path, header_line(ELITES_SCHEMA)).unwrap();
        assert!(RunStore::open(&path).is_err());
    }
}
