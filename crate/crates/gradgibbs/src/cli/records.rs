use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::numeric::fnv1a64;

/// Append-only run records.
///
/// `records.jsonl` holds one deterministic JSON body per task (no
/// timestamps, byte-identical under re-runs with the same config and seed);
/// wall-clock times go to the `meta.jsonl` sidecar. A `done` index keyed by
/// task hash makes completed tasks no-ops unless forced.
pub struct RecordStore {
    dir: PathBuf,
    config_hash: u64,
    version: &'static str,
    done: BTreeSet<String>,
    rows: Vec<(String, Value)>,
    timings: Vec<(String, f64)>,
}

impl RecordStore {
    pub fn open(dir: &Path, config_hash: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let done_path = dir.join("done.index");
        let done = if done_path.exists() {
            fs::read_to_string(&done_path)?
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect()
        } else {
            BTreeSet::new()
        };
        Ok(RecordStore {
            dir: dir.to_path_buf(),
            config_hash,
            version: env!("CARGO_PKG_VERSION"),
            done,
            rows: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn task_key(&self, task: &str) -> String {
        format!("{:016x}:{task}", self.config_hash ^ fnv1a64(task.as_bytes()))
    }

    pub fn is_done(&self, task: &str) -> bool {
        self.done.contains(&self.task_key(task))
    }

    pub fn push<T: Serialize>(&mut self, task: &str, payload: &T, wall_s: f64) -> Result<()> {
        let body = serde_json::json!({
            "task": task,
            "config": format!("{:016x}", self.config_hash),
            "version": self.version,
            "payload": serde_json::to_value(payload).map_err(|e| Error::Parse(e.to_string()))?,
        });
        self.rows.push((task.to_string(), body));
        self.timings.push((task.to_string(), wall_s));
        Ok(())
    }

    /// Write all pending rows sorted by task name; ordering is therefore
    /// independent of worker scheduling.
    pub fn flush(&mut self) -> Result<()> {
        self.rows.sort_by(|a, b| a.0.cmp(&b.0));
        self.timings.sort_by(|a, b| a.0.cmp(&b.0));
        let mut records = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("records.jsonl"))?;
        let mut index = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("done.index"))?;
        let rows: Vec<(String, Value)> = self.rows.drain(..).collect();
        for (task, body) in rows {
            writeln!(records, "{body}")?;
            let key = self.task_key(&task);
            writeln!(index, "{key}")?;
            self.done.insert(key);
        }
        let mut meta = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("meta.jsonl"))?;
        for (task, wall) in self.timings.drain(..) {
            writeln!(meta, "{}", serde_json::json!({"task": task, "wall_time_s": wall}))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut f = fs::File::create(self.dir.join(name))?;
        writeln!(f, "{header}")?;
        for r in rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Read every record body from a directory.
pub fn read_records(dir: &Path) -> Result<Vec<Value>> {
    let path = dir.join("records.jsonl");
    if !path.exists() {
        return Err(Error::Compute {
            task: "report".into(),
            msg: format!("no records.jsonl under {}", dir.display()),
        });
    }
    let mut out = Vec::new();
    for line in fs::read_to_string(&path)?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))?);
    }
    Ok(out)
}
