//! Append-only JSONL checkpoints: one record per finished replication.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub cell: String,
    pub replication: usize,
    pub seed: u64,
    /// Rejection decision per test; empty when the replication failed.
    pub decisions: BTreeMap<String, bool>,
    pub failed: bool,
}

pub struct Checkpoint {
    path: PathBuf,
    file: Mutex<File>,
    done: HashMap<(String, usize), Record>,
}

impl Checkpoint {
    /// Open (creating if needed) and load every well-formed record.
    /// Corrupt lines are skipped with a warning.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut done = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Record>(&line) {
                    Ok(r) => {
                        done.insert((r.cell.clone(), r.replication), r);
                    }
                    Err(e) => log::warn!(
                        "{}:{}: skipping corrupt record ({e})",
                        path.display(),
                        lineno + 1
                    ),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        // a torn final line must not swallow the next record
        let bytes = std::fs::read(&path)?;
        if bytes.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            path,
            file: Mutex::new(file),
            done,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    /// A previous record for this replication, if its seed still matches.
    pub fn lookup(&self, cell: &str, replication: usize, seed: u64) -> Option<&Record> {
        let r = self.done.get(&(cell.to_string(), replication))?;
        if r.seed == seed {
            Some(r)
        } else {
            log::warn!("checkpoint record {cell}#{replication} has a different seed; recomputing");
            None
        }
    }

    /// Append one record as a single write.
    pub fn append(&self, record: &Record) -> Result<()> {
        let mut line =
            serde_json::to_string(record).map_err(|e| crate::error::invalid(e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(cell: &str, rep: usize, seed: u64) -> Record {
        Record {
            cell: cell.into(),
            replication: rep,
            seed,
            decisions: BTreeMap::from([("cvm_ad".to_string(), true)]),
            failed: false,
        }
    }

    #[test]
    fn round_trip_and_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c/x.jsonl");
        {
            let c = Checkpoint::open(&path).unwrap();
            assert!(c.is_empty());
            c.append(&rec("a", 0, 11)).unwrap();
            c.append(&rec("a", 1, 12)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"cell\": \"a\", \"replic").unwrap();
        let c = Checkpoint::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        c.append(&rec("a", 2, 13)).unwrap();
        drop(c);
        let c = Checkpoint::open(&path).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.lookup("a", 1, 12), Some(&rec("a", 1, 12)));
        assert_eq!(c.lookup("a", 1, 99), None);
        assert_eq!(c.lookup("b", 0, 11), None);
    }
}
