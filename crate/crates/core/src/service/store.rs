use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::evaluation::{parse_scores, ScoreRecord, CSV_HEADER};

struct Inner {
    file: File,
    keys: HashSet<(String, String)>,
    /// Scored image ids per rater, in the order they were accepted.
    progress: HashMap<String, Vec<String>>,
    rows: usize,
}

/// Append-only scores file with a single writer. A row is flushed to disk
/// before `append` returns.
pub struct ScoreStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl ScoreStore {
    /// Opens or creates the file. A trailing partial line (an append that
    /// never completed, so was never acknowledged) is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let io = |e| Error::file(&path, e);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;
        if bytes.is_empty() {
            file.write_all(format!("{CSV_HEADER}\n").as_bytes())
                .map_err(io)?;
            file.sync_data().map_err(io)?;
        } else if !bytes.ends_with(b"\n") {
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            log::warn!(
                "{}: dropping {} bytes of an incomplete trailing row",
                path.display(),
                bytes.len() - keep
            );
            file.set_len(keep as u64).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
            bytes.truncate(keep);
            if bytes.is_empty() {
                file.write_all(format!("{CSV_HEADER}\n").as_bytes())
                    .map_err(io)?;
                file.sync_data().map_err(io)?;
            }
        }
        let records = parse_scores(&bytes)?;
        let mut keys = HashSet::new();
        let mut progress: HashMap<String, Vec<String>> = HashMap::new();
        for r in &records {
            keys.insert((r.rater_id.clone(), r.image_id.clone()));
            progress
                .entry(r.rater_id.clone())
                .or_default()
                .push(r.image_id.clone());
        }
        Ok(Self {
            path,
            inner: Mutex::new(Inner {
                file,
                keys,
                progress,
                rows: records.len(),
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one validated record. Duplicate (rater, image) pairs are
    /// rejected without touching the file.
    pub fn append(&self, record: &ScoreRecord) -> Result<()> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let row = inner.rows + 1;
        record.validate(row)?;
        let key = (record.rater_id.clone(), record.image_id.clone());
        if inner.keys.contains(&key) {
            return Err(Error::Duplicate {
                row,
                rater_id: key.0,
                image_id: key.1,
            });
        }
        let line = record.to_csv_row();
        let io = |e| Error::file(&self.path, e);
        inner.file.write_all(&line).map_err(io)?;
        inner.file.sync_data().map_err(io)?;
        inner.keys.insert(key);
        inner
            .progress
            .entry(record.rater_id.clone())
            .or_default()
            .push(record.image_id.clone());
        inner.rows = row;
        Ok(())
    }

    /// Image ids scored by `rater_id`, oldest first.
    pub fn progress(&self, rater_id: &str) -> Vec<String> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner.progress.get(rater_id).cloned().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorMode;
    use chrono::{TimeZone, Utc};

    fn rec(rater: &str, image: &str) -> ScoreRecord {
        ScoreRecord {
            rater_id: rater.into(),
            image_id: image.into(),
            color_mode: ColorMode::Red,
            removed_artifacts: 4,
            added_structures: 5,
            timestamp: Utc.timestamp_millis_opt(1).unwrap(),
        }
    }

    #[test]
    fn creates_header_and_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let store = ScoreStore::open(&path).unwrap();
        store.append(&rec("r", "a")).unwrap();
        assert!(matches!(
            store.append(&rec("r", "a")),
            Err(Error::Duplicate { .. })
        ));
        store.append(&rec("r", "b")).unwrap();
        let records = parse_scores(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(store.progress("r"), vec!["a", "b"]);
        assert!(store.progress("other").is_empty());
    }

    #[test]
    fn reopen_restores_progress() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        {
            let store = ScoreStore::open(&path).unwrap();
            store.append(&rec("r", "a")).unwrap();
        }
        let store = ScoreStore::open(&path).unwrap();
        assert_eq!(store.progress("r"), vec!["a"]);
        assert!(matches!(
            store.append(&rec("r", "a")),
            Err(Error::Duplicate { .. })
        ));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn partial_trailing_row_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut bytes = format!("{CSV_HEADER}\n").into_bytes();
        bytes.extend(rec("r", "a").to_csv_row());
        bytes.extend(b"r,b,red,4");
        std::fs::write(&path, &bytes).unwrap();
        let store = ScoreStore::open(&path).unwrap();
        assert_eq!(store.len(), 1);
        store.append(&rec("r", "b")).unwrap();
        let records = parse_scores(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(records.len(), 2);
    }
}
