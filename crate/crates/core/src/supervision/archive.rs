use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SupervisionError;
use crate::jsonfmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveOutcome {
    Success,
    HumanIntervention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionArchive {
    /// Assigned by [`archive_write`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    pub scenario_info: String,
    pub task_info: String,
    /// One action per line.
    pub control_code: String,
    /// Unix milliseconds.
    pub started_ms: u64,
    pub finished_ms: u64,
    pub outcome: ArchiveOutcome,
    pub iterations: usize,
}

impl SessionArchive {
    pub fn validate(&self) -> Result<(), SupervisionError> {
        if self.outcome == ArchiveOutcome::Success && self.control_code.trim().is_empty() {
            return Err(SupervisionError::InvalidArchive("success without control code".into()));
        }
        if self.finished_ms < self.started_ms {
            return Err(SupervisionError::InvalidArchive("finished before started".into()));
        }
        Ok(())
    }
}

pub(crate) fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn last_id(f: &mut File) -> Result<u64, SupervisionError> {
    f.seek(SeekFrom::Start(0))?;
    let mut last = 0;
    for line in BufReader::new(&mut *f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionArchive = serde_json::from_str(&line)?;
        last = last.max(rec.id.unwrap_or(0));
    }
    Ok(last)
}

/// Appends `a` under an exclusive lock and returns its id (one more than
/// the largest id already stored, starting at 1).
pub fn archive_write(a: &SessionArchive, path: impl AsRef<Path>) -> Result<u64, SupervisionError> {
    a.validate()?;
    let mut f = OpenOptions::new().read(true).append(true).create(true).open(path)?;
    f.lock()?;
    let id = last_id(&mut f)? + 1;
    let rec = SessionArchive { id: Some(id), ..a.clone() };
    f.write_all(jsonfmt::to_canonical_line(&rec)?.as_bytes())?;
    f.flush()?;
    f.unlock()?;
    Ok(id)
}

pub fn archive_read(path: impl AsRef<Path>) -> Result<Vec<SessionArchive>, SupervisionError> {
    let f = File::open(path)?;
    f.lock_shared()?;
    let mut out = Vec::new();
    for line in BufReader::new(&f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    f.unlock()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SessionArchive {
        SessionArchive {
            id: None,
            scenario_info: "headphone at [0.5, 0.3, 0.2]".into(),
            task_info: "hang the headphone".into(),
            control_code: "move_to([0.5, 0.3, 0.2])\ngrasp(5)".into(),
            started_ms: 1,
            finished_ms: 2,
            outcome: ArchiveOutcome::Success,
            iterations: 1,
        }
    }

    #[test]
    fn ids_increase_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("archive.jsonl");
        assert_eq!(archive_write(&sample(), &p).unwrap(), 1);
        assert_eq!(archive_write(&sample(), &p).unwrap(), 2);
        let back = archive_read(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], SessionArchive { id: Some(2), ..sample() });
        let text = std::fs::read_to_string(&p).unwrap();
        let second = text.lines().nth(1).unwrap();
        assert_eq!(jsonfmt::to_canonical_line(&back[1]).unwrap(), format!("{second}\n"));
    }

    #[test]
    fn rejects_bad_records_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let empty = SessionArchive { control_code: " ".into(), ..sample() };
        assert!(matches!(archive_write(&empty, dir.path().join("a.jsonl")), Err(SupervisionError::InvalidArchive(_))));
        let bad = dir.path().join("missing").join("a.jsonl");
        assert!(matches!(archive_write(&sample(), bad), Err(SupervisionError::Io(_))));
    }
}
