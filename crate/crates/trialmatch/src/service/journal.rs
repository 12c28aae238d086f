//! Append-only JSON-lines event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::state::{Event, ServiceError, State};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub seq: u64,
    pub recorded_at: DateTime<Utc>,
    pub event: Event,
}

pub struct Journal {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(format!("{}: {e}", path.display()))
}

/// Reads every entry, checking that sequence numbers run 1, 2, 3, ...
pub fn read_entries(path: &Path) -> Result<Vec<Entry>, ServiceError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(storage(path, e)),
    };
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| storage(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(&line)
            .map_err(|e| storage(path, format!("line {}: {e}", i + 1)))?;
        let expected = entries.len() as u64 + 1;
        if entry.seq != expected {
            return Err(storage(
                path,
                format!(
                    "line {}: sequence {} where {expected} was expected",
                    i + 1,
                    entry.seq
                ),
            ));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// State obtained by applying every journaled event in order.
pub fn replay(entries: &[Entry]) -> State {
    let mut state = State::default();
    for e in entries {
        state.apply(&e.event);
    }
    state
}

impl Journal {
    /// Opens (creating if needed) the journal and returns it with the
    /// replayed state.
    pub fn open(path: &Path) -> Result<(Journal, State), ServiceError> {
        let entries = read_entries(path)?;
        let state = replay(&entries);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| storage(path, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| storage(path, e))?;
        let journal = Journal {
            path: path.to_owned(),
            file,
            next_seq: entries.len() as u64 + 1,
        };
        Ok((journal, state))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and syncs one line per event.
    pub fn append(&mut self, events: &[Event], now: DateTime<Utc>) -> Result<(), ServiceError> {
        let mut buf = Vec::new();
        for (i, event) in events.iter().enumerate() {
            let entry = Entry {
                seq: self.next_seq + i as u64,
                recorded_at: now,
                event: event.clone(),
            };
            serde_json::to_writer(&mut buf, &entry).map_err(|e| storage(&self.path, e))?;
            buf.push(b'\n');
        }
        self.file
            .write_all(&buf)
            .map_err(|e| storage(&self.path, e))?;
        self.file.sync_data().map_err(|e| storage(&self.path, e))?;
        self.next_seq += events.len() as u64;
        Ok(())
    }
}
