//! Append-only event log. On reopen, recorded events are replayed in order
//! instead of recomputed, so an interrupted run resumes where it stopped.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp: String,
    pub event_type: String,
    pub stage: Option<String>,
    pub candidate_id: Option<String>,
    pub payload: Value,
}

pub struct EventLog {
    path: PathBuf,
    recorded: Vec<Event>,
    cursor: usize,
    file: File,
}

/// Parses complete lines, stopping at the first line that is not a valid
/// event. Returns the events and the byte length of the valid prefix.
fn read_prefix(path: &Path) -> Result<(Vec<Event>, u64), HarnessError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(HarnessError::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut valid = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| HarnessError::io(path, e))?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<Event>(line.trim_end()) {
            Ok(e) => {
                events.push(e);
                valid += n as u64;
            }
            Err(_) => break,
        }
    }
    Ok((events, valid))
}

/// Every event in the file; any malformed line is an error.
pub fn read_events(path: &Path) -> Result<Vec<Event>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::EventLog(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

impl EventLog {
    /// Opens or creates the log, dropping a torn trailing line.
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        let (recorded, valid) = read_prefix(path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        let len = file.metadata().map_err(|e| HarnessError::io(path, e))?.len();
        if len > valid {
            log::warn!("{}: discarding {} bytes after the last complete event", path.display(), len - valid);
            file.set_len(valid).map_err(|e| HarnessError::io(path, e))?;
        }
        Ok(EventLog {
            path: path.to_path_buf(),
            recorded,
            cursor: 0,
            file,
        })
    }

    /// Events replayed so far from a previous session.
    pub fn replayed(&self) -> usize {
        self.cursor.min(self.recorded.len())
    }

    pub fn recorded_len(&self) -> usize {
        self.recorded.len()
    }

    /// Returns the recorded payload of the next event if one exists,
    /// otherwise computes, appends and returns it.
    pub fn record<T, F>(
        &mut self,
        event_type: &str,
        stage: Option<&str>,
        candidate_id: Option<&str>,
        compute: F,
    ) -> Result<T, HarnessError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, HarnessError>,
    {
        if let Some(e) = self.recorded.get(self.cursor) {
            if e.event_type != event_type || e.stage.as_deref() != stage || e.candidate_id.as_deref() != candidate_id {
                return Err(HarnessError::EventLog(format!(
                    "{}: event {} is {} ({:?}, {:?}) but the run expects {event_type} ({stage:?}, {candidate_id:?})",
                    self.path.display(),
                    self.cursor + 1,
                    e.event_type,
                    e.stage,
                    e.candidate_id
                )));
            }
            self.cursor += 1;
            return serde_json::from_value(e.payload.clone())
                .map_err(|err| HarnessError::EventLog(format!("{}: {event_type}: {err}", self.path.display())));
        }
        let value = compute()?;
        let event = Event {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            event_type: event_type.to_string(),
            stage: stage.map(str::to_string),
            candidate_id: candidate_id.map(str::to_string),
            payload: serde_json::to_value(&value).expect("payload serializes"),
        };
        let mut line = serde_json::to_string(&event).expect("event serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| HarnessError::io(&self.path, e))?;
        self.recorded.push(event);
        self.cursor += 1;
        Ok(value)
    }
}
