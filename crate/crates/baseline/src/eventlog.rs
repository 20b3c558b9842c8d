//! Append-only newline-delimited JSON event log.
//!
//! The active segment is `events.ndjson`. Rotation renames it to
//! `events.NNNNNN.ndjson` and starts a fresh active file; replay reads the
//! sealed segments in sequence order, then the active one.

use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use graphodex_core::patching::{Gender, Language};
use serde::{Deserialize, Serialize};

use crate::{BaselineError, ExaminerProfile, Result};

pub const ACTIVE: &str = "events.ndjson";

/// One form shown in a session, with the label the examiner must not see
/// until the session completes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub form_id: String,
    pub language: Language,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        profile: ExaminerProfile,
        samples: Vec<SampleRef>,
        at_ms: u64,
    },
    GuessRecorded {
        session_id: String,
        index: usize,
        guess: Gender,
        truth: Gender,
        at_ms: u64,
    },
}

impl Event {
    pub fn session_id(&self) -> &str {
        match self {
            Event::SessionCreated { session_id, .. } | Event::GuessRecorded { session_id, .. } => session_id,
        }
    }
}

/// Result of parsing a log segment.
#[derive(Debug, Default)]
pub struct Parsed {
    pub events: Vec<Event>,
    /// Length of the prefix made of complete, newline-terminated records.
    pub valid_len: usize,
    /// True when trailing bytes lacked a newline (a torn final write).
    pub torn_tail: bool,
}

/// Parses a segment. A final record without its newline is reported as torn
/// rather than as corruption; any other unreadable line is an error.
pub fn parse_events(bytes: &[u8]) -> Result<Parsed> {
    let mut out = Parsed::default();
    let mut pos = 0;
    let mut line_no = 0;
    while pos < bytes.len() {
        line_no += 1;
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            out.torn_tail = true;
            break;
        };
        let line = &bytes[pos..pos + nl];
        pos += nl + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            out.valid_len = pos;
            continue;
        }
        let event = serde_json::from_slice(line)
            .map_err(|e| BaselineError::Corrupt(format!("line {line_no}: {e}")))?;
        out.events.push(event);
        out.valid_len = pos;
    }
    Ok(out)
}

/// Single-writer handle on a log directory.
pub struct EventLog {
    dir: PathBuf,
    file: File,
    len: u64,
    next_segment: u64,
    rotate_bytes: Option<u64>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog").field("dir", &self.dir).field("len", &self.len).finish()
    }
}

fn segment_number(name: &str) -> Option<u64> {
    let mid = name.strip_prefix("events.")?.strip_suffix(".ndjson")?;
    if mid.len() == 6 && mid.bytes().all(|b| b.is_ascii_digit()) {
        mid.parse().ok()
    } else {
        None
    }
}

fn sealed_segments(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut segs = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if let Some(n) = entry.file_name().to_str().and_then(segment_number) {
            segs.push((n, entry.path()));
        }
    }
    segs.sort();
    Ok(segs)
}

impl EventLog {
    /// Opens (creating if needed) the log in `dir` and returns every event
    /// recorded so far. A torn tail on the active segment is truncated.
    pub fn open(dir: &Path, rotate_bytes: Option<u64>) -> Result<(Self, Vec<Event>)> {
        fs::create_dir_all(dir)?;
        let mut events = Vec::new();
        let segs = sealed_segments(dir)?;
        for (_, path) in &segs {
            let parsed = parse_events(&fs::read(path)?)?;
            if parsed.torn_tail {
                return Err(BaselineError::Corrupt(format!("{} ends mid-record", path.display())));
            }
            events.extend(parsed.events);
        }
        let active = dir.join(ACTIVE);
        let bytes = match fs::read(&active) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let parsed = parse_events(&bytes)?;
        events.extend(parsed.events);
        let mut file = OpenOptions::new().create(true).truncate(false).read(true).write(true).open(&active)?;
        if parsed.torn_tail {
            log::warn!(
                "dropping {} bytes of torn record at end of {}",
                bytes.len() - parsed.valid_len,
                active.display()
            );
            file.set_len(parsed.valid_len as u64)?;
            file.sync_data()?;
        }
        let len = file.seek(SeekFrom::End(0))?;
        let next_segment = segs.last().map_or(1, |(n, _)| n + 1);
        Ok((
            EventLog {
                dir: dir.to_path_buf(),
                file,
                len,
                next_segment,
                rotate_bytes,
            },
            events,
        ))
    }

    /// Writes one record and syncs it to disk before returning.
    pub fn append(&mut self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event).map_err(|e| BaselineError::Corrupt(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.len += line.len() as u64;
        if self.rotate_bytes.is_some_and(|max| self.len >= max) {
            self.rotate()?;
        }
        Ok(())
    }

    /// Seals the active segment under the next sequence number.
    pub fn rotate(&mut self) -> Result<()> {
        if self.len == 0 {
            return Ok(());
        }
        let active = self.dir.join(ACTIVE);
        let sealed = self.dir.join(format!("events.{:06}.ndjson", self.next_segment));
        fs::rename(&active, &sealed)?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        self.file = OpenOptions::new().create(true).read(true).write(true).truncate(true).open(&active)?;
        self.len = 0;
        self.next_segment += 1;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
