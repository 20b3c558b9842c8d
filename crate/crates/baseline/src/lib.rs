//! Human-examiner study service: randomized 15 HE + 15 EN sample sets,
//! durable guess recording, and examiner-level accuracy statistics rebuilt
//! from an append-only event log.

pub mod api;
pub mod eventlog;
pub mod session;
pub mod stats;
pub mod store;

use std::fmt;
use std::str::FromStr;

use graphodex_core::imaging::ImagingError;
use serde::{Deserialize, Serialize};

pub use api::{router, serve};
pub use eventlog::{parse_events, Event, EventLog, SampleRef};
pub use session::{Answer, LanguageScore, Progress, SessionResults, SessionState, SessionStatus, SessionView, State};
pub use stats::{aggregate_stats, Breakdown, GroupStats, HumanBaselineReport};
pub use store::{Clock, FixedClock, SamplePool, Store, StoreConfig, SystemClock};

/// Samples per language in every session.
pub const PER_LANGUAGE: usize = 15;
pub const SESSION_LEN: usize = 2 * PER_LANGUAGE;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("insufficient capacity: {0}")]
    Capacity(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("no complete sessions")]
    Empty,
    #[error("corrupt event log: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExaminerGender {
    Male,
    Female,
    Undisclosed,
}

impl ExaminerGender {
    pub fn as_str(self) -> &'static str {
        match self {
            ExaminerGender::Male => "male",
            ExaminerGender::Female => "female",
            ExaminerGender::Undisclosed => "undisclosed",
        }
    }
}

impl fmt::Display for ExaminerGender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExaminerGender {
    type Err = BaselineError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(ExaminerGender::Male),
            "female" => Ok(ExaminerGender::Female),
            "undisclosed" | "" => Ok(ExaminerGender::Undisclosed),
            other => Err(BaselineError::BadRequest(format!("unknown examiner gender {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExaminerProfile {
    pub examiner_id: String,
    pub gender: ExaminerGender,
    pub age_bracket: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education: Option<String>,
}

/// Intake form; the service assigns an examiner id when none is given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewExaminer {
    #[serde(default)]
    pub examiner_id: Option<String>,
    pub gender: ExaminerGender,
    pub age_bracket: String,
    #[serde(default)]
    pub education: Option<String>,
}
