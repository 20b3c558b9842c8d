//! Session state as a fold over the event log.

use std::collections::{BTreeMap, HashSet};

use graphodex_core::patching::{Gender, Language};
use serde::{Deserialize, Serialize};

use crate::eventlog::{Event, SampleRef};
use crate::{BaselineError, ExaminerProfile, Result, PER_LANGUAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub session_id: String,
    pub profile: ExaminerProfile,
    pub samples: Vec<SampleRef>,
    pub guesses: Vec<Option<Gender>>,
    pub answered: usize,
    pub created_ms: u64,
}

impl SessionState {
    pub fn status(&self) -> SessionStatus {
        if self.answered == self.samples.len() {
            SessionStatus::Complete
        } else {
            SessionStatus::Open
        }
    }

    pub fn progress(&self) -> Progress {
        Progress {
            answered: self.answered,
            total: self.samples.len(),
            state: self.status(),
        }
    }

    /// Client view: languages and answered flags only, never labels.
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            examiner_id: self.profile.examiner_id.clone(),
            state: self.status(),
            answered: self.answered,
            total: self.samples.len(),
            samples: self
                .samples
                .iter()
                .zip(&self.guesses)
                .enumerate()
                .map(|(index, (s, g))| SampleView {
                    index,
                    language: s.language,
                    answered: g.is_some(),
                    url: format!("/api/sessions/{}/samples/{index}", self.session_id),
                })
                .collect(),
        }
    }

    pub fn results(&self) -> Result<SessionResults> {
        if self.status() != SessionStatus::Complete {
            return Err(BaselineError::State(format!(
                "session {} has {}/{} answers",
                self.session_id,
                self.answered,
                self.samples.len()
            )));
        }
        let answers: Vec<Answer> = self
            .samples
            .iter()
            .zip(&self.guesses)
            .enumerate()
            .map(|(index, (s, g))| {
                let guess = g.expect("complete session has every guess");
                Answer {
                    index,
                    form_id: s.form_id.clone(),
                    language: s.language,
                    guess,
                    truth: s.gender,
                    correct: guess == s.gender,
                }
            })
            .collect();
        let scores = Language::ALL
            .iter()
            .map(|&language| {
                let of_lang = answers.iter().filter(|a| a.language == language);
                let total = of_lang.clone().count();
                let correct = of_lang.filter(|a| a.correct).count();
                LanguageScore::new(language, correct, total)
            })
            .collect();
        Ok(SessionResults {
            session_id: self.session_id.clone(),
            examiner_id: self.profile.examiner_id.clone(),
            scores,
            answers,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleView {
    pub index: usize,
    pub language: Language,
    pub answered: bool,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub examiner_id: String,
    pub state: SessionStatus,
    pub answered: usize,
    pub total: usize,
    pub samples: Vec<SampleView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub total: usize,
    pub state: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageScore {
    pub language: Language,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl LanguageScore {
    pub fn new(language: Language, correct: usize, total: usize) -> Self {
        LanguageScore {
            language,
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub index: usize,
    pub form_id: String,
    pub language: Language,
    pub guess: Gender,
    pub truth: Gender,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResults {
    pub session_id: String,
    pub examiner_id: String,
    pub scores: Vec<LanguageScore>,
    pub answers: Vec<Answer>,
}

impl SessionResults {
    pub fn score(&self, language: Language) -> Option<&LanguageScore> {
        self.scores.iter().find(|s| s.language == language)
    }
}

/// Every session, keyed by id. Only [`State::apply`] mutates it, so a
/// replayed log and a live service hold the same value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    pub sessions: BTreeMap<String, SessionState>,
    examiners: BTreeMap<String, String>,
}

impl State {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self> {
        let mut state = State::default();
        for (i, e) in events.into_iter().enumerate() {
            state
                .apply(e)
                .map_err(|err| BaselineError::Corrupt(format!("event {}: {err}", i + 1)))?;
        }
        Ok(state)
    }

    pub fn session(&self, id: &str) -> Result<&SessionState> {
        self.sessions
            .get(id)
            .ok_or_else(|| BaselineError::NotFound(format!("session {id}")))
    }

    pub fn has_examiner(&self, examiner_id: &str) -> bool {
        self.examiners.contains_key(examiner_id)
    }

    pub fn complete_sessions(&self) -> impl Iterator<Item = &SessionState> {
        self.sessions.values().filter(|s| s.status() == SessionStatus::Complete)
    }

    /// Checks `event` against the current state and applies it; on error
    /// the state is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::SessionCreated {
                session_id,
                profile,
                samples,
                at_ms,
            } => {
                if self.sessions.contains_key(session_id) {
                    return Err(BaselineError::Conflict(format!("session {session_id} exists")));
                }
                if self.examiners.contains_key(&profile.examiner_id) {
                    return Err(BaselineError::Conflict(format!(
                        "examiner {} already has a session",
                        profile.examiner_id
                    )));
                }
                for lang in Language::ALL {
                    let n = samples.iter().filter(|s| s.language == lang).count();
                    if n != PER_LANGUAGE {
                        return Err(BaselineError::BadRequest(format!(
                            "session {session_id} has {n} {lang} samples"
                        )));
                    }
                }
                let mut seen = HashSet::new();
                if let Some(dup) = samples.iter().find(|s| !seen.insert(&s.form_id)) {
                    return Err(BaselineError::BadRequest(format!(
                        "form {} appears twice in session {session_id}",
                        dup.form_id
                    )));
                }
                self.examiners.insert(profile.examiner_id.clone(), session_id.clone());
                self.sessions.insert(
                    session_id.clone(),
                    SessionState {
                        session_id: session_id.clone(),
                        profile: profile.clone(),
                        samples: samples.clone(),
                        guesses: vec![None; samples.len()],
                        answered: 0,
                        created_ms: *at_ms,
                    },
                );
            }
            Event::GuessRecorded {
                session_id,
                index,
                guess,
                truth,
                ..
            } => {
                let s = self
                    .sessions
                    .get_mut(session_id)
                    .ok_or_else(|| BaselineError::NotFound(format!("session {session_id}")))?;
                let sample = s
                    .samples
                    .get(*index)
                    .ok_or_else(|| BaselineError::NotFound(format!("sample {index} of session {session_id}")))?;
                if sample.gender != *truth {
                    return Err(BaselineError::BadRequest(format!(
                        "recorded truth for sample {index} disagrees with the session"
                    )));
                }
                if s.guesses[*index].is_some() {
                    return Err(BaselineError::Conflict(format!(
                        "sample {index} of session {session_id} already answered"
                    )));
                }
                s.guesses[*index] = Some(*guess);
                s.answered += 1;
            }
        }
        Ok(())
    }
}
