//! The service core: a single log writer and an immutable state snapshot
//! that readers clone out of a short-held lock.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use graphodex_core::imaging;
use graphodex_core::patching::{FormRecord, Language, DEFAULT_CROP_MARGIN};
use graphodex_core::rng::child_rng;
use rand::seq::{index, SliceRandom};
use rand::RngCore;

use crate::eventlog::{Event, EventLog, SampleRef};
use crate::session::{Progress, SessionResults, SessionView, State};
use crate::stats::{aggregate_stats, HumanBaselineReport};
use crate::{BaselineError, ExaminerProfile, NewExaminer, Result, PER_LANGUAGE};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// Test clock: returns a settable value and advances by `step` per read.
#[derive(Debug, Default)]
pub struct FixedClock {
    now: AtomicU64,
    step: u64,
}

impl FixedClock {
    pub fn new(start_ms: u64, step: u64) -> Self {
        FixedClock {
            now: AtomicU64::new(start_ms),
            step,
        }
    }

    pub fn set(&self, ms: u64) {
        self.now.store(ms, Ordering::SeqCst);
    }
}

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.now.fetch_add(self.step, Ordering::SeqCst)
    }
}

/// Forms available to sessions, grouped by language and sorted by id so a
/// seed picks the same forms regardless of manifest order.
#[derive(Debug, Clone, Default)]
pub struct SamplePool {
    by_language: BTreeMap<Language, Vec<FormRecord>>,
    paths: HashMap<String, PathBuf>,
}

impl SamplePool {
    pub fn new(forms: &[FormRecord]) -> Result<Self> {
        let mut pool = SamplePool::default();
        for f in forms {
            if pool.paths.insert(f.form_id.clone(), f.image_path.clone()).is_some() {
                return Err(BaselineError::BadRequest(format!("duplicate form_id {}", f.form_id)));
            }
            pool.by_language.entry(f.language).or_default().push(f.clone());
        }
        for v in pool.by_language.values_mut() {
            v.sort_by(|a, b| a.form_id.cmp(&b.form_id));
        }
        Ok(pool)
    }

    pub fn count(&self, language: Language) -> usize {
        self.by_language.get(&language).map_or(0, Vec::len)
    }

    pub fn image_path(&self, form_id: &str) -> Option<&Path> {
        self.paths.get(form_id).map(PathBuf::as_path)
    }

    fn draw(&self, rng: &mut impl RngCore) -> Result<Vec<SampleRef>> {
        let mut picked = Vec::with_capacity(2 * PER_LANGUAGE);
        for lang in Language::ALL {
            let forms = self.by_language.get(&lang).map(Vec::as_slice).unwrap_or_default();
            if forms.len() < PER_LANGUAGE {
                return Err(BaselineError::Capacity(format!(
                    "{} {lang} forms in the pool, {PER_LANGUAGE} needed",
                    forms.len()
                )));
            }
            for i in index::sample(rng, forms.len(), PER_LANGUAGE) {
                let f = &forms[i];
                picked.push(SampleRef {
                    form_id: f.form_id.clone(),
                    language: f.language,
                    gender: f.gender,
                });
            }
        }
        picked.shuffle(rng);
        Ok(picked)
    }
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub log_dir: PathBuf,
    pub seed: u64,
    /// Seal the active log segment once it reaches this size.
    pub rotate_bytes: Option<u64>,
    pub crop_margin: usize,
}

impl StoreConfig {
    pub fn new(log_dir: impl Into<PathBuf>, seed: u64) -> Self {
        StoreConfig {
            log_dir: log_dir.into(),
            seed,
            rotate_bytes: Some(8 << 20),
            crop_margin: DEFAULT_CROP_MARGIN,
        }
    }
}

pub struct Store {
    pool: SamplePool,
    config: StoreConfig,
    clock: Arc<dyn Clock>,
    writer: Mutex<EventLog>,
    snapshot: RwLock<Arc<State>>,
    images: Mutex<HashMap<String, Arc<Vec<u8>>>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Store {
    /// Opens the log, replaying every recorded event into the initial
    /// snapshot.
    pub fn open(pool: SamplePool, config: StoreConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        let (log, events) = EventLog::open(&config.log_dir, config.rotate_bytes)?;
        let state = State::replay(&events)?;
        log::info!(
            "replayed {} events into {} sessions from {}",
            events.len(),
            state.sessions.len(),
            config.log_dir.display()
        );
        Ok(Store {
            pool,
            config,
            clock,
            writer: Mutex::new(log),
            snapshot: RwLock::new(Arc::new(state)),
            images: Mutex::new(HashMap::new()),
        })
    }

    pub fn snapshot(&self) -> Arc<State> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn pool(&self) -> &SamplePool {
        &self.pool
    }

    /// Validates, appends durably, then publishes. Holding the writer lock
    /// throughout keeps log order and snapshot order identical.
    fn commit(&self, build: impl FnOnce(&State, u64) -> Result<Event>) -> Result<Arc<State>> {
        let mut log = self.writer.lock().expect("writer lock");
        let current = self.snapshot();
        let event = build(&current, self.clock.now_ms())?;
        let mut next = (*current).clone();
        next.apply(&event)?;
        log.append(&event)?;
        let next = Arc::new(next);
        *self.snapshot.write().expect("snapshot lock") = next.clone();
        Ok(next)
    }

    pub fn create_session(&self, intake: NewExaminer) -> Result<SessionView> {
        if intake.age_bracket.trim().is_empty() {
            return Err(BaselineError::BadRequest("age_bracket is required".into()));
        }
        let mut created = String::new();
        let state = self.commit(|state, at_ms| {
            // Session n draws from its own stream, so restarts reproduce it.
            let n = state.sessions.len();
            let mut rng = child_rng(self.config.seed, &format!("session/{n}"));
            let mut id_bytes = [0u8; 16];
            rng.fill_bytes(&mut id_bytes);
            let session_id = uuid::Builder::from_random_bytes(id_bytes).into_uuid().to_string();
            let examiner_id = match &intake.examiner_id {
                Some(id) if !id.trim().is_empty() => id.trim().to_string(),
                _ => format!("examiner-{session_id}"),
            };
            if state.has_examiner(&examiner_id) {
                return Err(BaselineError::Conflict(format!("examiner {examiner_id} already has a session")));
            }
            let samples = self.pool.draw(&mut rng)?;
            created = session_id.clone();
            Ok(Event::SessionCreated {
                session_id,
                profile: ExaminerProfile {
                    examiner_id,
                    gender: intake.gender,
                    age_bracket: intake.age_bracket.trim().to_string(),
                    education: intake.education.as_deref().map(str::trim).filter(|e| !e.is_empty()).map(String::from),
                },
                samples,
                at_ms,
            })
        })?;
        Ok(state.session(&created)?.view())
    }

    pub fn session(&self, session_id: &str) -> Result<SessionView> {
        Ok(self.snapshot().session(session_id)?.view())
    }

    pub fn submit_guess(&self, session_id: &str, index: usize, guess: graphodex_core::patching::Gender) -> Result<Progress> {
        let state = self.commit(|state, at_ms| {
            let s = state.session(session_id)?;
            let sample = s
                .samples
                .get(index)
                .ok_or_else(|| BaselineError::NotFound(format!("sample {index} of session {session_id}")))?;
            Ok(Event::GuessRecorded {
                session_id: session_id.to_string(),
                index,
                guess,
                truth: sample.gender,
                at_ms,
            })
        })?;
        Ok(state.session(session_id)?.progress())
    }

    pub fn session_results(&self, session_id: &str) -> Result<SessionResults> {
        self.snapshot().session(session_id)?.results()
    }

    pub fn aggregate_stats(&self) -> Result<HumanBaselineReport> {
        aggregate_stats(&self.snapshot())
    }

    /// PNG of the cropped text region of sample `index`.
    pub fn sample_png(&self, session_id: &str, index: usize) -> Result<Arc<Vec<u8>>> {
        let snap = self.snapshot();
        let s = snap.session(session_id)?;
        let sample = s
            .samples
            .get(index)
            .ok_or_else(|| BaselineError::NotFound(format!("sample {index} of session {session_id}")))?;
        if let Some(png) = self.images.lock().expect("image cache").get(&sample.form_id) {
            return Ok(png.clone());
        }
        let path = self
            .pool
            .image_path(&sample.form_id)
            .ok_or_else(|| BaselineError::NotFound(format!("form {} is not in the pool", sample.form_id)))?;
        let page = imaging::load_form_image(path)?;
        let png = Arc::new(imaging::extract_text_region(&page, self.config.crop_margin)?.to_png()?);
        self.images
            .lock()
            .expect("image cache")
            .insert(sample.form_id.clone(), png.clone());
        Ok(png)
    }
}
