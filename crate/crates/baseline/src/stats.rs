//! Examiner-level accuracy statistics.
//!
//! Scores are integer counts over a fixed denominator, so means and
//! population variances are formed from integer sums and rounded once.
//! The result does not depend on the order sessions are visited.

use std::collections::BTreeMap;

use graphodex_core::patching::Language;
use serde::{Deserialize, Serialize};

use crate::session::State;
use crate::{BaselineError, Result, PER_LANGUAGE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub language: Language,
    pub examiners: usize,
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    /// `examiner_gender`, `age_bracket` or `education`.
    pub dimension: String,
    pub group: String,
    pub stats: Vec<GroupStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanBaselineReport {
    pub complete_sessions: usize,
    pub overall: Vec<GroupStats>,
    pub breakdowns: Vec<Breakdown>,
}

impl HumanBaselineReport {
    pub fn overall(&self, language: Language) -> Option<&GroupStats> {
        self.overall.iter().find(|g| g.language == language)
    }

    pub fn group(&self, dimension: &str, group: &str) -> Option<&Breakdown> {
        self.breakdowns.iter().find(|b| b.dimension == dimension && b.group == group)
    }
}

/// Correct counts for one language; every session shows the same number of
/// samples per language, so the denominator is shared.
#[derive(Debug, Default, Clone, Copy)]
struct Acc {
    n: u128,
    sum: u128,
    sum_sq: u128,
}

impl Acc {
    fn add(&mut self, correct: usize) {
        let c = correct as u128;
        self.n += 1;
        self.sum += c;
        self.sum_sq += c * c;
    }

    fn finish(&self, language: Language) -> GroupStats {
        let (n, t) = (self.n, PER_LANGUAGE as u128);
        let mean = self.sum as f64 / (n * t) as f64;
        let var_num = n * self.sum_sq - self.sum * self.sum;
        let var = var_num as f64 / (n * n * t * t) as f64;
        GroupStats {
            language,
            examiners: n as usize,
            mean,
            std_dev: var.sqrt(),
        }
    }
}

fn finish(map: &BTreeMap<Language, Acc>) -> Vec<GroupStats> {
    map.iter().map(|(l, a)| a.finish(*l)).collect()
}

/// Per-language mean and population std dev of examiner accuracy, overall
/// and split by examiner gender, age bracket and education.
pub fn aggregate_stats(state: &State) -> Result<HumanBaselineReport> {
    let mut overall: BTreeMap<Language, Acc> = BTreeMap::new();
    let mut groups: BTreeMap<(&'static str, String), BTreeMap<Language, Acc>> = BTreeMap::new();
    let mut complete = 0;
    for s in state.complete_sessions() {
        complete += 1;
        let r = s.results()?;
        let p = &s.profile;
        let keys = [
            ("examiner_gender", p.gender.as_str().to_string()),
            ("age_bracket", p.age_bracket.clone()),
            ("education", p.education.clone().unwrap_or_else(|| "unspecified".into())),
        ];
        for score in &r.scores {
            overall.entry(score.language).or_default().add(score.correct);
            for key in &keys {
                groups
                    .entry(key.clone())
                    .or_default()
                    .entry(score.language)
                    .or_default()
                    .add(score.correct);
            }
        }
    }
    if complete == 0 {
        return Err(BaselineError::Empty);
    }
    Ok(HumanBaselineReport {
        complete_sessions: complete,
        overall: finish(&overall),
        breakdowns: groups
            .iter()
            .map(|((dim, group), m)| Breakdown {
                dimension: dim.to_string(),
                group: group.clone(),
                stats: finish(m),
            })
            .collect(),
    })
}
