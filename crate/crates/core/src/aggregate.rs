//! Form-level decisions from per-patch female probabilities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{predict_patch, ModelError, NetworkParams};
use crate::patching::{Gender, Patch};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("data error: {0}")]
    Data(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, AggregateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MajorityVote,
    AverageSoftmax,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::MajorityVote, Method::AverageSoftmax];

    /// Name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Method::MajorityVote => "Majority vote",
            Method::AverageSoftmax => "Avg. softmax",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MajorityVote => "majority_vote",
            Method::AverageSoftmax => "average_softmax",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = AggregateError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "majority_vote" | "majority" => Ok(Method::MajorityVote),
            "average_softmax" | "average" | "avg" => Ok(Method::AverageSoftmax),
            other => Err(AggregateError::Usage(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormPrediction {
    pub form_id: String,
    pub method: Method,
    /// Patches with `p_female > 0.5`.
    pub positive_votes: usize,
    pub patch_count: usize,
    pub mean_p_female: f64,
    pub decision: Gender,
}

/// Correctly rounded sum of finite values (Shewchuk's partials, as in
/// Python's `math.fsum`).
pub(crate) fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

struct Summary {
    votes: usize,
    /// Correctly rounded, so independent of patch order.
    mean: f64,
}

fn summarize(form_id: &str, p_females: &[f64]) -> Result<Summary> {
    if p_females.is_empty() {
        return Err(AggregateError::Data(format!("form {form_id:?} has no patch predictions")));
    }
    if let Some(p) = p_females.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(AggregateError::Data(format!("probability {p} outside [0, 1]")));
    }
    let n = p_females.len() as f64;
    Ok(Summary {
        votes: p_females.iter().filter(|&&p| p > 0.5).count(),
        mean: exact_sum(p_females.iter().copied()) / n,
    })
}

fn by_mean(s: &Summary) -> Gender {
    if s.mean > 0.5 {
        Gender::Female
    } else {
        Gender::Male
    }
}

/// Female iff more patches vote female than male; an exact tie falls back to
/// the average-softmax rule.
pub fn majority_vote(form_id: &str, p_females: &[f64]) -> Result<FormPrediction> {
    let s = summarize(form_id, p_females)?;
    let against = p_females.len() - s.votes;
    let decision = match s.votes.cmp(&against) {
        std::cmp::Ordering::Greater => Gender::Female,
        std::cmp::Ordering::Less => Gender::Male,
        std::cmp::Ordering::Equal => by_mean(&s),
    };
    Ok(FormPrediction {
        form_id: form_id.to_string(),
        method: Method::MajorityVote,
        positive_votes: s.votes,
        patch_count: p_females.len(),
        mean_p_female: s.mean,
        decision,
    })
}

/// Female iff the mean `p_female` strictly exceeds 0.5.
pub fn average_softmax(form_id: &str, p_females: &[f64]) -> Result<FormPrediction> {
    let s = summarize(form_id, p_females)?;
    Ok(FormPrediction {
        form_id: form_id.to_string(),
        method: Method::AverageSoftmax,
        positive_votes: s.votes,
        patch_count: p_females.len(),
        mean_p_female: s.mean,
        decision: by_mean(&s),
    })
}

pub fn aggregate(method: Method, form_id: &str, p_females: &[f64]) -> Result<FormPrediction> {
    match method {
        Method::MajorityVote => majority_vote(form_id, p_females),
        Method::AverageSoftmax => average_softmax(form_id, p_females),
    }
}

/// Anything that scores a patch with a female probability.
pub trait PatchClassifier: Sync {
    fn p_female(&self, patch: &Patch) -> Result<f64>;
}

impl PatchClassifier for NetworkParams<f32> {
    fn p_female(&self, patch: &Patch) -> Result<f64> {
        Ok(predict_patch(self, &patch.gray)?[1] as f64)
    }
}

/// Per-patch female probabilities for one form's patches.
pub fn score_form<C: PatchClassifier + ?Sized>(classifier: &C, patches: &[Patch]) -> Result<Vec<f64>> {
    let Some(first) = patches.first() else {
        return Err(AggregateError::Data("no patches to classify".into()));
    };
    if let Some(p) = patches.iter().find(|p| p.form_id != first.form_id) {
        return Err(AggregateError::Usage(format!(
            "patches from forms {:?} and {:?} passed as one form",
            first.form_id, p.form_id
        )));
    }
    patches.iter().map(|p| classifier.p_female(p)).collect()
}

pub fn classify_form<C: PatchClassifier + ?Sized>(
    classifier: &C,
    patches: &[Patch],
    method: Method,
) -> Result<FormPrediction> {
    let scores = score_form(classifier, patches)?;
    aggregate(method, &patches[0].form_id, &scores)
}
