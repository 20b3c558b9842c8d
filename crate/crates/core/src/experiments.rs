//! Fixed-test k-fold cross-validation over language configurations and
//! Table-2-shaped reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{aggregate, exact_sum, score_form, AggregateError, Method, PatchClassifier};
use crate::model::{build_network, train, ArchConfig, Hyper, ModelError, NetworkParams, Sample};
use crate::patching::{
    balance_forms, build_patch_dataset, FormPatches, FormRecord, Gender, Language, PatchDataset, PatchError,
    PatchSpec, DEFAULT_CROP_MARGIN,
};
use crate::rng::{child_rng, child_u64};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{config}, fold {fold}: {source}")]
    Fold {
        config: String,
        fold: usize,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("report parse error: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl ExperimentError {
    /// The underlying error with fold context stripped.
    pub fn root(&self) -> &ExperimentError {
        match self {
            ExperimentError::Fold { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// How test forms are chosen when train and test languages differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSelection {
    /// Splits are made over writers; every configuration tests on the
    /// test-language forms of the same fixed test writers.
    #[default]
    SameWriters,
    /// Splits are made over individual forms, ignoring writer identity.
    TestPartition,
}

impl FromStr for TestSelection {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "same_writers" => Ok(TestSelection::SameWriters),
            "test_partition" => Ok(TestSelection::TestPartition),
            other => Err(ExperimentError::Config(format!("unknown test selection {other:?}"))),
        }
    }
}

/// Settings shared by every configuration of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub spec: PatchSpec,
    pub arch: ArchConfig,
    pub hyper: Hyper,
    pub folds: usize,
    pub seed: u64,
    pub test_selection: TestSelection,
    pub crop_margin: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            spec: PatchSpec::default(),
            arch: ArchConfig::default(),
            hyper: Hyper::default(),
            folds: 10,
            seed: 42,
            test_selection: TestSelection::SameWriters,
            crop_margin: DEFAULT_CROP_MARGIN,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(ExperimentError::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        self.spec.validate()?;
        self.arch.validate()?;
        self.hyper.validate()?;
        let (h, w) = self.spec.output_dims();
        if (h, w) != (self.arch.input_height, self.arch.input_width) {
            return Err(ExperimentError::Config(format!(
                "patches are {h}×{w} after downscaling but the network takes {}×{}",
                self.arch.input_height, self.arch.input_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Table row group, e.g. "Intra-Language".
    pub experiment: String,
    pub train_langs: BTreeSet<Language>,
    pub test_langs: BTreeSet<Language>,
}

fn lang_label(langs: &BTreeSet<Language>) -> String {
    // HE first, matching the table.
    Language::ALL
        .iter()
        .filter(|l| langs.contains(l))
        .map(|l| l.code())
        .collect::<Vec<_>>()
        .join("+")
}

impl ExperimentConfig {
    pub fn new(experiment: &str, train: &[Language], test: &[Language]) -> Self {
        Self {
            experiment: experiment.into(),
            train_langs: train.iter().copied().collect(),
            test_langs: test.iter().copied().collect(),
        }
    }

    pub fn train_label(&self) -> String {
        lang_label(&self.train_langs)
    }

    pub fn test_label(&self) -> String {
        lang_label(&self.test_langs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_langs.is_empty() || self.test_langs.is_empty() {
            return Err(ExperimentError::Config(format!("{self}: empty language set")));
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}/{}", self.experiment, self.train_label(), self.test_label())
    }
}

/// The seven configurations, in table order.
pub fn table2_configs() -> Vec<ExperimentConfig> {
    use Language::{En, He};
    vec![
        ExperimentConfig::new("Intra-Language", &[He], &[He]),
        ExperimentConfig::new("Intra-Language", &[En], &[En]),
        ExperimentConfig::new("Inter-Language", &[He], &[En]),
        ExperimentConfig::new("Inter-Language", &[En], &[He]),
        ExperimentConfig::new("Mixed-Language", &[He, En], &[He]),
        ExperimentConfig::new("Mixed-Language", &[He, En], &[En]),
        ExperimentConfig::new("Mixed-Language", &[He, En], &[He, En]),
    ]
}

/// A unit of splitting: a writer or a single form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitUnit {
    pub id: String,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub test: Vec<String>,
    pub folds: Vec<FoldSplit>,
}

/// 20% (rounded down) of the units become the fixed test set, stratified by
/// gender; per fold the rest is shuffled into 10% validation (rounded down,
/// as a fraction of all units) and training.
pub fn make_splits(units: &[SplitUnit], folds: usize, seed: u64) -> Result<Split> {
    let n = units.len();
    if folds < 2 {
        return Err(ExperimentError::Config(format!("need at least 2 folds, got {folds}")));
    }
    let n_test = n * 2 / 10;
    let n_val = n / 10;
    if n < folds || n_test == 0 {
        return Err(ExperimentError::Data(format!(
            "{n} units are too few for {folds} folds with a 20% test set"
        )));
    }
    let mut ids = BTreeSet::new();
    if let Some(dup) = units.iter().find(|u| !ids.insert(u.id.as_str())) {
        return Err(ExperimentError::Data(format!("unit {:?} listed twice", dup.id)));
    }

    let mut by_gender: BTreeMap<Gender, Vec<&str>> = BTreeMap::new();
    for u in units {
        by_gender.entry(u.gender).or_default().push(&u.id);
    }
    // Largest-remainder quotas so each gender gets its proportional share.
    let mut quotas: Vec<(Gender, usize, usize)> = by_gender
        .iter()
        .map(|(&g, v)| (g, n_test * v.len() / n, n_test * v.len() % n))
        .collect();
    let mut left = n_test - quotas.iter().map(|q| q.1).sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(quotas[i].2));
    for i in order {
        if left == 0 {
            break;
        }
        quotas[i].1 += 1;
        left -= 1;
    }

    let mut test = Vec::with_capacity(n_test);
    let mut rest = Vec::with_capacity(n - n_test);
    for (gender, quota, _) in quotas {
        let mut pool = by_gender[&gender].clone();
        pool.sort_unstable();
        pool.shuffle(&mut child_rng(seed, &format!("split/test/{gender}")));
        test.extend(pool[..quota].iter().map(|s| s.to_string()));
        rest.extend(pool[quota..].iter().map(|s| s.to_string()));
    }
    test.sort_unstable();
    rest.sort_unstable();

    let folds = (0..folds)
        .map(|k| {
            let mut pool = rest.clone();
            pool.shuffle(&mut child_rng(seed, &format!("split/fold/{k}")));
            let mut val = pool[..n_val].to_vec();
            let mut train = pool[n_val..].to_vec();
            val.sort_unstable();
            train.sort_unstable();
            FoldSplit { train, val }
        })
        .collect();
    Ok(Split { test, folds })
}

/// Trains a patch classifier for one fold.
pub trait FoldTrainer: Sync {
    type Classifier: PatchClassifier + Send;
    fn train_fold(&self, train: &[Sample<'_>], val: &[Sample<'_>], seed: u64) -> Result<Self::Classifier>;
}

/// The CNN, trained with Adadelta.
#[derive(Debug, Clone)]
pub struct CnnTrainer {
    pub arch: ArchConfig,
    pub hyper: Hyper,
}

impl FoldTrainer for CnnTrainer {
    type Classifier = NetworkParams<f32>;

    fn train_fold(&self, train_set: &[Sample<'_>], val: &[Sample<'_>], seed: u64) -> Result<NetworkParams<f32>> {
        let net = build_network::<f32>(self.arch.clone(), child_u64(seed, "init"))?;
        let hyper = Hyper {
            seed: child_u64(seed, "train"),
            ..self.hyper.clone()
        };
        let (net, history) = train(net, train_set, val, &hyper)?;
        if let Some(last) = history.epochs.last() {
            log::debug!(
                "fold trained: loss {:.4}, train acc {:.3}, best val epoch {:?}",
                last.train_loss,
                last.train_accuracy,
                history.best_val_epoch
            );
        }
        Ok(net)
    }
}

/// Balanced forms, their patches and the shared split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: PatchDataset,
    pub split: Split,
    pub test_selection: TestSelection,
    /// Forms dropped to balance genders.
    pub excluded: Vec<String>,
}

impl Prepared {
    fn unit_of<'a>(&self, form: &'a FormRecord) -> &'a str {
        match self.test_selection {
            TestSelection::SameWriters => form.writer_key(),
            TestSelection::TestPartition => &form.form_id,
        }
    }

    /// Units of a form set.
    pub fn units(forms: &[FormRecord], selection: TestSelection) -> Vec<SplitUnit> {
        let mut seen = BTreeMap::new();
        for f in forms {
            let id = match selection {
                TestSelection::SameWriters => f.writer_key(),
                TestSelection::TestPartition => &f.form_id,
            };
            seen.entry(id.to_string()).or_insert(f.gender);
        }
        seen.into_iter().map(|(id, gender)| SplitUnit { id, gender }).collect()
    }

    /// Forms of the given split units written in `langs`.
    pub fn select<'a>(&'a self, units: &[String], langs: &BTreeSet<Language>) -> Vec<&'a FormPatches> {
        let units: BTreeSet<&str> = units.iter().map(String::as_str).collect();
        self.dataset
            .forms
            .iter()
            .filter(|f| langs.contains(&f.record.language) && units.contains(self.unit_of(&f.record)))
            .collect()
    }
}

/// Balances the manifest, builds every form's patches and draws the split.
pub fn prepare(manifest: &[FormRecord], protocol: &Protocol) -> Result<Prepared> {
    protocol.validate()?;
    let balanced = balance_forms(manifest, &mut child_rng(protocol.seed, "balance"))?;
    let kept: BTreeSet<&str> = balanced.iter().map(|f| f.form_id.as_str()).collect();
    let excluded = manifest
        .iter()
        .filter(|f| !kept.contains(f.form_id.as_str()))
        .map(|f| f.form_id.clone())
        .collect();
    let dataset = build_patch_dataset(&balanced, &protocol.spec, child_u64(protocol.seed, "patches"), protocol.crop_margin)?;
    let units = Prepared::units(&balanced, protocol.test_selection);
    let split = make_splits(&units, protocol.folds, child_u64(protocol.seed, "split"))?;
    Ok(Prepared {
        dataset,
        split,
        test_selection: protocol.test_selection,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_forms: usize,
    pub val_forms: usize,
    pub test_forms: usize,
    pub accuracy: BTreeMap<Method, f64>,
}

/// Every patch of `forms` as a labeled training sample.
pub fn samples<'a>(forms: &[&'a FormPatches]) -> Vec<Sample<'a>> {
    forms
        .iter()
        .flat_map(|f| {
            let label = f.label();
            f.patches.iter().map(move |p| Sample { gray: &p.gray, label })
        })
        .collect()
}

fn fold_seed(seed: u64, config: &ExperimentConfig, fold: usize) -> u64 {
    child_u64(seed, &format!("{}/{}/{}/fold{fold}", config.experiment, config.train_label(), config.test_label()))
}

/// Trains on the fold's training writers in the train languages and scores
/// the fixed test forms in the test languages with both measures.
pub fn run_fold<T: FoldTrainer>(
    config: &ExperimentConfig,
    prepared: &Prepared,
    trainer: &T,
    fold: usize,
    seed: u64,
) -> Result<FoldResult> {
    let annotate = |e: ExperimentError| ExperimentError::Fold {
        config: config.to_string(),
        fold: fold + 1,
        source: Box::new(e),
    };
    let split = prepared
        .split
        .folds
        .get(fold)
        .ok_or_else(|| ExperimentError::Config(format!("fold {fold} out of range")))?;
    let train_forms = prepared.select(&split.train, &config.train_langs);
    let val_forms = prepared.select(&split.val, &config.train_langs);
    let test_forms = prepared.select(&prepared.split.test, &config.test_langs);
    if train_forms.is_empty() || test_forms.is_empty() {
        return Err(annotate(ExperimentError::Data(format!(
            "{} training and {} test forms",
            train_forms.len(),
            test_forms.len()
        ))));
    }
    let classifier = trainer
        .train_fold(&samples(&train_forms), &samples(&val_forms), fold_seed(seed, config, fold))
        .map_err(annotate)?;

    let scores = test_forms
        .par_iter()
        .map(|f| Ok((f, score_form(&classifier, &f.patches)?)))
        .collect::<Result<Vec<_>>>()
        .map_err(annotate)?;
    let mut accuracy = BTreeMap::new();
    for method in Method::ALL {
        let mut correct = 0;
        for (form, s) in &scores {
            if aggregate(method, &form.record.form_id, s).map_err(|e| annotate(e.into()))?.decision
                == form.record.gender
            {
                correct += 1;
            }
        }
        accuracy.insert(method, correct as f64 / scores.len() as f64);
    }
    log::info!(
        "{config} fold {}: {}",
        fold + 1,
        accuracy
            .iter()
            .map(|(m, a)| format!("{m} {:.2}%", a * 100.0))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(FoldResult {
        fold: fold + 1,
        train_forms: train_forms.len(),
        val_forms: val_forms.len(),
        test_forms: test_forms.len(),
        accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub avg: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

pub fn fold_stats(values: &[f64]) -> Result<Stats> {
    if values.is_empty() {
        return Err(ExperimentError::Data("no fold results".into()));
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(Stats { avg: min, std_dev: 0.0, min, max });
    }
    let avg = exact_sum(values.iter().copied()) / n;
    let var = exact_sum(values.iter().map(|v| (v - avg).powi(2))) / n;
    Ok(Stats {
        avg,
        std_dev: var.sqrt(),
        min,
        max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub fold_accuracies: Vec<f64>,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub test_selection: TestSelection,
    pub folds: Vec<FoldResult>,
    pub methods: Vec<MethodSummary>,
}

/// Runs every fold of one configuration. Folds run concurrently.
pub fn cross_validate<T: FoldTrainer>(
    config: &ExperimentConfig,
    prepared: &Prepared,
    trainer: &T,
    seed: u64,
) -> Result<ExperimentReport> {
    config.validate()?;
    let folds = (0..prepared.split.folds.len())
        .into_par_iter()
        .map(|k| run_fold(config, prepared, trainer, k, seed))
        .collect::<Result<Vec<_>>>()?;
    summarize(config, prepared.test_selection, folds)
}

fn summarize(config: &ExperimentConfig, test_selection: TestSelection, folds: Vec<FoldResult>) -> Result<ExperimentReport> {
    let methods = Method::ALL
        .iter()
        .map(|&method| {
            let fold_accuracies: Vec<f64> = folds.iter().map(|f| f.accuracy[&method]).collect();
            Ok(MethodSummary {
                method,
                stats: fold_stats(&fold_accuracies)?,
                fold_accuracies,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: config.clone(),
        test_selection,
        folds,
        methods,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub seed: u64,
    pub folds: usize,
    pub test_selection: TestSelection,
    pub forms: usize,
    pub excluded_for_balance: Vec<String>,
    pub test_units: Vec<String>,
    pub reports: Vec<ExperimentReport>,
}

/// Checks that every configuration has both training and test forms.
pub fn check_languages(manifest: &[FormRecord], configs: &[ExperimentConfig]) -> Result<()> {
    let present: BTreeSet<Language> = manifest.iter().map(|f| f.language).collect();
    let missing: Vec<String> = configs
        .iter()
        .filter(|c| !c.train_langs.is_subset(&present) || !c.test_langs.is_subset(&present))
        .map(|c| c.to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        let have = present.iter().map(|l| l.code()).collect::<Vec<_>>().join(", ");
        Err(ExperimentError::Data(format!(
            "manifest has forms in [{have}] only; cannot run {}",
            missing.join("; ")
        )))
    }
}

/// All configurations over one prepared dataset and split.
pub fn run_suite_prepared<T: FoldTrainer>(
    configs: &[ExperimentConfig],
    prepared: &Prepared,
    trainer: &T,
    seed: u64,
) -> Result<Vec<ExperimentReport>> {
    configs.iter().map(|c| cross_validate(c, prepared, trainer, seed)).collect()
}

/// The seven-configuration suite with the CNN trainer.
pub fn run_suite(manifest: &[FormRecord], protocol: &Protocol) -> Result<SuiteResult> {
    let configs = table2_configs();
    check_languages(manifest, &configs)?;
    let prepared = prepare(manifest, protocol)?;
    let trainer = CnnTrainer {
        arch: protocol.arch.clone(),
        hyper: protocol.hyper.clone(),
    };
    let reports = run_suite_prepared(&configs, &prepared, &trainer, protocol.seed)?;
    Ok(SuiteResult {
        seed: protocol.seed,
        folds: protocol.folds,
        test_selection: protocol.test_selection,
        forms: prepared.dataset.forms.len(),
        excluded_for_balance: prepared.excluded.clone(),
        test_units: prepared.split.test.clone(),
        reports,
    })
}

pub const REPORT_COLUMNS: [&str; 8] = ["Experiment", "Train", "Test", "Accuracy Method", "Avg", "Std Dev", "Min", "Max"];

/// One rendered table row; numbers are percentages rounded to 2 decimals
/// (std dev in percentage points).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub train: String,
    pub test: String,
    pub method: String,
    pub avg: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

fn round2(fraction: f64) -> f64 {
    format!("{:.2}", fraction * 100.0).parse().expect("formatted float")
}

pub fn report_rows(reports: &[ExperimentReport]) -> Vec<ReportRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.methods.iter().map(move |m| ReportRow {
                experiment: r.config.experiment.clone(),
                train: r.config.train_label(),
                test: r.config.test_label(),
                method: m.method.title().to_string(),
                avg: round2(m.stats.avg),
                std_dev: round2(m.stats.std_dev),
                min: round2(m.stats.min),
                max: round2(m.stats.max),
            })
        })
        .collect()
}

impl ReportRow {
    fn cells(&self) -> [String; 8] {
        [
            self.experiment.clone(),
            self.train.clone(),
            self.test.clone(),
            self.method.clone(),
            format!("{:.2}%", self.avg),
            format!("{:.2}", self.std_dev),
            format!("{:.2}%", self.min),
            format!("{:.2}%", self.max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub fn render_report(reports: &[ExperimentReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(ExperimentError::Data("no reports to render".into()));
    }
    let rows = report_rows(reports);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| ExperimentError::Io(e.to_string());
            w.write_record(REPORT_COLUMNS).map_err(io)?;
            for r in &rows {
                w.write_record(r.cells()).map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("CSV of UTF-8 cells"))
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", REPORT_COLUMNS.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(REPORT_COLUMNS.len())));
            for r in &rows {
                out.push_str(&format!("| {} |\n", r.cells().join(" | ")));
            }
            Ok(out)
        }
    }
}

fn parse_cell(cell: &str, percent: bool) -> Result<f64> {
    let body = if percent {
        cell.strip_suffix('%')
            .ok_or_else(|| ExperimentError::Parse(format!("{cell:?} is not a percentage")))?
    } else {
        cell
    };
    let v: f64 = body
        .parse()
        .map_err(|_| ExperimentError::Parse(format!("{cell:?} is not a number")))?;
    if !v.is_finite() {
        return Err(ExperimentError::Parse(format!("{cell:?} is not finite")));
    }
    Ok(v)
}

/// Parses a Markdown table produced by [`render_report`].
pub fn parse_markdown_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let split = |line: &str| -> Result<Vec<String>> {
        let inner = line
            .strip_prefix('|')
            .and_then(|l| l.strip_suffix('|'))
            .ok_or_else(|| ExperimentError::Parse(format!("not a table row: {line:?}")))?;
        Ok(inner.split('|').map(|c| c.trim().to_string()).collect())
    };
    let header = lines.next().ok_or_else(|| ExperimentError::Parse("empty report".into()))?;
    if split(header)? != REPORT_COLUMNS {
        return Err(ExperimentError::Parse(format!("unexpected header {header:?}")));
    }
    let rule = lines.next().ok_or_else(|| ExperimentError::Parse("missing header rule".into()))?;
    let rule_cells = split(rule)?;
    if rule_cells.len() != REPORT_COLUMNS.len()
        || !rule_cells.iter().all(|c| !c.is_empty() && c.chars().all(|ch| ch == '-' || ch == ':'))
    {
        return Err(ExperimentError::Parse(format!("bad header rule {rule:?}")));
    }
    lines
        .map(|line| {
            let c = split(line)?;
            if c.len() != REPORT_COLUMNS.len() {
                return Err(ExperimentError::Parse(format!("{} cells in {line:?}", c.len())));
            }
            Ok(ReportRow {
                experiment: c[0].clone(),
                train: c[1].clone(),
                test: c[2].clone(),
                method: c[3].clone(),
                avg: parse_cell(&c[4], true)?,
                std_dev: parse_cell(&c[5], false)?,
                min: parse_cell(&c[6], true)?,
                max: parse_cell(&c[7], true)?,
            })
        })
        .collect()
}

/// Writes `report.csv`, `report.md` and `results.json` into `dir`.
pub fn write_reports(dir: &Path, result: &SuiteResult) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| ExperimentError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let files = [
        ("report.csv", render_report(&result.reports, ReportFormat::Csv)?),
        ("report.md", render_report(&result.reports, ReportFormat::Markdown)?),
        (
            "results.json",
            serde_json::to_string_pretty(result).map_err(|e| ExperimentError::Io(e.to_string()))? + "\n",
        ),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| io(&path, e))?;
    }
    Ok(())
}
