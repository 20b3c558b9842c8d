use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use graphodex_baseline::{SamplePool, Store, StoreConfig, SystemClock};
use graphodex_core::aggregate::{aggregate, score_form, FormPrediction, Method};
use graphodex_core::experiments::{
    check_languages, prepare, render_report, run_suite, samples, table2_configs, write_reports, Protocol,
    ReportFormat, SuiteResult,
};
use graphodex_core::model::{build_network, load_checkpoint, save_checkpoint, train, Hyper, TrainHistory};
use graphodex_core::patching::{
    balance_forms, build_patch_dataset_lenient, load_manifest, process_form, write_archive, FormRecord, Gender,
    Language,
};
use graphodex_core::rng::{child_rng, child_u64};
use graphodex_core::synth::{generate_corpus, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::{Command, Format};

pub fn dispatch(command: &Command, settings: &Settings, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth {
            forms_per_class,
            page_size,
        } => {
            let dir = settings.require_out()?;
            let forms = cmd_synth(dir, *forms_per_class, *page_size, settings.seed())?;
            writeln!(out, "wrote {} forms and {}", forms.len(), dir.join("manifest.csv").display())?;
        }
        Command::Preprocess => {
            let summary = cmd_preprocess(settings)?;
            writeln!(
                out,
                "kept {} of {} forms, {} patches; {} excluded for balance",
                summary.forms_kept,
                summary.forms_in_manifest,
                summary.patches,
                summary.excluded_for_balance.len()
            )?;
            if !summary.failures.is_empty() {
                let list: Vec<String> = summary.failures.iter().map(|f| format!("{}: {}", f.form_id, f.error)).collect();
                return Err(CliError::Data(format!("{} forms failed:\n  {}", list.len(), list.join("\n  "))));
            }
        }
        Command::Train { fold, train_langs } => {
            let (history, path) = cmd_train(settings, *fold, train_langs)?;
            if let Some(last) = history.epochs.last() {
                writeln!(
                    out,
                    "trained {} epochs: loss {:.4}, train accuracy {:.2}%",
                    last.epoch,
                    last.train_loss,
                    last.train_accuracy * 100.0
                )?;
            }
            writeln!(out, "checkpoint {}", path.display())?;
        }
        Command::Evaluate { checkpoint, test_langs } => {
            let eval = cmd_evaluate(settings, checkpoint, test_langs)?;
            for (method, acc) in &eval.accuracy {
                writeln!(out, "{}: {:.2}% of {} test forms", method.title(), acc * 100.0, eval.test_forms)?;
            }
        }
        Command::Predict {
            checkpoint,
            image,
            language,
        } => {
            for p in cmd_predict(settings, checkpoint, image, *language)? {
                writeln!(out, "{}", describe(&p))?;
            }
        }
        Command::RunSuite => {
            let result = cmd_run_suite(settings)?;
            write!(out, "{}", render_report(&result.reports, ReportFormat::Markdown)?)?;
        }
        Command::Report { results, format } => write!(out, "{}", cmd_report(results, *format)?)?,
        Command::Serve { ui } => cmd_serve(settings, ui.as_deref())?,
    }
    Ok(())
}

pub fn describe(p: &FormPrediction) -> String {
    format!(
        "{}: {} (female votes {}/{}, mean p_female {:.4})",
        p.method.title(),
        p.decision,
        p.positive_votes,
        p.patch_count,
        p.mean_p_female
    )
}

pub fn read_manifest(settings: &Settings) -> Result<Vec<FormRecord>> {
    let forms = load_manifest(settings.require_manifest()?)?;
    if forms.is_empty() {
        return Err(CliError::Usage("manifest lists no forms".into()));
    }
    Ok(forms)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn cmd_synth(dir: &Path, forms_per_class: usize, page_size: usize, seed: u64) -> Result<Vec<FormRecord>> {
    Ok(generate_corpus(
        dir,
        &SynthConfig {
            forms_per_class,
            page_width: page_size,
            page_height: page_size,
            seed,
        },
    )?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormFailure {
    pub form_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub forms_in_manifest: usize,
    pub forms_kept: usize,
    pub patches: usize,
    pub excluded_for_balance: Vec<String>,
    pub failures: Vec<FormFailure>,
}

/// Balances, cuts patches and writes the archive and `summary.json` to
/// `--out`. Forms that fail are listed rather than aborting the run.
pub fn cmd_preprocess(settings: &Settings) -> Result<PreprocessSummary> {
    let protocol = settings.protocol()?;
    let manifest = read_manifest(settings)?;
    let dir = settings.require_out()?;
    let balanced = balance_forms(&manifest, &mut child_rng(protocol.seed, "balance"))?;
    let kept: BTreeSet<&str> = balanced.iter().map(|f| f.form_id.as_str()).collect();
    let excluded_for_balance = manifest
        .iter()
        .filter(|f| !kept.contains(f.form_id.as_str()))
        .map(|f| f.form_id.clone())
        .collect();
    let (dataset, failures) = build_patch_dataset_lenient(
        &balanced,
        &protocol.spec,
        child_u64(protocol.seed, "patches"),
        protocol.crop_margin,
    )?;
    create_dir(dir)?;
    let archive = write_archive(dir, &dataset)?;
    let summary = PreprocessSummary {
        forms_in_manifest: manifest.len(),
        forms_kept: archive.forms,
        patches: archive.patches,
        excluded_for_balance,
        failures: failures
            .into_iter()
            .map(|(form_id, e)| FormFailure {
                form_id,
                error: e.to_string(),
            })
            .collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn lang_set(langs: &[Language]) -> Result<BTreeSet<Language>> {
    if langs.is_empty() {
        return Err(CliError::Usage("at least one language is required".into()));
    }
    Ok(langs.iter().copied().collect())
}

/// Trains on fold `fold` (1-based) of the protocol split, leaving the test
/// writers untouched. Writes `model.gdxm` and `history.json` to `--out`.
pub fn cmd_train(settings: &Settings, fold: usize, langs: &[Language]) -> Result<(TrainHistory, PathBuf)> {
    let protocol = settings.protocol()?;
    let manifest = read_manifest(settings)?;
    let dir = settings.require_out()?;
    let langs = lang_set(langs)?;
    if fold == 0 || fold > protocol.folds {
        return Err(CliError::Usage(format!("fold must be in 1..={}", protocol.folds)));
    }
    let prepared = prepare(&manifest, &protocol)?;
    let split = &prepared.split.folds[fold - 1];
    let train_forms = prepared.select(&split.train, &langs);
    let val_forms = prepared.select(&split.val, &langs);
    if train_forms.is_empty() {
        return Err(CliError::Data("no training forms in the selected languages".into()));
    }
    let seed = child_u64(protocol.seed, &format!("train/fold{fold}"));
    let net = build_network::<f32>(protocol.arch.clone(), child_u64(seed, "init"))?;
    let hyper = Hyper {
        seed: child_u64(seed, "train"),
        ..protocol.hyper.clone()
    };
    let (net, history) = train(net, &samples(&train_forms), &samples(&val_forms), &hyper)?;
    create_dir(dir)?;
    let path = dir.join("model.gdxm");
    save_checkpoint(&net, &path)?;
    write_json(&dir.join("history.json"), &history)?;
    Ok((history, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub test_forms: usize,
    pub accuracy: BTreeMap<Method, f64>,
    pub predictions: Vec<FormPrediction>,
}

/// Scores the protocol's fixed test forms; with `--out`, also writes
/// `evaluation.json`.
pub fn cmd_evaluate(settings: &Settings, checkpoint: &Path, langs: &[Language]) -> Result<Evaluation> {
    let protocol = settings.protocol()?;
    let manifest = read_manifest(settings)?;
    let langs = lang_set(langs)?;
    let net = load_checkpoint(checkpoint, Some(&protocol.arch))?;
    let prepared = prepare(&manifest, &protocol)?;
    let forms = prepared.select(&prepared.split.test, &langs);
    if forms.is_empty() {
        return Err(CliError::Data("no test forms in the selected languages".into()));
    }
    let methods = settings.methods();
    let mut correct: BTreeMap<Method, usize> = BTreeMap::new();
    let mut predictions = Vec::new();
    for f in &forms {
        let scores = score_form(&net, &f.patches)?;
        for &m in &methods {
            let p = aggregate(m, &f.record.form_id, &scores)?;
            *correct.entry(m).or_default() += (p.decision == f.record.gender) as usize;
            predictions.push(p);
        }
    }
    let eval = Evaluation {
        test_forms: forms.len(),
        accuracy: correct
            .into_iter()
            .map(|(m, c)| (m, c as f64 / forms.len() as f64))
            .collect(),
        predictions,
    };
    if let Some(dir) = &settings.out {
        create_dir(dir)?;
        write_json(&dir.join("evaluation.json"), &eval)?;
    }
    Ok(eval)
}

pub fn cmd_predict(settings: &Settings, checkpoint: &Path, image: &Path, language: Language) -> Result<Vec<FormPrediction>> {
    let protocol: Protocol = settings.protocol()?;
    let net = load_checkpoint(checkpoint, None)?;
    let dims = protocol.spec.output_dims();
    if (net.arch.input_height, net.arch.input_width) != dims {
        return Err(CliError::Usage(format!(
            "checkpoint takes {}×{} patches but the patch settings give {}×{}",
            net.arch.input_height, net.arch.input_width, dims.0, dims.1
        )));
    }
    let form_id = image
        .file_stem()
        .map_or_else(|| "form".to_string(), |s| s.to_string_lossy().into_owned());
    let record = FormRecord {
        form_id,
        image_path: image.to_path_buf(),
        language,
        // Unknown; only used as a training label.
        gender: Gender::Male,
        writer_id: None,
        demographics: BTreeMap::new(),
    };
    let form = process_form(&record, &protocol.spec, child_u64(protocol.seed, "patches"), protocol.crop_margin)?;
    let scores = score_form(&net, &form.patches)?;
    settings
        .methods()
        .into_iter()
        .map(|m| Ok(aggregate(m, &record.form_id, &scores)?))
        .collect()
}

/// Runs the seven configurations and writes `report.csv`, `report.md` and
/// `results.json` to `--out`.
pub fn cmd_run_suite(settings: &Settings) -> Result<SuiteResult> {
    let protocol = settings.protocol()?;
    let manifest = read_manifest(settings)?;
    let dir = settings.require_out()?;
    check_languages(&manifest, &table2_configs())?;
    let result = run_suite(&manifest, &protocol)?;
    write_reports(dir, &result)?;
    Ok(result)
}

pub fn cmd_report(results: &Path, format: Format) -> Result<String> {
    let text = std::fs::read_to_string(results).map_err(|e| CliError::Io(format!("{}: {e}", results.display())))?;
    let result: SuiteResult =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", results.display())))?;
    let format = match format {
        Format::Md => ReportFormat::Markdown,
        Format::Csv => ReportFormat::Csv,
    };
    Ok(render_report(&result.reports, format)?)
}

pub fn cmd_serve(settings: &Settings, ui: Option<&Path>) -> Result<()> {
    let manifest = read_manifest(settings)?;
    let log_dir = settings.require_out()?;
    let addr: SocketAddr = settings
        .addr
        .as_deref()
        .unwrap_or("127.0.0.1:8080")
        .parse()
        .map_err(|e| CliError::Usage(format!("--addr: {e}")))?;
    let config = StoreConfig {
        crop_margin: settings.protocol()?.crop_margin,
        ..StoreConfig::new(log_dir, settings.seed())
    };
    let store = Store::open(SamplePool::new(&manifest)?, config, Arc::new(SystemClock))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(graphodex_baseline::serve(addr, Arc::new(store), ui))?;
    Ok(())
}
