use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphodex_core::imaging::GrayImage;

fn graphodex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphodex"))
        .args(args)
        .env("GRAPHODEX_LOG", "warn")
        .output()
        .expect("run graphodex")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    ok(&graphodex(&["synth", "--out", s(dir), "--forms-per-class", "20", "--page-size", "192"]));
    dir.join("manifest.csv")
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic_and_counts_forms() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    synth(&a);
    synth(&b);
    assert_eq!(tree(&a), tree(&b));
    let rows = std::fs::read_to_string(a.join("manifest.csv")).unwrap().lines().count();
    assert_eq!(rows, 41);
    let out = graphodex(&["synth", "--out", s(&dir.path().join("c")), "--forms-per-class", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn preprocess_archive_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"));
    let run = |name: &str| {
        let out = dir.path().join(name);
        let stdout = ok(&graphodex(&[
            "preprocess", "--preset", "synthetic", "--manifest", s(&manifest), "--out", s(&out),
        ]));
        assert!(stdout.contains("kept 40 of 40 forms, 1280 patches"), "{stdout}");
        tree(&out)
    };
    assert_eq!(run("p1"), run("p2"));
    let summary = std::fs::read_to_string(dir.path().join("p1/summary.json")).unwrap();
    assert!(summary.contains("\"failures\": []"), "{summary}");
}

#[test]
fn preprocess_reports_failing_forms_and_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"));
    GrayImage::filled(192, 192, 255)
        .save_png(&dir.path().join("corpus/images/w000_HE.png"))
        .unwrap();
    let out = graphodex(&[
        "preprocess", "--preset", "synthetic", "--manifest", s(&manifest), "--out", s(&dir.path().join("p")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("w000_HE"));
    assert!(dir.path().join("p/summary.json").exists());
}

#[test]
fn usage_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "form_id,image_path,language,gender\n").unwrap();
    let out = graphodex(&["preprocess", "--manifest", s(&empty), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no forms"));

    let out = graphodex(&["preprocess", "--manifest", s(&dir.path().join("missing.csv")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));

    assert_eq!(graphodex(&["run-suite"]).status.code(), Some(1));
    assert_eq!(graphodex(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(graphodex(&["run-suite", "--spec.height", "30", "--manifest", s(&empty), "--out", "x"]).status.code(), Some(1));
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"));
    let config = dir.path().join("graphodex.toml");
    std::fs::write(&config, format!("preset = \"synthetic\"\nmanifest = {:?}\n[spec]\ncount = 8\n", s(&manifest))).unwrap();
    let out = dir.path().join("p");
    let stdout = ok(&graphodex(&["preprocess", "--config", s(&config), "--out", s(&out), "--spec.count", "4"]));
    assert!(stdout.contains("160 patches"), "{stdout}");
    std::fs::write(&config, "seeed = 1\n").unwrap();
    assert_eq!(graphodex(&["preprocess", "--config", s(&config)]).status.code(), Some(1));
}

#[test]
fn run_suite_names_configurations_missing_a_language() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"));
    let he_only: String = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .filter(|l| !l.contains(",EN,"))
        .map(|l| format!("{l}\n"))
        .collect();
    let he_manifest = dir.path().join("corpus/he.csv");
    std::fs::write(&he_manifest, he_only).unwrap();
    let out = graphodex(&[
        "run-suite", "--preset", "synthetic", "--manifest", s(&he_manifest), "--out", s(&dir.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("EN"), "{err}");
    assert!(err.contains("Intra-Language"), "{err}");
}

#[test]
fn train_evaluate_predict_and_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("corpus"));
    let model_dir = dir.path().join("model");
    let common = ["--preset", "synthetic", "--manifest", s(&manifest), "--hyper.epochs", "3"];
    let mut args = vec!["train", "--out", s(&model_dir)];
    args.extend(common);
    let stdout = ok(&graphodex(&args));
    assert!(stdout.contains("trained 3 epochs"), "{stdout}");
    let ckpt = model_dir.join("model.gdxm");
    assert!(model_dir.join("history.json").exists());

    let mut args = vec!["evaluate", "--checkpoint", s(&ckpt)];
    args.extend(common);
    let stdout = ok(&graphodex(&args));
    assert!(stdout.contains("Majority vote:") && stdout.contains("Avg. softmax:"), "{stdout}");
    assert!(stdout.contains("of 8 test forms"), "{stdout}");

    let image = dir.path().join("corpus/images/w003_EN.png");
    let predict = |ckpt: &Path, image: &Path, extra: &[&str]| {
        let mut args = vec!["predict", "--preset", "synthetic", "--checkpoint", s(ckpt), "--image", s(image), "--language", "EN"];
        args.extend(extra);
        graphodex(&args)
    };
    let stdout = ok(&predict(&ckpt, &image, &[]));
    assert_eq!(stdout.lines().count(), 2, "{stdout}");
    assert!(stdout.contains("female votes") && stdout.contains("mean p_female"), "{stdout}");
    let one = ok(&predict(&ckpt, &image, &["--method", "average_softmax"]));
    assert_eq!(one.lines().count(), 1);
    assert!(one.starts_with("Avg. softmax"));

    let blank = dir.path().join("blank.png");
    GrayImage::filled(192, 192, 255).save_png(&blank).unwrap();
    assert_eq!(predict(&ckpt, &blank, &[]).status.code(), Some(2));

    let mut bytes = std::fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let bad = dir.path().join("bad.gdxm");
    std::fs::write(&bad, &bytes).unwrap();
    let out = predict(&bad, &image, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = graphodex(&["predict", "--checkpoint", s(&ckpt), "--image", s(&image), "--language", "EN"]);
    assert_eq!(out.status.code(), Some(1), "paper-preset patch size against a synthetic checkpoint");
}

#[test]
fn report_rerenders_saved_results() {
    use graphodex_core::aggregate::Method;
    use graphodex_core::experiments::{
        fold_stats, table2_configs, write_reports, ExperimentReport, MethodSummary, SuiteResult, TestSelection,
    };
    let dir = tempfile::tempdir().unwrap();
    let methods = Method::ALL
        .iter()
        .map(|&method| {
            let fold_accuracies = vec![0.5, 0.75];
            MethodSummary { method, stats: fold_stats(&fold_accuracies).unwrap(), fold_accuracies }
        })
        .collect();
    let report = ExperimentReport {
        config: table2_configs()[0].clone(),
        test_selection: TestSelection::SameWriters,
        folds: vec![],
        methods,
    };
    let result = SuiteResult {
        seed: 1,
        folds: 2,
        test_selection: TestSelection::SameWriters,
        forms: 0,
        excluded_for_balance: vec![],
        test_units: vec![],
        reports: vec![report],
    };
    write_reports(dir.path(), &result).unwrap();
    let stdout = ok(&graphodex(&["report", "--results", s(&dir.path().join("results.json")), "--format", "csv"]));
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "Experiment,Train,Test,Accuracy Method,Avg,Std Dev,Min,Max");
    assert_eq!(lines.len(), 3, "{stdout}");
    assert!(lines[1].contains("62.50"), "{stdout}");
    let md = ok(&graphodex(&["report", "--results", s(&dir.path().join("results.json"))]));
    assert!(md.starts_with('|'), "{md}");
    std::fs::write(dir.path().join("junk.json"), "{").unwrap();
    let out = graphodex(&["report", "--results", s(&dir.path().join("junk.json"))]);
    assert_eq!(out.status.code(), Some(2));
}
