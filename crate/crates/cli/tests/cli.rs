use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FIT_ARGS: [&str; 6] = ["--chains", "2", "--draws", "1500", "--warmup", "1000"];

fn hazardlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hazardlab"))
        .args(args)
        .arg("--quiet")
        .env("HAZARDLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates `subjects` subjects into `dir/name` and returns the event log path.
fn simulate(dir: &Path, name: &str, subjects: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let o = hazardlab(&[
        "simulate",
        "--subjects",
        &subjects.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("events.jsonl")
}

fn simulate_unrated(dir: &Path) -> PathBuf {
    let config = dir.join("silent.json");
    fs::write(
        &config,
        r#"{"n_subjects": 6, "true_params": {"log_lambda0": -40, "beta_success": 0, "beta_trust": 0, "eta": 0}}"#,
    )
    .unwrap();
    let out = dir.join("silent");
    let o = hazardlab(&["simulate", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("events.jsonl")
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = simulate(dir.path(), "a", 5, 11);
    let b = simulate(dir.path(), "b", 5, 11);
    let c = simulate(dir.path(), "c", 5, 12);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let truth = |p: &Path| fs::read(p.parent().unwrap().join("ground_truth.csv")).unwrap();
    assert_eq!(truth(&a), truth(&b));
}

#[test]
fn simulate_with_no_subjects_succeeds() {
    let dir = TempDir::new().unwrap();
    let events = simulate(dir.path(), "empty", 0, 0);
    assert!(fs::read_to_string(&events).unwrap().trim().is_empty());
    assert_eq!(csv_rows(&events.with_file_name("ground_truth.csv")).len(), 0);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"echo_failure_prob": 1.5}"#).unwrap();
    let o = hazardlab(&["simulate", "--config", s(&config), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("echo_failure_prob"), "{}", stderr(&o));
    assert!(!dir.path().join("out/events.jsonl").exists());
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"n_subject": 3}"#).unwrap();
    let o = hazardlab(&["simulate", "--config", s(&config), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("n_subject"));
}

#[test]
fn missing_events_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let o = hazardlab(&[
        "analyze",
        "--events",
        s(&dir.path().join("nope.jsonl")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(code(&hazardlab(&["fit"])), 1);
    assert_eq!(code(&hazardlab(&["frobnicate"])), 1);
}

#[test]
fn fit_writes_summary_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let events = simulate(dir.path(), "sim", 12, 3);
    let fit = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["fit", "--events", s(&events), "--cohort", "early", "--seed", "9", "--out", s(&out)];
        args.extend(FIT_ARGS);
        let o = hazardlab(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let a = fit("fit_a");
    let b = fit("fit_b");
    assert_eq!(fs::read(a.join("posterior.csv")).unwrap(), fs::read(b.join("posterior.csv")).unwrap());

    let rows = csv_rows(&a.join("summary.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    for p in ["log_lambda0", "beta_success", "beta_trust", "eta"] {
        assert!(names.contains(&p), "{names:?}");
    }
    for r in &rows {
        let lo: f64 = r[3].parse().unwrap();
        let hi: f64 = r[4].parse().unwrap();
        assert!(lo <= hi);
    }
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("fit_config.json")).unwrap()).unwrap();
    assert_eq!(config["fit"]["seed"], 9);

    let diag = dir.path().join("diag");
    let o = hazardlab(&["diagnose", "--posterior", s(&a.join("posterior.csv")), "--out", s(&diag)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(diag.join("diagnostics.csv")).unwrap(),
        fs::read(a.join("summary.csv")).unwrap()
    );

    let pred = dir.path().join("pred");
    let o = hazardlab(&[
        "predict",
        "--events",
        s(&events),
        "--posterior",
        s(&a.join("posterior.csv")),
        "--cohort",
        "early",
        "--grid-end",
        "20",
        "--grid-step",
        "0.5",
        "--curves",
        "50",
        "--out",
        s(&pred),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(csv_rows(&pred.join("curves.csv")).len(), 50 * 41);
    assert_eq!(csv_rows(&pred.join("band.csv")).len(), 41);
}

#[test]
fn cohort_without_ratings_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let events = simulate_unrated(dir.path());
    let mut args = vec!["fit", "--events", s(&events), "--cohort", "final", "--no-exclusions"];
    let out = dir.path().join("fit");
    args.extend(["--out", s(&out)]);
    args.extend(FIT_ARGS);
    let o = hazardlab(&args);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zero rated episodes"), "{}", stderr(&o));
}

#[test]
fn analyze_without_ratings_writes_empty_histograms() {
    let dir = TempDir::new().unwrap();
    let events = simulate_unrated(dir.path());
    let out = dir.path().join("an");
    let o = hazardlab(&["analyze", "--events", s(&events), "--no-exclusions", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["rating_time_hist_early.csv", "rating_time_hist_final.csv"] {
        assert!(csv_rows(&out.join(f)).is_empty(), "{f}");
    }
    let counts: Vec<String> = csv_rows(&out.join("grasp_distribution.csv")).iter().map(|r| r[2].to_owned()).collect();
    assert!(counts.iter().all(|c| c == "0"));
    assert!(fs::read_to_string(out.join("rating_time_hist.svg")).unwrap().contains("no data"));
    assert!(fs::read_to_string(out.join("trust_change_box.svg")).unwrap().contains("no data"));
}

#[test]
fn report_writes_every_table_and_figure() {
    let dir = TempDir::new().unwrap();
    let events = simulate(dir.path(), "sim", 12, 5);
    let out = dir.path().join("report");
    let mut args = vec!["report", "--events", s(&events), "--out", s(&out), "--grid-end", "30", "--curves", "60"];
    args.extend(FIT_ARGS);
    let o = hazardlab(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let listed = |ext: &str| {
        let mut names: Vec<String> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(ext))
            .collect();
        names.sort();
        names
    };
    assert_eq!(
        listed(".svg"),
        ["grasp_distribution.svg", "rating_time_hist.svg", "survival.svg", "trust_change_box.svg"]
    );
    assert_eq!(listed(".csv").len(), 6);
    for f in ["posterior.csv", "summary.csv", "intervals.csv", "fit_config.json", "curves.csv"] {
        assert!(out.join("model").join(f).exists(), "{f}");
    }
    for svg in listed(".svg") {
        let text = fs::read_to_string(out.join(&svg)).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"), "{svg}");
    }

    let band = csv_rows(&out.join("band.csv"));
    assert_eq!(band.len(), 301);
    for r in &band {
        let v: Vec<f64> = (1..5).map(|k| r[k].parse().unwrap()).collect();
        assert!(v[0] <= v[1] && v[1] <= v[2], "{r:?}");
        assert!((0.0..=1.0).contains(&v[3]));
    }
    let first: Vec<f64> = (1..5).map(|k| band[0][k].parse().unwrap()).collect();
    assert_eq!(first, [1.0; 4]);
    let survival = fs::read_to_string(out.join("survival.svg")).unwrap();
    assert!(survival.contains("<polygon") && !survival.contains("no data"));

    let t_test = csv_rows(&out.join("t_test.csv"));
    assert_eq!(t_test.len(), 1);
    let p: f64 = t_test[0][4].parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn existing_outputs_need_force_and_manifest_appends() {
    let dir = TempDir::new().unwrap();
    let events = simulate(dir.path(), "sim", 4, 1);
    let out = dir.path().join("an");
    let run = |force: bool| {
        let mut args = vec!["analyze", "--events", s(&events), "--no-exclusions", "--out", s(&out)];
        if force {
            args.push("--force");
        }
        hazardlab(&args)
    };
    assert_eq!(code(&run(false)), 0);
    let before = fs::read(out.join("t_test.csv")).unwrap();
    let o = run(false);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--force"));
    assert_eq!(fs::read(out.join("t_test.csv")).unwrap(), before);
    assert_eq!(code(&run(true)), 0);

    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    let entries: Vec<serde_json::Value> = manifest.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(entries.len(), 2);
    for e in &entries {
        assert_eq!(e["command"], "analyze");
        assert_eq!(e["outputs"].as_array().unwrap().len(), 8);
        assert!(e["inputs"][0].as_str().unwrap().ends_with("events.jsonl"));
    }
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_hazardlab"))
        .args(["simulate", "--subjects", "1", "--out", "/nonexistent/never"])
        .env("HAZARDLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("HAZARDLAB_THREADS"));
}
