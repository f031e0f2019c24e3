use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trunkgauge")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["train", "segment", "measure", "evaluate", "synth", "luminosity"] {
        assert!(text.contains(sub), "{sub}");
    }
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["measure", "--model", "m.json"])), 2);
    assert_eq!(code(&run(&["synth", "--count", "0", "--out", "/nonexistent/x"])), 2);
}

#[test]
fn empty_training_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    let out = run(&["train", "--images", d, "--masks", d, "--out", &format!("{d}/m.json")]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn full_campaign_is_deterministic() {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let corpus = root.join("corpus");
        let model = root.join("model.json");
        let campaign = root.join("campaign.csv");
        let report = root.join("report.txt");
        let mask = root.join("mask.png");
        let steps: Vec<Vec<String>> = vec![
            vec!["--seed", "3", "synth", "--count", "3", "--edge-jitter", "2", "--tilt-deg", "-4", "--out", p(&corpus)],
            vec!["--seed", "3", "train", "--images", &format!("{}/images", p(&corpus)), "--masks", &format!("{}/masks", p(&corpus)), "--out", p(&model)],
            vec!["segment", "--model", p(&model), "--image", &format!("{}/images/scene_0000.png", p(&corpus)), "--out", p(&mask)],
            vec!["measure", "--model", p(&model), "--input", &format!("{}/images", p(&corpus)), "--pad-height-mm", "20", "--out", p(&campaign)],
            vec!["evaluate", "--pred", p(&campaign), "--ref", &format!("{}/manifest.csv", p(&corpus)), "--out", p(&report)],
        ]
        .into_iter()
        .map(|v| v.into_iter().map(String::from).collect())
        .collect();
        for s in &steps {
            let args: Vec<&str> = s.iter().map(String::as_str).collect();
            let out = run(&args);
            assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let rows = fs::read_to_string(&campaign).unwrap();
        assert_eq!(rows.lines().count(), 4);
        assert!(rows.lines().skip(1).all(|l| l.contains(",ok,")));
        runs.push(
            [&model, &mask, &campaign, &report]
                .iter()
                .map(|f| fs::read(f).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn measure_of_missing_model_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "measure",
        "--model",
        &format!("{}/none.json", p(dir.path())),
        "--input",
        p(dir.path()),
        "--pad-height-mm",
        "20",
        "--out",
        &format!("{}/c.csv", p(dir.path())),
    ]);
    assert_eq!(code(&out), 2);
}
