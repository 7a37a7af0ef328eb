use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use savae::cli::{read_report, Report, RunConfig};
use savae::evaluation::{AblationTable, GroupMetrics};

const CONFIG: &str = r#"# tiny end-to-end run
seed = 1
variants = ["AE", "SA-AVAE"]
seeds = [1, 2]
k = 2

[synthetic]
n = 90
d1 = 12
d2 = 10
k_shared = 2
k_distinct = 2

[train]
max_epochs = 2
batch_size = 10

[train.arch]
shared_dim = 3
dist_dim = 2
enc_hidden = [6]
dec_hidden = [6]
disc_hidden = [4]
reg_hidden = [5]
sex_hidden = [3]

[train.selection]
m1 = 8
m2 = 8
"#;

fn savae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_savae"))
        .current_dir(dir)
        .env_remove("SAVAE_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    dir
}

fn only_file(root: &Path, run_prefix: &str, suffix: &str) -> PathBuf {
    let mut hits: Vec<PathBuf> = std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with(run_prefix)
        })
        .flat_map(|d| std::fs::read_dir(d).unwrap().map(|e| e.unwrap().path()))
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    hits.sort();
    assert_eq!(hits.len(), 1, "{run_prefix} {suffix}: {hits:?}");
    hits.pop().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_twice_gives_identical_history_in_fresh_directories() {
    let dir = setup();
    let p = dir.path();
    for _ in 0..2 {
        let o = savae(
            p,
            &["train", "--config", "c.toml", "--seed", "1", "--out", "out"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let runs: Vec<String> = std::fs::read_dir(p.join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(runs.len(), 2);
    let a = only_file(&p.join("out"), runs.iter().min().unwrap(), "history.ndjson");
    let b = only_file(&p.join("out"), runs.iter().max().unwrap(), "history.ndjson");
    assert_ne!(a, b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(a).unwrap().lines().count(), 2);
}

#[test]
fn config_echo_and_report_carry_provenance() {
    let dir = setup();
    let p = dir.path();
    let o = savae(
        p,
        &["train", "--config", "c.toml", "--seed", "3", "--out", "out"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = only_file(&p.join("out"), "train-s3-", "config.toml");
    assert_eq!(std::fs::read_to_string(echo).unwrap(), CONFIG);
    let report: Report<serde_json::Value> =
        read_report(&only_file(&p.join("out"), "train-s3-", "report.json")).unwrap();
    assert_eq!(report.seed, 3);
    assert_eq!(report.config.train.seed, 3);
    assert_eq!(report.code_version, savae::cli::CODE_VERSION);
    let file_cfg = RunConfig::from_toml(CONFIG).unwrap();
    assert_eq!(report.config.synthetic, file_cfg.synthetic);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = setup();
    let p = dir.path();
    let cfg = CONFIG.replace("seed = 1\n", "");
    std::fs::write(p.join("noseed.toml"), cfg).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_savae"))
        .current_dir(p)
        .env("SAVAE_SEED", "4")
        .args(["train", "--config", "noseed.toml", "--out", "out"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    only_file(&p.join("out"), "train-s4-", "checkpoint.json");
}

#[test]
fn eval_reports_groups_and_rejects_mismatched_widths() {
    let dir = setup();
    let p = dir.path();
    assert!(
        savae(p, &["gen-data", "--config", "c.toml", "--out", "data"])
            .status
            .success()
    );
    assert!(savae(p, &["train", "--config", "c.toml", "--out", "out"])
        .status
        .success());
    let data = only_file(&p.join("data"), "gen-data-", "dataset.csv");
    let ckpt = only_file(&p.join("out"), "train-", "checkpoint.json");
    let ok = savae(
        p,
        &[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            "ev",
        ],
    );
    assert!(ok.status.success(), "{}", stderr(&ok));
    let report: Report<serde_json::Value> =
        read_report(&only_file(&p.join("ev"), "eval-", "report.json")).unwrap();
    let metrics: GroupMetrics = serde_json::from_value(report.results["metrics"].clone()).unwrap();
    assert_eq!(metrics.overall.n, 90);
    let preds =
        std::fs::read_to_string(only_file(&p.join("ev"), "eval-", "predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 91);

    let wide = CONFIG.replace("d1 = 12", "d1 = 14");
    std::fs::write(p.join("wide.toml"), wide).unwrap();
    assert!(
        savae(p, &["gen-data", "--config", "wide.toml", "--out", "wide"])
            .status
            .success()
    );
    let wide_data = only_file(&p.join("wide"), "gen-data-", "dataset.csv");
    let bad = savae(
        p,
        &[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            wide_data.to_str().unwrap(),
            "--out",
            "ev",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
    let msg = stderr(&bad);
    assert!(msg.contains("14") && msg.contains("12"), "{msg}");
    assert_eq!(msg.trim().lines().count(), 1);
}

#[test]
fn user_errors_exit_two_with_one_line() {
    let dir = setup();
    let p = dir.path();
    for args in [
        vec!["train", "--bogus"],
        vec!["train", "--config", "missing.toml"],
        vec!["train"],
        vec!["frobnicate"],
        vec!["eval", "--checkpoint", "nope.json", "--data", "nope.csv"],
        vec!["ablate", "--config", "c.toml", "--variants", "AE,XYZ"],
    ] {
        let o = savae(p, &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let msg = stderr(&o);
        assert_eq!(msg.trim().lines().count(), 1, "{args:?}: {msg}");
        assert!(!msg.contains("panicked"));
    }
    std::fs::write(p.join("bad.toml"), "learning_rate = 3\n").unwrap();
    assert_eq!(
        savae(p, &["train", "--config", "bad.toml"]).status.code(),
        Some(2)
    );
}

#[test]
fn gradcheck_passes_and_prints_error() {
    let dir = setup();
    let o = savae(dir.path(), &["gradcheck", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(
        out.contains("max relative error") && out.contains("100 points"),
        "{out}"
    );
}

#[test]
fn ablate_has_one_section_per_variant_and_is_reproducible() {
    let dir = setup();
    let p = dir.path();
    let jobs = ["1", "2"];
    for j in jobs {
        let o = savae(
            p,
            &["ablate", "--config", "c.toml", "--out", "ab", "--jobs", j],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut reports: Vec<PathBuf> = std::fs::read_dir(p.join("ab"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|d| {
            only_file(
                d.parent().unwrap(),
                &d.file_name().unwrap().to_string_lossy(),
                "report.json",
            )
        })
        .collect();
    reports.sort();
    assert_eq!(reports.len(), 2);
    assert_eq!(
        std::fs::read(&reports[0]).unwrap(),
        std::fs::read(&reports[1]).unwrap()
    );
    let report: Report<AblationTable> = read_report(&reports[0]).unwrap();
    let names: Vec<&str> = report
        .results
        .entries
        .iter()
        .map(|e| e.variant.name())
        .collect();
    assert_eq!(names, ["AE", "SA-AVAE"]);
    let table = std::fs::read_to_string(
        reports[0]
            .to_string_lossy()
            .replace("report.json", "table.txt"),
    )
    .unwrap();
    assert!(table.contains("[AE]") && table.contains("[SA-AVAE]"));
}
