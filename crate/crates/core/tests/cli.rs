//! Drives the `sector` binary against the shipped fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sector_engine::reasoning::read_results;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn sector(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sector"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn leaves(path: &Path) -> Vec<(String, Vec<String>)> {
    read_results(std::io::BufReader::new(fs::File::open(path).unwrap()))
        .unwrap()
        .into_iter()
        .map(|r| (r.id, r.leaves.into_iter().map(|s| s.code).collect()))
        .collect()
}

#[test]
fn validate_accepts_fixtures() {
    let out = tempfile::tempdir().unwrap();
    let o = sector(&fixtures().join("config.toml"), out.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("taxonomy: 62 nodes, 32 leaves"), "{text}");
    assert!(text.contains("enterprises: 20"), "{text}");
}

#[test]
fn full_beam_group_matches_flat() {
    let config = fixtures().join("config.toml");
    let flat_dir = tempfile::tempdir().unwrap();
    let group_dir = tempfile::tempdir().unwrap();
    let f = sector(&config, flat_dir.path(), &["classify", "--mode", "flat", "--topn", "40"]);
    let g = sector(&config, group_dir.path(), &["classify", "--mode", "group", "--k", "32", "--topn", "40"]);
    assert_eq!(f.status.code(), Some(0));
    assert_eq!(g.status.code(), Some(0));
    let flat = leaves(&flat_dir.path().join("results.jsonl"));
    assert_eq!(flat.len(), 20);
    assert_eq!(flat, leaves(&group_dir.path().join("results.jsonl")));
}

#[test]
fn narrow_beam_visits_fewer_nodes() {
    let config = fixtures().join("config.toml");
    let dir = tempfile::tempdir().unwrap();
    let flat = stdout(&sector(&config, dir.path(), &["classify", "--mode", "flat"]));
    let group = stdout(&sector(&config, dir.path(), &["classify", "--mode", "group", "--k", "1"]));
    let sims = |s: &str| -> usize {
        let words: Vec<&str> = s.split_whitespace().collect();
        let at = words.iter().position(|w| *w == "similarities,").unwrap();
        words[at - 1].parse().unwrap()
    };
    assert_eq!(sims(&flat), 20 * 32);
    assert!(sims(&group) < sims(&flat));
}

#[test]
fn estimate_reports_case_study_divergence() {
    let out = tempfile::tempdir().unwrap();
    let o = sector(&fixtures().join("config.toml"), out.path(), &["estimate"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("46.98"), "{text}");
    assert!(text.contains("DIVERGES"), "{text}");
    assert!(out.path().join("emissions.csv").exists());
    assert!(out.path().join("case_study_audit.csv").exists());
}

#[test]
fn theorem_check_writes_grid() {
    let out = tempfile::tempdir().unwrap();
    let o = sector(&fixtures().join("config.toml"), out.path(), &["theorem-check"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.path().join("theorem_check.csv")).unwrap();
    assert_eq!(csv.lines().count(), 397);
}

#[test]
fn reruns_are_bitwise_identical() {
    let config = fixtures().join("config.toml");
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        for cmd in ["train", "classify", "estimate"] {
            let o = sector(&config, dir.path(), &[cmd, "--seed", "7"]);
            assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for name in ["adapters/level2.adp", "loss_history.csv", "split.csv", "results.jsonl", "emissions.csv"] {
        let a = fs::read(runs[0].path().join(name)).unwrap();
        let b = fs::read(runs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn corrupt_taxonomy_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixtures()).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let tax = dir.path().join("taxonomy.jsonl");
    let mut text = fs::read_to_string(&tax).unwrap();
    text.push_str("{\"code\": \"999999\", \"level\": 6, \"title\": \"Orphan\"}\n");
    fs::write(&tax, text).unwrap();
    let o = sector(&dir.path().join("config.toml"), dir.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_one() {
    let out = tempfile::tempdir().unwrap();
    let bogus = sector(&fixtures().join("config.toml"), out.path(), &["frobnicate"]);
    assert_eq!(bogus.status.code(), Some(1));
    let no_config = Command::new(env!("CARGO_BIN_EXE_sector")).arg("validate").output().unwrap();
    assert_eq!(no_config.status.code(), Some(1));
    let bad_mode = sector(&fixtures().join("config.toml"), out.path(), &["classify", "--mode", "diagonal"]);
    assert_eq!(bad_mode.status.code(), Some(1));
}

#[test]
fn unreadable_input_is_a_runtime_error() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("config.toml");
    let text = fs::read_to_string(fixtures().join("config.toml"))
        .unwrap()
        .replace("taxonomy.jsonl", "does-not-exist.jsonl");
    fs::write(&cfg, text).unwrap();
    let o = sector(&cfg, out.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(3));
}
