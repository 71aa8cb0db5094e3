use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cadent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadent"))
        .args(args)
        .env_remove("CADENT_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn default_config() -> Value {
    serde_json::from_str(&stdout(&cadent(&["experiment", "--dump-default-config"]))).unwrap()
}

/// One environment, two variants, two seeds, short budgets.
fn tiny_config(out_dir: &Path) -> Value {
    let mut cfg = default_config();
    cfg["environments"] = json!(["dungeon_quest"]);
    cfg["variants"] = json!(["cadent", "no_transfer"]);
    cfg["seeds"] = json!([1, 2]);
    cfg["episodes"]["dungeon_quest"] = json!(40);
    cfg["teacher"]["episodes"] = json!(800);
    cfg["output_dir"] = json!(out_dir);
    cfg
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn dumped_default_config_matches_the_shipped_file() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let shipped: Value = serde_json::from_str(&fs::read_to_string(shipped).unwrap()).unwrap();
    assert_eq!(default_config(), shipped);
}

#[test]
fn experiment_outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let cfg_path = tmp.path().join(format!("{name}.json"));
        fs::write(&cfg_path, tiny_config(&out).to_string()).unwrap();
        let text = stdout(&cadent(&["experiment", "--config", cfg_path.to_str().unwrap(), "--parallel", "2"]));
        assert!(text.contains("dungeon_quest (threshold"));
        trees.push(files(&out));
    }
    assert_eq!(trees[0], trees[1]);

    let names: Vec<String> = trees[0].keys().map(|p| p.display().to_string()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("runs/")).count(), 4);
    assert_eq!(names.iter().filter(|n| n.starts_with("aggregate/")).count(), 6);
    assert!(names.contains(&"summary.json".to_string()));
    assert!(names.contains(&"teachers/dungeon_quest.json".to_string()));
    let header = String::from_utf8(trees[0][Path::new("runs/dungeon_quest__cadent__seed1.csv")].clone()).unwrap();
    assert!(header.starts_with("variant,env,seed,episode,reward,steps,cumulative_steps,reached_accept\n"));
}

#[test]
fn only_filter_restricts_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(&cfg_path, tiny_config(&out).to_string()).unwrap();
    stdout(&cadent(&[
        "experiment",
        "--config",
        cfg_path.to_str().unwrap(),
        "--only",
        "variant=no_transfer",
    ]));
    let runs: Vec<_> = fs::read_dir(out.join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 2);
    assert!(!out.join("teachers").exists());
}

#[test]
fn teacher_then_student() {
    let tmp = tempfile::tempdir().unwrap();
    let knowledge = tmp.path().join("dq.json");
    let text = stdout(&cadent(&[
        "train-teacher",
        "--env",
        "dungeon_quest",
        "--episodes",
        "1500",
        "--out",
        knowledge.to_str().unwrap(),
    ]));
    assert!(text.contains("greedy rollout accepts"), "{text}");
    let tk: Value = serde_json::from_str(&fs::read_to_string(&knowledge).unwrap()).unwrap();
    assert_eq!(tk["q_ad"].as_array().unwrap().len(), 5);

    let out = tmp.path().join("student");
    let text = stdout(&cadent(&[
        "train-student",
        "--env",
        "dungeon_quest",
        "--variant",
        "cadent",
        "--knowledge",
        knowledge.to_str().unwrap(),
        "--episodes",
        "30",
        "--seeds",
        "1,2",
        "--out",
        out.to_str().unwrap(),
        "--assert-bound",
    ]));
    assert_eq!(text.lines().filter(|l| l.starts_with("seed ")).count(), 2);
    assert!(out.join("dungeon_quest__cadent__seed2.csv").is_file());
    let diag: Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["1"]["hard_violations"], 0);
}

#[test]
fn cadent_student_without_knowledge_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cadent(&[
        "train-student",
        "--env",
        "dungeon_quest",
        "--variant",
        "cadent",
        "--episodes",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn aliases_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let text = stdout(&cadent(&[
        "train-student",
        "--env",
        "dungeon_quest",
        "--variant",
        "none",
        "--episodes",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    assert!(text.starts_with("seed 1:"));
    assert!(tmp.path().join("dungeon_quest__no_transfer__seed1.csv").is_file());
}

#[test]
fn inspect_reports_the_shortest_solution() {
    let text = stdout(&cadent(&["inspect", "--env", "dungeon_quest", "--variant", "source", "--dump-layout"]));
    assert!(text.contains("start -> has_key"));
    assert!(text.contains("shortest solution: 42 steps"), "{text}");
}

#[test]
fn unknown_environment_is_rejected() {
    let out = cadent(&["inspect", "--env", "chess"]);
    assert!(!out.status.success());
}
