use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levelcg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levelcg")).args(args).current_dir(dir).env_remove("LEVELCG_THREADS").output().unwrap()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1
}

const SMALL: &str = "\
[sde]
epsilon = [0.2, 0.1]
n = 200

[fp]
cells_per_edge = 64

[duality]
family_size = 6
coarse_levels = 1
";

#[test]
fn negative_epsilon_is_rejected_with_the_field_name() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[sde]\nn = 10\nepsilon = [0.1, -0.05]\n").unwrap();
    let out = levelcg(&["simulate", "--config", "bad.toml", "--out", "o"], dir.path());
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("sde.epsilon") && msg.contains("line 3"), "{msg}");
    assert!(!dir.path().join("o/trajectory.csv").exists());
}

#[test]
fn simulate_writes_matching_files_and_repeats_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    for o in ["a", "b"] {
        let out = levelcg(&["simulate", "--out", o], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = dir.path().join("a");
    assert_eq!(data_rows(&a.join("trajectory.csv")), data_rows(&a.join("projection.csv")));
    for f in ["trajectory.csv", "projection.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let text = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(text.starts_with("# schema: levelcg.trajectory.v1\n"));
    assert!(text.lines().any(|l| l == "t,q,p,h,edge"));
}

#[test]
fn converge_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    for (o, t) in [("t1", "1"), ("t4", "4")] {
        let out = levelcg(&["converge", "--config", "c.toml", "--out", o, "--threads", t], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (dir.path().join("t1"), dir.path().join("t4"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("converge.json")).unwrap()).unwrap();
    let rows = v["data"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        for k in ["epsilon", "sup_w1", "terminal_w1"] {
            assert!(r[k].is_number(), "{k}");
        }
    }
}

#[test]
fn seed_flag_changes_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    for (o, s) in [("s1", "1"), ("s2", "2")] {
        assert!(levelcg(&["simulate", "--out", o, "--seed", s], dir.path()).status.success());
    }
    let body = |o: &str| {
        let t = fs::read_to_string(dir.path().join(o).join("trajectory.csv")).unwrap();
        t.lines().filter(|l| !l.starts_with('#')).map(String::from).collect::<Vec<_>>()
    };
    assert_ne!(body("s1"), body("s2"));
}

#[test]
fn shifted_duality_input_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.toml"), format!("{SMALL}shift = 0.1\n")).unwrap();
    let out = levelcg(&["duality", "--config", "d.toml", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/duality.json")).unwrap()).unwrap();
    assert_eq!(v["data"]["perturbed"], true);
    assert_eq!(v["data"]["report"]["off_solution"], true);
    let rows = v["data"]["report"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2 * v["data"]["report"]["family_size"].as_u64().unwrap() as usize);
}
