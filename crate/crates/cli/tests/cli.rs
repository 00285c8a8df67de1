use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn shapchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn small_xor(out: &Path) -> Output {
    shapchain(&[
        "explain",
        "--data",
        "xor",
        "--background-size",
        "20",
        "--explain-rows",
        "10",
        "--out-dir",
        out.to_str().unwrap(),
    ])
}

#[test]
fn explain_xor_then_chart_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = small_xor(&out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let per_order = names
        .iter()
        .filter(|n| n.starts_with("report_order_") && n.ends_with(".json"))
        .count();
    assert_eq!(per_order, 6);
    assert!(names.iter().any(|n| n == "manifest.json"));

    let charts = dir.path().join("charts");
    let o = shapchain(&[
        "chart",
        out.join("report_order_and-or-xor.json").to_str().unwrap(),
        "--out-dir",
        charts.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(charts.join("and-or-xor_xor.svg").exists());

    let o = shapchain(&["replay", out.join("manifest.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&small_xor(&a)), 0);
    assert_eq!(code(&small_xor(&b)), 0);
    for e in fs::read_dir(&a).unwrap() {
        let name = e.unwrap().file_name();
        // the manifest records the output directory
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[dataset]\nkind = \"xor\"\n[train]\nepochs = 0\n").unwrap();
    let o = shapchain(&["explain", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let o = shapchain(&["explain", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(code(&o), 1);
    let o = shapchain(&["explain", "--orders", "and,or,nand", "--explain-rows", "2"]);
    assert_eq!(code(&o), 1);
    let o = shapchain(&["explain", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn data_errors_exit_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    fs::write(&csv, "a,b,y\n1,2,red\n3,4,green\n5,6,blue\n").unwrap();
    let out = dir.path().join("out");
    let o = shapchain(&[
        "explain",
        "--data",
        csv.to_str().unwrap(),
        "--outputs",
        "y",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-binary"));
    assert!(!out.exists());

    let o = shapchain(&["explain", "--data", "/nonexistent.csv", "--outputs", "y"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn tampered_manifest_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&small_xor(&out)), 0);
    let path = out.join("manifest.json");
    let text = fs::read_to_string(&path).unwrap();
    // a different background size changes every attribution
    assert!(text.contains("\"background_size\": 20"));
    let tampered = text.replace("\"background_size\": 20", "\"background_size\": 21");
    fs::write(&path, tampered).unwrap();
    let o = shapchain(&["replay", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
