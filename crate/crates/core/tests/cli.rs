use std::path::Path;
use std::process::Command;

fn cli(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_compose-agent"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn gen_scenes_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = cli(d, &["gen-scenes", "--n", "40", "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let fa = std::fs::read(a.join("scenes.jsonl")).unwrap();
    assert_eq!(fa, std::fs::read(b.join("scenes.jsonl")).unwrap());
    assert_eq!(fa.iter().filter(|&&c| c == b'\n').count(), 40);
    assert!(a.join("gen-scenes.config.json").exists());
}

#[test]
fn oracle_eval_on_unseen_split_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let o = cli(&ds, &["gen-dataset", "--scenes", "10", "--tasks-per-scene", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ev = dir.path().join("ev");
    let o = cli(&ev, &["eval", "--dataset", ds.to_str().unwrap(), "--oracle", "--split", "unseen"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let all = csv.lines().nth(1).unwrap();
    assert!(all.starts_with("all,"), "{all}");
    let fields: Vec<&str> = all.split(',').collect();
    assert_eq!(&fields[3..6], &["1.0000", "1.0000", "1.0000"], "{all}");
    assert!(ev.join("traces.jsonl").exists() && ev.join("eval.config.json").exists());

    let o = cli(&ev, &["replay", ev.join("traces.jsonl").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("<MANIPULATE>"));
}

#[test]
fn usage_errors_exit_nonzero_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    for args in [
        vec!["frobnicate"],
        vec!["gen-scenes", "--bogus"],
        vec!["eval", "--dataset", "/nonexistent/ds", "--oracle"],
        vec!["train", "ip:Juggle", "--dataset", "/nonexistent/ds"],
        vec!["replay", "/nonexistent/traces.jsonl"],
    ] {
        let o = cli(&out, &args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(!out.exists(), "{args:?} wrote output");
    }
}
