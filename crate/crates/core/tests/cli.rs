use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pixelgame");

/// Small-width settings that keep a CLI training run to a few seconds.
const QUICK: &str = "\
# quick run
channels1 = 4
channels2 = 2
crop = 32
resize = 32
batch_size = 8
seed = 5
";

fn pixelgame(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PIXELGAME_OUT").output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn quick_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, QUICK).unwrap();
    path
}

fn train(dir: &Path, tag: &str, extra: &[&str]) -> PathBuf {
    let cfg = quick_config(dir);
    let out = dir.join(tag);
    let mut args = vec!["train", "--config", s(&cfg), "--epochs", "2", "--data", "synth:200", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = pixelgame(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).expect("column present");
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn train_writes_history_report_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "run", &[]);
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "{history}");
    assert!(history.starts_with("epoch,u1,u2,g,a1,a2,phi1,phi2,") && history.ends_with('\n'));
    assert!(out.join("final.json").is_file());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"], 2);
    assert_eq!(report["val_images"], 40);
}

#[test]
fn repeated_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a", &[]);
    let b = train(dir.path(), "b", &[]);
    for f in ["history.csv", "report.json", "final.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn player_utility_only_zeroes_game_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "u", &["--utility-components", "U"]);
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    for col in ["g", "a1", "a2"] {
        assert!(column(&history, col).iter().all(|v| v.parse::<f64>().unwrap() == 0.0), "{col}");
    }
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 1\nlearnig_rate = 0.1\n").unwrap();
    let o = pixelgame(&["train", "--config", s(&cfg), "--data", "synth:4", "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learnig_rate"));
    let o = pixelgame(&["train", "--data", "synth:4", "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(pixelgame(&["--device", "cuda", "verify"]).status.code(), Some(1));
    assert_eq!(pixelgame(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn divergence_exits_with_its_own_code_after_writing_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = dir.path().join("div");
    let o = pixelgame(&["train", "--config", s(&cfg), "--data", "synth:16", "--epochs", "5", "--learning-rate", "1e30", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("history.csv").is_file());
}

#[test]
fn eval_writes_per_source_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path(), "run", &[]);
    let out = dir.path().join("eval");
    let ckpt = run.join("final.json");
    let o = pixelgame(&["eval", "--checkpoint", s(&ckpt), "--data", "synth:6", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "source,precision,recall,f1,iou");
    assert_eq!(lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect::<Vec<_>>(), ["player1", "player2", "fused"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout), csv);
}

#[test]
fn eval_on_empty_directory_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path(), "run", &[]);
    let empty = dir.path().join("empty");
    fs::create_dir_all(empty.join("images")).unwrap();
    fs::create_dir_all(empty.join("masks")).unwrap();
    let o = pixelgame(&["eval", "--checkpoint", s(&run.join("final.json")), "--data", s(&empty), "--out", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = pixelgame(&["eval", "--checkpoint", s(&dir.path().join("missing.json")), "--data", "synth:2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overfit_fixture_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = pixelgame(&["synth", "--n", "4", "--seed", "1", "--set", "image_size=32", "--out", s(&data)]);
    assert!(o.status.success());
    let out = dir.path().join("fit");
    let o = pixelgame(&[
        "train", "--data", s(&data), "--epochs", "300", "--learning-rate", "1e-2", "--batch-size", "4",
        "--set", "val_fraction=0", "--set", "crop=32", "--set", "resize=32", "--set", "channels1=8", "--set", "channels2=4",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ev = dir.path().join("ev");
    let o = pixelgame(&["eval", "--checkpoint", s(&out.join("final.json")), "--data", s(&data), "--out", s(&ev)]);
    assert!(o.status.success());
    let csv = fs::read_to_string(ev.join("eval.csv")).unwrap();
    let fused: f64 = column(&csv, "f1")[2].parse().unwrap();
    assert!(fused > 0.9, "{csv}");
}

#[test]
fn synth_writes_pairs_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let o = pixelgame(&["synth", "--n", "10", "--seed", "2", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(out.join("images")).unwrap().count(), 10);
    assert_eq!(fs::read_dir(out.join("masks")).unwrap().count(), 10);
    let meta = fs::read_to_string(out.join("meta.csv")).unwrap();
    assert!(meta.ends_with('\n'));
    let o = pixelgame(&["synth", "--n", "3", "--set", "nonsense=1", "--out", s(&dir.path().join("bad"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stats_on_synthetic_output_is_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ds");
    assert!(pixelgame(&["synth", "--n", "400", "--seed", "3", "--out", s(&data)]).status.success());
    let out = dir.path().join("st");
    let o = pixelgame(&["stats", "--data", s(&data), "--out", s(&out)]);
    assert!(o.status.success());
    let counts = fs::read_to_string(out.join("count_hist.csv")).unwrap();
    let mut total = 0usize;
    let mut single = 0usize;
    for line in counts.lines().skip(1) {
        let (k, v) = line.split_once(',').unwrap();
        let v: usize = v.parse().unwrap();
        total += v;
        if k == "1" {
            single = v;
        }
    }
    assert_eq!(total, 400);
    let frac = single as f64 / total as f64;
    assert!((0.75..=0.85).contains(&frac), "{frac}");
    for f in ["area_hist.csv", "cumulative_area.csv", "scr_hist.csv", "count_hist.png", "area_hist.png", "scr_hist.png"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn stats_on_empty_set_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir_all(empty.join("images")).unwrap();
    fs::create_dir_all(empty.join("masks")).unwrap();
    let out = dir.path().join("st");
    let o = pixelgame(&["stats", "--data", s(&empty), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert_eq!(fs::read_to_string(out.join("count_hist.csv")).unwrap(), "targets,images\n");
}

fn ablate(dir: &Path, plan: &str, tag: &str) -> PathBuf {
    let path = dir.join(format!("{tag}.plan"));
    fs::write(&path, format!("{QUICK}{plan}")).unwrap();
    let out = dir.join(tag);
    let o = pixelgame(&["ablate", "--plan", s(&path), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn ablation_rows_follow_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = ablate(dir.path(), "axis = utility\nepochs = 1\ndata = synth:20\n", "utility");
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let levels = column(&csv, "level");
    assert_eq!(levels, ["U", "U+A", "U+G", "U+A+G"]);
    assert!(column(&csv, "status").iter().all(|s| s == "ok"));
    assert!(out.join("ablation.png").is_file());
    assert!(out.join("history_U+A+G.csv").is_file());

    let out = ablate(dir.path(), "axis = mim\nepochs = 1\ndata = synth:20\n", "mim");
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(column(&csv, "level"), ["with", "without"]);
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN).args(["synth", "--n", "2"]).env("PIXELGAME_OUT", dir.path()).output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("meta.csv").is_file());
}

#[test]
fn verify_passes_on_a_fresh_build() {
    let o = pixelgame(&["verify"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("reference 1.69M"));
    assert!(!text.contains("FAIL"));
}
