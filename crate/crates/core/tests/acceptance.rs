//! Acceptance criteria, one test each. Every test writes a single
//! `PASS`/`FAIL` line straight to stderr (bypassing output capture) before
//! asserting.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use pixelgame::backbone::{receptive_field, FdcnSpec, Variant};
use pixelgame::data::{dataset_stats, resplit, synth_dataset, SceneParams};
use pixelgame::game::{equilibrium_reached, train, GameConfig, SourceReports, TrainedGame};
use pixelgame::utility::UtilityComponents;
use pixelgame::verify::{self, Check, PARAMETER_BAND};

fn report(id: u32, title: &str, passed: bool, detail: &str) {
    let line = format!("{} criterion {id} ({title}): {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {id} failed: {detail}");
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let passed = verify::all_passed(checks);
    let detail = checks.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ");
    (passed, detail)
}

#[test]
fn criterion_1_metric_oracle() {
    let t = Instant::now();
    let check = verify::metric_oracle();
    let elapsed = t.elapsed();
    let passed = check.passed && elapsed < Duration::from_secs(60);
    report(1, "metric oracle equivalence", passed, &format!("{check} in {:.2}s", elapsed.as_secs_f64()));
}

#[test]
fn criterion_2_gradient_correctness() {
    let t = Instant::now();
    let checks = [verify::utility_gradients(), verify::mim_gradients(), verify::stub_gradients()];
    let elapsed = t.elapsed();
    let (ok, detail) = summarize(&checks);
    let passed = ok && elapsed < Duration::from_secs(300);
    report(2, "gradient correctness", passed, &format!("{detail} in {:.2}s", elapsed.as_secs_f64()));
}

#[test]
fn criterion_3_architecture_anchors() {
    let d9: Vec<usize> = vec![1, 2, 4, 8, 16, 8, 4, 2, 1];
    let d13: Vec<usize> = vec![1, 2, 4, 8, 16, 32, 64, 32, 16, 8, 4, 2, 1];
    let tables = Variant::Fdcn9.dilations() == d9
        && Variant::Fdcn13.dilations() == d13
        && FdcnSpec::fdcn9().dilations() == d9
        && FdcnSpec::fdcn13().dilations() == d13;
    let (r9, r13) = (receptive_field(&FdcnSpec::fdcn9()), receptive_field(&FdcnSpec::fdcn13()));
    let total = TrainedGame::<f32>::initial(&GameConfig::default()).unwrap().parameter_count();
    let checks = [verify::receptive_fields(), verify::parameter_count()];
    let (ok, detail) = summarize(&checks);
    let passed = ok && tables && r9 == 93 && r13 == 381 && (PARAMETER_BAND.0..=PARAMETER_BAND.1).contains(&total);
    report(
        3,
        "architecture anchors",
        passed,
        &format!("dilation tables match: {tables}; receptive fields {r9}/{r13}; instantiated parameters {total}; {detail}"),
    );
}

#[test]
fn criterion_4_modulation_normalization() {
    let (passed, detail) = summarize(&[verify::mim_normalization(), verify::mim_hand_oracle()]);
    report(4, "modulation normalization", passed, &detail);
}

/// Desk-scale fixture: 200 synthetic 64×64 scenes split 160/40.
const FIXTURE_IMAGES: usize = 200;
const FIXTURE_SEED: u64 = 2024;
const FIXTURE_BUDGET: Duration = Duration::from_secs(30 * 60);

fn fixture_config(components: UtilityComponents) -> GameConfig {
    GameConfig {
        learning_rate: 1e-5,
        batch_size: 8,
        epochs: 60,
        crop: 64,
        resize: 64,
        channels1: 16,
        channels2: 8,
        seed: FIXTURE_SEED,
        utility_components: components,
        ..GameConfig::default()
    }
}

struct FixtureRuns {
    full: TrainedGame<f32>,
    full_time: Duration,
    player_only: TrainedGame<f32>,
}

fn fixture() -> &'static FixtureRuns {
    static RUNS: OnceLock<FixtureRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let scene = SceneParams { image_size: 64, ..SceneParams::default() };
        let all = synth_dataset(&scene, FIXTURE_IMAGES, FIXTURE_SEED).unwrap();
        let (train_set, val_set) = resplit(&all, 0.8, FIXTURE_SEED).unwrap();
        let t = Instant::now();
        let full = train::<f32>(&fixture_config(UtilityComponents::ALL), &train_set, &val_set).unwrap();
        let full_time = t.elapsed();
        let player_only = train::<f32>(&fixture_config("U".parse().unwrap()), &train_set, &val_set).unwrap();
        FixtureRuns { full, full_time, player_only }
    })
}

fn describe(v: &SourceReports) -> String {
    let one = |r: &pixelgame::MetricReport| format!("P {:.4} R {:.4} F1 {:.4}", r.precision, r.recall, r.f1);
    format!("player1 {}, player2 {}, fused {}", one(&v.player1), one(&v.player2), one(&v.fused))
}

#[test]
fn criterion_5_desk_scale_game_dynamics() {
    let runs = fixture();
    let h = &runs.full.history;
    let v = h.last_validation().expect("fixture has a validation split");
    let plateau = equilibrium_reached(h, 0.1, 0.05);
    let roles = v.player1.recall > v.player2.recall && v.player2.precision > v.player1.precision;
    let fusion = v.fused.f1 >= v.player1.f1.max(v.player2.f1) - 0.02;
    let in_budget = runs.full_time < FIXTURE_BUDGET;
    let (p1, p2) = (h.phi1(), h.phi2());
    let detail = format!(
        "(a) plateau {plateau}, phi1 {:.4}->{:.4}, phi2 {:.4}->{:.4}; (b) roles {roles}; (c) fusion {fusion}; {}; {} epochs in {:.0}s",
        p1[0],
        p1[p1.len() - 1],
        p2[0],
        p2[p2.len() - 1],
        describe(&v),
        h.len(),
        runs.full_time.as_secs_f64()
    );
    report(5, "desk-scale game dynamics", plateau && roles && fusion && in_budget, &detail);
}

#[test]
fn criterion_6_utility_ablation_direction() {
    let runs = fixture();
    let full = runs.full.history.last_validation().unwrap().fused.f1;
    let player_only = runs.player_only.history.last_validation().unwrap().fused.f1;
    report(6, "utility ablation direction", full >= player_only, &format!("fused F1 U+A+G {full:.4}, U {player_only:.4}"));
}

#[test]
fn criterion_7_synthetic_calibration() {
    let data = synth_dataset(&SceneParams::default(), 1000, 7).unwrap();
    let s = dataset_stats(&data);
    let single = s.single_target_fraction();
    let small = s.area_fraction_below(100);
    let low_scr = s.scr_fraction_below(5.0);
    let passed = (0.75..=0.85).contains(&single) && small > 0.9 && (0.6..=0.8).contains(&low_scr);
    report(
        7,
        "synthetic calibration",
        passed,
        &format!("single-target {single:.3}, area under 100 px {small:.3}, SCR under 5 {low_scr:.3} over {} targets", s.total_targets()),
    );
}

const QUICK: &str = "channels1 = 4\nchannels2 = 2\ncrop = 32\nresize = 32\nbatch_size = 8\nepochs = 2\nseed = 31\ndata = synth:40\n";

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_pixelgame"))
        .args(args)
        .env_remove("PIXELGAME_OUT")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn same_files(a: &Path, b: &Path, names: &[String]) -> bool {
    names.iter().all(|n| matches!((fs::read(a.join(n)), fs::read(b.join(n))), (Ok(x), Ok(y)) if x == y))
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, QUICK).unwrap();
    let plan = dir.path().join("plan.cfg");
    fs::write(&plan, format!("{QUICK}axis = utility\nlevels = U; U+A+G\n")).unwrap();
    let mut ran = true;
    for tag in ["a", "b"] {
        let out = dir.path().join(format!("train_{tag}"));
        ran &= run_cli(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        let out = dir.path().join(format!("ablate_{tag}"));
        ran &= run_cli(&["ablate", "--plan", plan.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    }
    let d = dir.path();
    let train_same = same_files(&d.join("train_a"), &d.join("train_b"), &["history.csv".into()]);
    let ablate_files: Vec<String> = ["history_U.csv", "history_U+A+G.csv", "ablation.csv"].iter().map(|s| s.to_string()).collect();
    let ablate_same = same_files(&d.join("ablate_a"), &d.join("ablate_b"), &ablate_files);
    report(
        8,
        "determinism",
        ran && train_same && ablate_same,
        &format!("commands succeeded {ran}; train history identical {train_same}; ablation histories and table identical {ablate_same}"),
    );
}
