//! The `pixelgame` command-line tool.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data or I/O
//! error, 3 numeric divergence, 4 verification failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::ablation::{level_slug, rows_to_csv, run_plan, AblationPlan};
use crate::checkpoint::{load_game, save_game, write_skip_dumps};
use crate::config::{output_root, DataSource, RunConfig};
use crate::data::{dataset_stats, load_dataset, resplit, synth_dataset, write_dataset, Dataset, Layout, SceneParams, Split, StatsReport};
use crate::error::{Error, Result};
use crate::game::{equilibrium_reached, evaluate, GameTrainer, SourceReports, TrainedGame};
use crate::metrics::MetricReport;
use crate::plot;
use crate::utility::UtilityBundle;
use crate::verify;

/// Trailing fraction of epochs and relative range used for the plateau flag.
pub const EQUILIBRIUM_WINDOW: f64 = 0.1;
pub const EQUILIBRIUM_TOL: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "pixelgame", version, about = "Infrared small-target segmentation as a two-player game")]
pub struct Cli {
    /// Compute device; only `cpu` is available.
    #[arg(long, global = true, default_value = "cpu")]
    pub device: String,
    /// Output directory (overrides PIXELGAME_OUT and the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train both players.
    #[command(after_help = crate::config::CONFIG_KEYS)]
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Generate calibrated synthetic scenes.
    Synth(SynthArgs),
    /// Target count, area and SCR statistics of a dataset.
    Stats(StatsArgs),
    /// Run one training per level of an ablation plan.
    Ablate(AblateArgs),
    /// Run the numerical self-checks.
    Verify,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory or `synth:N`.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub val_data: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    /// Subset of U, A, G joined by `+`.
    #[arg(long)]
    pub utility_components: Option<String>,
    /// `game`, `dice`, `iou`, `ss` or `ss:<lambda>` for both players.
    #[arg(long)]
    pub loss_mode: Option<String>,
    /// `per-player` or `shared`.
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub use_mim: Option<String>,
    /// Any configuration key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory or `synth:N`.
    #[arg(long)]
    pub data: String,
    /// Restrict a directory to one split list.
    #[arg(long)]
    pub split: Option<String>,
    /// Seed for `synth:N` (defaults to the checkpoint's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flat `key = value` scene parameter file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset directory or `synth:N`.
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Plan file: `axis`, optional `levels` and any training keys.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    if !cli.device.eq_ignore_ascii_case("cpu") {
        return Err(Error::Usage(format!("device `{}` is not available; use `cpu`", cli.device)));
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
        Command::Ablate(a) => cmd_ablate(&a, out),
        Command::Verify => Ok(cmd_verify()),
    }
}

fn synth(scene: &SceneParams, n: usize, seed: u64) -> Result<Dataset> {
    synth_dataset(scene, n, seed)
}

fn load_source(src: &DataSource, scene: &SceneParams, seed: u64, split: Option<Split>) -> Result<Dataset> {
    match src {
        DataSource::Synth(n) => synth(scene, *n, seed),
        DataSource::Dir(p) => load_dataset(p, &Layout { split }),
    }
}

/// Training and validation sets for a run: split lists when the directory
/// has them, otherwise a seeded hold-out of `val_fraction`.
pub fn training_sets(run: &RunConfig) -> Result<(Dataset, Dataset)> {
    let src = run.data.as_ref().ok_or_else(|| Error::Usage("no training data: set `data` or pass --data".into()))?;
    let seed = run.game.seed;
    if let Some(v) = &run.val_data {
        let train = load_source(src, &run.scene, seed, None)?;
        let val = load_source(v, &run.scene, seed.wrapping_add(1), None)?;
        return Ok((train.with_split(Split::Train), val.with_split(Split::Val)));
    }
    if let DataSource::Dir(p) = src {
        if p.join("splits").join("train.txt").is_file() {
            let train = load_dataset(p, &Layout { split: Some(Split::Train) })?;
            let val = if p.join("splits").join("val.txt").is_file() {
                load_dataset(p, &Layout { split: Some(Split::Val) })?
            } else {
                Dataset { items: Vec::new(), split: Some(Split::Val) }
            };
            return Ok((train, val));
        }
    }
    let all = load_source(src, &run.scene, seed, None)?;
    if run.val_fraction == 0.0 || all.len() < 2 {
        return Ok((all.with_split(Split::Train), Dataset { items: Vec::new(), split: Some(Split::Val) }));
    }
    resplit(&all, 1.0 - run.val_fraction, seed)
}

fn fmt_report(r: &MetricReport) -> String {
    format!("{:.6},{:.6},{:.6},{:.6}", r.precision, r.recall, r.f1, r.iou)
}

pub const EVAL_HEADER: &str = "source,precision,recall,f1,iou";

pub fn eval_csv(v: &SourceReports) -> String {
    format!(
        "{EVAL_HEADER}\nplayer1,{}\nplayer2,{}\nfused,{}\n",
        fmt_report(&v.player1),
        fmt_report(&v.player2),
        fmt_report(&v.fused)
    )
}

#[derive(Debug, Serialize)]
struct ParameterCounts {
    player1: usize,
    player2: usize,
    total: usize,
}

#[derive(Debug, Serialize)]
struct EquilibriumReport {
    window: f64,
    tol: f64,
    reached: bool,
}

/// Summary written as `report.json` after training.
#[derive(Debug, Serialize)]
struct TrainReport<'a> {
    epochs: usize,
    config: &'a crate::game::GameConfig,
    train_images: usize,
    val_images: usize,
    parameters: ParameterCounts,
    final_utilities: Option<UtilityBundle>,
    final_validation: Option<SourceReports>,
    equilibrium: EquilibriumReport,
    checkpoint: String,
}

fn write_history(dir: &Path, game: &TrainedGame<f32>) -> Result<()> {
    fs::write(dir.join("history.csv"), game.history.to_csv())?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, out_flag: Option<&Path>) -> Result<i32> {
    let mut run = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let flags = [
        ("data", &a.data),
        ("val_data", &a.val_data),
        ("epochs", &a.epochs),
        ("seed", &a.seed),
        ("learning_rate", &a.learning_rate),
        ("batch_size", &a.batch_size),
        ("utility_components", &a.utility_components),
        ("loss_mode", &a.loss_mode),
        ("objective", &a.objective),
        ("use_mim", &a.use_mim),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            run.set(k, v)?;
        }
    }
    run.apply_overrides(&a.set)?;
    run.validate()?;
    let out = output_root(out_flag, run.out.as_deref(), "runs/train");
    fs::create_dir_all(&out)?;
    let (train_set, val_set) = training_sets(&run)?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let cfg = run.game.clone();
    println!(
        "training {} epochs on {} images ({} validation), widths {}/{}",
        cfg.epochs,
        train_set.len(),
        val_set.len(),
        cfg.channels1,
        cfg.channels2
    );
    let mut trainer = GameTrainer::<f32>::new(&cfg, &train_set)?;
    for _ in 0..cfg.epochs {
        let step = trainer.run_epoch(&val_set);
        let record = match step {
            Ok(r) => r.clone(),
            Err(e) => {
                write_history(&out, &trainer.game)?;
                return Err(e);
            }
        };
        let u = &record.utilities;
        let mut line = format!("epoch {:>4}  phi1 {:.5}  phi2 {:.5}  g {:.5}", record.epoch, u.phi1, u.phi2, u.g);
        if let Some(v) = &record.validation {
            let _ = write!(line, "  f1 p1 {:.4} p2 {:.4} fused {:.4}", v.player1.f1, v.player2.f1, v.fused.f1);
        }
        println!("{line}");
        write_history(&out, &trainer.game)?;
        if run.checkpoint_every > 0 && record.epoch % run.checkpoint_every == 0 {
            save_game(&trainer.game, &out.join("checkpoints").join(format!("epoch_{:04}.json", record.epoch)))?;
        }
    }
    let game = trainer.into_game();
    let final_path = out.join("final.json");
    save_game(&game, &final_path)?;
    if run.dump_features {
        let sample = val_set.items.first().or(train_set.items.first()).expect("training set is non-empty");
        let (img, _) = crate::data::resize_pair(&sample.image, &sample.mask, cfg.resize);
        let dir = out.join("features");
        let n = write_skip_dumps(&game.player1, &img, &dir, "player1")? + write_skip_dumps(&game.player2, &img, &dir, "player2")?;
        println!("wrote {n} feature dumps to {}", dir.display());
    }
    let reached = equilibrium_reached(&game.history, EQUILIBRIUM_WINDOW, EQUILIBRIUM_TOL);
    let report = TrainReport {
        epochs: game.history.len(),
        config: &game.config,
        train_images: train_set.len(),
        val_images: val_set.len(),
        parameters: ParameterCounts {
            player1: game.player1.parameter_count(),
            player2: game.player2.parameter_count(),
            total: game.parameter_count(),
        },
        final_utilities: game.history.epochs.last().map(|e| e.utilities),
        final_validation: game.history.last_validation(),
        equilibrium: EquilibriumReport { window: EQUILIBRIUM_WINDOW, tol: EQUILIBRIUM_TOL, reached },
        checkpoint: "final.json".into(),
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!("equilibrium reached: {reached}; outputs in {}", out.display());
    Ok(0)
}

fn cmd_eval(a: &EvalArgs, out_flag: Option<&Path>) -> Result<i32> {
    let mut game: TrainedGame<f32> = load_game(&a.checkpoint)?;
    if let Some(t) = a.threshold {
        game.config.threshold = t;
        game.config.validate()?;
    }
    let src: DataSource = a.data.parse()?;
    let split = a.split.as_deref().map(str::parse).transpose()?;
    let data = load_source(&src, &SceneParams::default(), a.seed.unwrap_or(game.config.seed), split)?;
    let report = evaluate(&game, &data)?;
    let csv = eval_csv(&report);
    print!("{csv}");
    let out = output_root(out_flag, None, "runs/eval");
    fs::create_dir_all(&out)?;
    fs::write(out.join("eval.csv"), csv)?;
    Ok(0)
}

fn cmd_synth(a: &SynthArgs, out_flag: Option<&Path>) -> Result<i32> {
    let mut scene = SceneParams::default();
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(p) = &a.params {
        let text = fs::read_to_string(p).map_err(|e| Error::Usage(format!("cannot read {}: {e}", p.display())))?;
        pairs.extend(crate::config::parse_pairs(&text)?.into_iter().map(|(k, v, _)| (k, v)));
    }
    for o in &a.set {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Usage(format!("override `{o}` is not key=value")))?;
        pairs.push((k.trim().into(), v.trim().into()));
    }
    for (k, v) in pairs {
        scene.set(&k, &v).map_err(|e| match e {
            Error::Config(m) if m.starts_with("unknown") => Error::Usage(m),
            other => other,
        })?;
    }
    let data = synth(&scene, a.n, a.seed)?;
    let out = output_root(out_flag, None, "runs/synth");
    write_dataset(&out, &[&data])?;
    println!("wrote {} scenes to {}", data.len(), out.display());
    Ok(0)
}

/// Area histogram bins for plotting.
const AREA_BIN: usize = 10;

pub fn stats_csvs(r: &StatsReport) -> Vec<(&'static str, String)> {
    let mut count = String::from("targets,images\n");
    for (k, v) in &r.count_hist {
        let _ = writeln!(count, "{k},{v}");
    }
    let mut area = String::from("area,targets\n");
    for (k, v) in &r.area_hist {
        let _ = writeln!(area, "{k},{v}");
    }
    let mut cum = String::from("area,fraction\n");
    for (k, v) in &r.cumulative_area {
        let _ = writeln!(cum, "{k},{v:.6}");
    }
    let mut scr = String::from("scr_low,scr_high,targets\n");
    for (i, v) in r.scr_hist.iter().enumerate() {
        let high = if i + 1 == r.scr_hist.len() { "inf".to_string() } else { (i + 1).to_string() };
        let _ = writeln!(scr, "{i},{high},{v}");
    }
    vec![("count_hist.csv", count), ("area_hist.csv", area), ("cumulative_area.csv", cum), ("scr_hist.csv", scr)]
}

fn cmd_stats(a: &StatsArgs, out_flag: Option<&Path>) -> Result<i32> {
    let src: DataSource = a.data.parse()?;
    let data = load_source(&src, &SceneParams::default(), a.seed, None)?;
    if data.is_empty() {
        log::warn!("dataset is empty; writing empty histograms");
        eprintln!("warning: dataset is empty");
    }
    let r = dataset_stats(&data);
    let out = output_root(out_flag, None, "runs/stats");
    fs::create_dir_all(&out)?;
    for (name, text) in stats_csvs(&r) {
        fs::write(out.join(name), text)?;
    }
    let max_count = r.count_hist.keys().copied().max().unwrap_or(0);
    let counts: Vec<f64> = (0..=max_count).map(|k| *r.count_hist.get(&k).unwrap_or(&0) as f64).collect();
    plot::save(&plot::histogram(&counts), &out.join("count_hist.png"))?;
    let max_area = r.area_hist.keys().copied().max().unwrap_or(0);
    let mut area_bins = vec![0.0; max_area / AREA_BIN + 1];
    for (&k, &v) in &r.area_hist {
        area_bins[k / AREA_BIN] += v as f64;
    }
    plot::save(&plot::histogram(&area_bins), &out.join("area_hist.png"))?;
    let scr: Vec<f64> = r.scr_hist.iter().map(|&v| v as f64).collect();
    plot::save(&plot::histogram(&scr), &out.join("scr_hist.png"))?;
    println!(
        "images {}  targets {}  single-target {:.3}  area<100 {:.3}  scr<5 {:.3}  scr undefined {}",
        r.images,
        r.total_targets(),
        r.single_target_fraction(),
        r.area_fraction_below(100),
        r.scr_fraction_below(5.0),
        r.scr_failures
    );
    Ok(0)
}

fn cmd_ablate(a: &AblateArgs, out_flag: Option<&Path>) -> Result<i32> {
    let text = fs::read_to_string(&a.plan).map_err(|e| Error::Usage(format!("cannot read plan {}: {e}", a.plan.display())))?;
    let mut plan = AblationPlan::parse(&text)?;
    plan.run.apply_overrides(&a.set)?;
    plan.run.validate()?;
    let out = output_root(out_flag, plan.run.out.as_deref(), "runs/ablate");
    fs::create_dir_all(&out)?;
    let (train_set, val_set) = training_sets(&plan.run)?;
    println!("ablation over {} with {} levels", plan.axis, plan.levels.len());
    let mut written = Ok(());
    let rows = run_plan(&plan, &train_set, &val_set, |r, history| {
        if let Some(h) = history {
            written = written.clone().and(fs::write(out.join(format!("history_{}.csv", level_slug(&r.level))), h.to_csv()).map_err(|e| e.to_string()));
        }
        println!("{:<12} f1 {:>8}  iou {:>8}  {}", r.level, r.f1.map(|v| format!("{v:.4}")).unwrap_or("-".into()), r.iou.map(|v| format!("{v:.4}")).unwrap_or("-".into()), r.status);
    });
    written.map_err(|e| Error::Data(format!("cannot write level history: {e}")))?;
    fs::write(out.join("ablation.csv"), rows_to_csv(&rows))?;
    let groups: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.f1.unwrap_or(0.0), r.iou.unwrap_or(0.0)]).collect();
    plot::save(&plot::grouped_bars(&groups), &out.join("ablation.png"))?;
    Ok(0)
}

fn cmd_verify() -> i32 {
    let checks = verify::run_all();
    for c in &checks {
        println!("{c}");
    }
    if verify::all_passed(&checks) {
        println!("all {} checks passed", checks.len());
        0
    } else {
        println!("{} of {} checks failed", checks.iter().filter(|c| !c.passed).count(), checks.len());
        Error::Verification(String::new()).exit_code()
    }
}
