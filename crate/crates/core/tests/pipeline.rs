use pixelgame::backbone::convert;
use pixelgame::checkpoint::{load_game, save_game};
use pixelgame::data::{load_dataset, resplit, synth_dataset, write_dataset, Layout, SceneParams, Split};
use pixelgame::game::{evaluate, train, GameConfig, TrainedGame};

fn quick_config() -> GameConfig {
    GameConfig { epochs: 2, crop: 32, resize: 32, channels1: 4, channels2: 2, batch_size: 4, seed: 12, ..GameConfig::default() }
}

#[test]
fn dataset_round_trip_then_train_save_load_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let all = synth_dataset(&SceneParams::default(), 20, 6).unwrap();
    let (train_set, val_set) = resplit(&all, 0.8, 6).unwrap();
    write_dataset(dir.path(), &[&train_set, &val_set]).unwrap();

    let train_back = load_dataset(dir.path(), &Layout { split: Some(Split::Train) }).unwrap();
    let val_back = load_dataset(dir.path(), &Layout { split: Some(Split::Val) }).unwrap();
    assert_eq!((train_back.len(), val_back.len()), (16, 4));
    for a in &train_back.items {
        let b = train_set.items.iter().find(|b| b.stem == a.stem).expect("stem written");
        assert_eq!(a.mask, b.mask);
    }

    let cfg = quick_config();
    let game: TrainedGame<f32> = train(&cfg, &train_back, &val_back).unwrap();
    assert_eq!(game.history.len(), 2);
    let recorded = game.history.last_validation().unwrap();
    let direct = evaluate(&game, &val_back).unwrap();
    assert_eq!(recorded, direct);

    let path = dir.path().join("ckpt.json");
    save_game(&game, &path).unwrap();
    let loaded: TrainedGame<f32> = load_game(&path).unwrap();
    assert_eq!(evaluate(&loaded, &val_back).unwrap(), direct);
    assert_eq!(loaded.history, game.history);
    assert_eq!(loaded.config, game.config);
}

#[test]
fn double_precision_training_tracks_single_precision() {
    let data = synth_dataset(&SceneParams::default(), 8, 2).unwrap();
    let cfg = GameConfig { epochs: 1, ..quick_config() };
    let single: TrainedGame<f32> = train(&cfg, &data, &data).unwrap();
    let double: TrainedGame<f64> = train(&cfg, &data, &data).unwrap();
    let (a, b) = (single.history.epochs[0].utilities, double.history.epochs[0].utilities);
    assert!((a.phi1 - b.phi1).abs() < 1e-3 && (a.phi2 - b.phi2).abs() < 1e-3, "{a:?} {b:?}");
    let narrowed = convert::<f64, f32>(&double.player1);
    assert_eq!(narrowed.parameter_count(), single.player1.parameter_count());
}

#[test]
fn widths_and_modulation_are_restored_from_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GameConfig { use_mim: false, channels1: 5, channels2: 3, ..quick_config() };
    let game = TrainedGame::<f32>::initial(&cfg).unwrap();
    let path = dir.path().join("init.json");
    save_game(&game, &path).unwrap();
    let back: TrainedGame<f32> = load_game(&path).unwrap();
    assert_eq!(back.parameter_count(), game.parameter_count());
    assert!(!back.config.use_mim);
}
