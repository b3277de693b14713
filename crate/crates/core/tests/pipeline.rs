use scenegate::config::RunConfig;
use scenegate::data::{generate_dataset, load_dataset, save_dataset};
use scenegate::model::{evaluate, Model};
use scenegate::run::{generated_splits, run_training, Split};

fn short_toy() -> RunConfig {
    let mut cfg = RunConfig::preset("toy").unwrap();
    cfg.train.steps = 20;
    cfg.train.eval_every = 10;
    cfg.data.train_scenes = 24;
    cfg.data.val_scenes = 8;
    cfg
}

#[test]
fn dataset_round_trips_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenes.jsonl");
    let scenes = generate_dataset(15, 9).unwrap();
    save_dataset(&path, &scenes).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), scenes);
}

#[test]
fn generated_splits_are_disjoint() {
    let cfg = short_toy();
    let (train, val) = generated_splits(&cfg.data).unwrap();
    assert_eq!((train.len(), val.len()), (24, 8));
    assert!(val.iter().all(|v| train.iter().all(|t| t.scene_id != v.scene_id)));
}

#[test]
fn train_save_load_evaluate() {
    let cfg = short_toy();
    let (train, val) = generated_splits(&cfg.data).unwrap();
    let mut seen = Vec::new();
    let (trainer, rows) = run_training(&cfg, &train, &val, |row, _| {
        seen.push(row.step);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![10, 20]);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.loss.is_finite() && (0.0..=1.0).contains(&r.val_acc)));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    trainer.model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();

    let split = Split::new(&val, loaded.vocab(), loaded.config()).unwrap();
    let (a, pa) = evaluate(&trainer.model, &split.inputs, &split.golds).unwrap();
    let (b, pb) = evaluate(&loaded, &split.inputs, &split.golds).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.n_examples, 8);
    assert!((a.accuracy - rows[1].val_acc).abs() < 1e-12);
}
