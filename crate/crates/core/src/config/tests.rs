use super::*;

#[test]
fn presets_resolve_and_validate() {
    for p in PRESETS {
        let c = RunConfig::preset(p).unwrap();
        c.validate().unwrap();
    }
    let best = RunConfig::preset("best").unwrap();
    assert_eq!((best.model.layers.n_mmte, best.model.layers.n_pra, best.model.layers.n_sra), (1, 2, 1));
    let t1 = RunConfig::preset("table1").unwrap();
    assert_eq!((t1.model.layers.n_mmte, t1.model.layers.n_pra, t1.model.layers.n_sra), (2, 2, 2));
    let toy = RunConfig::preset("toy").unwrap();
    assert_eq!(toy.model.layers.d_model, 32);
    assert_eq!(toy.model.layers.heads_sa_ga_mmte, 8);
    assert_eq!(toy.model.decoding_steps, 12);
    assert!(RunConfig::preset("huge").is_err());
}

#[test]
fn file_overrides_preset_and_flag_preset_wins() {
    let c = RunConfig::resolve(None, Some(r#"{"preset": "toy", "train": {"steps": 7}}"#)).unwrap();
    assert_eq!(c.model.layers.d_model, 32);
    assert_eq!(c.train.steps, 7);
    let c = RunConfig::resolve(Some("best"), Some(r#"{"preset": "toy"}"#)).unwrap();
    assert_eq!(c.model.layers.d_model, 768);
    assert_eq!(RunConfig::resolve(None, None).unwrap(), RunConfig::preset("best").unwrap());
}

#[test]
fn errors_name_the_offending_key() {
    let key = |text: &str| match RunConfig::resolve(Some("toy"), Some(text)) {
        Err(Error::Config { key, .. }) => key,
        other => panic!("{other:?}"),
    };
    assert_eq!(key(r#"{"train": {"learnin_rate": 1}}"#), "train.learnin_rate");
    assert_eq!(key(r#"{"model": {"layers": {"d_model": "big"}}}"#), "model.layers.d_model");
    assert_eq!(key(r#"{"model": {"layers": {"heads_pra": 5}}}"#), "heads_pra");
    assert_eq!(key(r#"[1]"#), "<root>");
    assert!(matches!(RunConfig::resolve(None, Some("{")), Err(Error::Parse { .. })));
}

#[test]
fn seed_applies_everywhere() {
    let c = RunConfig::preset("toy").unwrap().with_seed(9);
    assert_eq!((c.model.init_seed, c.train.seed, c.data.seed), (9, 9, 9));
}

#[test]
fn blank_file_with_best_matches_defaults() {
    let cfg = RunConfig::resolve(Some("best"), Some("  \n")).unwrap();
    assert_eq!(cfg, RunConfig::preset("best").unwrap());
    let l = &cfg.model.layers;
    assert_eq!((l.n_mmte, l.n_pra, l.n_sra), (1, 2, 1));
    assert_eq!(cfg.train.learning_rate, 1e-4);
    assert_eq!(cfg.train.batch_size, 8);
    assert_eq!(cfg.train.seed, 0);
}
