use ecpr::harness::{predict_all, train, Checkpoint, ExperimentConfig, FeatureSubset};
use ecpr::models::{ModelKind, PredictionHeads, TrainingDomain};
use ecpr::sim::generate;

fn tiny(kind: ModelKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.model.kind = kind;
    cfg.sim.world.n_users = 50;
    cfg.sim.world.n_items = 500;
    cfg.sim.world.user_buckets = 16;
    cfg.sim.world.item_buckets = 32;
    cfg.sim.cascade.train_requests = 40;
    cfg.sim.cascade.eval_requests = 4;
    cfg.batch_size = 32;
    cfg.epochs = 1;
    cfg
}

fn bits(heads: &[PredictionHeads]) -> Vec<u64> {
    heads
        .iter()
        .flat_map(|h| [h.t1(), h.t3().unwrap_or(-1.0), h.p_etr().unwrap_or(-1.0)])
        .map(f64::to_bits)
        .collect()
}

#[test]
fn save_load_save_is_byte_identical_and_predictions_bitwise_equal() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let mut cfg = tiny(kind);
        if kind == ModelKind::Ecmm {
            cfg.model.towers = 4;
            cfg.features = FeatureSubset::Half;
        }
        let sim = generate(3, &cfg.sim).unwrap();
        let trained = train(&cfg, &sim.train).unwrap().checkpoint;
        let p1 = dir.path().join(format!("{kind}.ckpt"));
        let p2 = dir.path().join(format!("{kind}.again.ckpt"));
        trained.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "{kind}"
        );
        assert_eq!(loaded, trained, "{kind}");

        let before = predict_all(
            trained.model().unwrap().as_ref(),
            &trained.params,
            &sim.eval,
        )
        .unwrap();
        let after =
            predict_all(loaded.model().unwrap().as_ref(), &loaded.params, &sim.eval).unwrap();
        assert_eq!(bits(&before), bits(&after), "{kind}");
    }
}

#[test]
fn header_names_the_model() {
    let cfg = tiny(ModelKind::Esmm).with_model(ModelKind::Esmm, TrainingDomain::ExposureOnly);
    let sim = generate(1, &cfg.sim).unwrap();
    let text = train(&cfg, &sim.train).unwrap().checkpoint.to_text();
    assert!(text.starts_with("#ecpr-checkpoint v1 model=esmm\ntensor "));
    assert!(text.contains("\nconfig\n"));
    assert!(text.contains("\ndomain = exposure_only\n"));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let cfg = tiny(ModelKind::TwoTower);
    let sim = generate(1, &cfg.sim).unwrap();
    let text = train(&cfg, &sim.train).unwrap().checkpoint.to_text();
    let p = std::path::Path::new("mem.ckpt");
    assert!(Checkpoint::parse(&text, p).is_ok());
    // wrong model in header
    let swapped = text.replacen("model=two_tower", "model=ecm", 1);
    assert!(Checkpoint::parse(&swapped, p).is_err());
    // truncated: drop the config section
    let cut = &text[..text.find("\nconfig\n").unwrap() + 1];
    assert!(Checkpoint::parse(cut, p).is_err());
    // non-numeric value
    let first_row = text.lines().nth(2).unwrap();
    let bad = text.replacen(first_row, &first_row.replacen(' ', " x", 1), 1);
    assert!(Checkpoint::parse(&bad, p).is_err());
    // missing tensor
    let second = text.match_indices("\ntensor ").nth(1).unwrap().0;
    let third = text.match_indices("\ntensor ").nth(2).unwrap().0;
    let dropped = format!("{}{}", &text[..second], &text[third..]);
    assert!(Checkpoint::parse(&dropped, p).is_err());
}
