use std::collections::BTreeSet;

use hyperseq::dataio::{
    generate_synthetic, load_sessions_path, ExclusionMode, MarkovSpec, SplitParams, StrategyRegistry, SyntheticConfig,
};
use hyperseq::eval::{evaluate_with_reference, summarize_folds, OracleModel};
use hyperseq::{Codebook, Model, ModelConfig};

#[test]
fn generate_persist_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = MarkovSpec::uniform(MarkovSpec::default_labels()).unwrap();
    let data = generate_synthetic(
        &spec,
        &SyntheticConfig {
            users: 6,
            sessions_per_user: 3,
            session_len: 50,
            seed: 7,
            perturbation: 0.5,
            concentration: 0.2,
        },
    )
    .unwrap();
    let path = dir.path().join("d.jsonl");
    data.save_jsonl_path(&path).unwrap();
    let loaded = load_sessions_path(&path, &BTreeSet::new(), ExclusionMode::Splice).unwrap();
    assert_eq!(loaded, data);

    let cfg = ModelConfig {
        dim: 4000,
        seed: 7,
        adaptive: true,
        adapt_weight: 5,
        ..Default::default()
    };
    let folds = StrategyRegistry::with_builtin()
        .create("kfold", &SplitParams::default())
        .unwrap()
        .folds(&loaded, 7)
        .unwrap();
    assert_eq!(folds.len(), 6);

    let cb = Codebook::build(loaded.label_universe().iter(), cfg.dim, cfg.seed).unwrap();
    let mut reports = Vec::new();
    for (i, f) in folds.iter().enumerate() {
        let m = Model::train(cfg.clone(), cb.clone(), f.train.sessions()).unwrap();
        let file = dir.path().join(format!("fold{i}.hsq"));
        m.save_to_path(&file).unwrap();
        let m = Model::load_from_path(&file).unwrap();
        let oracle = OracleModel::build(f.train.sessions(), cfg.n);
        assert_eq!(oracle.total_count(), m.train_ngram_count());
        let r = evaluate_with_reference(&m, &f.test, true, Some(&oracle)).unwrap();
        assert_eq!(r.events.len(), 3 * 48);
        assert!(r.events.iter().all(|e| e.correct == (e.predicted == e.actual)));
        reports.push(r);
    }
    let s = summarize_folds(&reports);
    assert_eq!(s.events, 6 * 3 * 48);
    // Equal fold sizes make the two averages coincide.
    assert!((s.fold_mean_accuracy - s.event_weighted_accuracy).abs() < 1e-12);
    assert!(s.event_weighted_accuracy > 1.0 / 9.0);
}
