use rgf_core::corpus::{
    build_vocabulary, generate_synthetic, make_trial, stratified_kfold, synthetic_gene_symbol,
    tokenize, Label, SyntheticSpec, TokenSequence,
};
use rgf_core::nnmodel::{init_model, ModelConfig};
use rgf_core::train::{cross_validate, fit, Example, TrainConfig};

fn corpus(effect: f64, seed: u64) -> (Vec<TokenSequence>, Vec<Label>, usize) {
    let spec = SyntheticSpec::with_random_planted(300, 60, 4, 2, effect, seed).unwrap();
    let (cells, _) = generate_synthetic(&spec).unwrap();
    let vocab = build_vocabulary((0..60).map(synthetic_gene_symbol)).unwrap();
    let seqs = cells.iter().map(|c| tokenize(c, &vocab, 16).unwrap()).collect();
    (seqs, cells.iter().map(|c| c.label).collect(), vocab.vocab_size())
}

fn model_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        vocab_size,
        max_len: 16,
        n_classes: 2,
        init_seed: 1,
    }
}

#[test]
fn planted_signal_is_learned() {
    let (seqs, labels, v) = corpus(3.0, 4);
    let folds = stratified_kfold(&labels, 5, 2).unwrap();
    let trial = make_trial(&folds, &labels, 0, 0.2, 2).unwrap();
    let pick = |idx: &[usize]| -> Vec<Example<'_>> {
        idx.iter().map(|&i| Example { seq: &seqs[i], label: labels[i] }).collect()
    };
    let init = init_model(&model_config(v)).unwrap();
    let cfg = TrainConfig { epochs: 4, batch_size: 16, learning_rate: 0.005, ..TrainConfig::default() };
    let out = fit(&init, &pick(&trial.train), &pick(&trial.val), &cfg).unwrap();
    assert!(out.best().val.auc > 0.85, "{:?}", out.history);
    // the bottom block is frozen by default (floor(2 / 3) = 0 here, so set explicitly)
    let frozen = TrainConfig { frozen_layers: Some(1), epochs: 1, ..cfg };
    let out = fit(&init, &pick(&trial.train), &pick(&trial.val), &frozen).unwrap();
    assert_eq!(out.params.layers[0], init.layers[0]);
}

#[test]
fn cross_validation_reports_k_folds_and_is_repeatable() {
    let (seqs, labels, v) = corpus(3.0, 8);
    let cfgs = [
        TrainConfig { epochs: 1, batch_size: 32, learning_rate: 0.005, ..TrainConfig::default() },
        TrainConfig { epochs: 1, batch_size: 32, learning_rate: 0.0005, ..TrainConfig::default() },
    ];
    let a = cross_validate(&seqs, &labels, 3, 0.2, &model_config(v), &cfgs, 5).unwrap();
    assert_eq!(a.report.auc.per_fold.len(), 3);
    assert_eq!(a.models.len(), 3);
    assert_eq!(a.report.mean_val_f1.len(), 2);
    assert!(a.report.auc.std >= 0.0);
    for m in [&a.report.auc, &a.report.sensitivity, &a.report.specificity, &a.report.f1] {
        assert!(m.per_fold.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let b = cross_validate(&seqs, &labels, 3, 0.2, &model_config(v), &cfgs, 5).unwrap();
    assert_eq!(a.report, b.report);
    let best = a.report.mean_val_f1.iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(a.report.mean_val_f1[a.report.selected_config], best);
}
