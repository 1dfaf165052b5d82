mod common;

use common::*;
use zen::corpus::Vocab;
use zen::finetune::data::{parse_classification, parse_tagging, scheme_labels};
use zen::finetune::{finetune, score_tagging, FinetuneConfig, Metrics, Scheme, TaskData, TaskKind, TaskModel, TaskSpec};
use zen::model::ZenModel;
use zen::Error;

fn classification() -> (TaskSpec, TaskData, Vocab) {
    let labels = vec!["weather".to_string(), "people".to_string()];
    let text = "weather\t天气很好\nweather\t天气好\npeople\t我们很好\npeople\t我们\nweather\t好天气\npeople\t们我们\n";
    let exs = parse_classification(text, "cls", &labels).unwrap();
    let spec = TaskSpec {
        name: "topic".into(),
        kind: TaskKind::Classification,
        labels,
    };
    (spec, TaskData::Classification(exs), alphabet_vocab())
}

#[test]
fn classification_overfits_and_reloads() {
    let (spec, data, vocab) = classification();
    let lexicon = lexicon_of(&[("天气", 3), ("我们", 3)]);
    let model = ZenModel::new(tiny_config(vocab.len(), lexicon.len()), 0).unwrap();
    let tm = TaskModel::new(model, vocab.clone(), Some(lexicon.clone()), spec, 128, 0).unwrap();
    let cfg = FinetuneConfig {
        epochs: 40,
        batch_size: 2,
        peak_lr: 3e-3,
        stop_at: Some(1.0),
        ..Default::default()
    };
    let out = finetune(tm, &data, &data, &cfg).unwrap();
    assert_eq!(out.best().dev, Metrics::Classification { accuracy: 1.0 });
    assert!(out.history.len() <= 40);

    let dir = tempfile::tempdir().unwrap();
    out.model.save(dir.path(), out.best_epoch).unwrap();
    let back = TaskModel::load(dir.path(), vocab.clone(), Some(lexicon.clone()), 128).unwrap();
    for (a, b) in [("天气很好", None), ("我们", Some("好"))] {
        assert_eq!(back.predict_class(a, b).unwrap(), out.model.predict_class(a, b).unwrap());
    }
    assert_eq!(back.evaluate(&data).unwrap(), Metrics::Classification { accuracy: 1.0 });
    assert!(matches!(
        TaskModel::load(dir.path(), vocab, None, 128),
        Err(Error::LexiconMismatch { .. })
    ));
}

#[test]
fn best_epoch_parameters_are_restored() {
    let (spec, data, vocab) = classification();
    let model = ZenModel::new(tiny_config(vocab.len(), 0), 1).unwrap();
    let tm = TaskModel::new(model, vocab, None, spec, 128, 1).unwrap();
    let cfg = FinetuneConfig {
        epochs: 6,
        batch_size: 3,
        peak_lr: 1e-3,
        ..Default::default()
    };
    let out = finetune(tm, &data, &data, &cfg).unwrap();
    let best = out.history.iter().map(|r| r.dev.primary()).fold(f64::MIN, f64::max);
    assert_eq!(out.best().dev.primary(), best);
    assert_eq!(out.model.evaluate(&data).unwrap().primary(), best);
    let csv = out.history_csv();
    assert!(csv.starts_with("epoch,train_loss,dev_accuracy\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn finetuning_is_deterministic() {
    let run = || {
        let (spec, data, vocab) = classification();
        let mut cfg = tiny_config(vocab.len(), 0);
        cfg.dropout = 0.1;
        let tm = TaskModel::new(ZenModel::new(cfg, 2).unwrap(), vocab, None, spec, 128, 2).unwrap();
        let ft = FinetuneConfig {
            epochs: 3,
            batch_size: 2,
            ..Default::default()
        };
        finetune(tm, &data, &data, &ft).unwrap().history_csv()
    };
    assert_eq!(run(), run());
}

#[test]
fn typed_bio_tagging_scores_entities() {
    let gold = parse_tagging("我\tB-PER\n们\tI-PER\n好\tO\n天\tB-LOC\n", "g").unwrap();
    let pred = parse_tagging("我\tB-PER\n们\tI-PER\n好\tO\n天\tB-PER\n", "p").unwrap();
    let g: Vec<Vec<String>> = gold.iter().map(|e| e.labels.clone()).collect();
    let p: Vec<Vec<String>> = pred.iter().map(|e| e.labels.clone()).collect();
    match score_tagging(Scheme::Bio, &g, &p).unwrap() {
        Metrics::Tagging { precision, recall, f1, accuracy } => {
            assert_eq!((precision, recall, f1), (0.5, 0.5, 0.5));
            assert_eq!(accuracy, 0.75);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn tagging_model_predicts_every_character() {
    let vocab = alphabet_vocab();
    let spec = TaskSpec {
        name: "seg".into(),
        kind: TaskKind::Tagging { scheme: Scheme::Bmes },
        labels: scheme_labels(Scheme::Bmes, &[]),
    };
    let mut cfg = tiny_config(vocab.len(), 0);
    cfg.max_len = 8;
    let tm = TaskModel::new(ZenModel::new(cfg, 3).unwrap(), vocab, None, spec, 128, 3).unwrap();
    let chars: Vec<char> = "天气很好我们天气很好".chars().collect();
    let tags = tm.predict_tags(&chars).unwrap();
    assert_eq!(tags.len(), chars.len());
    // Characters past max_len get the outside label.
    assert!(tags[6..].iter().all(|t| t == "S"));
}

#[test]
fn label_outside_the_task_is_rejected() {
    let (spec, _, vocab) = classification();
    let bad = TaskData::Tagging(parse_tagging("天\tB\n", "x").unwrap());
    let tm = TaskModel::new(ZenModel::new(tiny_config(vocab.len(), 0), 0).unwrap(), vocab, None, spec, 128, 0).unwrap();
    assert!(finetune(tm, &bad, &bad, &FinetuneConfig::default()).is_err());
}
