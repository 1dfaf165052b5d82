mod common;

use common::*;
use zen::corpus::{single_segment, PAD};
use zen::matcher::{MatchState, Matcher, NgramOccurrence};
use zen::model::heatmap::export_ngram_weights;
use zen::model::{EncoderInput, Mode, ZenModel};
use zen::numerics::{Graph, Tensor};

fn states(model: &ZenModel, ids: &[usize], segs: &[usize], m: Option<&MatchState>) -> (Tensor, Vec<Tensor>, Vec<Tensor>) {
    let mut g = Graph::new(model.params());
    let input = EncoderInput {
        token_ids: ids,
        segment_ids: segs,
        ngrams: m,
    };
    let out = model.forward(&mut g, &input, Mode::Eval, &mut rng(0)).unwrap();
    (
        g.value(out.char_states).clone(),
        out.layer_inputs.iter().map(|&v| g.value(v).clone()).collect(),
        out.fused_inputs.iter().map(|&v| g.value(v).clone()).collect(),
    )
}

fn occ(ngram_id: usize, start: usize, len: usize) -> NgramOccurrence {
    NgramOccurrence { ngram_id, start, len }
}

/// Final-layer n-gram representations for a match state.
fn ngram_rows(model: &ZenModel, ids: &[usize], segs: &[usize], m: &MatchState) -> Vec<Tensor> {
    let mut g = Graph::new(model.params());
    let input = EncoderInput {
        token_ids: ids,
        segment_ids: segs,
        ngrams: Some(m),
    };
    let out = model.forward(&mut g, &input, Mode::Eval, &mut rng(0)).unwrap();
    out.ngram_states.iter().map(|&v| g.value(v).clone()).collect()
}

#[test]
fn single_occurrence_adds_its_row_to_covered_characters() {
    let vocab = alphabet_vocab();
    let lexicon = lexicon_of(&[("天气", 3)]);
    let model = ZenModel::new(tiny_config(vocab.len(), lexicon.len()), 1).unwrap();
    let (ids, segs, chars) = single_segment("我天气好", &vocab, 32);
    let m = Matcher::new(&lexicon).find(&chars, 128);
    assert_eq!(m.occurrences(), [occ(0, 2, 2)]);
    let (_, before, after) = states(&model, &ids, &segs, Some(&m));
    let u = ngram_rows(&model, &ids, &segs, &m);
    let d = model.config().hidden;
    // Layer l is fused with n-gram layer floor(l * L_n / L_c) output.
    for l in 0..before.len() {
        let t = l * model.config().ngram_layers / model.config().char_layers;
        let row = u[t + 1].row(0);
        for i in 0..ids.len() {
            for x in 0..d {
                let expect = before[l].get(i, x) + if (2..4).contains(&i) { row[x] } else { 0.0 };
                assert!((after[l].get(i, x) - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn repeated_ngram_gets_one_column_per_occurrence() {
    let vocab = alphabet_vocab();
    let lexicon = lexicon_of(&[("天气", 3)]);
    let model = ZenModel::new(tiny_config(vocab.len(), lexicon.len()), 2).unwrap();
    let (ids, segs, chars) = single_segment("天气天气", &vocab, 32);
    let m = Matcher::new(&lexicon).find(&chars, 128);
    assert_eq!(m.ngram_ids(), [0, 0]);
    let mt = m.matrix();
    assert_eq!(mt.shape(), [6, 2]);
    let (_, before, after) = states(&model, &ids, &segs, Some(&m));
    let u = ngram_rows(&model, &ids, &segs, &m);
    for l in 0..before.len() {
        let t = l * model.config().ngram_layers / model.config().char_layers;
        let expect = fuse_loop(before[l].data(), u[t + 1].data(), mt.data(), 6, 2, model.config().hidden);
        let err = after[l].data().iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}

#[test]
fn output_shape_ignores_ngram_count() {
    let vocab = alphabet_vocab();
    let mut r = rng(3);
    let lexicon = random_lexicon(&mut r, 40, 2, 3);
    let model = ZenModel::new(tiny_config(vocab.len(), lexicon.len()), 3).unwrap();
    let (ids, segs, chars) = single_segment("天气很好我们天气", &vocab, 32);
    let full = Matcher::new(&lexicon).find(&chars, 128);
    for m in [None, Some(MatchState::empty(ids.len())), Some(full.clone()), Some(Matcher::new(&lexicon).find(&chars, 1))] {
        let (s, _, _) = states(&model, &ids, &segs, m.as_ref());
        assert_eq!(s.shape(), [ids.len(), model.config().hidden]);
    }
}

#[test]
fn padding_does_not_change_real_positions() {
    let vocab = alphabet_vocab();
    let lexicon = lexicon_of(&[("天气", 3), ("很好", 2)]);
    let model = ZenModel::new(tiny_config(vocab.len(), lexicon.len()), 4).unwrap();
    let (ids, segs, chars) = single_segment("天气很好", &vocab, 32);
    let m = Matcher::new(&lexicon).find(&chars, 128);
    let (a, _, _) = states(&model, &ids, &segs, Some(&m));
    let mut pids = ids.clone();
    let mut psegs = segs.clone();
    pids.extend([PAD; 5]);
    psegs.extend([0; 5]);
    let pm = MatchState::from_occurrences(pids.len(), m.occurrences().to_vec());
    let (b, _, _) = states(&model, &pids, &psegs, Some(&pm));
    for i in 0..ids.len() {
        for x in 0..model.config().hidden {
            assert!((a.get(i, x) - b.get(i, x)).abs() < 1e-12);
        }
    }
}

#[test]
fn backbone_only_run_fuses_nothing() {
    let vocab = alphabet_vocab();
    let model = ZenModel::new(tiny_config(vocab.len(), 4), 5).unwrap();
    let (ids, segs, _) = single_segment("天气很好", &vocab, 32);
    let (_, before, after) = states(&model, &ids, &segs, None);
    assert_eq!(before, after);
}

#[test]
fn heatmap_single_hit_has_full_weight() {
    let vocab = alphabet_vocab();
    let lexicon = lexicon_of(&[("天气", 3), ("我们", 1)]);
    let model = ZenModel::new(tiny_config(vocab.len(), lexicon.len()), 6).unwrap();
    let (ids, segs, chars) = single_segment("天气好", &vocab, 32);
    let m = Matcher::new(&lexicon).find(&chars, 128);
    let input = EncoderInput {
        token_ids: &ids,
        segment_ids: &segs,
        ngrams: Some(&m),
    };
    let w = export_ngram_weights(&model, &input).unwrap();
    assert_eq!(w.layers.len(), model.config().ngram_layers);
    for layer in &w.layers {
        assert_eq!(layer, &vec![1.0]);
    }

    let (ids, segs, chars) = single_segment("天气我们天气", &vocab, 32);
    let m = Matcher::new(&lexicon).find(&chars, 128);
    let input = EncoderInput {
        token_ids: &ids,
        segment_ids: &segs,
        ngrams: Some(&m),
    };
    let w = export_ngram_weights(&model, &input).unwrap();
    for layer in &w.layers {
        assert_eq!(layer.len(), 3);
        assert!((layer.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(w.to_tsv(&lexicon).contains("\t我们\t"));
}

#[test]
fn mismatched_inputs_are_rejected() {
    let vocab = alphabet_vocab();
    let model = ZenModel::new(tiny_config(vocab.len(), 2), 7).unwrap();
    let (ids, segs, _) = single_segment("天气", &vocab, 32);
    let bad = MatchState::from_occurrences(ids.len(), vec![occ(5, 1, 2)]);
    let mut g = Graph::new(model.params());
    let input = EncoderInput {
        token_ids: &ids,
        segment_ids: &segs,
        ngrams: Some(&bad),
    };
    assert!(model.forward(&mut g, &input, Mode::Eval, &mut rng(0)).is_err());
}

#[test]
fn initialisation_is_seeded_per_tensor_name() {
    let vocab = alphabet_vocab();
    let a = ZenModel::new(tiny_config(vocab.len(), 0), 9).unwrap();
    let b = ZenModel::new(tiny_config(vocab.len(), 30), 9).unwrap();
    for (_, p) in a.params().iter() {
        if p.name.starts_with("ngram_embeddings.table") {
            continue;
        }
        let q = b.params().get(b.params().id(&p.name).unwrap());
        assert_eq!(p.value, q.value, "{}", p.name);
    }
}
