mod common;

use ndarray::{Array1, Array2};

use common::*;
use protorel::classifier::*;
use protorel::embed::EmbeddingConfig;
use protorel::encoder::{EncodedSentence, EncoderConfig};
use protorel::typefeat::TypeCatalog;

fn small_pipeline(seed: u64) -> Pipeline {
    let embed = EmbeddingConfig { n_samples: 100_000, dim_first: 16, dim_second: 16, seed, ..EmbeddingConfig::default() };
    build_pipeline(&small_config(seed), &embed, 120)
}

#[test]
fn fused_gradient_matches_finite_differences_at_three_snapshots() {
    let p = small_pipeline(2);
    let bags: Vec<PreparedBag> = p.train.iter().step_by(37).take(6).cloned().collect();
    let mut model = compact_model(&p, Components::FULL, 6, 0.0, 2);
    model.encoder.conv_b.mapv_inplace(|_| 0.05);
    for (snapshot, epochs) in [0, 1, 2].into_iter().enumerate() {
        if epochs > 0 {
            model.train(&p.train, &p.world.types, &train_config(epochs, snapshot as u64)).unwrap();
        }
        let report = fd_model(&model, &bags, &p.world, 240, 17 + snapshot as u64);
        assert!(report.checked >= 200);
        assert!(report.ok(), "snapshot {snapshot}: {report:?}");
    }
}

fn separable_bag(gold: usize, k: usize) -> PreparedBag {
    let marker = gold + 1;
    let filler = 4 + k % 3;
    PreparedBag {
        head: 2 * k % 10,
        tail: (2 * k + 1) % 10,
        gold,
        sentences: vec![
            EncodedSentence::from_ids(vec![filler, marker, filler, filler], 0, 3, 10).unwrap(),
            EncodedSentence::from_ids(vec![filler, filler, marker, filler, filler], 1, 4, 10).unwrap(),
        ],
        c_rp: vec![0.5, 0.5],
        consistent: vec![Some(true); 2],
    }
}

fn toy_config(components: Components) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            vocab_size: 8,
            word_dim: 6,
            pos_dim: 2,
            window: 3,
            n_filters: 8,
            max_len: 10,
            n_relations: 2,
            dropout: 0.0,
            seed: 4,
        },
        type_dim: 3,
        n_types: 1,
        proto_len: 2,
        components,
    }
}

#[test]
fn separable_two_relation_set_converges() {
    let bags: Vec<PreparedBag> = (0..40).map(|k| separable_bag(k % 2, k)).collect();
    let catalog = TypeCatalog::untyped(10);
    let mut model = RelationModel::new(vec!["NA".into(), "r1".into()], &toy_config(Components::ENCODER_ONLY)).unwrap();
    let config = TrainConfig { epochs: 50, batch_size: 8, lr: 0.3, seed: 1, ..TrainConfig::default() };
    let report = model.train(&bags, &catalog, &config).unwrap();
    let last = *report.epoch_losses.last().unwrap();
    assert!(last < 0.05, "final loss {last}");
    for bag in &bags {
        assert_eq!(model.predict(bag, &catalog).unwrap().relation, bag.gold);
    }
}

fn permute_rows(a: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    let mut out = a.clone();
    for (r, &to) in perm.iter().enumerate() {
        out.row_mut(to).assign(&a.row(r));
    }
    out
}

fn permute_vec(a: &Array1<f64>, perm: &[usize]) -> Array1<f64> {
    let mut out = a.clone();
    for (r, &to) in perm.iter().enumerate() {
        out[to] = a[r];
    }
    out
}

#[test]
fn relabelling_relations_permutes_predictions() {
    let p = small_pipeline(4);
    let m = p.world.relations.len();
    let mut model = compact_model(&p, Components::NO_PROTO, 6, 0.0, 4);
    model.train(&p.train[..200], &p.world.types, &train_config(1, 4)).unwrap();
    let perm: Vec<usize> = (0..m).map(|r| (r * 3 + 1) % m).collect();
    let mut sorted = perm.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..m).collect::<Vec<_>>());

    let mut relabelled = model.clone();
    let mut names = vec![String::new(); m];
    for (r, &to) in perm.iter().enumerate() {
        names[to] = model.relations[r].clone();
    }
    relabelled.relations = names;
    let e = &mut relabelled.encoder;
    e.rel_query = permute_rows(&model.encoder.rel_query, &perm);
    e.re_w = permute_rows(&model.encoder.re_w, &perm);
    e.re_b = permute_vec(&model.encoder.re_b, &perm);
    relabelled.types.w = permute_rows(&model.types.w, &perm);
    relabelled.types.b = permute_vec(&model.types.b, &perm);
    let w = permute_rows(&model.fusion.w, &perm);
    let k = model.fusion.proto_len();
    let mut fw = w.clone();
    for block in [k, k + m] {
        for (r, &to) in perm.iter().enumerate() {
            fw.column_mut(block + to).assign(&w.column(block + r));
        }
    }
    relabelled.fusion.w = fw;
    relabelled.fusion.b = permute_vec(&model.fusion.b, &perm);

    for bag in p.test.iter().take(40) {
        let mut moved = bag.clone();
        moved.gold = perm[bag.gold];
        let a = model.predict(bag, &p.world.types).unwrap();
        let b = relabelled.predict(&moved, &p.world.types).unwrap();
        for r in 0..m {
            assert!((a.probs[r] - b.probs[perm[r]]).abs() < 1e-12);
        }
        let la = loss(&model.forward(bag, &p.world.types, None, false).unwrap().probs, bag.gold).unwrap().0;
        let lb = loss(&relabelled.forward(&moved, &p.world.types, None, false).unwrap().probs, moved.gold).unwrap().0;
        assert!((la - lb).abs() < 1e-12);
    }
}

#[test]
fn training_is_identical_across_thread_counts() {
    let p = small_pipeline(5);
    let base = compact_model(&p, Components::FULL, 8, 0.5, 5);
    let mut runs = Vec::new();
    for threads in [1, 2, 3] {
        let mut model = base.clone();
        let config = TrainConfig { threads, ..train_config(2, 5) };
        let report = model.train(&p.train, &p.world.types, &config).unwrap();
        runs.push((model.to_bytes(), report.epoch_losses));
    }
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn training_lowers_the_loss_on_the_synthetic_world() {
    let p = small_pipeline(6);
    let mut model = compact_model(&p, Components::FULL, 8, 0.5, 6);
    let before = model.mean_loss(&p.train, &p.world.types).unwrap();
    let report = model.train(&p.train, &p.world.types, &train_config(5, 6)).unwrap();
    let after = model.mean_loss(&p.train, &p.world.types).unwrap();
    assert!(after < before * 0.8, "{before} -> {after}");
    assert!(report.epoch_losses.first() > report.epoch_losses.last());
}
