#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use protorel::classifier::{prepare_bags, Components, ModelConfig, PreparedBag, RelationModel, TrainConfig};
use protorel::corpus::{build_cooccurrence_graph, CooccurrenceGraph};
use protorel::embed::{train_entity_embeddings, EmbeddingConfig, EntityEmbeddings};
use protorel::encoder::{EncoderConfig, EncoderParams};
use protorel::eval::PredictionRecord;
use protorel::mutrel::{compute_leaf_prototypes, lift_prototypes, PrototypeSet};
use protorel::params::GradView;
use protorel::synth::{generate, SynthConfig, SynthWorld};
use protorel::typefeat::TypeParams;

/// Anything exposing its parameters as named flat blocks.
pub trait Blocks: Clone {
    fn blocks(&mut self) -> Vec<(&'static str, &mut [f64])>;
}

impl Blocks for EncoderParams {
    fn blocks(&mut self) -> Vec<(&'static str, &mut [f64])> {
        self.blocks_mut()
    }
}

impl Blocks for TypeParams {
    fn blocks(&mut self) -> Vec<(&'static str, &mut [f64])> {
        self.blocks_mut()
    }
}

impl Blocks for RelationModel {
    fn blocks(&mut self) -> Vec<(&'static str, &mut [f64])> {
        self.blocks_mut()
    }
}

/// Embedding tables under finite-difference test.
#[derive(Clone)]
pub struct Tables(pub Vec<Array2<f64>>);

impl Blocks for Tables {
    fn blocks(&mut self) -> Vec<(&'static str, &mut [f64])> {
        const NAMES: [&str; 2] = ["vertex", "context"];
        self.0
            .iter_mut()
            .zip(NAMES)
            .map(|(t, n)| (n, t.as_slice_mut().expect("standard layout")))
            .collect()
    }
}

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Below this absolute gap both values are numerically zero.
pub const FD_FLOOR: f64 = 1e-8;

#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub checked: usize,
    pub worst: f64,
    pub failures: usize,
}

impl FdReport {
    pub fn merge(&mut self, o: FdReport) {
        self.checked += o.checked;
        self.failures += o.failures;
        self.worst = self.worst.max(o.worst);
    }

    pub fn ok(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

pub fn relative_error(fd: f64, an: f64) -> f64 {
    let gap = (fd - an).abs();
    if gap < FD_FLOOR {
        0.0
    } else {
        gap / fd.abs().max(an.abs())
    }
}

/// Central differences against `analytic`. With `probes = Some((n, seed))`,
/// checks `n` coordinates, half of them drawn from those with a nonzero
/// analytic gradient; otherwise checks every coordinate.
pub fn fd_check<P: Blocks>(
    params: &P,
    analytic: &[(&'static str, GradView<'_>)],
    loss: impl Fn(&P) -> f64,
    probes: Option<(usize, u64)>,
) -> FdReport {
    let mut probe = params.clone();
    let sizes: Vec<usize> = probe.blocks().iter().map(|b| b.1.len()).collect();
    assert_eq!(sizes.len(), analytic.len(), "block count");
    let all: Vec<(usize, usize)> = sizes.iter().enumerate().flat_map(|(b, &n)| (0..n).map(move |i| (b, i))).collect();
    let coords = match probes {
        None => all,
        Some((n, seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let live: Vec<(usize, usize)> = all.iter().copied().filter(|&(b, i)| analytic[b].1.get(i) != 0.0).collect();
            (0..n)
                .map(|k| {
                    if k % 2 == 0 && !live.is_empty() {
                        live[rng.random_range(0..live.len())]
                    } else {
                        all[rng.random_range(0..all.len())]
                    }
                })
                .collect()
        }
    };
    let mut report = FdReport::default();
    for (b, i) in coords {
        let base = probe.blocks()[b].1[i];
        probe.blocks()[b].1[i] = base + FD_STEP;
        let up = loss(&probe);
        probe.blocks()[b].1[i] = base - FD_STEP;
        let down = loss(&probe);
        probe.blocks()[b].1[i] = base;
        let fd = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(fd, analytic[b].1.get(i));
        report.checked += 1;
        report.worst = report.worst.max(err);
        if err >= FD_TOLERANCE {
            report.failures += 1;
        }
    }
    report
}

/// Finite-difference check of the whole classifier (dropout off) on `bags`.
pub fn fd_model(model: &RelationModel, bags: &[PreparedBag], world: &SynthWorld, probes: usize, seed: u64) -> FdReport {
    let grads = model.mean_gradient(bags, &world.types).unwrap();
    let blocks = grads.blocks();
    fd_check(model, &blocks, |m| m.mean_loss(bags, &world.types).unwrap(), Some((probes, seed)))
}

/// Compact generator settings for fast tests.
pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_entities: 400,
        n_relations: 8,
        twins: 1,
        head_count: 80,
        distractors: 300,
        n_clusters: 6,
        seed,
        ..SynthConfig::default()
    }
}

/// A generated world with embeddings, prototypes and prepared bags.
pub struct Pipeline {
    pub world: SynthWorld,
    pub graph: CooccurrenceGraph,
    pub emb: EntityEmbeddings,
    pub protos: PrototypeSet,
    pub train: Vec<PreparedBag>,
    pub test: Vec<PreparedBag>,
}

pub fn build_pipeline(config: &SynthConfig, embed: &EmbeddingConfig, max_len: usize) -> Pipeline {
    let world = generate(config).unwrap();
    let sentences: Vec<_> = world.corpus.iter().map(|s| world.catalog.match_sentence(s)).collect();
    let graph = build_cooccurrence_graph(sentences.iter(), world.catalog.len(), 2).unwrap();
    let emb = train_entity_embeddings(&graph, embed).unwrap();
    let leaf = compute_leaf_prototypes(&emb, &world.train_triples).unwrap();
    let protos = lift_prototypes(&leaf, &world.hierarchy).unwrap();
    let train = prepare_bags(&world.train_bags, &world.vocab, &world.relations, &emb, &protos, max_len).unwrap();
    let test = prepare_bags(&world.test_bags, &world.vocab, &world.relations, &emb, &protos, max_len).unwrap();
    Pipeline { world, graph, emb, protos, train, test }
}

/// Reduced encoder sizes that keep training fast on one core.
pub fn compact_model(p: &Pipeline, components: Components, n_filters: usize, dropout: f64, seed: u64) -> RelationModel {
    let encoder = EncoderConfig {
        vocab_size: p.world.vocab.len(),
        n_filters,
        n_relations: p.world.relations.len(),
        dropout,
        seed,
        ..EncoderConfig::default()
    };
    let config = ModelConfig {
        encoder,
        type_dim: 20,
        n_types: p.world.types.n_types(),
        proto_len: p.protos.feature_len(),
        components,
    };
    RelationModel::new(p.world.relations.names().to_vec(), &config).unwrap()
}

pub fn train_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.3,
        batch_size: 16,
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

pub fn predictions(model: &RelationModel, bags: &[PreparedBag], world: &SynthWorld) -> Vec<PredictionRecord> {
    protorel::cli::predict_records(model, bags, &world.types).unwrap()
}
