//! Seeded synthetic distant-supervision world.
//!
//! Entities live in latent clusters. Every non-NA relation links a fixed
//! (head cluster, tail cluster) signature, so a relation's pairs share a
//! translation between cluster centroids; a few rare relations reuse the
//! signature of a frequent one. Relation frequencies follow a Zipf law, and
//! each pair's bag mixes sentences from its own template with noise drawn from
//! other relations.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::EntityCatalog;
use crate::encoder::{Bag, BagDataset, BagSentence, Vocabulary};
use crate::error::{Error, Result};
use crate::formats::{matrix_to_text, write_string};
use crate::mutrel::{RelationHierarchy, RelationSet, Triple, TripleStore, NA_ID, NA_NAME};
use crate::sampling::AliasTable;
use crate::typefeat::TypeCatalog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_clusters: usize,
    /// Including NA.
    pub n_relations: usize,
    pub zipf_exponent: f64,
    /// Pairs of the most frequent relation.
    pub head_count: usize,
    /// Rare relations that reuse a frequent relation's signature.
    pub twins: usize,
    pub test_fraction: f64,
    pub min_test: usize,
    /// NA pairs per positive pair.
    pub na_ratio: f64,
    pub noise_rate: f64,
    pub trigger_rate: f64,
    pub max_sentences: usize,
    /// Bag sizes follow `P(n) ∝ n^-sentence_exponent` on `1..=max_sentences`.
    pub sentence_exponent: f64,
    pub backbone_degree: usize,
    pub distractors: usize,
    pub hierarchy_fanout: usize,
    pub untyped_fraction: f64,
    pub vocab_size: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_entities: 2000,
            n_clusters: 10,
            n_relations: 20,
            zipf_exponent: 1.2,
            head_count: 400,
            twins: 4,
            test_fraction: 0.25,
            min_test: 2,
            na_ratio: 1.0,
            noise_rate: 0.3,
            trigger_rate: 0.6,
            max_sentences: 12,
            sentence_exponent: 1.8,
            backbone_degree: 8,
            distractors: 2000,
            hierarchy_fanout: 3,
            untyped_fraction: 0.4,
            vocab_size: 200,
            latent_dim: 16,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Infeasible(m.to_string()));
        if self.n_relations < 2 {
            return bad("need at least one relation besides NA");
        }
        if self.n_clusters < 2 || self.n_entities < 2 * self.n_clusters {
            return bad("need at least two clusters of at least two entities");
        }
        let non_na = self.n_relations - 1;
        if 2 * self.twins > non_na {
            return bad("more twin relations than relation pairs");
        }
        if non_na - self.twins > self.n_clusters * (self.n_clusters - 1) {
            return bad("more relation signatures than ordered cluster pairs");
        }
        let probs = [self.test_fraction, self.noise_rate, self.trigger_rate, self.untyped_fraction];
        if probs.iter().any(|p| !(0.0..1.0).contains(p) && *p != 1.0) || !(0.0..1.0).contains(&self.noise_rate) {
            return bad("probabilities must lie in [0, 1], noise_rate in [0, 1)");
        }
        if !(self.zipf_exponent > 0.0) || self.na_ratio < 0.0 || self.sentence_exponent < 0.0 {
            return bad("zipf_exponent must be positive, na_ratio and sentence_exponent non-negative");
        }
        if self.max_sentences == 0 || self.head_count == 0 || self.vocab_size == 0 || self.latent_dim == 0 || self.hierarchy_fanout == 0 {
            return bad("sizes must be positive");
        }
        Ok(())
    }

    fn cluster_size(&self, c: usize) -> usize {
        let base = self.n_entities / self.n_clusters;
        base + usize::from(c < self.n_entities % self.n_clusters)
    }
}

/// Strictly decreasing counts `≈ head / rank^s`, each at least `floor`.
pub fn zipf_counts(n: usize, head: usize, exponent: f64, floor: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = (1..=n).map(|r| (head as f64 / (r as f64).powf(exponent)).round() as usize).collect();
    for k in (0..n).rev() {
        let min = if k + 1 < n { counts[k + 1] + 1 } else { floor };
        counts[k] = counts[k].max(min);
    }
    counts
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub catalog: EntityCatalog,
    /// Raw unlabeled sentences.
    pub corpus: Vec<String>,
    pub relations: RelationSet,
    pub hierarchy: RelationHierarchy,
    pub train_triples: TripleStore,
    pub test_triples: TripleStore,
    pub train_bags: BagDataset,
    pub test_bags: BagDataset,
    pub types: TypeCatalog,
    pub vocab: Vocabulary,
    pub clusters: Vec<usize>,
    /// Per-entity latent vectors.
    pub latent: Array2<f64>,
    /// Per-relation translation between signature centroids; the NA row is zero.
    pub translations: Array2<f64>,
    /// `(head cluster, tail cluster)` per relation; `None` for NA.
    pub signatures: Vec<Option<(usize, usize)>>,
    /// `(frequent, rare)` relation ids sharing a signature.
    pub twin_pairs: Vec<(usize, usize)>,
}

pub fn entity_token(id: usize) -> String {
    format!("E{id:04}")
}

fn filler(k: usize) -> String {
    format!("w{k:03}")
}

fn trigger(relation: usize) -> String {
    format!("t{relation:02}")
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    bag_sizes: AliasTable,
}

impl Gen<'_> {
    fn fillers(&mut self, lo: usize, hi: usize) -> Vec<String> {
        let n = self.rng.random_range(lo..=hi);
        (0..n).map(|_| filler(self.rng.random_range(0..self.cfg.vocab_size))).collect()
    }

    /// Tokens plus entity positions for one sentence built from `template`'s pattern.
    fn sentence(&mut self, head: usize, tail: usize, template: usize) -> (Vec<String>, usize, usize) {
        let mut tokens = self.fillers(0, 3);
        let swap = self.rng.random_bool(0.2);
        let first = tokens.len();
        tokens.push(entity_token(if swap { tail } else { head }));
        let mut middle = self.fillers(1, 4);
        if template != NA_ID && self.rng.random_bool(self.cfg.trigger_rate) {
            let at = self.rng.random_range(0..=middle.len());
            middle.insert(at, trigger(template));
        }
        tokens.extend(middle);
        let second = tokens.len();
        tokens.push(entity_token(if swap { head } else { tail }));
        tokens.extend(self.fillers(0, 3));
        if swap {
            (tokens, second, first)
        } else {
            (tokens, first, second)
        }
    }

    fn raw_sentence(&mut self, head: usize, tail: usize, template: usize) -> String {
        let (tokens, _, _) = self.sentence(head, tail, template);
        format!("{} .", tokens.join(" "))
    }

    fn bag(&mut self, head: usize, tail: usize, relation: usize, names: &[String]) -> Bag {
        let n = self.bag_sizes.sample(&mut self.rng) + 1;
        let m = names.len();
        let sentences = (0..n)
            .map(|_| {
                let template = if self.rng.random_bool(self.cfg.noise_rate) {
                    let other = self.rng.random_range(0..m - 1);
                    if other >= relation {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    relation
                };
                let (tokens, head_idx, tail_idx) = self.sentence(head, tail, template);
                BagSentence {
                    tokens,
                    head_idx,
                    tail_idx,
                    template_relation: Some(names[template].clone()),
                }
            })
            .collect();
        Bag {
            pair: (head, tail),
            relation: names[relation].clone(),
            sentences,
        }
    }
}

/// Builds the whole world from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let cfg = config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let non_na = cfg.n_relations - 1;

    // clusters and latent geometry
    let mut clusters = Vec::with_capacity(cfg.n_entities);
    for c in 0..cfg.n_clusters {
        clusters.extend(std::iter::repeat_n(c, cfg.cluster_size(c)));
    }
    let members: Vec<Vec<usize>> = (0..cfg.n_clusters)
        .map(|c| (0..cfg.n_entities).filter(|&e| clusters[e] == c).collect())
        .collect();
    let centroids = Array2::from_shape_simple_fn((cfg.n_clusters, cfg.latent_dim), || rng.random_range(-1.0..=1.0));
    let mut latent = Array2::zeros((cfg.n_entities, cfg.latent_dim));
    for e in 0..cfg.n_entities {
        for d in 0..cfg.latent_dim {
            latent[[e, d]] = centroids[[clusters[e], d]] + rng.random_range(-0.25..=0.25);
        }
    }

    // relation signatures; the last `twins` relations copy the first ones
    let mut cluster_pairs: Vec<(usize, usize)> = (0..cfg.n_clusters)
        .flat_map(|h| (0..cfg.n_clusters).filter(move |&t| t != h).map(move |t| (h, t)))
        .collect();
    cluster_pairs.shuffle(&mut rng);
    let mut signatures: Vec<Option<(usize, usize)>> = vec![None];
    let distinct = non_na - cfg.twins;
    signatures.extend(cluster_pairs[..distinct].iter().copied().map(Some));
    let copies: Vec<Option<(usize, usize)>> = signatures[1..=cfg.twins].to_vec();
    signatures.extend(copies);
    let twin_pairs: Vec<(usize, usize)> = (0..cfg.twins).map(|i| (1 + i, 1 + distinct + i)).collect();
    let fan = cfg.hierarchy_fanout;
    let mut names = vec![NA_NAME.to_string()];
    for (r, sig) in signatures.iter().enumerate().skip(1) {
        let (h, t) = sig.expect("non-NA relations have signatures");
        names.push(format!("/dom{}/sub{}/rel{r:02}", h % fan, t % fan));
    }
    let relations = RelationSet::from_names(names.iter().skip(1).cloned());
    let hierarchy = RelationHierarchy::from_relation_names(&relations)?;
    let mut translations = Array2::zeros((cfg.n_relations, cfg.latent_dim));
    for (r, sig) in signatures.iter().enumerate() {
        if let Some((h, t)) = sig {
            for d in 0..cfg.latent_dim {
                translations[[r, d]] = centroids[[*t, d]] - centroids[[*h, d]];
            }
        }
    }

    // pairs per relation
    let counts = zipf_counts(non_na, cfg.head_count, cfg.zipf_exponent, cfg.min_test + 1);
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut draw_pairs = |rng: &mut ChaCha8Rng, h: usize, t: usize, n: usize| -> Result<Vec<(usize, usize)>> {
        let capacity = members[h].len() * members[t].len() - if h == t { members[h].len() } else { 0 };
        let taken = used.iter().filter(|&&(a, b)| clusters[a] == h && clusters[b] == t).count();
        if n + taken > capacity {
            return Err(Error::Infeasible(format!("{n} more pairs requested between clusters {h} and {t}")));
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let a = members[h][rng.random_range(0..members[h].len())];
            let b = members[t][rng.random_range(0..members[t].len())];
            if a != b && used.insert((a, b)) {
                out.push((a, b));
            }
        }
        Ok(out)
    };
    let split = |n: usize| -> usize { ((n as f64 * cfg.test_fraction).round() as usize).max(cfg.min_test).min(n) };
    let mut train_pairs: Vec<(usize, usize, usize)> = Vec::new();
    let mut test_pairs: Vec<(usize, usize, usize)> = Vec::new();
    for r in 1..cfg.n_relations {
        let (h, t) = signatures[r].expect("signature");
        let pairs = draw_pairs(&mut rng, h, t, counts[r - 1])?;
        let n_test = split(pairs.len());
        test_pairs.extend(pairs[..n_test].iter().map(|&(a, b)| (a, r, b)));
        train_pairs.extend(pairs[n_test..].iter().map(|&(a, b)| (a, r, b)));
    }
    let signature_set: HashSet<(usize, usize)> = signatures.iter().flatten().copied().collect();
    let na_cells: Vec<(usize, usize)> = (0..cfg.n_clusters)
        .flat_map(|h| (0..cfg.n_clusters).map(move |t| (h, t)))
        .filter(|p| !signature_set.contains(p))
        .collect();
    let n_positive: usize = counts.iter().sum();
    let n_na = (n_positive as f64 * cfg.na_ratio).round() as usize;
    let mut na_pairs = Vec::with_capacity(n_na);
    for _ in 0..n_na {
        let (h, t) = na_cells[rng.random_range(0..na_cells.len())];
        na_pairs.extend(draw_pairs(&mut rng, h, t, 1)?);
    }
    let n_na_test = if n_na == 0 { 0 } else { split(n_na) };
    test_pairs.extend(na_pairs[..n_na_test].iter().map(|&(a, b)| (a, NA_ID, b)));
    train_pairs.extend(na_pairs[n_na_test..].iter().map(|&(a, b)| (a, NA_ID, b)));

    let triples = |pairs: &[(usize, usize, usize)]| {
        TripleStore::new(
            relations.clone(),
            pairs
                .iter()
                .filter(|p| p.1 != NA_ID)
                .map(|&(head, relation, tail)| Triple { head, relation, tail }),
        )
    };
    let train_triples = triples(&train_pairs)?;
    let test_triples = triples(&test_pairs)?;

    // text
    let size_weights: Vec<f64> = (1..=cfg.max_sentences).map(|n| (n as f64).powf(-cfg.sentence_exponent)).collect();
    let mut g = Gen {
        cfg,
        rng,
        bag_sizes: AliasTable::new(&size_weights)?,
    };
    let train_bags = BagDataset {
        bags: train_pairs.iter().map(|&(h, r, t)| g.bag(h, t, r, &names)).collect(),
    };
    let test_bags = BagDataset {
        bags: test_pairs.iter().map(|&(h, r, t)| g.bag(h, t, r, &names)).collect(),
    };

    let mut corpus = Vec::new();
    for list in &members {
        for &e in list {
            for _ in 0..cfg.backbone_degree.min(list.len() - 1) {
                let other = loop {
                    let o = list[g.rng.random_range(0..list.len())];
                    if o != e {
                        break o;
                    }
                };
                for _ in 0..g.rng.random_range(2..=6) {
                    corpus.push(g.raw_sentence(e, other, NA_ID));
                }
            }
        }
    }
    for &(h, r, t) in train_pairs.iter().chain(&test_pairs) {
        let repeats = if r == NA_ID { g.rng.random_range(1..=3) } else { g.rng.random_range(2..=6) };
        for _ in 0..repeats {
            corpus.push(g.raw_sentence(h, t, r));
        }
    }
    for _ in 0..cfg.distractors {
        let a = g.rng.random_range(0..cfg.n_entities);
        let b = g.rng.random_range(0..cfg.n_entities);
        if a != b {
            corpus.push(g.raw_sentence(a, b, NA_ID));
        }
    }
    corpus.shuffle(&mut g.rng);

    // types: one coarse type per typed entity, two clusters per type
    let n_types = cfg.n_clusters.div_ceil(2);
    let type_names: Vec<String> = (0..n_types).map(|k| format!("type{k}")).collect();
    let entity_types = (0..cfg.n_entities)
        .map(|e| if g.rng.random_bool(cfg.untyped_fraction) { Vec::new() } else { vec![clusters[e] / 2] })
        .collect();
    let types = TypeCatalog::new(type_names, entity_types)?;

    let mut vocab = Vocabulary::new();
    for k in 0..cfg.vocab_size {
        vocab.insert(&filler(k));
    }
    for r in 1..cfg.n_relations {
        vocab.insert(&trigger(r));
    }
    let catalog = EntityCatalog::from_entries((0..cfg.n_entities).map(|e| (entity_token(e), Vec::<String>::new())))?;

    Ok(SynthWorld {
        config: cfg.clone(),
        catalog,
        corpus,
        relations,
        hierarchy,
        train_triples,
        test_triples,
        train_bags,
        test_bags,
        types,
        vocab,
        clusters,
        latent,
        translations,
        signatures,
        twin_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldStats {
    /// `(name, train triples, test triples)` per relation.
    pub relation_counts: Vec<(String, usize, usize)>,
    pub total_triples: usize,
    pub n_bags: usize,
    pub n_bag_sentences: usize,
    /// Bag sentences whose template relation differs from the bag label.
    pub noisy_sentences: usize,
    /// Sentences per bag → number of bags.
    pub bag_size_histogram: BTreeMap<usize, usize>,
}

pub fn stats_from_parts(relations: &RelationSet, train: &TripleStore, test: &TripleStore, bags: &[&BagDataset]) -> WorldStats {
    let (tr, te) = (train.counts_per_relation(), test.counts_per_relation());
    let mut stats = WorldStats {
        relation_counts: relations
            .names()
            .iter()
            .enumerate()
            .map(|(r, n)| (n.clone(), tr.get(r).copied().unwrap_or(0), te.get(r).copied().unwrap_or(0)))
            .collect(),
        total_triples: train.triples().len() + test.triples().len(),
        ..WorldStats::default()
    };
    for bag in bags.iter().flat_map(|d| &d.bags) {
        stats.n_bags += 1;
        stats.n_bag_sentences += bag.sentences.len();
        *stats.bag_size_histogram.entry(bag.sentences.len()).or_default() += 1;
        stats.noisy_sentences += bag
            .sentences
            .iter()
            .filter(|s| s.template_relation.as_ref().is_some_and(|t| *t != bag.relation))
            .count();
    }
    stats
}

pub fn world_stats(world: &SynthWorld) -> WorldStats {
    stats_from_parts(&world.relations, &world.train_triples, &world.test_triples, &[&world.train_bags, &world.test_bags])
}

impl WorldStats {
    pub fn noise_fraction(&self) -> f64 {
        if self.n_bag_sentences == 0 {
            0.0
        } else {
            self.noisy_sentences as f64 / self.n_bag_sentences as f64
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "total_triples={}", self.total_triples);
        let _ = writeln!(out, "bags={}", self.n_bags);
        let _ = writeln!(out, "bag_sentences={}", self.n_bag_sentences);
        let _ = writeln!(out, "noisy_sentences={}", self.noisy_sentences);
        for (name, tr, te) in &self.relation_counts {
            let _ = writeln!(out, "relation.{name}={tr},{te}");
        }
        for (size, n) in &self.bag_size_histogram {
            let _ = writeln!(out, "bag_size.{size}={n}");
        }
        out
    }
}

/// File names written by [`write_world`], relative to the output directory.
pub const WORLD_FILES: [&str; 14] = [
    "entities.tsv",
    "corpus.txt",
    "relations.tsv",
    "hierarchy.tsv",
    "train_triples.tsv",
    "test_triples.tsv",
    "train_bags.jsonl",
    "test_bags.jsonl",
    "types.tsv",
    "vocab.tsv",
    "clusters.tsv",
    "latent.txt",
    "translations.txt",
    "stats.txt",
];

pub const WORLD_MANIFEST: &str = "world-manifest.txt";

/// Writes every artifact plus `world-manifest.txt` (config echo and SHA-256 per file).
pub fn write_world(world: &SynthWorld, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut corpus = world.corpus.join("\n");
    corpus.push('\n');
    let mut clusters = String::new();
    for (e, c) in world.clusters.iter().enumerate() {
        let _ = writeln!(clusters, "{e}\t{c}");
    }
    let contents: [String; 14] = [
        world.catalog.to_tsv(),
        corpus,
        world.relations.to_tsv(),
        world.hierarchy.to_tsv(),
        world.train_triples.to_tsv(),
        world.test_triples.to_tsv(),
        world.train_bags.to_jsonl(),
        world.test_bags.to_jsonl(),
        world.types.to_tsv(),
        world.vocab.to_tsv(),
        clusters,
        matrix_to_text(&world.latent),
        matrix_to_text(&world.translations),
        world_stats(world).to_text(),
    ];
    let mut manifest = String::from("format=protorel-world\nversion=1\n");
    let config = serde_json::to_value(&world.config).expect("config serializes");
    for (k, v) in config.as_object().expect("config is an object") {
        let _ = writeln!(manifest, "config.{k}={v}");
    }
    for (a, b) in &world.twin_pairs {
        let _ = writeln!(manifest, "twin={},{}", world.relations.names()[*a], world.relations.names()[*b]);
    }
    let mut written = Vec::new();
    for (name, text) in WORLD_FILES.iter().zip(&contents) {
        let path = dir.join(name);
        write_string(&path, text)?;
        let _ = writeln!(manifest, "file.{name}={}", hex::encode(Sha256::digest(text.as_bytes())));
        written.push(path);
    }
    let path = dir.join(WORLD_MANIFEST);
    write_string(&path, &manifest)?;
    written.push(path);
    Ok(written)
}
