//! Fusion of prototype, type and encoder evidence, supervised training, and prediction.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embed::EntityEmbeddings;
use crate::encoder::{BagDataset, EncodedSentence, EncoderConfig, EncoderGrads, EncoderParams, Vocabulary};
use crate::error::{Error, Result};
use crate::formats::{matrix_from_binary, matrix_to_binary, read_bytes, write_bytes};
use crate::math::{all_finite, argmax, dot, softmax, uniform_matrix, xavier_bound};
use crate::mutrel::{mutual_relation, prototype_features, PrototypeSet, RelationSet};
use crate::params::{global_norm, sgd_update, GradView};
use crate::typefeat::{TypeCatalog, TypeGrads, TypeParams};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-30;

/// Which evidence paths feed the fusion layer; a disabled path contributes zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    pub prototypes: bool,
    pub types: bool,
    pub encoder: bool,
}

impl Components {
    pub const FULL: Components = Components { prototypes: true, types: true, encoder: true };
    pub const NO_PROTO: Components = Components { prototypes: false, types: true, encoder: true };
    pub const ENCODER_ONLY: Components = Components { prototypes: false, types: false, encoder: true };
    pub const PROTO_ONLY: Components = Components { prototypes: true, types: false, encoder: false };
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match *self {
            Components::FULL => "full",
            Components::NO_PROTO => "no-proto",
            Components::ENCODER_ONLY => "encoder-only",
            Components::PROTO_ONLY => "proto-only",
            c => {
                let parts: Vec<&str> = [(c.prototypes, "proto"), (c.types, "type"), (c.encoder, "encoder")]
                    .into_iter()
                    .filter_map(|(on, n)| on.then_some(n))
                    .collect();
                return f.write_str(&parts.join("+"));
            }
        };
        f.write_str(name)
    }
}

impl FromStr for Components {
    type Err = Error;

    /// Accepts the named presets or a `+`-joined subset of `proto`, `type`, `encoder`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => return Ok(Components::FULL),
            "no-proto" => return Ok(Components::NO_PROTO),
            "encoder-only" => return Ok(Components::ENCODER_ONLY),
            "proto-only" => return Ok(Components::PROTO_ONLY),
            _ => {}
        }
        let mut c = Components { prototypes: false, types: false, encoder: false };
        for part in s.split('+') {
            match part {
                "proto" => c.prototypes = true,
                "type" => c.types = true,
                "encoder" => c.encoder = true,
                _ => return Err(Error::InvalidArgument(format!("unknown component set {s:?}"))),
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// `(alpha, beta, gamma)`.
    pub scales: [f64; 3],
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl FusionParams {
    pub fn new<R: Rng>(proto_len: usize, n_relations: usize, rng: &mut R) -> Self {
        let cols = proto_len + 2 * n_relations;
        FusionParams {
            scales: [1.0; 3],
            w: uniform_matrix(n_relations, cols, xavier_bound(n_relations, cols), rng),
            b: Array1::zeros(n_relations),
        }
    }

    pub fn proto_len(&self) -> usize {
        self.w.ncols() - 2 * self.w.nrows()
    }
}

fn fusion_input(c_rp: &[f64], c_type: &[f64], c_re: &[f64], scales: &[f64; 3]) -> Vec<f64> {
    let mut u = Vec::with_capacity(c_rp.len() + c_type.len() + c_re.len());
    u.extend(c_rp.iter().map(|v| scales[0] * v));
    u.extend(c_type.iter().map(|v| scales[1] * v));
    u.extend(c_re.iter().map(|v| scales[2] * v));
    u
}

/// `softmax(W [alpha C_RP ‖ beta C_Type ‖ gamma C_RE] + b)`.
pub fn fuse(c_rp: &[f64], c_type: &[f64], c_re: &[f64], params: &FusionParams) -> Result<Vec<f64>> {
    let m = params.w.nrows();
    if c_type.len() != m || c_re.len() != m || c_rp.len() != params.proto_len() {
        return Err(Error::DimensionMismatch(format!(
            "fusion expects ({}, {m}, {m}) inputs, got ({}, {}, {})",
            params.proto_len(),
            c_rp.len(),
            c_type.len(),
            c_re.len()
        )));
    }
    let u = fusion_input(c_rp, c_type, c_re, &params.scales);
    let logits: Vec<f64> = params
        .w
        .rows()
        .into_iter()
        .zip(&params.b)
        .map(|(w, b)| dot(w.as_slice().expect("standard layout"), &u) + b)
        .collect();
    Ok(softmax(&logits))
}

/// Cross-entropy `-ln p[gold]`, with a flag set when the probability was clamped.
pub fn loss(probs: &[f64], gold: usize) -> Result<(f64, bool)> {
    let p = *probs
        .get(gold)
        .ok_or_else(|| Error::InvalidArgument(format!("gold relation {gold} out of range")))?;
    let clamped = p < PROB_FLOOR;
    Ok((-p.max(PROB_FLOOR).ln(), clamped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub scales: [f64; 3],
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// A bag resolved against the vocabulary, relation ids and frozen prototype features.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBag {
    pub head: usize,
    pub tail: usize,
    pub gold: usize,
    pub sentences: Vec<EncodedSentence>,
    pub c_rp: Vec<f64>,
    /// Per-sentence flag: the sentence was generated from the bag's own relation, when known.
    pub consistent: Vec<Option<bool>>,
}

/// Resolves every bag; unknown relation names are a format error.
pub fn prepare_bags(
    dataset: &BagDataset,
    vocab: &Vocabulary,
    relations: &RelationSet,
    emb: &EntityEmbeddings,
    protos: &PrototypeSet,
    max_len: usize,
) -> Result<Vec<PreparedBag>> {
    dataset
        .bags
        .iter()
        .enumerate()
        .map(|(k, bag)| {
            let gold = relations
                .id(&bag.relation)
                .ok_or_else(|| Error::format("bags", k + 1, format!("unknown relation {:?}", bag.relation)))?;
            let (head, tail) = bag.pair;
            let c_rp = prototype_features(&mutual_relation(emb, head, tail)?, protos)?;
            let sentences = bag
                .sentences
                .iter()
                .map(|s| EncodedSentence::new(s, vocab, max_len))
                .collect::<Result<Vec<_>>>()?;
            let consistent = bag
                .sentences
                .iter()
                .map(|s| s.template_relation.as_ref().map(|t| *t == bag.relation))
                .collect();
            Ok(PreparedBag { head, tail, gold, sentences, c_rp, consistent })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub type_dim: usize,
    pub n_types: usize,
    pub proto_len: usize,
    pub components: Components,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel {
    pub relations: Vec<String>,
    pub components: Components,
    pub encoder: EncoderParams,
    pub types: TypeParams,
    pub fusion: FusionParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: EncoderGrads,
    pub types: TypeGrads,
    pub fusion: FusionGrads,
}

impl ModelGrads {
    pub fn zeros(model: &RelationModel) -> Self {
        ModelGrads {
            encoder: EncoderGrads::zeros(&model.encoder),
            types: TypeGrads::zeros(&model.types),
            fusion: FusionGrads {
                scales: [0.0; 3],
                w: Array2::zeros(model.fusion.w.raw_dim()),
                b: Array1::zeros(model.fusion.b.len()),
            },
        }
    }

    pub fn merge(&mut self, o: &ModelGrads) {
        self.encoder.merge(&o.encoder);
        self.types.merge(&o.types);
        for (a, b) in self.fusion.scales.iter_mut().zip(o.fusion.scales) {
            *a += b;
        }
        self.fusion.w += &o.fusion.w;
        self.fusion.b += &o.fusion.b;
    }

    pub fn scale(&mut self, s: f64) {
        self.encoder.scale(s);
        self.types.scale(s);
        self.fusion.scales.iter_mut().for_each(|v| *v *= s);
        self.fusion.w *= s;
        self.fusion.b *= s;
    }

    /// Aligned with [`RelationModel::blocks_mut`].
    pub fn blocks(&self) -> Vec<(&'static str, GradView<'_>)> {
        let mut out = self.encoder.blocks();
        out.extend(self.types.blocks());
        out.push(("fusion.scales", GradView::Dense(&self.fusion.scales)));
        out.push(("fusion.w", GradView::Dense(self.fusion.w.as_slice().expect("standard layout"))));
        out.push(("fusion.b", GradView::Dense(self.fusion.b.as_slice().expect("standard layout"))));
        out
    }
}

/// Fused forward state for one bag.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelForward {
    pub probs: Vec<f64>,
    c_rp: Vec<f64>,
    c_type: Vec<f64>,
    c_re: Vec<f64>,
    type_fwd: Option<crate::typefeat::TypeForward>,
    enc_fwd: Option<crate::encoder::BagForward>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub relation: usize,
    pub confidence: f64,
    pub probs: Vec<f64>,
    /// Sentence attention weights under each relation's query (empty without the encoder path).
    pub alphas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub clip_norm: f64,
    /// Worker threads for per-bag gradients; 1 runs inline.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.3,
            batch_size: 160,
            epochs: 10,
            seed: 1,
            shuffle: true,
            clip_norm: 5.0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 || !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("lr, batch_size and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Bags whose gold probability fell below the clamp floor.
    pub clamped: usize,
    /// Final `(|alpha|, |beta|, |gamma|)`.
    pub scale_ratio: [f64; 3],
}

/// Bags per gradient shard; fixes the floating-point reduction order regardless of thread count.
const SHARD: usize = 8;

impl RelationModel {
    pub fn new(relations: Vec<String>, config: &ModelConfig) -> Result<Self> {
        let m = relations.len();
        if m != config.encoder.n_relations {
            return Err(Error::DimensionMismatch(format!(
                "{m} relation names for an encoder over {} relations",
                config.encoder.n_relations
            )));
        }
        if config.type_dim == 0 {
            return Err(Error::InvalidArgument("type_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.encoder.seed);
        let encoder = EncoderParams::new(&config.encoder, &mut rng)?;
        let types = TypeParams::new(config.n_types, config.type_dim, m, &mut rng);
        let fusion = FusionParams::new(config.proto_len, m, &mut rng);
        Ok(RelationModel {
            relations,
            components: config.components,
            encoder,
            types,
            fusion,
        })
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder.config.clone(),
            type_dim: self.types.type_dim(),
            n_types: self.types.table.nrows(),
            proto_len: self.fusion.proto_len(),
            components: self.components,
        }
    }

    /// Training-mode forward: attention is queried by the gold relation.
    pub fn forward(
        &self,
        bag: &PreparedBag,
        catalog: &TypeCatalog,
        dropout: Option<&mut ChaCha8Rng>,
        keep_cache: bool,
    ) -> Result<ModelForward> {
        let m = self.n_relations();
        let c = self.components;
        let c_rp = if c.prototypes { bag.c_rp.clone() } else { vec![0.0; bag.c_rp.len()] };
        let type_fwd = c.types.then(|| self.types.forward(catalog, bag.head, bag.tail)).transpose()?;
        let enc_fwd = c.encoder.then(|| self.encoder.forward(&bag.sentences, bag.gold, dropout, keep_cache)).transpose()?;
        let c_type = type_fwd.as_ref().map_or_else(|| vec![0.0; m], |f| f.probs.clone());
        let c_re = enc_fwd.as_ref().map_or_else(|| vec![0.0; m], |f| f.probs.clone());
        let probs = fuse(&c_rp, &c_type, &c_re, &self.fusion)?;
        Ok(ModelForward { probs, c_rp, c_type, c_re, type_fwd, enc_fwd })
    }

    /// Gradient of `-ln p[gold]` accumulated into `grads`.
    pub fn backward(&self, fwd: &ModelForward, gold: usize, catalog: &TypeCatalog, grads: &mut ModelGrads) -> Result<()> {
        let mut d_logits = fwd.probs.clone();
        d_logits[gold] -= 1.0;
        let u = fusion_input(&fwd.c_rp, &fwd.c_type, &fwd.c_re, &self.fusion.scales);
        let mut du = vec![0.0; u.len()];
        for (r, &dz) in d_logits.iter().enumerate() {
            grads.fusion.b[r] += dz;
            let w = self.fusion.w.row(r);
            let mut g = grads.fusion.w.row_mut(r);
            for i in 0..u.len() {
                g[i] += dz * u[i];
                du[i] += dz * w[i];
            }
        }
        let (k, m) = (fwd.c_rp.len(), self.n_relations());
        let (du_rp, rest) = du.split_at(k);
        let (du_type, du_re) = rest.split_at(m);
        let [_, beta, gamma] = self.fusion.scales;
        grads.fusion.scales[0] += dot(du_rp, &fwd.c_rp);
        grads.fusion.scales[1] += dot(du_type, &fwd.c_type);
        grads.fusion.scales[2] += dot(du_re, &fwd.c_re);
        if let Some(tf) = &fwd.type_fwd {
            let d: Vec<f64> = du_type.iter().map(|g| beta * g).collect();
            self.types.backward(catalog, tf, &d, &mut grads.types);
        }
        if let Some(ef) = &fwd.enc_fwd {
            let d: Vec<f64> = du_re.iter().map(|g| gamma * g).collect();
            self.encoder.backward(ef, &d, &mut grads.encoder)?;
        }
        Ok(())
    }

    /// Mean loss over `bags` with dropout disabled.
    pub fn mean_loss(&self, bags: &[PreparedBag], catalog: &TypeCatalog) -> Result<f64> {
        let mut total = 0.0;
        for bag in bags {
            total += loss(&self.forward(bag, catalog, None, false)?.probs, bag.gold)?.0;
        }
        Ok(total / bags.len().max(1) as f64)
    }

    /// Mean gradient over `bags` with dropout disabled.
    pub fn mean_gradient(&self, bags: &[PreparedBag], catalog: &TypeCatalog) -> Result<ModelGrads> {
        let mut grads = ModelGrads::zeros(self);
        for bag in bags {
            let fwd = self.forward(bag, catalog, None, true)?;
            self.backward(&fwd, bag.gold, catalog, &mut grads)?;
        }
        grads.scale(1.0 / bags.len().max(1) as f64);
        Ok(grads)
    }

    pub fn predict(&self, bag: &PreparedBag, catalog: &TypeCatalog) -> Result<Prediction> {
        if bag.sentences.is_empty() {
            return Err(Error::EmptyBag);
        }
        let m = self.n_relations();
        let c = self.components;
        let c_rp = if c.prototypes { bag.c_rp.clone() } else { vec![0.0; bag.c_rp.len()] };
        let c_type = if c.types {
            self.types.forward(catalog, bag.head, bag.tail)?.probs
        } else {
            vec![0.0; m]
        };
        let (c_re, alphas) = if c.encoder {
            let inf = self.encoder.infer(&bag.sentences)?;
            (inf.probs, inf.alphas)
        } else {
            (vec![0.0; m], Vec::new())
        };
        let probs = fuse(&c_rp, &c_type, &c_re, &self.fusion)?;
        let relation = argmax(&probs);
        Ok(Prediction { relation, confidence: probs[relation], probs, alphas })
    }

    /// Minibatch SGD on the batch-mean gradient with global-norm clipping.
    pub fn train(&mut self, bags: &[PreparedBag], catalog: &TypeCatalog, config: &TrainConfig) -> Result<TrainReport> {
        config.validate()?;
        let mut report = TrainReport::default();
        if config.epochs == 0 {
            report.scale_ratio = self.fusion.scales.map(f64::abs);
            return Ok(report);
        }
        if bags.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        let mut order: Vec<usize> = (0..bags.len()).collect();
        let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);
        for epoch in 0..config.epochs {
            if config.shuffle {
                order.shuffle(&mut shuffler);
            }
            let mut epoch_loss = 0.0;
            for batch in order.chunks(config.batch_size) {
                let shard = |ids: &[usize]| -> Result<(ModelGrads, f64, usize)> {
                    let mut grads = ModelGrads::zeros(self);
                    let (mut total, mut clamped) = (0.0, 0);
                    for &i in ids {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                        rng.set_stream(((epoch as u64) << 32) | i as u64);
                        let fwd = self.forward(&bags[i], catalog, Some(&mut rng), true)?;
                        let (l, c) = loss(&fwd.probs, bags[i].gold)?;
                        if !l.is_finite() {
                            return Err(Error::Numeric(format!("non-finite loss on bag {i} in epoch {epoch}")));
                        }
                        total += l;
                        clamped += c as usize;
                        self.backward(&fwd, bags[i].gold, catalog, &mut grads)?;
                    }
                    Ok((grads, total, clamped))
                };
                let shards: Vec<Result<(ModelGrads, f64, usize)>> = if config.threads > 1 {
                    pool.install(|| batch.par_chunks(SHARD).map(shard).collect())
                } else {
                    batch.chunks(SHARD).map(shard).collect()
                };
                let mut grads = ModelGrads::zeros(self);
                for s in shards {
                    let (g, l, c) = s?;
                    grads.merge(&g);
                    epoch_loss += l;
                    report.clamped += c;
                }
                grads.scale(1.0 / batch.len() as f64);
                let blocks = grads.blocks();
                let norm = global_norm(&blocks);
                if !norm.is_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient norm in epoch {epoch}")));
                }
                let step = if norm > config.clip_norm { config.lr * config.clip_norm / norm } else { config.lr };
                sgd_update(self.blocks_mut(), &blocks, step);
            }
            report.epoch_losses.push(epoch_loss / bags.len() as f64);
        }
        if !self.blocks_mut().iter().all(|(_, b)| all_finite(b.iter())) {
            return Err(Error::Numeric("parameters became non-finite".into()));
        }
        report.scale_ratio = self.fusion.scales.map(f64::abs);
        Ok(report)
    }

    pub fn shapes(&self) -> Vec<(&'static str, usize, usize)> {
        let mut out = self.encoder.shapes();
        out.push(("type.table", self.types.table.nrows(), self.types.table.ncols()));
        out.push(("type.w", self.types.w.nrows(), self.types.w.ncols()));
        out.push(("type.b", 1, self.types.b.len()));
        out.push(("fusion.scales", 1, 3));
        out.push(("fusion.w", self.fusion.w.nrows(), self.fusion.w.ncols()));
        out.push(("fusion.b", 1, self.fusion.b.len()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.encoder.blocks_mut();
        out.extend(self.types.blocks_mut());
        out.push(("fusion.scales", &mut self.fusion.scales[..]));
        out.push(("fusion.w", self.fusion.w.as_slice_mut().expect("standard layout")));
        out.push(("fusion.b", self.fusion.b.as_slice_mut().expect("standard layout")));
        out
    }

    fn manifest(&self) -> String {
        let c = self.config();
        let e = &c.encoder;
        let mut out = String::from("format=protorel-model\nversion=1\n");
        let _ = write!(
            out,
            "components={}\nvocab_size={}\nword_dim={}\npos_dim={}\nwindow={}\nn_filters={}\nmax_len={}\nn_relations={}\ndropout={}\nseed={}\ntype_dim={}\nn_types={}\nproto_len={}\n",
            c.components, e.vocab_size, e.word_dim, e.pos_dim, e.window, e.n_filters, e.max_len, e.n_relations, e.dropout, e.seed, c.type_dim, c.n_types, c.proto_len
        );
        for (k, name) in self.relations.iter().enumerate() {
            let _ = writeln!(out, "relation.{k}={name}");
        }
        for (name, r, cols) in self.shapes() {
            let _ = writeln!(out, "block.{name}={r}x{cols}");
        }
        out
    }

    /// Length-prefixed text manifest followed by one binary matrix per parameter block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = self.manifest();
        let mut out = (manifest.len() as u64).to_le_bytes().to_vec();
        out.extend(manifest.as_bytes());
        let shapes = self.shapes();
        let mut copy = self.clone();
        for ((_, rows, cols), (_, data)) in shapes.into_iter().zip(copy.blocks_mut()) {
            let m = Array2::from_shape_vec((rows, cols), data.to_vec()).expect("shape matches block");
            out.extend(matrix_to_binary(&m));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], source_name: &str) -> Result<Self> {
        let bad = |msg: String| Error::format(source_name, 1, msg);
        if bytes.len() < 8 {
            return Err(bad("truncated model header".into()));
        }
        let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let manifest = bytes
            .get(8..8 + len)
            .and_then(|b| std::str::from_utf8(b).ok())
            .ok_or_else(|| bad("unreadable model manifest".into()))?;
        let mut kv = std::collections::HashMap::new();
        for (k, line) in manifest.lines().enumerate() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(source_name, k + 1, "expected key=value"))?;
            kv.insert(key, value);
        }
        if kv.get("format") != Some(&"protorel-model") || kv.get("version") != Some(&"1") {
            return Err(bad("not a version 1 model file".into()));
        }
        let get = |key: &str| kv.get(key).copied().ok_or_else(|| bad(format!("manifest lacks {key}")));
        let num = |key: &str| -> Result<usize> { get(key)?.parse().map_err(|_| bad(format!("bad {key}"))) };
        let encoder = EncoderConfig {
            vocab_size: num("vocab_size")?,
            word_dim: num("word_dim")?,
            pos_dim: num("pos_dim")?,
            window: num("window")?,
            n_filters: num("n_filters")?,
            max_len: num("max_len")?,
            n_relations: num("n_relations")?,
            dropout: get("dropout")?.parse().map_err(|_| bad("bad dropout".into()))?,
            seed: get("seed")?.parse().map_err(|_| bad("bad seed".into()))?,
        };
        let relations = (0..encoder.n_relations)
            .map(|k| get(&format!("relation.{k}")).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        let config = ModelConfig {
            type_dim: num("type_dim")?,
            n_types: num("n_types")?,
            proto_len: num("proto_len")?,
            components: get("components")?.parse()?,
            encoder,
        };
        let mut model = RelationModel::new(relations, &config)?;
        let mut offset = 8 + len;
        let shapes = model.shapes();
        for ((name, rows, cols), (_, dst)) in shapes.into_iter().zip(model.blocks_mut()) {
            let (m, used) = matrix_from_binary(&bytes[offset.min(bytes.len())..], source_name)?;
            if m.dim() != (rows, cols) {
                return Err(Error::DimensionMismatch(format!("block {name} is {:?}, expected {rows}x{cols}", m.dim())));
            }
            dst.copy_from_slice(m.as_slice().expect("standard layout"));
            offset += used;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after model blocks".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?, &path.display().to_string())
    }
}
