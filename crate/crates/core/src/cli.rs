//! Command-line front end: one subcommand per pipeline stage.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::classifier::{prepare_bags, Components, ModelConfig, PreparedBag, RelationModel, TrainConfig};
use crate::corpus::{build_cooccurrence_graph_parallel, CooccurrenceGraph, EntityCatalog};
use crate::embed::{train_entity_embeddings, EmbeddingConfig, EntityEmbeddings};
use crate::encoder::{BagDataset, EncoderConfig, Vocabulary};
use crate::error::{Error, ErrorKind, Result};
use crate::eval::{evaluate, PredictionRecord};
use crate::formats::{read_bytes, read_to_string, write_string};
use crate::mutrel::{
    compute_leaf_prototypes, lift_prototypes, nearest_mutual_relations, nearest_prototypes, PrototypeSet,
    RelationHierarchy, RelationSet, TripleStore,
};
use crate::synth::{generate, write_world, SynthConfig, WORLD_MANIFEST};
use crate::typefeat::TypeCatalog;

pub const DATA_DIR_ENV: &str = "PROTOREL_DATA_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "protorel", version, about = "Long-tail relation extraction with relation prototypes")]
pub struct Cli {
    /// Directory that relative file arguments resolve against.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = ".")]
    pub data_dir: PathBuf,
    /// Worker threads where a stage can use them.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Force single-threaded execution everywhere.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic distant-supervision world.
    GenSynth(GenSynthArgs),
    /// Count sentence-level entity co-occurrences into a weighted graph.
    BuildGraph(BuildGraphArgs),
    /// Train first- and second-order entity embeddings on the graph.
    TrainEmbed(TrainEmbedArgs),
    /// Average mutual-relation vectors into (hierarchical) relation prototypes.
    Prototypes(PrototypesArgs),
    /// Train the fused relation classifier.
    TrainRe(TrainReArgs),
    /// Score a model on held-out bags, or score a predictions file.
    Eval(EvalArgs),
    /// Cosine nearest-neighbour queries over mutual relations.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// JSON file with generator settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    #[arg(long)]
    pub zipf: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long, default_value = "entities.tsv")]
    pub catalog: PathBuf,
    #[arg(long, default_value = "corpus.txt")]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_count: u64,
    #[arg(long, default_value = "graph.tsv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainEmbedArgs {
    #[arg(long, default_value = "graph.tsv")]
    pub graph: PathBuf,
    /// Mutual-relation / prototype size; split evenly between the two halves.
    #[arg(long, default_value_t = 128)]
    pub prototype_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 2_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// `.bin` selects the binary format.
    #[arg(long, default_value = "embeddings.bin")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrototypesArgs {
    #[arg(long, default_value = "embeddings.bin")]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "relations.tsv")]
    pub relations: PathBuf,
    #[arg(long, default_value = "train_triples.tsv")]
    pub triples: PathBuf,
    /// Hierarchy file; without it the hierarchy is read off `/`-separated relation names.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    /// Single-layer prototypes, ignoring any hierarchy.
    #[arg(long, conflicts_with = "hierarchy")]
    pub flat: bool,
    #[arg(long, default_value = "prototypes.txt")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComponentsArg {
    Full,
    NoProto,
    EncoderOnly,
    ProtoOnly,
}

impl From<ComponentsArg> for Components {
    fn from(c: ComponentsArg) -> Self {
        match c {
            ComponentsArg::Full => Components::FULL,
            ComponentsArg::NoProto => Components::NO_PROTO,
            ComponentsArg::EncoderOnly => Components::ENCODER_ONLY,
            ComponentsArg::ProtoOnly => Components::PROTO_ONLY,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    #[arg(long, default_value = "vocab.tsv")]
    pub vocab: PathBuf,
    #[arg(long, default_value = "relations.tsv")]
    pub relations: PathBuf,
    #[arg(long, default_value = "types.tsv")]
    pub types: PathBuf,
    #[arg(long, default_value = "embeddings.bin")]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "prototypes.txt")]
    pub prototypes: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainReArgs {
    #[arg(long, default_value = "train_bags.jsonl")]
    pub bags: PathBuf,
    #[command(flatten)]
    pub inputs: ModelInputs,
    #[arg(long, value_enum, default_value_t = ComponentsArg::Full)]
    pub components: ComponentsArg,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 230)]
    pub filters: usize,
    #[arg(long, default_value_t = 50)]
    pub word_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub pos_dim: usize,
    #[arg(long, default_value_t = 0.3)]
    pub lr: f64,
    #[arg(long, default_value_t = 120)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 160)]
    pub batch: usize,
    #[arg(long, default_value_t = 20)]
    pub type_dim: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "model.bin")]
    pub out: PathBuf,
    /// Per-epoch mean loss, one per line.
    #[arg(long, default_value = "losses.txt")]
    pub losses: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score an existing predictions file instead of running a model.
    #[arg(long, conflicts_with = "model")]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "test_bags.jsonl")]
    pub bags: PathBuf,
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Training bags, used to select long-tail relations for Hits@K.
    #[arg(long)]
    pub train_bags: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100,200,300")]
    pub p_at: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10,15,20")]
    pub hits_k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "100,200")]
    pub hits_cutoff: Vec<usize>,
    #[arg(long, default_value = "report.txt")]
    pub out: PathBuf,
    /// Where model mode writes its predictions.
    #[arg(long, default_value = "predictions.tsv")]
    pub predictions_out: PathBuf,
    #[arg(long)]
    pub curve_csv: Option<PathBuf>,
    #[arg(long)]
    pub curve_svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryMode {
    NearestPrototypes,
    NearestMr,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(value_enum)]
    pub mode: QueryMode,
    /// Entity id or surface form.
    #[arg(long)]
    pub head: String,
    #[arg(long)]
    pub tail: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value = "embeddings.bin")]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "entities.tsv")]
    pub catalog: PathBuf,
    #[arg(long, default_value = "relations.tsv")]
    pub relations: PathBuf,
    #[arg(long, default_value = "prototypes.txt")]
    pub prototypes: PathBuf,
    /// Candidate pairs for `nearest-mr`.
    #[arg(long, default_value = "train_triples.tsv")]
    pub triples: PathBuf,
    #[arg(long, default_value = "query.tsv")]
    pub out: PathBuf,
}

/// Echo of one run: what went in, what came out, and the digests of the outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub wall_clock_secs: f64,
    pub digests: Vec<(String, String)>,
}

impl RunManifest {
    fn new(subcommand: &str) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            ..Default::default()
        }
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    /// Manifest file name for a subcommand.
    pub fn file_name(subcommand: &str) -> String {
        format!("run-{subcommand}.manifest")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("subcommand={}\n", self.subcommand);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed={seed}");
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}={v}");
        }
        for p in &self.inputs {
            let _ = writeln!(out, "input={}", p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(out, "output={}", p.display());
        }
        for (name, d) in &self.digests {
            let _ = writeln!(out, "file.{name}={d}");
        }
        let _ = writeln!(out, "wall_clock_secs={:.3}", self.wall_clock_secs);
        out
    }

    fn finish(mut self, started: Instant) -> Result<PathBuf> {
        for p in &self.outputs {
            let digest = sha256_file(p)?;
            self.digests.push((file_label(p), digest));
        }
        self.wall_clock_secs = started.elapsed().as_secs_f64();
        let dir = self
            .outputs
            .first()
            .and_then(|p| p.parent())
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let path = dir.join(Self::file_name(&self.subcommand));
        write_string(&path, &self.to_text())?;
        Ok(path)
    }
}

fn file_label(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(read_bytes(path)?)))
}

/// Checks `path` against every manifest in its directory that records a digest
/// for a file of the same name. Files no manifest mentions pass unchecked.
pub fn verify_digest(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let key = format!("file.{}=", file_label(path));
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(_) => return Ok(()),
    };
    let mut manifests: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = file_label(p);
            name == WORLD_MANIFEST || (name.starts_with("run-") && name.ends_with(".manifest"))
        })
        .collect();
    manifests.sort();
    let mut actual = None;
    for m in manifests {
        let text = read_to_string(&m)?;
        for (lineno, line) in text.lines().enumerate() {
            if let Some(expected) = line.strip_prefix(&key) {
                let got = match &actual {
                    Some(d) => d,
                    None => actual.insert(sha256_file(path)?),
                };
                if got != expected {
                    return Err(Error::format(
                        path.display().to_string(),
                        0,
                        format!("digest does not match {}:{}", m.display(), lineno + 1),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::InvalidArgument => EXIT_USAGE,
        ErrorKind::MissingFile | ErrorKind::Io | ErrorKind::Format | ErrorKind::Dimension => EXIT_INPUT,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Single-line, tab-separated error report: `error<TAB>tag<TAB>message`.
pub fn error_line(err: &Error) -> String {
    let msg = err.to_string().replace(['\n', '\t'], " ");
    format!("error\t{}\t{}", err.tag(), msg)
}

/// Parses `args` (including the program name), runs the command, and returns
/// the exit status. Errors go to stderr as one line each.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            eprintln!("error\tusage\t{first}");
            return EXIT_USAGE;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context {
        dir: cli.data_dir.clone(),
        threads: if cli.deterministic { 1 } else { cli.threads.max(1) },
        deterministic: cli.deterministic,
    };
    match &cli.command {
        Command::GenSynth(a) => cmd_gen_synth(&ctx, a),
        Command::BuildGraph(a) => cmd_build_graph(&ctx, a),
        Command::TrainEmbed(a) => cmd_train_embed(&ctx, a),
        Command::Prototypes(a) => cmd_prototypes(&ctx, a),
        Command::TrainRe(a) => cmd_train_re(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Query(a) => cmd_query(&ctx, a),
    }
}

struct Context {
    dir: PathBuf,
    threads: usize,
    deterministic: bool,
}

impl Context {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    /// Resolves an input path and checks it against any recorded digest.
    fn input(&self, p: &Path, manifest: &mut RunManifest) -> Result<PathBuf> {
        let path = self.path(p);
        verify_digest(&path)?;
        manifest.inputs.push(path.clone());
        Ok(path)
    }

    fn output(&self, p: &Path, manifest: &mut RunManifest) -> Result<PathBuf> {
        let path = self.path(p);
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        manifest.outputs.push(path.clone());
        Ok(path)
    }

    fn manifest(&self, subcommand: &str) -> RunManifest {
        let mut m = RunManifest::new(subcommand);
        m.set("threads", self.threads);
        m.set("deterministic", self.deterministic);
        m
    }
}

fn cmd_gen_synth(ctx: &Context, a: &GenSynthArgs) -> Result<()> {
    let started = Instant::now();
    let mut m = ctx.manifest("gen-synth");
    let mut config = match &a.config {
        Some(p) => {
            let path = ctx.input(p, &mut m)?;
            serde_json::from_str::<SynthConfig>(&read_to_string(&path)?)
                .map_err(|e| Error::format(path.display().to_string(), e.line(), e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.entities {
        config.n_entities = v;
    }
    if let Some(v) = a.relations {
        config.n_relations = v;
    }
    if let Some(v) = a.noise_rate {
        config.noise_rate = v;
    }
    if let Some(v) = a.zipf {
        config.zipf_exponent = v;
    }
    let world = generate(&config)?;
    let out = ctx.path(&a.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    m.seed = Some(config.seed);
    let json = serde_json::to_value(&config).expect("config serializes");
    for (k, v) in json.as_object().expect("config is an object") {
        m.set(k, v);
    }
    m.outputs = write_world(&world, &out)?;
    m.finish(started)?;
    Ok(())
}

fn cmd_build_graph(ctx: &Context, a: &BuildGraphArgs) -> Result<()> {
    let started = Instant::now();
    let mut m = ctx.manifest("build-graph");
    let catalog = EntityCatalog::load(&ctx.input(&a.catalog, &mut m)?)?;
    let corpus = read_to_string(&ctx.input(&a.corpus, &mut m)?)?;
    let sentences: Vec<_> = corpus
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| catalog.match_sentence(l))
        .collect();
    let graph = build_cooccurrence_graph_parallel(&sentences, catalog.len(), a.min_count, ctx.threads)?;
    m.set("min_count", a.min_count);
    m.set("sentences", sentences.len());
    m.set("edges", graph.edges().len());
    graph.save(&ctx.output(&a.out, &mut m)?)?;
    m.finish(started)?;
    Ok(())
}

fn cmd_train_embed(ctx: &Context, a: &TrainEmbedArgs) -> Result<()> {
    let started = Instant::now();
    let mut m = ctx.manifest("train-embed");
    if a.prototype_dim < 2 || a.prototype_dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "prototype dim must be even and at least 2, got {}",
            a.prototype_dim
        )));
    }
    let graph = CooccurrenceGraph::load(&ctx.input(&a.graph, &mut m)?)?;
    let config = EmbeddingConfig {
        dim_first: a.prototype_dim / 2,
        dim_second: a.prototype_dim / 2,
        n_negative: a.negatives,
        n_samples: a.samples,
        lr_initial: a.lr,
        seed: a.seed,
    };
    let emb = train_entity_embeddings(&graph, &config)?;
    m.seed = Some(a.seed);
    m.set("dim_first", config.dim_first);
    m.set("dim_second", config.dim_second);
    m.set("n_negative", config.n_negative);
    m.set("n_samples", config.n_samples);
    m.set("lr_initial", config.lr_initial);
    emb.save(&ctx.output(&a.out, &mut m)?)?;
    m.finish(started)?;
    Ok(())
}

fn cmd_prototypes(ctx: &Context, a: &PrototypesArgs) -> Result<()> {
    let started = Instant::now();
    let mut m = ctx.manifest("prototypes");
    let emb = EntityEmbeddings::load(&ctx.input(&a.embeddings, &mut m)?)?;
    let relations = RelationSet::load(&ctx.input(&a.relations, &mut m)?)?;
    let triples = TripleStore::load(&ctx.input(&a.triples, &mut m)?, relations.clone(), true)?;
    let hierarchy = if a.flat {
        RelationHierarchy::flat(&relations)
    } else {
        match &a.hierarchy {
            Some(p) => RelationHierarchy::load(&ctx.input(p, &mut m)?, &relations)?,
            None => RelationHierarchy::from_relation_names(&relations)?,
        }
    };
    let leaf = compute_leaf_prototypes(&emb, &triples)?;
    let protos = lift_prototypes(&leaf, &hierarchy)?;
    m.set("layers", protos.layers().len());
    m.set("dim", protos.dim());
    protos.save(&ctx.output(&a.out, &mut m)?)?;
    m.finish(started)?;
    Ok(())
}

struct Loaded {
    vocab: Vocabulary,
    relations: RelationSet,
    types: TypeCatalog,
    emb: EntityEmbeddings,
    protos: PrototypeSet,
}

fn load_inputs(ctx: &Context, i: &ModelInputs, m: &mut RunManifest) -> Result<Loaded> {
    let vocab = Vocabulary::load(&ctx.input(&i.vocab, m)?)?;
    let relations = RelationSet::load(&ctx.input(&i.relations, m)?)?;
    let emb = EntityEmbeddings::load(&ctx.input(&i.embeddings, m)?)?;
    let types = TypeCatalog::load(&ctx.input(&i.types, m)?, emb.n())?;
    let protos = PrototypeSet::load(&ctx.input(&i.prototypes, m)?)?;
    if protos.dim() != emb.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prototypes have dim {} but embeddings have dim {}",
            protos.dim(),
            emb.dim()
        )));
    }
    if protos.n_relations() != relations.len() {
        return Err(Error::DimensionMismatch(format!(
            "prototypes cover {} relations but the relation set has {}",
            protos.n_relations(),
            relations.len()
        )));
    }
    Ok(Loaded {
        vocab,
        relations,
        types,
        emb,
        protos,
    })
}

fn prepare(l: &Loaded, bags: &BagDataset, max_len: usize) -> Result<Vec<PreparedBag>> {
    prepare_bags(bags, &l.vocab, &l.relations, &l.emb, &l.protos, max_len)
}

fn cmd_train_re(ctx: &Context, a: &TrainReArgs) -> Result<()> {
    let started = Instant::now();
    let mut m = ctx.manifest("train-re");
    let l = load_inputs(ctx, &a.inputs, &mut m)?;
    let dataset = BagDataset::load(&ctx.input(&a.bags, &mut m)?)?;
    let encoder = EncoderConfig {
        vocab_size: l.vocab.len(),
        word_dim: a.word_dim,
        pos_dim: a.pos_dim,
        window: a.window,
        n_filters: a.filters,
        max_len: a.max_len,
        n_relations: l.relations.len(),
        dropout: a.dropout,
        seed: a.seed,
    };
    let config = ModelConfig {
        encoder,
        type_dim: a.type_dim,
        n_types: l.types.n_types(),
        proto_len: l.protos.feature_len(),
        components: a.components.into(),
    };
    let bags = prepare(&l, &dataset, a.max_len)?;
    let mut model = RelationModel::new(l.relations.names().to_vec(), &config)?;
    let train = TrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        shuffle: true,
        clip_norm: a.clip_norm,
        threads: ctx.threads,
    };
    let report = model.train(&bags, &l.types, &train)?;
    m.seed = Some(a.seed);
    m.set("components", config.components);
    for (k, v) in [
        ("window", a.window),
        ("filters", a.filters),
        ("word_dim", a.word_dim),
        ("pos_dim", a.pos_dim),
        ("max_len", a.max_len),
        ("batch", a.batch),
        ("type_dim", a.type_dim),
        ("epochs", a.epochs),
    ] {
        m.set(k, v);
    }
    m.set("lr", a.lr);
    m.set("dropout", a.dropout);
    m.set("clip_norm", a.clip_norm);
    m.set("clamped", report.clamped);
    m.set(
        "scales",
        format!("{:.6},{:.6},{:.6}", report.scale_ratio[0], report.scale_ratio[1], report.scale_ratio[2]),
    );
    model.save(&ctx.output(&a.out, &mut m)?)?;
    let mut losses = String::new();
    for v in &report.epoch_losses {
        let _ = writeln!(losses, "{v:.9}");
    }
    write_string(&ctx.output(&a.losses, &mut m)?, &losses)?;
    m.finish(started)?;
    Ok(())
}

/// Training bags per relation id; relations without bags count zero.
pub fn bag_counts(dataset: &BagDataset, relations: &RelationSet) -> Vec<usize> {
    let mut counts = vec![0; relations.len()];
    for bag in &dataset.bags {
        if let Some(r) = relations.id(&bag.relation) {
            counts[r] += 1;
        }
    }
    counts
}

/// Runs `model` over `bags` and returns one record per bag.
pub fn predict_records(model: &RelationModel, bags: &[PreparedBag], types: &TypeCatalog) -> Result<Vec<PredictionRecord>> {
    bags.iter()
        .map(|b| {
            let p = model.predict(b, types)?;
            Ok(PredictionRecord {
                pair: (b.head, b.tail),
                gold: b.gold,
                scores: p.probs,
            })
        })
        .collect()
}

fn cmd_eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let mut m = ctx.manifest("eval");
    let mut counts = None;
    let records = if let Some(p) = &a.predictions {
        if let Some(tb) = &a.train_bags {
            let relations = RelationSet::load(&ctx.input(&a.inputs.relations, &mut m)?)?;
            counts = Some(bag_counts(&BagDataset::load(&ctx.input(tb, &mut m)?)?, &relations));
        }
        PredictionRecord::load(&ctx.input(p, &mut m)?)?
    } else {
        let model_path = a
            .model
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("eval needs --model or --predictions".into()))?;
        let model = RelationModel::load(&ctx.input(model_path, &mut m)?)?;
        let l = load_inputs(ctx, &a.inputs, &mut m)?;
        if l.relations.names() != model.relations.as_slice() {
            return Err(Error::DimensionMismatch("model relations differ from the relation file".into()));
        }
        if let Some(tb) = &a.train_bags {
            counts = Some(bag_counts(&BagDataset::load(&ctx.input(tb, &mut m)?)?, &l.relations));
        }
        let dataset = BagDataset::load(&ctx.input(&a.bags, &mut m)?)?;
        let bags = prepare(&l, &dataset, model.config().encoder.max_len)?;
        let records = predict_records(&model, &bags, &l.types)?;
        write_string(&ctx.output(&a.predictions_out, &mut m)?, &PredictionRecord::to_tsv(&records))?;
        records
    };
    let hits: Vec<(usize, usize)> = match counts {
        Some(_) => a
            .hits_cutoff
            .iter()
            .flat_map(|&c| a.hits_k.iter().map(move |&k| (k, c)))
            .collect(),
        None => Vec::new(),
    };
    let report = evaluate(&records, counts.as_deref(), &a.p_at, &hits)?;
    let out = ctx.output(&a.out, &mut m)?;
    let csv = a.curve_csv.as_ref().map(|p| ctx.output(p, &mut m)).transpose()?;
    let svg = a.curve_svg.as_ref().map(|p| ctx.output(p, &mut m)).transpose()?;
    report.save(&out, csv.as_deref(), svg.as_deref())?;
    m.set("records", records.len());
    m.finish(started)?;
    Ok(())
}

fn resolve_entity(name: &str, catalog: Option<&EntityCatalog>, n: usize) -> Result<usize> {
    if let Some(id) = catalog.and_then(|c| c.lookup(name)) {
        return Ok(id);
    }
    match name.parse::<usize>() {
        Ok(id) if id < n => Ok(id),
        Ok(id) => Err(Error::InvalidArgument(format!("entity id {id} out of range for {n} entities"))),
        Err(_) => Err(Error::InvalidArgument(format!("unknown entity {name:?}"))),
    }
}

fn cmd_query(ctx: &Context, a: &QueryArgs) -> Result<()> {
    let started = Instant::now();
    let mut m = ctx.manifest("query");
    let emb = EntityEmbeddings::load(&ctx.input(&a.embeddings, &mut m)?)?;
    let relations = RelationSet::load(&ctx.input(&a.relations, &mut m)?)?;
    let catalog_path = ctx.path(&a.catalog);
    let catalog = if catalog_path.exists() {
        Some(EntityCatalog::load(&ctx.input(&a.catalog, &mut m)?)?)
    } else {
        None
    };
    let label = |id: usize| catalog.as_ref().and_then(|c| c.get(id)).map_or_else(|| id.to_string(), |e| e.canonical.clone());
    let head = resolve_entity(&a.head, catalog.as_ref(), emb.n())?;
    let tail = resolve_entity(&a.tail, catalog.as_ref(), emb.n())?;
    let mut out = String::new();
    match a.mode {
        QueryMode::NearestPrototypes => {
            let protos = PrototypeSet::load(&ctx.input(&a.prototypes, &mut m)?)?;
            let _ = writeln!(out, "#relation\tcosine");
            for (r, c) in nearest_prototypes(&emb, &protos, head, tail, a.k)? {
                let _ = writeln!(out, "{}\t{c:.6}", relations.name(r).unwrap_or("?"));
            }
        }
        QueryMode::NearestMr => {
            let triples = TripleStore::load(&ctx.input(&a.triples, &mut m)?, relations.clone(), true)?;
            let pairs: Vec<(usize, usize)> = triples.triples().iter().map(|t| (t.head, t.tail)).collect();
            let mut rel_of = std::collections::BTreeMap::new();
            for t in triples.triples() {
                rel_of.entry((t.head, t.tail)).or_insert(t.relation);
            }
            let mut seen = std::collections::BTreeSet::new();
            let unique: Vec<_> = pairs.into_iter().filter(|p| seen.insert(*p)).collect();
            let _ = writeln!(out, "#head\ttail\trelation\tcosine");
            for ((h, t), c) in nearest_mutual_relations(&emb, &unique, (head, tail), a.k)? {
                let rel = rel_of.get(&(h, t)).and_then(|&r| relations.name(r)).unwrap_or("?");
                let _ = writeln!(out, "{}\t{}\t{rel}\t{c:.6}", label(h), label(t));
            }
        }
    }
    m.set("mode", format!("{:?}", a.mode));
    m.set("head", head);
    m.set("tail", tail);
    m.set("k", a.k);
    write_string(&ctx.output(&a.out, &mut m)?, &out)?;
    print!("{out}");
    m.finish(started)?;
    Ok(())
}
