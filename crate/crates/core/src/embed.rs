//! Entity embeddings from the co-occurrence graph.
//!
//! Two tables are trained independently by edge-sampled SGD with negative
//! sampling: a first-order table where linked vertices get a large inner
//! product, and a second-order vertex/context pair where vertices that share
//! neighbours end up close. The final entity vector is the concatenation of
//! the first-order row and the second-order vertex row.

use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CooccurrenceGraph, Edge};
use crate::error::{Error, Result};
use crate::formats;
use crate::math::{dot, log_sigmoid, sigmoid, uniform_matrix};
use crate::sampling::{build_edge_sampler, build_noise_sampler, AliasTable};

/// Final learning rate as a fraction of the initial one.
pub const LR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig {
    pub dim_first: usize,
    pub dim_second: usize,
    /// Negatives drawn per positive endpoint.
    pub n_negative: usize,
    /// Total number of SGD edge draws per table.
    pub n_samples: u64,
    pub lr_initial: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim_first: 64,
            dim_second: 64,
            n_negative: 5,
            n_samples: 2_000_000,
            lr_initial: 0.025,
            seed: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim_first == 0 || self.dim_second == 0 {
            return Err(Error::InvalidArgument("embedding dimensions must be positive".into()));
        }
        if self.n_negative == 0 {
            return Err(Error::InvalidArgument("n_negative must be at least 1".into()));
        }
        if !(self.lr_initial > 0.0 && self.lr_initial <= 1.0) {
            return Err(Error::InvalidArgument("lr_initial must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim_first + self.dim_second
    }
}

/// Probability that `a` and `b` are linked under the first-order model.
pub fn p1(a: &[f64], b: &[f64]) -> f64 {
    sigmoid(dot(a, b))
}

/// Gradient rows for the handful of table rows touched by one SGD step.
#[derive(Debug, Clone)]
pub struct SparseGrad {
    dim: usize,
    rows: Vec<usize>,
    values: Vec<f64>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> Self {
        SparseGrad {
            dim,
            rows: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.rows.clear();
        self.values.clear();
    }

    fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let k = match self.rows.iter().position(|&r| r == row) {
            Some(k) => k,
            None => {
                self.rows.push(row);
                self.values.resize(self.values.len() + self.dim, 0.0);
                self.rows.len() - 1
            }
        };
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    fn add_scaled(&mut self, row: usize, scale: f64, v: &[f64]) {
        for (g, x) in self.row_mut(row).iter_mut().zip(v) {
            *g += scale * x;
        }
    }

    /// Gradient entry; zero for untouched rows.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows
            .iter()
            .position(|&r| r == row)
            .map_or(0.0, |k| self.values[k * self.dim + col])
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// `table[row] -= lr * grad[row]` for every touched row.
    pub fn descend(&self, table: &mut Array2<f64>, lr: f64) {
        for (k, &r) in self.rows.iter().enumerate() {
            let g = &self.values[k * self.dim..(k + 1) * self.dim];
            for (t, gv) in table.row_mut(r).iter_mut().zip(g) {
                *t -= lr * gv;
            }
        }
    }
}

/// One first-order training example: a positive edge plus noise vertices for
/// each endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderSample {
    pub i: usize,
    pub j: usize,
    pub negatives_i: Vec<usize>,
    pub negatives_j: Vec<usize>,
}

/// Negative-sampling surrogate of the first-order objective for one sample:
/// `-ln σ(u_i·u_j) - Σ ln σ(-u_i·u_n) - Σ ln σ(-u_j·u_m)`.
pub fn first_order_loss(emb: &Array2<f64>, s: &FirstOrderSample) -> f64 {
    let row = |r: usize| emb.row(r).to_slice().expect("standard layout").to_vec();
    let (ui, uj) = (row(s.i), row(s.j));
    let mut loss = -log_sigmoid(dot(&ui, &uj));
    for &n in &s.negatives_i {
        loss -= log_sigmoid(-dot(&ui, &row(n)));
    }
    for &n in &s.negatives_j {
        loss -= log_sigmoid(-dot(&uj, &row(n)));
    }
    loss
}

/// Analytic gradient of [`first_order_loss`], accumulated into `grad`.
pub fn first_order_gradient(emb: &Array2<f64>, s: &FirstOrderSample, grad: &mut SparseGrad) {
    grad.clear();
    let row = |r: usize| emb.row(r).to_slice().expect("standard layout");
    let (ui, uj) = (row(s.i), row(s.j));
    let g = sigmoid(dot(ui, uj)) - 1.0;
    grad.add_scaled(s.i, g, uj);
    grad.add_scaled(s.j, g, ui);
    for (center, negatives) in [(s.i, &s.negatives_i), (s.j, &s.negatives_j)] {
        let uc = row(center);
        for &n in negatives {
            let un = row(n);
            let g = sigmoid(dot(uc, un));
            grad.add_scaled(center, g, un);
            grad.add_scaled(n, g, uc);
        }
    }
}

/// One directed second-order example: `vertex` generates `context`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderSample {
    pub vertex: usize,
    pub context: usize,
    pub negatives: Vec<usize>,
}

/// Negated negative-sampling objective:
/// `-ln σ(c_j·v_i) - Σ ln σ(-c_n·v_i)`.
pub fn second_order_loss(vertex: &Array2<f64>, context: &Array2<f64>, s: &SecondOrderSample) -> f64 {
    let v = vertex.row(s.vertex);
    let v = v.as_slice().expect("standard layout");
    let c = |r: usize| context.row(r).to_slice().expect("standard layout").to_vec();
    let mut loss = -log_sigmoid(dot(v, &c(s.context)));
    for &n in &s.negatives {
        loss -= log_sigmoid(-dot(v, &c(n)));
    }
    loss
}

/// Analytic gradient of [`second_order_loss`] w.r.t. the vertex and context tables.
pub fn second_order_gradient(
    vertex: &Array2<f64>,
    context: &Array2<f64>,
    s: &SecondOrderSample,
    grad_vertex: &mut SparseGrad,
    grad_context: &mut SparseGrad,
) {
    grad_vertex.clear();
    grad_context.clear();
    let v = vertex.row(s.vertex);
    let v = v.as_slice().expect("standard layout");
    let c = |r: usize| context.row(r).to_slice().expect("standard layout");
    let cj = c(s.context);
    let g = sigmoid(dot(v, cj)) - 1.0;
    grad_vertex.add_scaled(s.vertex, g, cj);
    grad_context.add_scaled(s.context, g, v);
    for &n in &s.negatives {
        let cn = c(n);
        let g = sigmoid(dot(v, cn));
        grad_vertex.add_scaled(s.vertex, g, cn);
        grad_context.add_scaled(n, g, v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proximity {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeSample {
    First(FirstOrderSample),
    Second(SecondOrderSample),
}

/// Edge-sampling SGD driver for one proximity table. Training can be advanced
/// in chunks so callers can checkpoint between them.
pub struct LineTrainer<'g> {
    proximity: Proximity,
    edges: &'g [Edge],
    edge_sampler: AliasTable,
    noise: AliasTable,
    vertex: Array2<f64>,
    context: Option<Array2<f64>>,
    config: EmbeddingConfig,
    rng: ChaCha8Rng,
    step: u64,
    grad_a: SparseGrad,
    grad_b: SparseGrad,
}

const SECOND_ORDER_STREAM: u64 = 0x5eed_0002;

impl<'g> LineTrainer<'g> {
    pub fn new(graph: &'g CooccurrenceGraph, config: &EmbeddingConfig, proximity: Proximity) -> Result<Self> {
        config.validate()?;
        let edge_sampler = build_edge_sampler(graph)?;
        let noise = build_noise_sampler(graph)?;
        let seed = match proximity {
            Proximity::First => config.seed,
            Proximity::Second => config.seed ^ SECOND_ORDER_STREAM,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = graph.n_vertices();
        let dim = match proximity {
            Proximity::First => config.dim_first,
            Proximity::Second => config.dim_second,
        };
        let bound = 0.5 / dim as f64;
        let vertex = uniform_matrix(n, dim, bound, &mut rng);
        let context = match proximity {
            Proximity::First => None,
            Proximity::Second => Some(uniform_matrix(n, dim, bound, &mut rng)),
        };
        Ok(LineTrainer {
            proximity,
            edges: graph.edges(),
            edge_sampler,
            noise,
            vertex,
            context,
            config: config.clone(),
            rng,
            step: 0,
            grad_a: SparseGrad::new(dim),
            grad_b: SparseGrad::new(dim),
        })
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        let progress = if self.config.n_samples == 0 {
            1.0
        } else {
            (self.step as f64 / self.config.n_samples as f64).min(1.0)
        };
        self.config.lr_initial * (1.0 - (1.0 - LR_FLOOR) * progress)
    }

    fn draw_negatives(noise: &AliasTable, rng: &mut ChaCha8Rng, k: usize, excluded: &[usize]) -> Vec<usize> {
        let blocked = excluded
            .iter()
            .enumerate()
            .filter(|&(pos, &v)| noise.probability(v) > 0.0 && !excluded[..pos].contains(&v))
            .count();
        if noise.support() <= blocked {
            return Vec::new();
        }
        (0..k)
            .map(|_| loop {
                let n = noise.sample(rng);
                if !excluded.contains(&n) {
                    break n;
                }
            })
            .collect()
    }

    /// Draws the next training example from the trainer's RNG stream.
    fn draw(&mut self) -> ProbeSample {
        Self::draw_with(self.proximity, self.edges, &self.edge_sampler, &self.noise, self.config.n_negative, &mut self.rng)
    }

    fn draw_with(
        proximity: Proximity,
        edges: &[Edge],
        edge_sampler: &AliasTable,
        noise: &AliasTable,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> ProbeSample {
        let e = edges[edge_sampler.sample(rng)];
        match proximity {
            Proximity::First => {
                let negatives_i = Self::draw_negatives(noise, rng, k, &[e.i, e.j]);
                let negatives_j = Self::draw_negatives(noise, rng, k, &[e.i, e.j]);
                ProbeSample::First(FirstOrderSample { i: e.i, j: e.j, negatives_i, negatives_j })
            }
            Proximity::Second => {
                let (v, c) = if rng.random::<bool>() { (e.i, e.j) } else { (e.j, e.i) };
                let negatives = Self::draw_negatives(noise, rng, k, &[c]);
                ProbeSample::Second(SecondOrderSample { vertex: v, context: c, negatives })
            }
        }
    }

    /// Runs up to `steps` more SGD steps, stopping at `n_samples` in total.
    pub fn advance(&mut self, steps: u64) {
        let end = self.config.n_samples.min(self.step.saturating_add(steps));
        while self.step < end {
            let lr = self.learning_rate();
            match self.draw() {
                ProbeSample::First(s) => {
                    first_order_gradient(&self.vertex, &s, &mut self.grad_a);
                    self.grad_a.descend(&mut self.vertex, lr);
                }
                ProbeSample::Second(s) => {
                    let context = self.context.as_mut().expect("second-order trainer has a context table");
                    second_order_gradient(&self.vertex, context, &s, &mut self.grad_a, &mut self.grad_b);
                    self.grad_a.descend(&mut self.vertex, lr);
                    self.grad_b.descend(context, lr);
                }
            }
            self.step += 1;
        }
    }

    /// Fixed evaluation sample drawn from an independent RNG stream.
    pub fn probe_samples(&self, count: usize, seed: u64) -> Vec<ProbeSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                Self::draw_with(self.proximity, self.edges, &self.edge_sampler, &self.noise, self.config.n_negative, &mut rng)
            })
            .collect()
    }

    /// Mean surrogate loss over `probes` at the current parameters.
    pub fn probe_loss(&self, probes: &[ProbeSample]) -> f64 {
        if probes.is_empty() {
            return 0.0;
        }
        let total: f64 = probes
            .iter()
            .map(|p| match p {
                ProbeSample::First(s) => first_order_loss(&self.vertex, s),
                ProbeSample::Second(s) => {
                    second_order_loss(&self.vertex, self.context.as_ref().expect("context table"), s)
                }
            })
            .sum();
        total / probes.len() as f64
    }

    pub fn vertex(&self) -> &Array2<f64> {
        &self.vertex
    }

    pub fn context(&self) -> Option<&Array2<f64>> {
        self.context.as_ref()
    }

    pub fn into_tables(self) -> (Array2<f64>, Option<Array2<f64>>) {
        (self.vertex, self.context)
    }
}

pub fn train_first_order(graph: &CooccurrenceGraph, config: &EmbeddingConfig) -> Result<Array2<f64>> {
    let mut trainer = LineTrainer::new(graph, config, Proximity::First)?;
    trainer.advance(config.n_samples);
    let (vertex, _) = trainer.into_tables();
    ensure_finite(&vertex, "first-order embeddings")?;
    Ok(vertex)
}

/// Returns the `(vertex, context)` tables.
pub fn train_second_order(graph: &CooccurrenceGraph, config: &EmbeddingConfig) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut trainer = LineTrainer::new(graph, config, Proximity::Second)?;
    trainer.advance(config.n_samples);
    let (vertex, context) = trainer.into_tables();
    let context = context.expect("second-order trainer has a context table");
    ensure_finite(&vertex, "second-order vertex embeddings")?;
    ensure_finite(&context, "second-order context embeddings")?;
    Ok((vertex, context))
}

fn ensure_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contain non-finite values")))
    }
}

/// Dense per-entity vectors; row `i` is entity `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityEmbeddings {
    vectors: Array2<f64>,
}

impl EntityEmbeddings {
    pub fn new(vectors: Array2<f64>) -> Result<Self> {
        ensure_finite(&vectors, "embeddings")?;
        Ok(EntityEmbeddings { vectors })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        (i < self.n()).then(|| self.vectors.row(i).to_slice().expect("standard layout"))
    }

    pub fn to_text(&self) -> String {
        formats::matrix_to_text(&self.vectors)
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        Self::new(formats::matrix_from_text(text, source_name)?)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        formats::matrix_to_binary(&self.vectors)
    }

    pub fn from_binary(bytes: &[u8], source_name: &str) -> Result<Self> {
        let (m, used) = formats::matrix_from_binary(bytes, source_name)?;
        if used != bytes.len() {
            return Err(Error::format(source_name, 0, "trailing bytes after PREX matrix"));
        }
        Self::new(m)
    }

    /// Writes the text format, or the binary format when the path ends in `.bin`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if is_binary_path(path) {
            formats::write_bytes(path, &self.to_binary())
        } else {
            formats::write_string(path, &self.to_text())
        }
    }

    /// Reads either format; binary files are recognised by their magic bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = formats::read_bytes(path)?;
        let name = path.display().to_string();
        if bytes.starts_with(formats::BINARY_MAGIC) {
            Self::from_binary(&bytes, &name)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| Error::format(&name, 0, "not UTF-8"))?;
            Self::from_text(&text, &name)
        }
    }
}

pub(crate) fn is_binary_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Row-wise `[first ‖ second]`, without normalization.
pub fn concat_embeddings(first: &Array2<f64>, second_vertex: &Array2<f64>) -> Result<EntityEmbeddings> {
    if first.nrows() != second_vertex.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "first-order table has {} rows, second-order table has {}",
            first.nrows(),
            second_vertex.nrows()
        )));
    }
    let joined = concatenate(Axis(1), &[first.view(), second_vertex.view()])
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    EntityEmbeddings::new(joined.as_standard_layout().into_owned())
}

/// Trains both tables and concatenates them.
pub fn train_entity_embeddings(graph: &CooccurrenceGraph, config: &EmbeddingConfig) -> Result<EntityEmbeddings> {
    let first = train_first_order(graph, config)?;
    let (second, _) = train_second_order(graph, config)?;
    concat_embeddings(&first, &second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn p1_examples() {
        assert_eq!(p1(&[0.0, 0.0], &[0.0, 0.0]), 0.5);
        let x = 3f64.ln();
        assert!((p1(&[x, 0.0], &[1.0, 5.0]) - 0.75).abs() < 1e-15);
        let (a, b) = ([0.3, -1.0, 2.0], [1.5, 0.2, -0.7]);
        assert_eq!(p1(&a, &b), p1(&b, &a));
        assert!(p1(&[1e3], &[1e3]) <= 1.0);
        assert!(p1(&[1e3], &[-1e3]) >= 0.0);
    }

    fn line_graph() -> CooccurrenceGraph {
        let e = |i, j, w| Edge { i, j, count: 1, weight: w };
        CooccurrenceGraph::from_edges(4, vec![e(0, 1, 1.0), e(1, 2, 0.5), e(2, 3, 1.0)]).unwrap()
    }

    #[test]
    fn zero_samples_returns_initialization() {
        let g = line_graph();
        let cfg = EmbeddingConfig { dim_first: 3, dim_second: 2, n_samples: 0, ..Default::default() };
        let trained = train_first_order(&g, &cfg).unwrap();
        let init = LineTrainer::new(&g, &cfg, Proximity::First).unwrap().into_tables().0;
        assert_eq!(trained, init);
        let (v, c) = train_second_order(&g, &cfg).unwrap();
        let (v0, c0) = LineTrainer::new(&g, &cfg, Proximity::Second).unwrap().into_tables();
        assert_eq!(v, v0);
        assert_eq!(Some(c), c0);
        assert!(v.iter().all(|x| x.abs() <= 0.25));
    }

    #[test]
    fn learning_rate_decays_linearly_to_floor() {
        let g = line_graph();
        let cfg = EmbeddingConfig { n_samples: 100, lr_initial: 0.1, ..Default::default() };
        let mut t = LineTrainer::new(&g, &cfg, Proximity::First).unwrap();
        assert_eq!(t.learning_rate(), 0.1);
        t.advance(50);
        assert!((t.learning_rate() - 0.1 * (1.0 - 0.5 * (1.0 - LR_FLOOR))).abs() < 1e-15);
        t.advance(1000);
        assert_eq!(t.steps_done(), 100);
        assert!((t.learning_rate() - 0.1 * LR_FLOOR).abs() < 1e-15);
    }

    #[test]
    fn negatives_never_hit_the_positive_pair() {
        let g = line_graph();
        let cfg = EmbeddingConfig { n_negative: 4, ..Default::default() };
        let t = LineTrainer::new(&g, &cfg, Proximity::First).unwrap();
        for p in t.probe_samples(200, 9) {
            let ProbeSample::First(s) = p else { unreachable!() };
            assert!(s.negatives_i.iter().chain(&s.negatives_j).all(|&n| n != s.i && n != s.j));
        }
        let t = LineTrainer::new(&g, &cfg, Proximity::Second).unwrap();
        for p in t.probe_samples(200, 9) {
            let ProbeSample::Second(s) = p else { unreachable!() };
            assert!(s.negatives.iter().all(|&n| n != s.context));
            assert_eq!(s.negatives.len(), 4);
        }
    }

    #[test]
    fn two_vertex_graph_has_no_first_order_negatives() {
        let g = CooccurrenceGraph::from_edges(2, vec![Edge { i: 0, j: 1, count: 3, weight: 1.0 }]).unwrap();
        let cfg = EmbeddingConfig { dim_first: 2, dim_second: 2, n_samples: 100, ..Default::default() };
        let m = train_first_order(&g, &cfg).unwrap();
        assert!(p1(m.row(0).as_slice().unwrap(), m.row(1).as_slice().unwrap()) > 0.5);
    }

    #[test]
    fn concat_keeps_halves() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[5.0, 6.0, 7.0], [8.0, 9.0, 10.0]];
        let e = concat_embeddings(&a, &b).unwrap();
        assert_eq!(e.dim(), 5);
        assert_eq!(e.row(1).unwrap(), &[3.0, 4.0, 8.0, 9.0, 10.0]);
        assert!(concat_embeddings(&a, &array![[1.0]]).is_err());
    }

    #[test]
    fn embedding_files_round_trip() {
        let g = line_graph();
        let cfg = EmbeddingConfig { dim_first: 3, dim_second: 2, n_samples: 500, ..Default::default() };
        let e = train_entity_embeddings(&g, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("e.bin");
        e.save(&bin).unwrap();
        let back = EntityEmbeddings::load(&bin).unwrap();
        assert_eq!(back, e);
        assert_eq!(std::fs::read(&bin).unwrap()[..5], *b"PREX\x01");

        let txt = dir.path().join("e.txt");
        e.save(&txt).unwrap();
        let first = std::fs::read(&txt).unwrap();
        assert!(first.starts_with(b"4 5\n0 "));
        EntityEmbeddings::load(&txt).unwrap().save(&txt).unwrap();
        assert_eq!(std::fs::read(&txt).unwrap(), first);
    }
}
