//! Bag encoder: word and position embeddings, a piecewise-pooled convolution
//! per sentence, and relation-queried selective attention over the bag.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_to_string, write_string};
use crate::math::{dot, softmax, softmax_backward, uniform_matrix, uniform_vector, xavier_bound};
use crate::params::{GradView, RowGrads};

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub word_dim: usize,
    pub pos_dim: usize,
    pub window: usize,
    pub n_filters: usize,
    pub max_len: usize,
    pub n_relations: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 1,
            word_dim: 50,
            pos_dim: 5,
            window: 3,
            n_filters: 230,
            max_len: 120,
            n_relations: 1,
            dropout: 0.5,
            seed: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("vocab_size", self.vocab_size),
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("window", self.window),
            ("n_filters", self.n_filters),
            ("max_len", self.max_len),
            ("n_relations", self.n_relations),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.window % 2 == 0 {
            return Err(Error::InvalidArgument("window must be odd".into()));
        }
        if self.max_len < self.window {
            return Err(Error::InvalidArgument("max_len must be at least the window".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of one token row: word plus both position embeddings.
    pub fn input_dim(&self) -> usize {
        self.word_dim + 2 * self.pos_dim
    }

    /// Length of a pooled sentence vector.
    pub fn hidden_dim(&self) -> usize {
        3 * self.n_filters
    }

    /// Rows in each position table: offsets `-max_len..=max_len`.
    pub fn n_positions(&self) -> usize {
        2 * self.max_len + 1
    }

    pub fn position_index(&self, offset: isize) -> usize {
        let l = self.max_len as isize;
        (offset.clamp(-l, l) + l) as usize
    }
}

/// Token ids; id 0 is the reserved unknown-token row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(UNK_TOKEN);
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// Tokens seen at least `min_count` times, most frequent first, ties by token.
    pub fn build(dataset: &BagDataset, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in dataset.bags.iter().flat_map(|b| &b.sentences) {
            for t in &s.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut v = Vocabulary::new();
        for (t, _) in kept {
            v.insert(t);
        }
        v
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{t}\t{id}");
        }
        out
    }

    /// Parses `token<TAB>id`; ids must be dense from 0 in file order.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (k, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (token, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::format(source_name, k + 1, "expected `token<TAB>id`"))?;
            if id.parse::<usize>().ok() != Some(v.tokens.len()) {
                return Err(Error::format(source_name, k + 1, format!("expected id {}, found {id:?}", v.tokens.len())));
            }
            if v.index.contains_key(token) {
                return Err(Error::format(source_name, k + 1, format!("duplicate token {token:?}")));
            }
            v.insert(token);
        }
        if v.tokens.is_empty() {
            return Err(Error::format(source_name, 1, "vocabulary is empty"));
        }
        Ok(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagSentence {
    pub tokens: Vec<String>,
    pub head_idx: usize,
    pub tail_idx: usize,
    /// Relation whose template produced the sentence, when known (synthetic data).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_relation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bag {
    pub pair: (usize, usize),
    pub relation: String,
    pub sentences: Vec<BagSentence>,
}

/// One JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BagDataset {
    pub bags: Vec<Bag>,
}

impl BagDataset {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut bags = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bag: Bag = serde_json::from_str(line).map_err(|e| Error::format(source_name, k + 1, e.to_string()))?;
            for s in &bag.sentences {
                if s.head_idx >= s.tokens.len() || s.tail_idx >= s.tokens.len() {
                    return Err(Error::format(source_name, k + 1, "entity index outside sentence"));
                }
                if s.head_idx == s.tail_idx {
                    return Err(Error::format(source_name, k + 1, "head_idx equals tail_idx"));
                }
            }
            bags.push(bag);
        }
        Ok(BagDataset { bags })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for bag in &self.bags {
            out.push_str(&serde_json::to_string(bag).expect("bags serialize"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_jsonl())
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }
}

/// Sentence as token ids, truncated to `max_len`; entity positions past the cut
/// are clamped onto the last kept token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub ids: Vec<usize>,
    pub head: usize,
    pub tail: usize,
}

impl EncodedSentence {
    pub fn new(sentence: &BagSentence, vocab: &Vocabulary, max_len: usize) -> Result<Self> {
        Self::from_ids(sentence.tokens.iter().map(|t| vocab.id(t)).collect(), sentence.head_idx, sentence.tail_idx, max_len)
    }

    pub fn from_ids(mut ids: Vec<usize>, head: usize, tail: usize, max_len: usize) -> Result<Self> {
        if ids.is_empty() || head >= ids.len() || tail >= ids.len() {
            return Err(Error::InvalidArgument("entity index outside sentence".into()));
        }
        ids.truncate(max_len);
        let last = ids.len() - 1;
        Ok(EncodedSentence {
            ids,
            head: head.min(last),
            tail: tail.min(last),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub word: Array2<f64>,
    pub pos_head: Array2<f64>,
    pub pos_tail: Array2<f64>,
    /// `n_filters x (window * input_dim)`; column `k * input_dim + d` reads
    /// feature `d` of the `k`-th token in the window.
    pub conv_w: Array2<f64>,
    pub conv_b: Array1<f64>,
    /// Diagonal of the shared bilinear attention matrix.
    pub att_diag: Array1<f64>,
    pub rel_query: Array2<f64>,
    pub re_w: Array2<f64>,
    pub re_b: Array1<f64>,
}

impl EncoderParams {
    /// Embedding tables uniform in `±1/sqrt(dim)`, dense layers Glorot-uniform,
    /// attention diagonal at 1, biases at 0.
    pub fn new<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config;
        let width = c.window * c.input_dim();
        let h = c.hidden_dim();
        Ok(EncoderParams {
            word: uniform_matrix(c.vocab_size, c.word_dim, 1.0 / (c.word_dim as f64).sqrt(), rng),
            pos_head: uniform_matrix(c.n_positions(), c.pos_dim, 1.0 / (c.pos_dim as f64).sqrt(), rng),
            pos_tail: uniform_matrix(c.n_positions(), c.pos_dim, 1.0 / (c.pos_dim as f64).sqrt(), rng),
            conv_w: uniform_matrix(c.n_filters, width, xavier_bound(c.n_filters, width), rng),
            conv_b: uniform_vector(c.n_filters, 0.0, rng),
            att_diag: Array1::ones(h),
            rel_query: uniform_matrix(c.n_relations, h, xavier_bound(c.n_relations, h), rng),
            re_w: uniform_matrix(c.n_relations, h, xavier_bound(c.n_relations, h), rng),
            re_b: Array1::zeros(c.n_relations),
            config: config.clone(),
        })
    }

    /// Replaces the word table with pretrained vectors of matching shape.
    pub fn set_word_table(&mut self, table: Array2<f64>) -> Result<()> {
        if table.dim() != self.word.dim() {
            return Err(Error::DimensionMismatch(format!(
                "word table is {:?}, pretrained table is {:?}",
                self.word.dim(),
                table.dim()
            )));
        }
        self.word = table;
        Ok(())
    }

    /// Per-sentence forward with the optional dropout draw.
    pub fn encode_sentence(&self, s: &EncodedSentence, dropout: Option<&mut ChaCha8Rng>) -> SentenceCache {
        let c = &self.config;
        let input = embed_rows(s, self);
        let (pre, argmax) = pool(&input, s.len(), s.head, s.tail, self);
        let hidden: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let mask = match dropout {
            Some(rng) if c.dropout > 0.0 => {
                let keep = 1.0 / (1.0 - c.dropout);
                Some((0..hidden.len()).map(|_| if rng.random::<f64>() < c.dropout { 0.0 } else { keep }).collect::<Vec<_>>())
            }
            _ => None,
        };
        let output = match &mask {
            Some(m) => hidden.iter().zip(m).map(|(h, m)| h * m).collect(),
            None => hidden.clone(),
        };
        SentenceCache {
            sentence: s.clone(),
            input,
            argmax,
            hidden,
            mask,
            output,
        }
    }

    /// Forward pass with attention queried by `relation`.
    pub fn forward(
        &self,
        sentences: &[EncodedSentence],
        relation: usize,
        mut dropout: Option<&mut ChaCha8Rng>,
        keep_cache: bool,
    ) -> Result<BagForward> {
        if sentences.is_empty() {
            return Err(Error::EmptyBag);
        }
        if relation >= self.config.n_relations {
            return Err(Error::InvalidArgument(format!("relation {relation} out of range")));
        }
        let caches: Vec<SentenceCache> = sentences.iter().map(|s| self.encode_sentence(s, dropout.as_deref_mut())).collect();
        let xs: Vec<&[f64]> = caches.iter().map(|c| c.output.as_slice()).collect();
        let att = attention_forward(&xs, relation, self)?;
        let probs = re_score(&att.bag, self)?;
        Ok(BagForward {
            relation,
            probs,
            alpha: att.alpha,
            bag: att.bag,
            cache: keep_cache.then_some(caches),
        })
    }

    /// Inference: each relation scores its own attention-weighted bag vector,
    /// and the resulting logits are normalized together.
    pub fn infer(&self, sentences: &[EncodedSentence]) -> Result<Inference> {
        if sentences.is_empty() {
            return Err(Error::EmptyBag);
        }
        let caches: Vec<SentenceCache> = sentences.iter().map(|s| self.encode_sentence(s, None)).collect();
        let xs: Vec<&[f64]> = caches.iter().map(|c| c.output.as_slice()).collect();
        let m = self.config.n_relations;
        let mut logits = Vec::with_capacity(m);
        let mut alphas = Vec::with_capacity(m);
        for r in 0..m {
            let att = attention_forward(&xs, r, self)?;
            logits.push(dot(self.re_w.row(r).as_slice().expect("standard layout"), &att.bag) + self.re_b[r]);
            alphas.push(att.alpha);
        }
        Ok(Inference {
            probs: softmax(&logits),
            alphas,
        })
    }

    /// Accumulates gradients of the loss given `dL/dC_RE` for a cached forward pass.
    pub fn backward(&self, fwd: &BagForward, d_probs: &[f64], grads: &mut EncoderGrads) -> Result<()> {
        let caches = fwd.cache.as_ref().ok_or(Error::MissingCache)?;
        let h = self.config.hidden_dim();
        let d_logits = softmax_backward(&fwd.probs, d_probs);
        let mut d_bag = vec![0.0; h];
        for (r, &dz) in d_logits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grads.re_b[r] += dz;
            let w = self.re_w.row(r);
            let mut g = grads.re_w.row_mut(r);
            for i in 0..h {
                g[i] += dz * fwd.bag[i];
                d_bag[i] += dz * w[i];
            }
        }

        let rel = fwd.relation;
        let r_vec = self.rel_query.row(rel);
        let query: Vec<f64> = (0..h).map(|i| self.att_diag[i] * r_vec[i]).collect();
        let d_alpha: Vec<f64> = caches.iter().map(|c| dot(&d_bag, &c.output)).collect();
        let d_q = softmax_backward(&fwd.alpha, &d_alpha);
        for (j, cache) in caches.iter().enumerate() {
            let mut dx: Vec<f64> = d_bag.iter().map(|g| fwd.alpha[j] * g).collect();
            if d_q[j] != 0.0 {
                let mut g_r = grads.rel_query.row_mut(rel);
                for i in 0..h {
                    dx[i] += d_q[j] * query[i];
                    grads.att_diag[i] += d_q[j] * cache.output[i] * r_vec[i];
                    g_r[i] += d_q[j] * cache.output[i] * self.att_diag[i];
                }
            }
            self.sentence_backward(cache, &dx, grads);
        }
        Ok(())
    }

    fn sentence_backward(&self, cache: &SentenceCache, d_out: &[f64], grads: &mut EncoderGrads) {
        let c = &self.config;
        let (f_n, d_in, half) = (c.n_filters, c.input_dim(), c.window / 2);
        let len = cache.sentence.len();
        let mut d_input = vec![0.0; len * d_in];
        let mut touched = vec![false; len];
        for (idx, arg) in cache.argmax.iter().enumerate() {
            let Some(t) = *arg else { continue };
            let mut g = d_out[idx];
            if let Some(m) = &cache.mask {
                g *= m[idx];
            }
            let dz = g * (1.0 - cache.hidden[idx] * cache.hidden[idx]);
            if dz == 0.0 {
                continue;
            }
            let f = idx % f_n;
            grads.conv_b[f] += dz;
            let w = self.conv_w.row(f);
            let mut gw = grads.conv_w.row_mut(f);
            for k in 0..c.window {
                let Some(pos) = (t + k).checked_sub(half).filter(|&p| p < len) else { continue };
                touched[pos] = true;
                let row = &cache.input[pos * d_in..(pos + 1) * d_in];
                let d_row = &mut d_input[pos * d_in..(pos + 1) * d_in];
                for d in 0..d_in {
                    gw[k * d_in + d] += dz * row[d];
                    d_row[d] += dz * w[k * d_in + d];
                }
            }
        }
        let s = &cache.sentence;
        let (wd, pd) = (c.word_dim, c.pos_dim);
        for pos in (0..len).filter(|&p| touched[p]) {
            let row = &d_input[pos * d_in..(pos + 1) * d_in];
            grads.word.add_row(s.ids[pos], 1.0, &row[..wd]);
            grads.pos_head.add_row(c.position_index(pos as isize - s.head as isize), 1.0, &row[wd..wd + pd]);
            grads.pos_tail.add_row(c.position_index(pos as isize - s.tail as isize), 1.0, &row[wd + pd..]);
        }
    }

    pub fn shapes(&self) -> Vec<(&'static str, usize, usize)> {
        vec![
            ("enc.word", self.word.nrows(), self.word.ncols()),
            ("enc.pos_head", self.pos_head.nrows(), self.pos_head.ncols()),
            ("enc.pos_tail", self.pos_tail.nrows(), self.pos_tail.ncols()),
            ("enc.conv_w", self.conv_w.nrows(), self.conv_w.ncols()),
            ("enc.conv_b", 1, self.conv_b.len()),
            ("enc.att_diag", 1, self.att_diag.len()),
            ("enc.rel_query", self.rel_query.nrows(), self.rel_query.ncols()),
            ("enc.re_w", self.re_w.nrows(), self.re_w.ncols()),
            ("enc.re_b", 1, self.re_b.len()),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("enc.word", self.word.as_slice_mut().expect("standard layout")),
            ("enc.pos_head", self.pos_head.as_slice_mut().expect("standard layout")),
            ("enc.pos_tail", self.pos_tail.as_slice_mut().expect("standard layout")),
            ("enc.conv_w", self.conv_w.as_slice_mut().expect("standard layout")),
            ("enc.conv_b", self.conv_b.as_slice_mut().expect("standard layout")),
            ("enc.att_diag", self.att_diag.as_slice_mut().expect("standard layout")),
            ("enc.rel_query", self.rel_query.as_slice_mut().expect("standard layout")),
            ("enc.re_w", self.re_w.as_slice_mut().expect("standard layout")),
            ("enc.re_b", self.re_b.as_slice_mut().expect("standard layout")),
        ]
    }
}

/// Activations of one sentence kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceCache {
    pub sentence: EncodedSentence,
    /// Row-major `len x input_dim`.
    pub input: Vec<f64>,
    /// Winning position per pooled unit (`segment * n_filters + filter`); `None` for empty segments.
    pub argmax: Vec<Option<usize>>,
    pub hidden: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagForward {
    pub relation: usize,
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub bag: Vec<f64>,
    pub cache: Option<Vec<SentenceCache>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub probs: Vec<f64>,
    /// Attention weights under each relation's query.
    pub alphas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub scores: Vec<f64>,
    pub alpha: Vec<f64>,
    pub bag: Vec<f64>,
}

fn embed_rows(s: &EncodedSentence, params: &EncoderParams) -> Vec<f64> {
    let c = &params.config;
    let mut out = Vec::with_capacity(s.len() * c.input_dim());
    for (t, &id) in s.ids.iter().enumerate() {
        let id = if id < params.word.nrows() { id } else { UNK_ID };
        out.extend(params.word.row(id));
        out.extend(params.pos_head.row(c.position_index(t as isize - s.head as isize)));
        out.extend(params.pos_tail.row(c.position_index(t as isize - s.tail as isize)));
    }
    out
}

/// `len x (word_dim + 2 pos_dim)` input rows; ids outside the table read the unknown row.
pub fn embed_sentence(s: &EncodedSentence, params: &EncoderParams) -> Array2<f64> {
    let rows = embed_rows(s, params);
    Array2::from_shape_vec((s.len(), params.config.input_dim()), rows).expect("row count matches")
}

fn segment(t: usize, lo: usize, hi: usize) -> usize {
    if t <= lo {
        0
    } else if t <= hi {
        1
    } else {
        2
    }
}

/// Same-length convolution followed by per-segment max, before the nonlinearity.
fn pool(input: &[f64], len: usize, head: usize, tail: usize, params: &EncoderParams) -> (Vec<f64>, Vec<Option<usize>>) {
    let c = &params.config;
    let (f_n, d_in, half) = (c.n_filters, c.input_dim(), c.window / 2);
    let (lo, hi) = (head.min(tail), head.max(tail));
    let mut best = vec![0.0; 3 * f_n];
    let mut arg: Vec<Option<usize>> = vec![None; 3 * f_n];
    for f in 0..f_n {
        let w = params.conv_w.row(f);
        let w = w.as_slice().expect("standard layout");
        for t in 0..len {
            let mut z = params.conv_b[f];
            for k in 0..c.window {
                let Some(pos) = (t + k).checked_sub(half).filter(|&p| p < len) else { continue };
                z += dot(&w[k * d_in..(k + 1) * d_in], &input[pos * d_in..(pos + 1) * d_in]);
            }
            let idx = segment(t, lo, hi) * f_n + f;
            if arg[idx].is_none() || z > best[idx] {
                best[idx] = z;
                arg[idx] = Some(t);
            }
        }
    }
    (best, arg)
}

/// Pooled sentence vector `tanh(piecewise max)` of length `3 n_filters`, without dropout.
pub fn pcnn_forward(input: &Array2<f64>, head: usize, tail: usize, params: &EncoderParams) -> Result<Vec<f64>> {
    let c = &params.config;
    if input.ncols() != c.input_dim() || input.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "input is {:?}, expected rows of width {}",
            input.dim(),
            c.input_dim()
        )));
    }
    let flat: Vec<f64> = input.iter().copied().collect();
    let (pre, _) = pool(&flat, input.nrows(), head, tail, params);
    Ok(pre.into_iter().map(f64::tanh).collect())
}

/// `q_j = x_j . (A r)`, `alpha = softmax(q)`, bag vector `sum alpha_j x_j`.
pub fn attention_forward(xs: &[&[f64]], relation: usize, params: &EncoderParams) -> Result<AttentionOutput> {
    if xs.is_empty() {
        return Err(Error::EmptyBag);
    }
    let h = params.att_diag.len();
    if xs.iter().any(|x| x.len() != h) {
        return Err(Error::DimensionMismatch(format!("sentence vectors must have length {h}")));
    }
    let r = params.rel_query.row(relation);
    let query: Vec<f64> = (0..h).map(|i| params.att_diag[i] * r[i]).collect();
    let scores: Vec<f64> = xs.iter().map(|x| dot(x, &query)).collect();
    let alpha = softmax(&scores);
    let mut bag = vec![0.0; h];
    for (a, x) in alpha.iter().zip(xs) {
        for (b, v) in bag.iter_mut().zip(x.iter()) {
            *b += a * v;
        }
    }
    Ok(AttentionOutput { scores, alpha, bag })
}

/// `softmax(W_RE x + b_RE)`.
pub fn re_score(bag: &[f64], params: &EncoderParams) -> Result<Vec<f64>> {
    if bag.len() != params.re_w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "bag vector has length {}, expected {}",
            bag.len(),
            params.re_w.ncols()
        )));
    }
    let logits: Vec<f64> = params
        .re_w
        .rows()
        .into_iter()
        .zip(&params.re_b)
        .map(|(w, b)| dot(w.as_slice().expect("standard layout"), bag) + b)
        .collect();
    Ok(softmax(&logits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub word: RowGrads,
    pub pos_head: RowGrads,
    pub pos_tail: RowGrads,
    pub conv_w: Array2<f64>,
    pub conv_b: Array1<f64>,
    pub att_diag: Array1<f64>,
    pub rel_query: Array2<f64>,
    pub re_w: Array2<f64>,
    pub re_b: Array1<f64>,
}

impl EncoderGrads {
    pub fn zeros(p: &EncoderParams) -> Self {
        EncoderGrads {
            word: RowGrads::new(p.word.ncols()),
            pos_head: RowGrads::new(p.pos_head.ncols()),
            pos_tail: RowGrads::new(p.pos_tail.ncols()),
            conv_w: Array2::zeros(p.conv_w.raw_dim()),
            conv_b: Array1::zeros(p.conv_b.len()),
            att_diag: Array1::zeros(p.att_diag.len()),
            rel_query: Array2::zeros(p.rel_query.raw_dim()),
            re_w: Array2::zeros(p.re_w.raw_dim()),
            re_b: Array1::zeros(p.re_b.len()),
        }
    }

    pub fn merge(&mut self, o: &EncoderGrads) {
        self.word.merge(&o.word);
        self.pos_head.merge(&o.pos_head);
        self.pos_tail.merge(&o.pos_tail);
        self.conv_w += &o.conv_w;
        self.conv_b += &o.conv_b;
        self.att_diag += &o.att_diag;
        self.rel_query += &o.rel_query;
        self.re_w += &o.re_w;
        self.re_b += &o.re_b;
    }

    pub fn scale(&mut self, s: f64) {
        self.word.scale(s);
        self.pos_head.scale(s);
        self.pos_tail.scale(s);
        self.conv_w *= s;
        self.conv_b *= s;
        self.att_diag *= s;
        self.rel_query *= s;
        self.re_w *= s;
        self.re_b *= s;
    }

    pub fn blocks(&self) -> Vec<(&'static str, GradView<'_>)> {
        vec![
            ("enc.word", GradView::Rows(&self.word)),
            ("enc.pos_head", GradView::Rows(&self.pos_head)),
            ("enc.pos_tail", GradView::Rows(&self.pos_tail)),
            ("enc.conv_w", GradView::Dense(self.conv_w.as_slice().expect("standard layout"))),
            ("enc.conv_b", GradView::Dense(self.conv_b.as_slice().expect("standard layout"))),
            ("enc.att_diag", GradView::Dense(self.att_diag.as_slice().expect("standard layout"))),
            ("enc.rel_query", GradView::Dense(self.rel_query.as_slice().expect("standard layout"))),
            ("enc.re_w", GradView::Dense(self.re_w.as_slice().expect("standard layout"))),
            ("enc.re_b", GradView::Dense(self.re_b.as_slice().expect("standard layout"))),
        ]
    }
}
