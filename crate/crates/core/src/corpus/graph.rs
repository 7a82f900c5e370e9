use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::TokenizedSentence;
use crate::error::{Error, Result};
use crate::formats::{read_to_string, write_string};

/// Undirected edge stored once with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub count: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceGraph {
    n_vertices: usize,
    edges: Vec<Edge>,
}

/// Sentence-scoped pair counts, mergeable across shards.
#[derive(Debug, Clone, Default)]
pub struct CooccurrenceCounts {
    n_entities: usize,
    counts: HashMap<(usize, usize), u64>,
}

impl CooccurrenceCounts {
    pub fn new(n_entities: usize) -> Self {
        CooccurrenceCounts {
            n_entities,
            counts: HashMap::new(),
        }
    }

    /// Counts every unordered pair of distinct entities in the sentence once.
    pub fn add_sentence(&mut self, sentence: &TokenizedSentence) -> Result<()> {
        let ids = sentence.entity_set();
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.n_entities) {
            return Err(Error::InvalidArgument(format!(
                "mention of entity {bad} but the catalog has {} entities",
                self.n_entities
            )));
        }
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                *self.counts.entry((i, j)).or_insert(0) += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: CooccurrenceCounts) {
        for (pair, c) in other.counts {
            *self.counts.entry(pair).or_insert(0) += c;
        }
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// Prunes pairs below `min_count`, then weights survivors by
    /// `ln(count) / ln(max_count)`; all weights are 1 when `max_count == 1`.
    pub fn into_graph(self, min_count: u64) -> Result<CooccurrenceGraph> {
        if min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be at least 1".into()));
        }
        let mut kept: Vec<((usize, usize), u64)> =
            self.counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        kept.sort_unstable_by_key(|&(pair, _)| pair);
        let max_count = kept.iter().map(|&(_, c)| c).max().unwrap_or(0);
        let denom = (max_count as f64).ln();
        let edges = kept
            .into_iter()
            .map(|((i, j), count)| Edge {
                i,
                j,
                count,
                weight: if max_count > 1 { (count as f64).ln() / denom } else { 1.0 },
            })
            .collect();
        Ok(CooccurrenceGraph {
            n_vertices: self.n_entities,
            edges,
        })
    }
}

pub fn build_cooccurrence_graph<'a, I>(sentences: I, n_entities: usize, min_count: u64) -> Result<CooccurrenceGraph>
where
    I: IntoIterator<Item = &'a TokenizedSentence>,
{
    let mut counts = CooccurrenceCounts::new(n_entities);
    for s in sentences {
        counts.add_sentence(s)?;
    }
    counts.into_graph(min_count)
}

/// Shards the sentences over `threads` workers and merges the partial counts.
/// The result is identical to [`build_cooccurrence_graph`].
pub fn build_cooccurrence_graph_parallel(
    sentences: &[TokenizedSentence],
    n_entities: usize,
    min_count: u64,
    threads: usize,
) -> Result<CooccurrenceGraph> {
    let threads = threads.max(1);
    if threads == 1 {
        return build_cooccurrence_graph(sentences, n_entities, min_count);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let shard = sentences.len().div_ceil(threads).max(1);
    let partials: Vec<Result<CooccurrenceCounts>> = pool.install(|| {
        sentences
            .par_chunks(shard)
            .map(|chunk| {
                let mut c = CooccurrenceCounts::new(n_entities);
                for s in chunk {
                    c.add_sentence(s)?;
                }
                Ok(c)
            })
            .collect()
    });
    let mut total = CooccurrenceCounts::new(n_entities);
    for p in partials {
        total.merge(p?);
    }
    total.into_graph(min_count)
}

impl CooccurrenceGraph {
    /// Builds a graph from explicit edges; pairs are normalized to `i < j`.
    pub fn from_edges(n_vertices: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| if e.i > e.j { Edge { i: e.j, j: e.i, ..e } } else { e })
            .collect();
        edges.sort_by_key(|e| (e.i, e.j));
        for (k, e) in edges.iter().enumerate() {
            if e.i == e.j {
                return Err(Error::InvalidArgument(format!("self-loop on vertex {}", e.i)));
            }
            if e.j >= n_vertices {
                return Err(Error::InvalidArgument(format!("edge ({}, {}) out of range", e.i, e.j)));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::InvalidArgument(format!("edge ({}, {}) has invalid weight", e.i, e.j)));
            }
            if k > 0 && (edges[k - 1].i, edges[k - 1].j) == (e.i, e.j) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        Ok(CooccurrenceGraph { n_vertices, edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n_vertices];
        for e in &self.edges {
            deg[e.i] += e.weight;
            deg[e.j] += e.weight;
        }
        deg
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("#vertices={}\n", self.n_vertices);
        for e in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{}\t{:.9}", e.i, e.j, e.count, e.weight);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let n_vertices = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#vertices=")
                .and_then(|n| n.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::format(source_name, 1, "expected header `#vertices=<n>`"))?,
            None => return Err(Error::format(source_name, 1, "empty graph file")),
        };
        let mut edges = Vec::new();
        let mut prev: Option<(usize, usize)> = None;
        for (lineno, line) in lines {
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::format(source_name, lineno, "expected `i<TAB>j<TAB>count<TAB>weight`"));
            }
            let bad = |what: &str| Error::format(source_name, lineno, format!("invalid {what}"));
            let i: usize = fields[0].parse().map_err(|_| bad("vertex i"))?;
            let j: usize = fields[1].parse().map_err(|_| bad("vertex j"))?;
            let count: u64 = fields[2].parse().map_err(|_| bad("count"))?;
            let weight: f64 = fields[3].parse().map_err(|_| bad("weight"))?;
            if i >= j || j >= n_vertices {
                return Err(Error::format(source_name, lineno, "edge must satisfy i < j < vertices"));
            }
            if count == 0 || !(0.0..=1.0).contains(&weight) {
                return Err(Error::format(source_name, lineno, "count must be >= 1 and weight in [0,1]"));
            }
            if prev.is_some_and(|p| p >= (i, j)) {
                return Err(Error::format(source_name, lineno, "edges must be sorted and unique"));
            }
            prev = Some((i, j));
            edges.push(Edge { i, j, count, weight });
        }
        Ok(CooccurrenceGraph { n_vertices, edges })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityCatalog;
    use proptest::prelude::*;

    fn sentences() -> (EntityCatalog, Vec<TokenizedSentence>) {
        let c = EntityCatalog::from_entries(vec![
            ("Obama", vec![]),
            ("Hawaii", vec![]),
            ("Paris", vec![]),
            ("France", vec![]),
        ])
        .unwrap();
        let s = ["Obama was born in Hawaii .", "Obama visited Hawaii .", "Paris is in France ."]
            .iter()
            .map(|r| c.match_sentence(r))
            .collect();
        (c, s)
    }

    #[test]
    fn weights_follow_log_ratio() {
        let (c, s) = sentences();
        let g = build_cooccurrence_graph(&s, c.len(), 1).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!((g.edges()[0].i, g.edges()[0].j, g.edges()[0].count), (0, 1, 2));
        assert_eq!(g.edges()[0].weight, 1.0);
        assert_eq!((g.edges()[1].i, g.edges()[1].j, g.edges()[1].count), (2, 3, 1));
        assert_eq!(g.edges()[1].weight, 0.0);
    }

    #[test]
    fn pruning_happens_before_max() {
        let (c, s) = sentences();
        let g = build_cooccurrence_graph(&s, c.len(), 2).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].weight, 1.0);
    }

    #[test]
    fn repeated_mention_counts_once() {
        let c = EntityCatalog::from_entries(vec![("A", vec![]), ("B", vec![])]).unwrap();
        let s = c.match_sentence("A met B and A again");
        let g = build_cooccurrence_graph([&s], 2, 1).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].count, 1);
        assert_eq!(g.edges()[0].weight, 1.0);
    }

    #[test]
    fn empty_stream_gives_empty_graph() {
        let g = build_cooccurrence_graph(std::iter::empty(), 5, 1).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.n_vertices(), 5);
    }

    #[test]
    fn rejects_out_of_range_mentions() {
        let (c, s) = sentences();
        assert!(build_cooccurrence_graph(&s, c.len() - 1, 1).is_err());
    }

    #[test]
    fn file_round_trip() {
        let (c, s) = sentences();
        let g = build_cooccurrence_graph(&s, c.len(), 1).unwrap();
        let text = g.to_tsv();
        assert!(text.starts_with("#vertices=4\n0\t1\t2\t1.000000000\n"));
        let back = CooccurrenceGraph::parse(&text, "g").unwrap();
        assert_eq!(back.to_tsv(), text);
        assert!(CooccurrenceGraph::parse("#vertices=2\n1\t0\t1\t0.5\n", "g").is_err());
        assert!(CooccurrenceGraph::parse("vertices=2\n", "g").is_err());
    }

    fn arb_sentences() -> impl Strategy<Value = Vec<Vec<usize>>> {
        prop::collection::vec(prop::collection::vec(0usize..12, 0..6), 0..60)
    }

    fn to_sentences(raw: &[Vec<usize>]) -> Vec<TokenizedSentence> {
        raw.iter()
            .map(|ids| TokenizedSentence {
                tokens: ids.iter().map(|i| format!("e{i}")).collect(),
                mentions: ids
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| crate::corpus::Mention { entity: e, start: k, end: k + 1 })
                    .collect(),
            })
            .collect()
    }

    proptest! {
        #[test]
        fn permutation_and_sharding_invariant(raw in arb_sentences(), min_count in 1u64..4, seed in any::<u64>()) {
            let s = to_sentences(&raw);
            let g = build_cooccurrence_graph(&s, 12, min_count).unwrap();
            let mut shuffled = s.clone();
            let mut st = seed;
            for k in (1..shuffled.len()).rev() {
                st = st.wrapping_mul(6364136223846793005).wrapping_add(1);
                shuffled.swap(k, (st >> 33) as usize % (k + 1));
            }
            prop_assert_eq!(&build_cooccurrence_graph(&shuffled, 12, min_count).unwrap(), &g);
            prop_assert_eq!(&build_cooccurrence_graph_parallel(&s, 12, min_count, 3).unwrap(), &g);
        }

        #[test]
        fn weights_bounded_and_max_is_one(raw in arb_sentences(), min_count in 1u64..4) {
            let g = build_cooccurrence_graph(&to_sentences(&raw), 12, min_count).unwrap();
            for e in g.edges() {
                prop_assert!(e.i < e.j);
                prop_assert!((0.0..=1.0).contains(&e.weight));
                prop_assert!(e.count >= min_count);
            }
            if !g.is_empty() {
                let max = g.edges().iter().map(|e| e.weight).fold(0.0, f64::max);
                prop_assert_eq!(max, 1.0);
            }
        }

        #[test]
        fn raising_min_count_never_adds_edges(raw in arb_sentences(), min_count in 1u64..4) {
            let s = to_sentences(&raw);
            let lo = build_cooccurrence_graph(&s, 12, min_count).unwrap();
            let hi = build_cooccurrence_graph(&s, 12, min_count + 1).unwrap();
            let lo_pairs: Vec<_> = lo.edges().iter().map(|e| (e.i, e.j)).collect();
            for e in hi.edges() {
                prop_assert!(lo_pairs.contains(&(e.i, e.j)));
            }
        }
    }
}
