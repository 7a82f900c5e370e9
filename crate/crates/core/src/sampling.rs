//! O(1) discrete sampling for edges and negative vertices.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::corpus::CooccurrenceGraph;
use crate::error::{Error, Result};

/// Exponent applied to weighted degrees for the negative-sampling noise distribution.
pub const NOISE_POWER: f64 = 0.75;

/// Alias-method sampler over a fixed discrete distribution.
#[derive(Debug, Clone)]
pub struct AliasTable {
    probabilities: Vec<f64>,
    support: usize,
    alias: WeightedAliasIndex<f64>,
}

impl AliasTable {
    /// Builds a sampler drawing index `k` with probability `weights[k] / sum`.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("sampling weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || total <= 0.0 {
            return Err(Error::NoSampleableEdges);
        }
        let alias = WeightedAliasIndex::new(weights.to_vec()).map_err(|_| Error::NoSampleableEdges)?;
        Ok(AliasTable {
            probabilities: weights.iter().map(|w| w / total).collect(),
            support: weights.iter().filter(|&&w| w > 0.0).count(),
            alias,
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.probabilities.get(index).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Number of outcomes with nonzero probability.
    pub fn support(&self) -> usize {
        self.support
    }
}

/// Samples edge indices proportionally to edge weight.
pub fn build_edge_sampler(graph: &CooccurrenceGraph) -> Result<AliasTable> {
    let weights: Vec<f64> = graph.edges().iter().map(|e| e.weight).collect();
    AliasTable::new(&weights).map_err(|e| match e {
        Error::InvalidArgument(_) => e,
        _ => Error::NoSampleableEdges,
    })
}

/// Samples vertices proportionally to `degree^0.75`.
pub fn noise_sampler_from_degrees(degrees: &[f64]) -> Result<AliasTable> {
    let weights: Vec<f64> = degrees.iter().map(|d| d.max(0.0).powf(NOISE_POWER)).collect();
    AliasTable::new(&weights)
}

pub fn build_noise_sampler(graph: &CooccurrenceGraph) -> Result<AliasTable> {
    noise_sampler_from_degrees(&graph.weighted_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Edge;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frequencies(table: &AliasTable, draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; table.len()];
        for _ in 0..draws {
            counts[table.sample(&mut rng)] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    fn graph(weights: &[f64]) -> CooccurrenceGraph {
        let edges = weights
            .iter()
            .enumerate()
            .map(|(k, &w)| Edge { i: 2 * k, j: 2 * k + 1, count: 1, weight: w })
            .collect();
        CooccurrenceGraph::from_edges(2 * weights.len(), edges).unwrap()
    }

    #[test]
    fn single_edge_always_drawn() {
        let t = build_edge_sampler(&graph(&[0.3])).unwrap();
        assert_eq!(frequencies(&t, 1000, 1), vec![1.0]);
    }

    #[test]
    fn edge_frequencies_track_weights() {
        let f = frequencies(&build_edge_sampler(&graph(&[1.0, 1.0])).unwrap(), 100_000, 2);
        assert!((f[0] - 0.5).abs() < 0.01 && (f[1] - 0.5).abs() < 0.01, "{f:?}");
        let f = frequencies(&build_edge_sampler(&graph(&[0.75, 0.25])).unwrap(), 100_000, 3);
        assert!((f[0] - 0.75).abs() < 0.01 && (f[1] - 0.25).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn zero_weight_graph_is_rejected() {
        let err = build_edge_sampler(&graph(&[0.0, 0.0])).unwrap_err();
        assert_eq!(err.to_string(), "graph has no sampleable edges");
        assert!(build_edge_sampler(&graph(&[])).is_err());
    }

    #[test]
    fn noise_distribution_uses_three_quarter_power() {
        let t = noise_sampler_from_degrees(&[16.0, 1.0, 0.0]).unwrap();
        let f = frequencies(&t, 100_000, 4);
        assert_eq!(f[2], 0.0);
        let ratio = f[0] / f[1];
        assert!((ratio - 8.0).abs() / 8.0 < 0.02, "ratio {ratio}");
        assert_eq!(t.support(), 2);
    }

    #[test]
    fn uniform_degrees_sample_uniformly() {
        let t = build_noise_sampler(&graph(&[1.0, 1.0])).unwrap();
        for p in frequencies(&t, 100_000, 5) {
            assert!((p - 0.25).abs() < 0.01, "{p}");
        }
    }
}
