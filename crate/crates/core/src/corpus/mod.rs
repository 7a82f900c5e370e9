//! Entity mention matching over raw text and the weighted co-occurrence graph.

mod catalog;
mod graph;

pub use catalog::{EntityCatalog, Entity};
pub use graph::{build_cooccurrence_graph, build_cooccurrence_graph_parallel, CooccurrenceCounts, CooccurrenceGraph, Edge};

/// A catalog entity found at tokens `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention {
    pub entity: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
    /// Sorted by start, non-overlapping.
    pub mentions: Vec<Mention>,
}

impl TokenizedSentence {
    /// Distinct entity ids mentioned in the sentence, ascending.
    pub fn entity_set(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.mentions.iter().map(|m| m.entity).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Splits on whitespace after detaching every ASCII punctuation character
/// into its own token.
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in raw.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_ascii_punctuation() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(
            tokenize("Obama was born in Honolulu, Hawaii."),
            vec!["Obama", "was", "born", "in", "Honolulu", ",", "Hawaii", "."]
        );
        assert_eq!(tokenize("Fort-de-France"), vec!["Fort", "-", "de", "-", "France"]);
        assert_eq!(tokenize("  \t "), Vec::<String>::new());
        assert_eq!(tokenize("São Paulo"), vec!["São", "Paulo"]);
    }
}
