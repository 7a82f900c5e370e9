use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{tokenize, TokenizedSentence};
use crate::error::{Error, Result};
use crate::formats::{read_to_string, write_string};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: usize,
    pub canonical: String,
    /// Always starts with the canonical name.
    pub surface_forms: Vec<String>,
}

/// Closed set of known entities, indexed by dense id.
#[derive(Debug, Clone, Default)]
pub struct EntityCatalog {
    entities: Vec<Entity>,
    by_tokens: HashMap<Vec<String>, usize>,
    max_form_len: usize,
}

impl EntityCatalog {
    /// Builds a catalog from `(canonical, aliases)` rows; ids follow row order.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: Into<String>,
    {
        let mut catalog = EntityCatalog::default();
        for (canonical, aliases) in entries {
            let id = catalog.entities.len();
            catalog.push(id, canonical.into(), aliases.into_iter().map(Into::into).collect(), 0)?;
        }
        Ok(catalog)
    }

    fn push(&mut self, id: usize, canonical: String, aliases: Vec<String>, line: usize) -> Result<()> {
        let mut forms = vec![canonical.clone()];
        for alias in aliases {
            if !forms.contains(&alias) {
                forms.push(alias);
            }
        }
        for form in &forms {
            let key = tokenize(form);
            if key.is_empty() {
                return Err(Error::format(
                    "catalog",
                    line,
                    format!("surface form {form:?} of entity {id} has no tokens"),
                ));
            }
            if let Some(&other) = self.by_tokens.get(&key) {
                if other != id {
                    return Err(Error::AmbiguousSurfaceForm {
                        form: form.clone(),
                        first: format!("{other} ({})", self.entities[other].canonical),
                        second: format!("{id} ({canonical})"),
                    });
                }
            }
            self.max_form_len = self.max_form_len.max(key.len());
            self.by_tokens.insert(key, id);
        }
        self.entities.push(Entity {
            id,
            canonical,
            surface_forms: forms,
        });
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `id<TAB>canonical<TAB>alias...` lines. Ids must be a permutation of `0..n`.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut rows: Vec<(usize, usize, String, Vec<String>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id_field = fields.next().unwrap_or_default();
            let id: usize = id_field.trim().parse().map_err(|_| {
                Error::format(source_name, lineno, format!("entity id {id_field:?} is not a non-negative integer"))
            })?;
            let canonical = match fields.next() {
                Some(c) if !c.is_empty() => c.to_string(),
                _ => return Err(Error::format(source_name, lineno, "missing canonical name")),
            };
            let aliases: Vec<String> = fields.filter(|a| !a.is_empty()).map(str::to_string).collect();
            rows.push((lineno, id, canonical, aliases));
        }
        rows.sort_by_key(|r| r.1);
        let mut catalog = EntityCatalog::default();
        for (expected, (lineno, id, canonical, aliases)) in rows.into_iter().enumerate() {
            if id != expected {
                return Err(Error::format(
                    source_name,
                    lineno,
                    format!("entity ids must be dense and unique; expected {expected}, found {id}"),
                ));
            }
            catalog.push(id, canonical, aliases, lineno)?;
        }
        Ok(catalog)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entities {
            let _ = write!(out, "{}", e.id);
            for form in &e.surface_forms {
                let _ = write!(out, "\t{form}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Entity whose surface form tokenizes to exactly `tokens`.
    pub fn lookup_tokens(&self, tokens: &[String]) -> Option<usize> {
        self.by_tokens.get(tokens).copied()
    }

    /// Finds the entity id for a surface string.
    pub fn lookup(&self, surface: &str) -> Option<usize> {
        self.lookup_tokens(&tokenize(surface))
    }

    /// Tokenizes `raw` and finds leftmost-longest, case-sensitive catalog matches.
    pub fn match_sentence(&self, raw: &str) -> TokenizedSentence {
        let tokens = tokenize(raw);
        let mut mentions = Vec::new();
        let mut start = 0;
        while start < tokens.len() {
            let longest = self.max_form_len.min(tokens.len() - start);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.lookup_tokens(&tokens[start..start + len]).map(|id| (id, len)));
            match hit {
                Some((id, len)) => {
                    mentions.push(super::Mention {
                        entity: id,
                        start,
                        end: start + len,
                    });
                    start += len;
                }
                None => start += 1,
            }
        }
        TokenizedSentence { tokens, mentions }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Mention;

    fn catalog(rows: &[&[&str]]) -> EntityCatalog {
        EntityCatalog::from_entries(
            rows.iter()
                .map(|r| (r[0].to_string(), r[1..].iter().map(|s| s.to_string()).collect())),
        )
        .unwrap()
    }

    #[test]
    fn parses_two_rows() {
        let c = EntityCatalog::parse("0\tObama\n1\tHawaii\n", "t").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(0).unwrap().canonical, "Obama");
        assert_eq!(c.get(1).unwrap().surface_forms, vec!["Hawaii".to_string()]);
    }

    #[test]
    fn rejects_shared_surface_form() {
        let err = EntityCatalog::parse("0\tParis\n1\tParis Hilton\tParis\n", "t").unwrap_err();
        assert!(err.to_string().contains("ambiguous surface form"), "{err}");
        assert!(err.to_string().contains("Paris Hilton"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = EntityCatalog::parse("0\tA\nx\tB\n", "cat.tsv").unwrap_err();
        assert!(err.to_string().starts_with("cat.tsv:2:"), "{err}");
        let err = EntityCatalog::parse("0\tA\n2\tB\n", "cat.tsv").unwrap_err();
        assert!(err.to_string().contains("dense"), "{err}");
    }

    #[test]
    fn matches_names_next_to_punctuation() {
        let c = catalog(&[&["Obama"], &["Hawaii"]]);
        let s = c.match_sentence("Obama was born in Honolulu, Hawaii.");
        assert_eq!(s.tokens.len(), 8);
        assert_eq!(
            s.mentions,
            vec![
                Mention { entity: 0, start: 0, end: 1 },
                Mention { entity: 1, start: 6, end: 7 }
            ]
        );
    }

    #[test]
    fn no_entities_no_mentions() {
        let c = catalog(&[&["Obama"]]);
        assert!(c.match_sentence("nothing to see here").mentions.is_empty());
        assert!(c.match_sentence("obama lowercase").mentions.is_empty());
    }

    #[test]
    fn prefers_longest_form() {
        let c = catalog(&[&["New York"], &["New York City"]]);
        let s = c.match_sentence("I love New York City .");
        assert_eq!(s.mentions, vec![Mention { entity: 1, start: 2, end: 5 }]);
    }

    // Brute force: enumerate every matching span, then greedily keep the
    // leftmost start, longest length, skipping overlaps.
    fn brute_force(c: &EntityCatalog, tokens: &[String]) -> Vec<Mention> {
        let mut spans = Vec::new();
        for s in 0..tokens.len() {
            for e in s + 1..=tokens.len() {
                if let Some(id) = c.lookup_tokens(&tokens[s..e]) {
                    spans.push((s, e, id));
                }
            }
        }
        spans.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut out: Vec<Mention> = Vec::new();
        let mut covered = 0;
        for (s, e, id) in spans {
            if s >= covered {
                out.push(Mention { entity: id, start: s, end: e });
                covered = e;
            }
        }
        out
    }

    #[test]
    fn matcher_agrees_with_brute_force() {
        let c = catalog(&[&["a"], &["a b"], &["b c d"], &["c"], &["d", "x y"], &["y z"]]);
        let words = ["a", "b", "c", "d", "x", "y", "z", "q"];
        let mut state = 7u64;
        for _ in 0..500 {
            let mut toks = Vec::new();
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let len = (state >> 60) as usize + 1;
            for _ in 0..len {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                toks.push(words[(state >> 61) as usize].to_string());
            }
            let s = c.match_sentence(&toks.join(" "));
            assert_eq!(s.mentions, brute_force(&c, &toks), "{toks:?}");
        }
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let rows: Vec<(String, Vec<String>)> = (0..1000)
            .map(|i| (format!("Entity{i}"), if i % 3 == 0 { vec![format!("E-{i}"), format!("ent {i}")] } else { vec![] }))
            .collect();
        let c = EntityCatalog::from_entries(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.tsv");
        c.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = EntityCatalog::load(&path).unwrap();
        assert_eq!(loaded.entities(), c.entities());
        loaded.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
