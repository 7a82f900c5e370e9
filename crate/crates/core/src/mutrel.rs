//! Mutual relations between entity pairs, relation prototypes, and the
//! prototype-distance features fed to the classifier.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::embed::EntityEmbeddings;
use crate::error::{Error, Result};
use crate::formats::{parse_row, push_row, read_to_string, write_string};
use crate::math::{cosine, l2_distance, softmax};

/// Name of the "no relation" label, always relation id 0.
pub const NA_NAME: &str = "NA";
pub const NA_ID: usize = 0;

/// Interned relation names with `NA` at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for RelationSet {
    fn default() -> Self {
        Self::new()
    }
}

impl RelationSet {
    pub fn new() -> Self {
        let mut set = RelationSet {
            names: Vec::new(),
            index: HashMap::new(),
        };
        set.intern(NA_NAME);
        set
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = Self::new();
        for n in names {
            set.intern(n.as_ref());
        }
        set
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        self.names.iter().enumerate().fold(String::new(), |mut out, (i, n)| {
            let _ = writeln!(out, "{i}\t{n}");
            out
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv())
    }

    /// Reads `id<TAB>name` lines; ids must be dense and id 0 must be `NA`.
    pub fn load(path: &Path) -> Result<Self> {
        let src = path.display().to_string();
        let mut set = RelationSet::new();
        for (k, line) in read_to_string(path)?.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (id, name) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(&src, k + 1, "expected `id<TAB>name`"))?;
            let id: usize = id.parse().map_err(|_| Error::format(&src, k + 1, "invalid relation id"))?;
            if id == NA_ID {
                if name != NA_NAME {
                    return Err(Error::format(&src, k + 1, "relation 0 must be NA"));
                }
                continue;
            }
            if id != set.len() || set.id(name).is_some() {
                return Err(Error::format(&src, k + 1, "relation ids must be dense and names unique"));
            }
            set.intern(name);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleStore {
    triples: Vec<Triple>,
    relations: RelationSet,
}

impl TripleStore {
    /// Keeps the first occurrence of every duplicate triple.
    pub fn new(relations: RelationSet, triples: impl IntoIterator<Item = Triple>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for t in triples {
            if t.relation >= relations.len() {
                return Err(Error::InvalidArgument(format!("relation id {} out of range", t.relation)));
            }
            if seen.insert(t) {
                kept.push(t);
            }
        }
        Ok(TripleStore { triples: kept, relations })
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn relations(&self) -> &RelationSet {
        &self.relations
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn counts_per_relation(&self) -> Vec<usize> {
        let mut counts = vec![0; self.relations.len()];
        for t in &self.triples {
            counts[t.relation] += 1;
        }
        counts
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(out, "{}\t{}\t{}", t.head, self.relations.names[t.relation], t.tail);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv())
    }

    /// Parses `head<TAB>relation<TAB>tail`. Unknown relation names are
    /// interned into `relations` unless `strict` is set.
    pub fn parse(text: &str, source_name: &str, mut relations: RelationSet, strict: bool) -> Result<Self> {
        let mut triples = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::format(source_name, k + 1, "expected `head<TAB>relation<TAB>tail`"));
            }
            let id = |s: &str| s.parse::<usize>().map_err(|_| Error::format(source_name, k + 1, "invalid entity id"));
            let relation = match relations.id(f[1]) {
                Some(r) => r,
                None if strict => {
                    return Err(Error::format(source_name, k + 1, format!("unknown relation {:?}", f[1])))
                }
                None => relations.intern(f[1]),
            };
            triples.push(Triple {
                head: id(f[0])?,
                relation,
                tail: id(f[2])?,
            });
        }
        Self::new(relations, triples)
    }

    pub fn load(path: &Path, relations: RelationSet, strict: bool) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string(), relations, strict)
    }
}

/// `e_tail - e_head`.
pub fn mutual_relation(emb: &EntityEmbeddings, head: usize, tail: usize) -> Result<Vec<f64>> {
    let out_of_range = |id| Error::InvalidArgument(format!("entity {id} out of range (n = {})", emb.n()));
    let h = emb.row(head).ok_or_else(|| out_of_range(head))?;
    let t = emb.row(tail).ok_or_else(|| out_of_range(tail))?;
    Ok(t.iter().zip(h).map(|(t, h)| t - h).collect())
}

/// Layered relation taxonomy, coarsest layer first, leaves (= relation ids) last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationHierarchy {
    layers: Vec<HierarchyLayer>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyLayer {
    pub names: Vec<String>,
    /// Index into the previous layer; empty for the top layer.
    pub parents: Vec<usize>,
}

impl RelationHierarchy {
    /// Single layer containing only the relations.
    pub fn flat(relations: &RelationSet) -> Self {
        RelationHierarchy {
            layers: vec![HierarchyLayer {
                names: relations.names().to_vec(),
                parents: Vec::new(),
            }],
        }
    }

    /// Builds the hierarchy from per-relation ancestor chains (coarsest first).
    /// All chains must have the same length.
    pub fn from_ancestors(relations: &RelationSet, ancestors: &[Vec<String>]) -> Result<Self> {
        if ancestors.len() != relations.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ancestor chains for {} relations",
                ancestors.len(),
                relations.len()
            )));
        }
        let depth = ancestors.first().map_or(0, Vec::len);
        if ancestors.iter().any(|a| a.len() != depth) {
            return Err(Error::InvalidArgument("all relations need the same number of ancestors".into()));
        }
        let mut layers: Vec<HierarchyLayer> = Vec::with_capacity(depth + 1);
        let mut node_index: Vec<HashMap<&str, usize>> = vec![HashMap::new(); depth];
        for k in 0..depth {
            let mut layer = HierarchyLayer { names: Vec::new(), parents: Vec::new() };
            for chain in ancestors {
                let name = chain[k].as_str();
                let parent = (k > 0).then(|| node_index[k - 1][chain[k - 1].as_str()]);
                match node_index[k].get(name) {
                    Some(&existing) => {
                        if k > 0 && Some(layer.parents[existing]) != parent {
                            return Err(Error::InvalidArgument(format!(
                                "hierarchy node {name:?} in layer {} has two parents",
                                k + 1
                            )));
                        }
                    }
                    None => {
                        node_index[k].insert(name, layer.names.len());
                        layer.names.push(name.to_string());
                        if let Some(p) = parent {
                            layer.parents.push(p);
                        }
                    }
                }
            }
            layers.push(layer);
        }
        let leaf_parents = if depth == 0 {
            Vec::new()
        } else {
            ancestors.iter().map(|chain| node_index[depth - 1][chain[depth - 1].as_str()]).collect()
        };
        layers.push(HierarchyLayer {
            names: relations.names().to_vec(),
            parents: leaf_parents,
        });
        let h = RelationHierarchy { layers };
        h.validate()?;
        Ok(h)
    }

    /// Derives layers from slash-separated relation names, e.g.
    /// `/location/us_state/capital` → `/location` → `/location/us_state` → leaf.
    /// Shorter names repeat their last prefix so every leaf has the same depth.
    pub fn from_relation_names(relations: &RelationSet) -> Result<Self> {
        let parts: Vec<Vec<&str>> = relations
            .names()
            .iter()
            .map(|n| {
                let p: Vec<&str> = n.split('/').filter(|p| !p.is_empty()).collect();
                if p.is_empty() {
                    vec![n.as_str()]
                } else {
                    p
                }
            })
            .collect();
        let depth = parts.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let ancestors: Vec<Vec<String>> = parts
            .iter()
            .map(|p| {
                (0..depth - 1)
                    .map(|k| format!("/{}", p[..(k + 1).min(p.len())].join("/")))
                    .collect()
            })
            .collect();
        Self::from_ancestors(relations, &ancestors)
    }

    /// Parses `relation<TAB>ancestor_1<TAB>...` lines (coarsest ancestor first).
    pub fn parse(text: &str, source_name: &str, relations: &RelationSet) -> Result<Self> {
        let mut chains: Vec<Option<Vec<String>>> = vec![None; relations.len()];
        for (k, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let rel = fields.next().unwrap_or_default();
            let id = relations
                .id(rel)
                .ok_or_else(|| Error::format(source_name, k + 1, format!("unknown relation {rel:?}")))?;
            chains[id] = Some(fields.map(str::to_string).collect());
        }
        let chains = chains
            .into_iter()
            .enumerate()
            .map(|(id, c)| {
                c.ok_or_else(|| Error::OrphanNode {
                    layer: 0,
                    node: relations.names()[id].clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let depth = chains.first().map_or(0, Vec::len);
        if let Some(bad) = chains.iter().position(|c| c.len() != depth) {
            return Err(Error::OrphanNode {
                layer: depth + 1,
                node: relations.names()[bad].clone(),
            });
        }
        Self::from_ancestors(relations, &chains)
    }

    pub fn load(path: &Path, relations: &RelationSet) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string(), relations)
    }

    pub fn layers(&self) -> &[HierarchyLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn leaves(&self) -> &HierarchyLayer {
        self.layers.last().expect("hierarchy has a leaf layer")
    }

    /// `relation<TAB>ancestor_1<TAB>...` per leaf, the inverse of [`RelationHierarchy::parse`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let last = self.layers.len() - 1;
        for (leaf, name) in self.leaves().names.iter().enumerate() {
            let mut chain = Vec::with_capacity(last);
            let mut node = leaf;
            for k in (1..=last).rev() {
                node = self.layers[k].parents[node];
                chain.push(self.layers[k - 1].names[node].as_str());
            }
            chain.push(name);
            chain.reverse();
            let (leaf_name, ancestors) = chain.split_first().expect("chain holds the leaf");
            let _ = write!(out, "{leaf_name}");
            for a in ancestors {
                let _ = write!(out, "\t{a}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv())
    }

    fn validate(&self) -> Result<()> {
        for (k, layer) in self.layers.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let above = self.layers[k - 1].names.len();
            if layer.parents.len() != layer.names.len() {
                let node = layer.names.get(layer.parents.len()).cloned().unwrap_or_default();
                return Err(Error::OrphanNode { layer: k + 1, node });
            }
            if let Some(i) = layer.parents.iter().position(|&p| p >= above) {
                return Err(Error::OrphanNode { layer: k + 1, node: layer.names[i].clone() });
            }
            let mut has_child = vec![false; above];
            for &p in &layer.parents {
                has_child[p] = true;
            }
            if let Some(i) = has_child.iter().position(|c| !c) {
                return Err(Error::InvalidArgument(format!(
                    "hierarchy node {:?} in layer {k} has no children",
                    self.layers[k - 1].names[i]
                )));
            }
        }
        Ok(())
    }
}

/// Prototype vectors for one hierarchy layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeLayer {
    pub names: Vec<String>,
    pub parents: Vec<usize>,
    pub vectors: Array2<f64>,
    /// Nodes with no supporting triples; their vector is zero.
    pub empty: Vec<bool>,
}

impl PrototypeLayer {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i).to_slice().expect("standard layout")
    }
}

/// Per-relation mean of mutual relations over the training triples, summed in
/// triple order. Relations without triples get the zero vector and are
/// flagged empty.
pub fn compute_leaf_prototypes(emb: &EntityEmbeddings, triples: &TripleStore) -> Result<PrototypeLayer> {
    let m = triples.n_relations();
    let mut sums = Array2::<f64>::zeros((m, emb.dim()));
    let mut counts = vec![0usize; m];
    for t in triples.triples() {
        let mr = mutual_relation(emb, t.head, t.tail)?;
        for (s, v) in sums.row_mut(t.relation).iter_mut().zip(mr) {
            *s += v;
        }
        counts[t.relation] += 1;
    }
    for (r, &c) in counts.iter().enumerate() {
        if c > 0 {
            sums.row_mut(r).mapv_inplace(|v| v / c as f64);
        }
    }
    Ok(PrototypeLayer {
        names: triples.relations().names().to_vec(),
        parents: Vec::new(),
        vectors: sums,
        empty: counts.iter().map(|&c| c == 0).collect(),
    })
}

/// All layers of relation prototypes, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    layers: Vec<PrototypeLayer>,
}

/// Averages children bottom-up; empty children are skipped, and a node whose
/// children are all empty is itself empty.
pub fn lift_prototypes(leaf: &PrototypeLayer, hierarchy: &RelationHierarchy) -> Result<PrototypeSet> {
    let leaves = hierarchy.leaves();
    if leaves.names.len() != leaf.len() {
        return Err(Error::DimensionMismatch(format!(
            "hierarchy has {} leaves, prototype layer has {} rows",
            leaves.names.len(),
            leaf.len()
        )));
    }
    let dim = leaf.vectors.ncols();
    let depth = hierarchy.depth();
    let mut out: Vec<PrototypeLayer> = Vec::with_capacity(depth);
    out.push(PrototypeLayer {
        names: leaf.names.clone(),
        parents: leaves.parents.clone(),
        vectors: leaf.vectors.clone(),
        empty: leaf.empty.clone(),
    });
    for k in (0..depth - 1).rev() {
        let layer = &hierarchy.layers()[k];
        let below = out.last().expect("child layer");
        let mut sums = Array2::<f64>::zeros((layer.names.len(), dim));
        let mut counts = vec![0usize; layer.names.len()];
        for (child, &parent) in below.parents.iter().enumerate() {
            if below.empty[child] {
                continue;
            }
            for (s, v) in sums.row_mut(parent).iter_mut().zip(below.row(child)) {
                *s += v;
            }
            counts[parent] += 1;
        }
        for (p, &c) in counts.iter().enumerate() {
            if c > 0 {
                sums.row_mut(p).mapv_inplace(|v| v / c as f64);
            }
        }
        out.push(PrototypeLayer {
            names: layer.names.clone(),
            parents: layer.parents.clone(),
            vectors: sums,
            empty: counts.iter().map(|&c| c == 0).collect(),
        });
    }
    out.reverse();
    Ok(PrototypeSet { layers: out })
}

impl PrototypeSet {
    pub fn layers(&self) -> &[PrototypeLayer] {
        &self.layers
    }

    pub fn leaf(&self) -> &PrototypeLayer {
        self.layers.last().expect("prototype set has a leaf layer")
    }

    pub fn dim(&self) -> usize {
        self.leaf().vectors.ncols()
    }

    pub fn n_relations(&self) -> usize {
        self.leaf().len()
    }

    /// Length of [`prototype_features`] output.
    pub fn feature_len(&self) -> usize {
        self.layers.iter().map(PrototypeLayer::len).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#prototypes layers={} dim={}\n", self.layers.len(), self.dim());
        let join = |v: Vec<String>| if v.is_empty() { "-".to_string() } else { v.join(",") };
        for (k, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "#layer {} {}", k + 1, layer.len());
            let _ = writeln!(out, "#parents {}", join(layer.parents.iter().map(usize::to_string).collect()));
            let empty = layer.empty.iter().enumerate().filter(|(_, &e)| e).map(|(i, _)| i.to_string()).collect();
            let _ = writeln!(out, "#empty {}", join(empty));
            for i in 0..layer.len() {
                push_row(&mut out, &layer.names[i], layer.row(i).iter().copied());
            }
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let bad = |line: usize, msg: &str| Error::format(source_name, line, msg.to_string());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty prototype file"))?;
        let parse_kv = |field: Option<&str>, key: &str| -> Option<usize> { field?.strip_prefix(key)?.parse().ok() };
        let mut h = header.split(' ');
        if h.next() != Some("#prototypes") {
            return Err(bad(1, "expected `#prototypes layers=K dim=D` header"));
        }
        let n_layers = parse_kv(h.next(), "layers=").ok_or_else(|| bad(1, "missing layers="))?;
        let dim = parse_kv(h.next(), "dim=").ok_or_else(|| bad(1, "missing dim="))?;
        let parse_list = |s: &str, line: usize| -> Result<Vec<usize>> {
            if s == "-" {
                return Ok(Vec::new());
            }
            s.split(',').map(|x| x.parse().map_err(|_| bad(line, "invalid index list"))).collect()
        };
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let (ln, l) = lines.next().ok_or_else(|| bad(0, "missing layer block"))?;
            let mut f = l.split(' ');
            if f.next() != Some("#layer") || f.next().and_then(|x| x.parse::<usize>().ok()) != Some(k + 1) {
                return Err(bad(ln, "expected `#layer k m_k`"));
            }
            let m_k: usize = f.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad(ln, "missing m_k"))?;
            let (ln, l) = lines.next().ok_or_else(|| bad(ln, "missing #parents"))?;
            let parents = parse_list(l.strip_prefix("#parents ").ok_or_else(|| bad(ln, "expected #parents"))?, ln)?;
            let (ln, l) = lines.next().ok_or_else(|| bad(ln, "missing #empty"))?;
            let empty_ids = parse_list(l.strip_prefix("#empty ").ok_or_else(|| bad(ln, "expected #empty"))?, ln)?;
            let mut names = Vec::with_capacity(m_k);
            let mut vectors = Array2::zeros((m_k, dim));
            for i in 0..m_k {
                let (ln, l) = lines.next().ok_or_else(|| bad(0, "truncated layer block"))?;
                let (name, values) = parse_row(l, dim, source_name, ln)?;
                names.push(name);
                for (c, v) in values.into_iter().enumerate() {
                    vectors[[i, c]] = v;
                }
            }
            if (k == 0 && !parents.is_empty()) || (k > 0 && parents.len() != m_k) {
                return Err(bad(ln, "parent list does not match layer size"));
            }
            let mut empty = vec![false; m_k];
            for e in empty_ids {
                *empty.get_mut(e).ok_or_else(|| bad(ln, "empty index out of range"))? = true;
            }
            layers.push(PrototypeLayer { names, parents, vectors, empty });
        }
        if layers.is_empty() {
            return Err(bad(1, "prototype file has no layers"));
        }
        Ok(PrototypeSet { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?, &path.display().to_string())
    }
}

/// Per layer, softmax over negated L2 distances from `mr` to each prototype;
/// layers concatenated coarsest first.
pub fn prototype_features(mr: &[f64], protos: &PrototypeSet) -> Result<Vec<f64>> {
    if mr.len() != protos.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mutual relation has dim {}, prototypes have dim {}",
            mr.len(),
            protos.dim()
        )));
    }
    let mut out = Vec::with_capacity(protos.feature_len());
    for layer in protos.layers() {
        let neg: Vec<f64> = (0..layer.len()).map(|i| -l2_distance(mr, layer.row(i))).collect();
        out.extend(softmax(&neg));
    }
    Ok(out)
}

/// Non-NA relations ranked by cosine between the pair's mutual relation and
/// each leaf prototype. Empty prototypes score 0.
pub fn nearest_prototypes(
    emb: &EntityEmbeddings,
    protos: &PrototypeSet,
    head: usize,
    tail: usize,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    let mr = mutual_relation(emb, head, tail)?;
    if mr.len() != protos.dim() {
        return Err(Error::DimensionMismatch("embedding and prototype dims differ".into()));
    }
    if mr.iter().all(|&v| v == 0.0) {
        return Err(Error::UndefinedCosine(format!("pair ({head}, {tail}) has a zero mutual relation")));
    }
    let leaf = protos.leaf();
    let mut ranked: Vec<(usize, f64)> = (0..leaf.len())
        .filter(|&r| r != NA_ID)
        .map(|r| (r, cosine(&mr, leaf.row(r)).unwrap_or(0.0)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

/// Candidate pairs ranked by cosine between their mutual relation and the
/// query's. The query pair itself and zero-MR candidates are skipped.
pub fn nearest_mutual_relations(
    emb: &EntityEmbeddings,
    pairs: &[(usize, usize)],
    query: (usize, usize),
    k: usize,
) -> Result<Vec<((usize, usize), f64)>> {
    let q = mutual_relation(emb, query.0, query.1)?;
    if q.iter().all(|&v| v == 0.0) {
        return Err(Error::UndefinedCosine(format!("query pair {query:?} has a zero mutual relation")));
    }
    let mut ranked = Vec::new();
    for &pair in pairs {
        if pair == query {
            continue;
        }
        let mr = mutual_relation(emb, pair.0, pair.1)?;
        if let Some(c) = cosine(&q, &mr) {
            ranked.push((pair, c));
        }
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn emb(rows: Vec<Vec<f64>>) -> EntityEmbeddings {
        let d = rows[0].len();
        let n = rows.len();
        EntityEmbeddings::new(Array2::from_shape_vec((n, d), rows.concat()).unwrap()).unwrap()
    }

    #[test]
    fn mutual_relation_examples() {
        let e = emb(vec![vec![1.0, 2.0], vec![4.0, 6.0]]);
        assert_eq!(mutual_relation(&e, 0, 1).unwrap(), vec![3.0, 4.0]);
        assert_eq!(mutual_relation(&e, 1, 0).unwrap(), vec![-3.0, -4.0]);
        assert_eq!(mutual_relation(&e, 1, 1).unwrap(), vec![0.0, 0.0]);
        assert!(mutual_relation(&e, 0, 2).is_err());
    }

    fn store(m: usize, triples: &[(usize, usize, usize)]) -> TripleStore {
        let rels = RelationSet::from_names((1..m).map(|r| format!("/a/r{r}")));
        TripleStore::new(rels, triples.iter().map(|&(h, r, t)| Triple { head: h, relation: r, tail: t })).unwrap()
    }

    #[test]
    fn leaf_prototypes_are_means() {
        // entity 0 at origin; MR(0, k) = e_k
        let e = emb(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![-1.0, 0.0]]);
        let s = store(4, &[(0, 1, 1), (0, 1, 2), (0, 1, 3), (0, 2, 1), (0, 3, 1), (0, 3, 4)]);
        let p = compute_leaf_prototypes(&e, &s).unwrap();
        assert_eq!(p.row(1), &[1.0, 1.0]);
        assert_eq!(p.row(2), &[1.0, 0.0]);
        assert_eq!(p.row(3), &[0.0, 0.0]);
        assert!(p.empty[0] && !p.empty[3]);
    }

    #[test]
    fn lift_examples() {
        let rels = RelationSet::from_names(["/x/a", "/x/b", "/y/c"]);
        let h = RelationHierarchy::from_relation_names(&rels).unwrap();
        assert_eq!(h.depth(), 2);
        assert_eq!(h.layers()[0].names, vec!["/NA", "/x", "/y"]);
        assert_eq!(h.leaves().parents, vec![0, 1, 1, 2]);
        let leaf = PrototypeLayer {
            names: rels.names().to_vec(),
            parents: Vec::new(),
            vectors: array![[0.0, 0.0], [0.0, 2.0], [2.0, 0.0], [5.0, 7.0]],
            empty: vec![true, false, false, false],
        };
        let set = lift_prototypes(&leaf, &h).unwrap();
        assert_eq!(set.layers()[0].row(1), &[1.0, 1.0]);
        assert_eq!(set.layers()[0].row(2), &[5.0, 7.0]);
        assert!(set.layers()[0].empty[0]);
        assert_eq!(set.leaf().vectors, leaf.vectors);

        let flat = lift_prototypes(&leaf, &RelationHierarchy::flat(&rels)).unwrap();
        assert_eq!(flat.layers().len(), 1);
        assert_eq!(flat.leaf().vectors, leaf.vectors);
    }

    #[test]
    fn hierarchy_from_file_and_orphans() {
        let rels = RelationSet::from_names(["cap_us", "cap_fr"]);
        let h = RelationHierarchy::parse("NA\tNA\ncap_us\tlocation\ncap_fr\tlocation\n", "h", &rels).unwrap();
        assert_eq!(h.layers()[0].names, vec!["NA", "location"]);
        let err = RelationHierarchy::parse("NA\tNA\ncap_us\tlocation\n", "h", &rels).unwrap_err();
        assert!(matches!(err, Error::OrphanNode { .. }), "{err}");
    }

    #[test]
    fn three_level_names_and_ragged_depths() {
        let rels = RelationSet::from_names(["/location/us_state/capital", "/location/fr_region/capital", "/people/person/born"]);
        let h = RelationHierarchy::from_relation_names(&rels).unwrap();
        assert_eq!(h.depth(), 3);
        assert_eq!(h.layers()[0].names, vec!["/NA", "/location", "/people"]);
        assert_eq!(h.layers()[1].names, vec!["/NA", "/location/us_state", "/location/fr_region", "/people/person"]);
        assert_eq!(h.layers()[1].parents, vec![0, 1, 1, 2]);
        assert_eq!(RelationHierarchy::parse(&h.to_tsv(), "h", &rels).unwrap(), h);
        assert!(h.to_tsv().starts_with("NA\t/NA\t/NA\n/location/us_state/capital\t/location\t/location/us_state\n"));
    }

    #[test]
    fn feature_examples() {
        let rels = RelationSet::from_names(["r1"]);
        let leaf = PrototypeLayer {
            names: rels.names().to_vec(),
            parents: Vec::new(),
            vectors: array![[0.0, 0.0], [4f64.ln(), 0.0]],
            empty: vec![false, false],
        };
        let set = lift_prototypes(&leaf, &RelationHierarchy::flat(&rels)).unwrap();
        let f = prototype_features(&[0.0, 0.0], &set).unwrap();
        assert!((f[0] - 0.8).abs() < 1e-12 && (f[1] - 0.2).abs() < 1e-12, "{f:?}");
        let mid = prototype_features(&[4f64.ln() / 2.0, 0.0], &set).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-12);
        assert!(prototype_features(&[0.0], &set).is_err());
    }

    #[test]
    fn nearest_prototype_examples() {
        let e = emb(vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let s = store(4, &[(0, 1, 1), (0, 2, 2), (0, 3, 3)]);
        let leaf = compute_leaf_prototypes(&e, &s).unwrap();
        let set = lift_prototypes(&leaf, &RelationHierarchy::flat(s.relations())).unwrap();
        let top = nearest_prototypes(&e, &set, 0, 2, 3).unwrap();
        assert_eq!(top[0], (2, 1.0));
        assert_eq!(top.len(), 3);
        assert!(top.iter().all(|&(r, _)| r != NA_ID));
        assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(top[1].0, 1, "ties broken by relation id");
        assert!(matches!(nearest_prototypes(&e, &set, 1, 1, 3), Err(Error::UndefinedCosine(_))));
    }

    #[test]
    fn nearest_mr_examples() {
        let e = emb(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![0.0, 1.0], vec![5.0, 5.0]]);
        let pairs = [(0, 1), (0, 2), (0, 3), (4, 4), (1, 2)];
        let top = nearest_mutual_relations(&e, &pairs, (0, 1), 10).unwrap();
        assert!(top.iter().all(|&(p, _)| p != (0, 1) && p != (4, 4)));
        assert_eq!(top[0].0, (0, 2));
        assert!((top[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(top.len(), 3);
    }

    #[test]
    fn prototype_file_round_trip() {
        let rels = RelationSet::from_names(["/x/a", "/x/b", "/y/c"]);
        let h = RelationHierarchy::from_relation_names(&rels).unwrap();
        let leaf = PrototypeLayer {
            names: rels.names().to_vec(),
            parents: Vec::new(),
            vectors: array![[0.0, 0.0], [0.0, 2.0], [2.0, 0.0], [5.0, 7.0]],
            empty: vec![true, false, false, false],
        };
        let set = lift_prototypes(&leaf, &h).unwrap();
        let text = set.to_text();
        let back = PrototypeSet::from_text(&text, "p").unwrap();
        assert_eq!(back, set);
        assert_eq!(back.to_text(), text);
    }

    proptest! {
        #[test]
        fn feature_slices_are_distributions(
            mr in prop::collection::vec(-3.0f64..3.0, 3),
            protos in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..7),
        ) {
            let m = protos.len();
            let rels = RelationSet::from_names((1..m).map(|r| format!("/g{}/r{r}", r % 2)));
            let leaf = PrototypeLayer {
                names: rels.names().to_vec(),
                parents: Vec::new(),
                vectors: Array2::from_shape_vec((m, 3), protos.concat()).unwrap(),
                empty: vec![false; m],
            };
            let set = lift_prototypes(&leaf, &RelationHierarchy::from_relation_names(&rels).unwrap()).unwrap();
            let f = prototype_features(&mr, &set).unwrap();
            prop_assert_eq!(f.len(), set.feature_len());
            let mut offset = 0;
            for layer in set.layers() {
                let slice = &f[offset..offset + layer.len()];
                prop_assert!((slice.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let dists: Vec<f64> = (0..layer.len()).map(|i| l2_distance(&mr, layer.row(i))).collect();
                let argmin = (0..dists.len()).fold(0, |b, i| if dists[i] < dists[b] { i } else { b });
                prop_assert_eq!(crate::math::argmax(slice), argmin);
                offset += layer.len();
            }
        }

        #[test]
        fn leaf_means_match_brute_force(
            triples in prop::collection::vec((0usize..6, 1usize..4, 0usize..6), 0..40),
            seed in any::<u64>(),
        ) {
            let mut s = seed;
            let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..2).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 40) as f64 / 1e6
            }).collect()).collect();
            let e = emb(rows.clone());
            let st = store(4, &triples);
            let p = compute_leaf_prototypes(&e, &st).unwrap();
            for r in 0..4 {
                let members: Vec<&Triple> = st.triples().iter().filter(|t| t.relation == r).collect();
                for c in 0..2 {
                    let mut acc = 0.0;
                    for t in &members {
                        acc += rows[t.tail][c] - rows[t.head][c];
                    }
                    let want = if members.is_empty() { 0.0 } else { acc / members.len() as f64 };
                    prop_assert!((p.vectors[[r, c]] - want).abs() <= 1e-12);
                }
            }
        }
    }
}
