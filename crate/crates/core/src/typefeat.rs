//! Entity-type evidence: averaged type embeddings for head and tail, scored
//! by a softmax layer over relations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::formats::{read_to_string, write_string};
use crate::math::{softmax, softmax_backward, uniform_matrix, uniform_vector};
use crate::params::{GradView, RowGrads};

/// Type ids per entity; an entity may have none.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeCatalog {
    type_names: Vec<String>,
    entity_types: Vec<Vec<usize>>,
}

impl TypeCatalog {
    pub fn new(type_names: Vec<String>, entity_types: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(bad) = entity_types.iter().flatten().find(|&&t| t >= type_names.len()) {
            return Err(Error::InvalidArgument(format!("type id {bad} out of range")));
        }
        Ok(TypeCatalog { type_names, entity_types })
    }

    /// Catalog where no entity has a type.
    pub fn untyped(n_entities: usize) -> Self {
        TypeCatalog {
            type_names: Vec::new(),
            entity_types: vec![Vec::new(); n_entities],
        }
    }

    pub fn n_types(&self) -> usize {
        self.type_names.len()
    }

    pub fn n_entities(&self) -> usize {
        self.entity_types.len()
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn types_of(&self, entity: usize) -> &[usize] {
        self.entity_types.get(entity).map_or(&[], Vec::as_slice)
    }

    /// Parses `entity_id<TAB>type[,type...]`; type names are interned in file order.
    pub fn parse(text: &str, source_name: &str, n_entities: usize) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut entity_types = vec![Vec::new(); n_entities];
        for (k, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (id, types) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(source_name, k + 1, "expected `entity_id<TAB>types`"))?;
            let id: usize = id
                .parse()
                .ok()
                .filter(|&id| id < n_entities)
                .ok_or_else(|| Error::format(source_name, k + 1, format!("entity id {id:?} out of range")))?;
            for name in types.split(',').filter(|t| !t.is_empty()) {
                let t = *index.entry(name.to_string()).or_insert_with(|| {
                    names.push(name.to_string());
                    names.len() - 1
                });
                if !entity_types[id].contains(&t) {
                    entity_types[id].push(t);
                }
            }
        }
        Ok(TypeCatalog {
            type_names: names,
            entity_types,
        })
    }

    pub fn load(path: &Path, n_entities: usize) -> Result<Self> {
        Self::parse(&read_to_string(path)?, &path.display().to_string(), n_entities)
    }

    /// Typed entities only, in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (e, types) in self.entity_types.iter().enumerate() {
            if types.is_empty() {
                continue;
            }
            let names: Vec<&str> = types.iter().map(|&t| self.type_names[t].as_str()).collect();
            let _ = writeln!(out, "{e}\t{}", names.join(","));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv())
    }
}

/// Mean of the entity's type rows; zero when the entity is untyped.
pub fn entity_type_vector(entity: usize, catalog: &TypeCatalog, table: &Array2<f64>) -> Vec<f64> {
    let types = catalog.types_of(entity);
    let mut out = vec![0.0; table.ncols()];
    if types.is_empty() {
        return out;
    }
    for &t in types {
        for (o, v) in out.iter_mut().zip(table.row(t)) {
            *o += v;
        }
    }
    let n = types.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// `[c_head ‖ c_tail]`.
pub fn pair_type_features(head: usize, tail: usize, catalog: &TypeCatalog, table: &Array2<f64>) -> Vec<f64> {
    let mut x = entity_type_vector(head, catalog, table);
    x.extend(entity_type_vector(tail, catalog, table));
    x
}

/// `softmax(W x + b)`.
pub fn type_score(x: &[f64], w: &Array2<f64>, b: &Array1<f64>) -> Result<Vec<f64>> {
    if w.ncols() != x.len() || w.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "type layer is {}x{} with bias {}, input has {}",
            w.nrows(),
            w.ncols(),
            b.len(),
            x.len()
        )));
    }
    let logits: Vec<f64> = w.dot(&ndarray::ArrayView1::from(x)).iter().zip(b).map(|(z, b)| z + b).collect();
    Ok(softmax(&logits))
}

/// Trainable parameters of the type path.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeParams {
    pub table: Array2<f64>,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl TypeParams {
    /// Table rows uniform in `±0.5/d2`; output layer uniform in `±1/sqrt(2 d2)`.
    pub fn new<R: Rng>(n_types: usize, type_dim: usize, n_relations: usize, rng: &mut R) -> Self {
        let table = uniform_matrix(n_types, type_dim, 0.5 / type_dim as f64, rng);
        let bound = 1.0 / ((2 * type_dim) as f64).sqrt();
        TypeParams {
            table,
            w: uniform_matrix(n_relations, 2 * type_dim, bound, rng),
            b: uniform_vector(n_relations, 0.0, rng),
        }
    }

    pub fn type_dim(&self) -> usize {
        self.table.ncols()
    }

    pub fn forward(&self, catalog: &TypeCatalog, head: usize, tail: usize) -> Result<TypeForward> {
        let x = pair_type_features(head, tail, catalog, &self.table);
        let probs = type_score(&x, &self.w, &self.b)?;
        Ok(TypeForward { head, tail, x, probs })
    }

    /// Accumulates gradients given `dL/dC_Type`.
    pub fn backward(&self, catalog: &TypeCatalog, fwd: &TypeForward, d_probs: &[f64], grads: &mut TypeGrads) {
        let d_logits = softmax_backward(&fwd.probs, d_probs);
        let d2 = self.type_dim();
        let mut dx = vec![0.0; 2 * d2];
        for (r, &dz) in d_logits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grads.b[r] += dz;
            let w_row = self.w.row(r);
            let mut g_row = grads.w.row_mut(r);
            for c in 0..2 * d2 {
                g_row[c] += dz * fwd.x[c];
                dx[c] += dz * w_row[c];
            }
        }
        for (entity, half) in [(fwd.head, &dx[..d2]), (fwd.tail, &dx[d2..])] {
            let types = catalog.types_of(entity);
            let share = 1.0 / types.len().max(1) as f64;
            for &t in types {
                grads.table.add_row(t, share, half);
            }
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("type.table", self.table.as_slice_mut().expect("standard layout")),
            ("type.w", self.w.as_slice_mut().expect("standard layout")),
            ("type.b", self.b.as_slice_mut().expect("standard layout")),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeForward {
    pub head: usize,
    pub tail: usize,
    pub x: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeGrads {
    pub table: RowGrads,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl TypeGrads {
    pub fn zeros(params: &TypeParams) -> Self {
        TypeGrads {
            table: RowGrads::new(params.type_dim()),
            w: Array2::zeros(params.w.raw_dim()),
            b: Array1::zeros(params.b.len()),
        }
    }

    pub fn merge(&mut self, other: &TypeGrads) {
        self.table.merge(&other.table);
        self.w += &other.w;
        self.b += &other.b;
    }

    pub fn scale(&mut self, s: f64) {
        self.table.scale(s);
        self.w *= s;
        self.b *= s;
    }

    pub fn blocks(&self) -> Vec<(&'static str, GradView<'_>)> {
        vec![
            ("type.table", GradView::Rows(&self.table)),
            ("type.w", GradView::Dense(self.w.as_slice().expect("standard layout"))),
            ("type.b", GradView::Dense(self.b.as_slice().expect("standard layout"))),
        ]
    }
}
