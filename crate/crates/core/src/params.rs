//! Gradient containers and the generic SGD update over named parameter blocks.

use std::collections::BTreeMap;

/// Gradient for a lookup table where only a few rows are touched.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowGrads {
    cols: usize,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl RowGrads {
    pub fn new(cols: usize) -> Self {
        RowGrads {
            cols,
            rows: BTreeMap::new(),
        }
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let cols = self.cols;
        self.rows.entry(row).or_insert_with(|| vec![0.0; cols])
    }

    pub fn add_row(&mut self, row: usize, scale: f64, values: &[f64]) {
        for (g, v) in self.row_mut(row).iter_mut().zip(values) {
            *g += scale * v;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows.get(&row).map_or(0.0, |r| r[col])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&r, v)| (r, v.as_slice()))
    }

    pub fn merge(&mut self, other: &RowGrads) {
        for (r, v) in other.iter() {
            self.add_row(r, 1.0, v);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.rows.values_mut() {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.rows.values().flatten().map(|x| x * x).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Read-only view of one gradient block, aligned with a flat parameter slice.
#[derive(Debug, Clone, Copy)]
pub enum GradView<'a> {
    Dense(&'a [f64]),
    Rows(&'a RowGrads),
}

impl GradView<'_> {
    /// Gradient at flat (row-major) index `idx`.
    pub fn get(&self, idx: usize) -> f64 {
        match self {
            GradView::Dense(g) => g[idx],
            GradView::Rows(r) => r.get(idx / r.cols, idx % r.cols),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        match self {
            GradView::Dense(g) => g.iter().map(|x| x * x).sum(),
            GradView::Rows(r) => r.sq_norm(),
        }
    }
}

/// `param -= lr * grad` over aligned blocks.
pub fn sgd_update(params: Vec<(&'static str, &mut [f64])>, grads: &[(&'static str, GradView<'_>)], lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    for ((pname, p), (gname, g)) in params.into_iter().zip(grads) {
        debug_assert_eq!(pname, *gname);
        match g {
            GradView::Dense(g) => {
                for (x, gx) in p.iter_mut().zip(g.iter()) {
                    *x -= lr * gx;
                }
            }
            GradView::Rows(r) => {
                for (row, values) in r.iter() {
                    let base = row * r.cols;
                    for (x, gx) in p[base..base + r.cols].iter_mut().zip(values) {
                        *x -= lr * gx;
                    }
                }
            }
        }
    }
}

pub fn global_norm(grads: &[(&'static str, GradView<'_>)]) -> f64 {
    grads.iter().map(|(_, g)| g.sq_norm()).sum::<f64>().sqrt()
}
