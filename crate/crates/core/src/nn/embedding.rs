use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Batch;

/// One field's embedding table: `rows` feature vectors of width `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

/// Gradient of an embedding table restricted to the rows a batch touched.
/// `rows` is sorted ascending; `values` holds one `dim`-wide slice per row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrad {
    pub dim: usize,
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
}

impl RowGrad {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn to_dense(&self, num_rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_rows * self.dim];
        for (k, &r) in self.rows.iter().enumerate() {
            out[r * self.dim..(r + 1) * self.dim].copy_from_slice(self.row(k));
        }
        out
    }
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    /// Entries drawn from `N(0, std^2)`.
    pub fn gaussian<R: Rng>(rows: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            rows,
            dim,
            data: (0..rows * dim).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn from_data(rows: usize, dim: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * dim).then_some(Self { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Gathers this table's rows for `field` of every example: `B x dim`.
    pub fn lookup(&self, batch: &Batch, field: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(batch.len() * self.dim);
        for b in 0..batch.len() {
            out.extend_from_slice(self.row(batch.index(b, field)));
        }
        out
    }

    /// Backward of [`lookup`](Self::lookup): sums the `B x dim` output
    /// gradient into the rows it came from. Contributions to a shared row are
    /// added in example order.
    pub fn scatter_grad(&self, batch: &Batch, field: usize, d_out: &[f64]) -> RowGrad {
        debug_assert_eq!(d_out.len(), batch.len() * self.dim);
        let mut hits: Vec<(usize, usize)> = (0..batch.len())
            .map(|b| (batch.index(b, field), b))
            .collect();
        hits.sort_by_key(|&(row, _)| row);
        let mut rows = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (row, b) in hits {
            if rows.last() != Some(&row) {
                rows.push(row);
                values.extend(std::iter::repeat_n(0.0, self.dim));
            }
            let start = values.len() - self.dim;
            for (acc, g) in values[start..]
                .iter_mut()
                .zip(&d_out[b * self.dim..(b + 1) * self.dim])
            {
                *acc += g;
            }
        }
        RowGrad {
            dim: self.dim,
            rows,
            values,
        }
    }
}

/// Looks up every field of `batch`: a `B x N x d` tensor, flattened.
/// All tables must share the same width.
pub fn embed_lookup(batch: &Batch, tables: &[EmbeddingTable]) -> Vec<f64> {
    let n = tables.len();
    let d = tables.first().map_or(0, |t| t.dim);
    assert!(tables.iter().all(|t| t.dim == d), "tables differ in width");
    let mut out = vec![0.0; batch.len() * n * d];
    for (i, table) in tables.iter().enumerate() {
        for b in 0..batch.len() {
            let dst = (b * n + i) * d;
            out[dst..dst + d].copy_from_slice(table.row(batch.index(b, i)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[u32]]) -> Batch {
        let n = rows[0].len();
        Batch::new(
            vec![0; rows.len()],
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn lookup_copies_rows() {
        let t = EmbeddingTable::from_data(2, 2, vec![1.5, -2.0, 0.3, 0.4]).unwrap();
        let b = batch(&[&[0]]);
        assert_eq!(embed_lookup(&b, &[t]), vec![1.5, -2.0]);
    }

    #[test]
    fn zero_tables_zero_output() {
        let tables = vec![EmbeddingTable::zeros(3, 4), EmbeddingTable::zeros(5, 4)];
        let b = batch(&[&[2, 4], &[0, 1]]);
        assert!(embed_lookup(&b, &tables).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shared_rows_accumulate() {
        let t = EmbeddingTable::from_data(3, 2, vec![0.0; 6]).unwrap();
        let b = batch(&[&[2], &[0], &[2]]);
        let out = t.lookup(&b, 0);
        assert_eq!(out[0..2], out[4..6]);
        let g = t.scatter_grad(&b, 0, &[1.0, 2.0, 10.0, 20.0, 100.0, 200.0]);
        assert_eq!(g.rows, vec![0, 2]);
        assert_eq!(g.row(0), &[10.0, 20.0]);
        assert_eq!(g.row(1), &[101.0, 202.0]);
        assert_eq!(g.to_dense(3), vec![10.0, 20.0, 0.0, 0.0, 101.0, 202.0]);
    }
}
