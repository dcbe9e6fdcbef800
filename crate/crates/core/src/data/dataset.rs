use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use super::DatasetSchema;
use crate::rng::{stream, DOMAIN_SHUFFLE};
use crate::{Error, Result};

/// Immutable set of labeled, integer-encoded examples.
///
/// Indices are stored row-major: example `k` occupies
/// `indices[k * N..(k + 1) * N]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: DatasetSchema,
    labels: Vec<u8>,
    indices: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example<'a> {
    pub label: u8,
    pub indices: &'a [u32],
}

/// A mini-batch: `B` labels and a `B x N` index matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    labels: Vec<u8>,
    indices: Vec<u32>,
    num_fields: usize,
}

impl Batch {
    pub fn new(labels: Vec<u8>, indices: Vec<u32>, num_fields: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Shape("batch must hold at least one example".into()));
        }
        if indices.len() != labels.len() * num_fields {
            return Err(Error::Shape(format!(
                "batch of {} labels needs {} indices, got {}",
                labels.len(),
                labels.len() * num_fields,
                indices.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        Ok(Self {
            labels,
            indices,
            num_fields,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, b: usize) -> &[u32] {
        &self.indices[b * self.num_fields..(b + 1) * self.num_fields]
    }

    /// Index of field `field` in example `b`.
    pub fn index(&self, b: usize, field: usize) -> usize {
        self.indices[b * self.num_fields + field] as usize
    }
}

impl Dataset {
    pub fn new(schema: DatasetSchema, labels: Vec<u8>, indices: Vec<u32>) -> Result<Self> {
        let n = schema.num_fields();
        if indices.len() != labels.len() * n {
            return Err(Error::Shape(format!(
                "{} examples need {} indices, got {}",
                labels.len(),
                labels.len() * n,
                indices.len()
            )));
        }
        let cards = schema.cardinalities();
        for (k, row) in indices.chunks(n).enumerate() {
            if labels[k] > 1 {
                return Err(Error::Data(format!("label not binary, row {}", k + 1)));
            }
            for (i, (&idx, &card)) in row.iter().zip(&cards).enumerate() {
                if idx as usize >= card {
                    return Err(Error::Data(format!(
                        "index out of range, row {}, field {i}",
                        k + 1
                    )));
                }
            }
        }
        Ok(Self {
            schema,
            labels,
            indices,
        })
    }

    pub fn empty(schema: DatasetSchema) -> Self {
        Self {
            schema,
            labels: Vec::new(),
            indices: Vec::new(),
        }
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn num_fields(&self) -> usize {
        self.schema.num_fields()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn example(&self, k: usize) -> Example<'_> {
        let n = self.num_fields();
        Example {
            label: self.labels[k],
            indices: &self.indices[k * n..(k + 1) * n],
        }
    }

    pub fn examples(&self) -> impl Iterator<Item = Example<'_>> + '_ {
        (0..self.len()).map(move |k| self.example(k))
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn positive_ratio(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.len() as f64
        }
    }

    /// Examples at `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let n = self.num_fields();
        let mut labels = Vec::with_capacity(rows.len());
        let mut indices = Vec::with_capacity(rows.len() * n);
        for &k in rows {
            labels.push(self.labels[k]);
            indices.extend_from_slice(&self.indices[k * n..(k + 1) * n]);
        }
        Dataset {
            schema: self.schema.clone(),
            labels,
            indices,
        }
    }

    /// Splits into the first `at` examples and the rest.
    pub fn split_at(&self, at: usize) -> (Dataset, Dataset) {
        let at = at.min(self.len());
        let n = self.num_fields();
        let head = Dataset {
            schema: self.schema.clone(),
            labels: self.labels[..at].to_vec(),
            indices: self.indices[..at * n].to_vec(),
        };
        let tail = Dataset {
            schema: self.schema.clone(),
            labels: self.labels[at..].to_vec(),
            indices: self.indices[at * n..].to_vec(),
        };
        (head, tail)
    }

    /// Mini-batches covering every example once. With a seed the examples
    /// are visited in a seeded permutation, otherwise in storage order.
    pub fn batches(&self, batch_size: usize, shuffle_seed: Option<u64>) -> Batches<'_> {
        assert!(batch_size >= 1, "batch_size must be positive");
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Some(seed) = shuffle_seed {
            order.shuffle(&mut stream(seed, DOMAIN_SHUFFLE, 0));
        }
        Batches {
            dataset: self,
            order,
            batch_size,
            cursor: 0,
        }
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> Result<Batch> {
        Batch::new(self.labels.clone(), self.indices.clone(), self.num_fields())
    }

    pub fn read_csv<R: BufRead>(reader: R, schema: DatasetSchema) -> Result<Self> {
        let n = schema.num_fields();
        let cards = schema.cardinalities();
        let mut labels = Vec::new();
        let mut indices = Vec::new();
        let mut lines = reader.lines();

        match lines.next() {
            None => return Ok(Dataset::empty(schema)),
            Some(header) => {
                let header = header.map_err(|e| Error::Data(format!("header: {e}")))?;
                let cols = header.trim().split(',').count();
                if cols != n + 1 {
                    return Err(Error::Data(format!(
                        "header has {cols} columns, schema expects {}",
                        n + 1
                    )));
                }
            }
        }

        for (line_no, line) in lines.enumerate() {
            let row = line_no + 1;
            let line = line.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 1 {
                return Err(Error::Data(format!(
                    "wrong column count, row {row}: expected {}, got {}",
                    n + 1,
                    cells.len()
                )));
            }
            let label: u8 = match cells[0].trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Data(format!(
                        "label must be 0 or 1, row {row}: {other:?}"
                    )))
                }
            };
            labels.push(label);
            for (i, cell) in cells[1..].iter().enumerate() {
                let idx: u64 = cell.trim().parse().map_err(|_| {
                    Error::Data(format!("non-integer value, row {row}, field {i}: {cell:?}"))
                })?;
                if idx >= cards[i] as u64 {
                    return Err(Error::Data(format!(
                        "index out of range, row {row}, field {i}"
                    )));
                }
                indices.push(idx as u32);
            }
        }
        Ok(Self {
            schema,
            labels,
            indices,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: DatasetSchema) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file), schema)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.num_fields();
        write!(w, "label")?;
        for i in 0..n {
            write!(w, ",f{i}")?;
        }
        writeln!(w)?;
        for ex in self.examples() {
            write!(w, "{}", ex.label)?;
            for idx in ex.indices {
                write!(w, ",{idx}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Iterator over the mini-batches of one epoch.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl Batches<'_> {
    /// Example rows in visitation order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let n = self.dataset.num_fields();
        let rows = &self.order[self.cursor..end];
        let mut labels = Vec::with_capacity(rows.len());
        let mut indices = Vec::with_capacity(rows.len() * n);
        for &k in rows {
            let ex = self.dataset.example(k);
            labels.push(ex.label);
            indices.extend_from_slice(ex.indices);
        }
        self.cursor = end;
        Some(Batch {
            labels,
            indices,
            num_fields: n,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.cursor).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}
