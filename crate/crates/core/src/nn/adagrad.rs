use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, GradientBundle, Mlp, RowGrad};
use crate::{Error, Result};

/// Adagrad: `acc += g^2; theta -= lr * g / (sqrt(acc) + epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adagrad {
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl Adagrad {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            epsilon: 1e-8,
        }
    }

    pub fn step(&self, params: &mut [f64], grads: &[f64], acc: &mut [f64]) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), acc.len());
        for ((p, g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
            *a += g * g;
            *p -= self.learning_rate * g / (a.sqrt() + self.epsilon);
        }
    }

    /// Sparse variant for embedding tables; untouched rows see `g = 0`, which
    /// leaves both parameter and accumulator unchanged.
    pub fn step_rows(&self, table: &mut EmbeddingTable, grad: &RowGrad, acc: &mut [f64]) {
        let dim = table.dim();
        for (k, &r) in grad.rows.iter().enumerate() {
            let span = r * dim..(r + 1) * dim;
            self.step(
                &mut table.data_mut()[span.clone()],
                grad.row(k),
                &mut acc[span],
            );
        }
    }
}

/// One accumulator per trainable scalar, grouped like the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdagradState {
    pub optimizer: Adagrad,
    pub embeddings: Vec<Vec<f64>>,
    pub mlp: Vec<Vec<f64>>,
    pub arch: Vec<Vec<f64>>,
    pub steps: u64,
}

impl AdagradState {
    pub fn new(
        optimizer: Adagrad,
        tables: &[EmbeddingTable],
        mlp: &Mlp,
        arch_widths: &[usize],
    ) -> Self {
        Self {
            optimizer,
            embeddings: tables.iter().map(|t| vec![0.0; t.data().len()]).collect(),
            mlp: mlp.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            arch: arch_widths.iter().map(|&k| vec![0.0; k]).collect(),
            steps: 0,
        }
    }

    /// Applies one update to every tensor. Each scalar's update depends only
    /// on its own gradient and accumulator.
    pub fn apply(
        &mut self,
        tables: &mut [EmbeddingTable],
        mlp: &mut Mlp,
        arch: &mut [Vec<f64>],
        grads: &GradientBundle,
    ) -> Result<()> {
        if tables.len() != grads.embeddings.len()
            || tables.len() != self.embeddings.len()
            || arch.len() != grads.arch.len()
            || arch.len() != self.arch.len()
        {
            return Err(Error::Shape(
                "gradient bundle does not mirror parameters".into(),
            ));
        }
        let opt = self.optimizer;
        for ((table, g), acc) in tables
            .iter_mut()
            .zip(&grads.embeddings)
            .zip(&mut self.embeddings)
        {
            opt.step_rows(table, g, acc);
        }
        let grad_tensors = grads.mlp.tensors();
        let mut params = mlp.tensors_mut();
        if params.len() != grad_tensors.len() || params.len() != self.mlp.len() {
            return Err(Error::Shape(
                "MLP gradients do not mirror parameters".into(),
            ));
        }
        for ((p, g), acc) in params.iter_mut().zip(grad_tensors).zip(&mut self.mlp) {
            opt.step(p, g, acc);
        }
        for ((w, g), acc) in arch.iter_mut().zip(&grads.arch).zip(&mut self.arch) {
            opt.step(w, g, acc);
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_about_learning_rate() {
        let opt = Adagrad::new(0.02);
        let mut p = [1.0];
        let mut acc = [0.0];
        opt.step(&mut p, &[3.0], &mut acc);
        assert_eq!(acc[0], 9.0);
        let expected = 1.0 - 0.02 * 3.0 / (3.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.98).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let opt = Adagrad::new(0.02);
        let mut p = [0.25, -1.0];
        let mut acc = [0.0, 4.0];
        opt.step(&mut p, &[0.0, 0.0], &mut acc);
        assert_eq!(p, [0.25, -1.0]);
        assert_eq!(acc, [0.0, 4.0]);
    }

    #[test]
    fn repeated_gradient_damps() {
        let opt = Adagrad::new(0.1);
        let mut p = [0.0];
        let mut acc = [0.0];
        opt.step(&mut p, &[2.0], &mut acc);
        let first = p[0];
        opt.step(&mut p, &[2.0], &mut acc);
        let second = p[0] - first;
        assert!(second.abs() < first.abs());
        assert!(second < 0.0);
    }

    #[test]
    fn sparse_rows_match_dense_update() {
        let opt = Adagrad::new(0.05);
        let mut sparse = EmbeddingTable::from_data(3, 2, vec![1.0; 6]).unwrap();
        let mut dense = sparse.clone();
        let g = RowGrad {
            dim: 2,
            rows: vec![1],
            values: vec![0.5, -2.0],
        };
        let mut acc_s = vec![0.0; 6];
        let mut acc_d = vec![0.0; 6];
        opt.step_rows(&mut sparse, &g, &mut acc_s);
        opt.step(dense.data_mut(), &g.to_dense(3), &mut acc_d);
        assert_eq!(sparse, dense);
        assert_eq!(acc_s, acc_d);
    }
}
