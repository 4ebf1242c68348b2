//! Multi-head scaled dot-product attention (forward pass only).

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// How a scenario seeds its attention projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSpec {
    pub heads: usize,
    pub key_dim: usize,
    pub seed: u64,
}

/// Query/key/value projections for one head, each `d x d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub query: DMatrix<f64>,
    pub key: DMatrix<f64>,
    pub value: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    heads: Vec<AttentionHead>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Head outputs concatenated column-wise: `n x (heads * d_k)`.
    pub output: DMatrix<f64>,
    /// Row-stochastic `n x n` attention matrix per head.
    pub attention: Vec<DMatrix<f64>>,
}

impl AttentionWeights {
    pub fn new(heads: Vec<AttentionHead>) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::validation("heads", "need at least one head"))?;
        let (d, dk) = first.query.shape();
        if dk == 0 || d == 0 {
            return Err(Error::validation("heads", "projection dimensions must be >= 1"));
        }
        for (h, head) in heads.iter().enumerate() {
            for (name, m) in [("query", &head.query), ("key", &head.key), ("value", &head.value)] {
                if m.shape() != (d, dk) {
                    return Err(Error::Dimension(format!(
                        "head {h} {name} is {:?}, expected {d}x{dk}",
                        m.shape()
                    )));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(format!("heads[{h}].{name}"), "must be finite"));
                }
            }
        }
        Ok(Self { heads })
    }

    /// Seeded random projections with orthonormal columns (or rows when
    /// `key_dim > input_dim`), drawn from substreams of `seed`.
    pub fn seeded_orthogonal(input_dim: usize, spec: AttentionSpec) -> Result<Self> {
        if input_dim == 0 || spec.key_dim == 0 || spec.heads == 0 {
            return Err(Error::validation("attention", "dimensions and head count must be >= 1"));
        }
        let m = input_dim.max(spec.key_dim);
        let projection = |stream: u64| {
            let mut rng = substream(spec.seed, stream);
            let g = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
            let q = g.qr().q();
            q.view((0, 0), (input_dim, spec.key_dim)).into_owned()
        };
        let heads = (0..spec.heads as u64)
            .map(|h| AttentionHead {
                query: projection(3 * h),
                key: projection(3 * h + 1),
                value: projection(3 * h + 2),
            })
            .collect();
        Self::new(heads)
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn input_dim(&self) -> usize {
        self.heads[0].query.nrows()
    }

    pub fn key_dim(&self) -> usize {
        self.heads[0].query.ncols()
    }

    pub fn heads(&self) -> &[AttentionHead] {
        &self.heads
    }
}

fn softmax_rows(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|v| *v = (*v - max).exp());
        let total: f64 = row.iter().sum();
        row /= total;
    }
    m
}

/// `softmax(Q K^T / sqrt(d_k)) V` per head with `Q = X W_Q` etc.
pub fn attention_forward(x: &DMatrix<f64>, weights: &AttentionWeights) -> Result<AttentionOutput> {
    if x.ncols() != weights.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} features, projections expect {}",
            x.ncols(),
            weights.input_dim()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Dimension("attention needs at least one row".into()));
    }
    let dk = weights.key_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut output = DMatrix::zeros(x.nrows(), dk * weights.head_count());
    let mut attention = Vec::with_capacity(weights.head_count());
    for (h, head) in weights.heads.iter().enumerate() {
        let q = x * &head.query;
        let k = x * &head.key;
        let v = x * &head.value;
        let a = softmax_rows(&q * k.transpose() * scale);
        output.columns_mut(h * dk, dk).copy_from(&(&a * v));
        attention.push(a);
    }
    Ok(AttentionOutput { output, attention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn spec(heads: usize, key_dim: usize) -> AttentionSpec {
        AttentionSpec {
            heads,
            key_dim,
            seed: 42,
        }
    }

    fn random_input(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn rows_are_stochastic() {
        let w = AttentionWeights::seeded_orthogonal(7, spec(2, 4)).unwrap();
        let out = attention_forward(&random_input(7, 7, 1), &w).unwrap();
        assert_eq!(out.output.shape(), (7, 8));
        for a in &out.attention {
            for row in a.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn single_row_attends_to_itself() {
        let w = AttentionWeights::seeded_orthogonal(3, spec(1, 2)).unwrap();
        let x = random_input(1, 3, 2);
        let out = attention_forward(&x, &w).unwrap();
        assert_eq!(out.attention[0][(0, 0)], 1.0);
        let v = &x * &w.heads()[0].value;
        assert!((out.output - v).amax() < 1e-12);
    }

    #[test]
    fn constant_keys_give_uniform_attention() {
        let dk = 2;
        let query = DMatrix::from_row_slice(3, dk, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        // key projection ignores everything but the first column, which is constant
        let key = DMatrix::from_row_slice(3, dk, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let value = DMatrix::identity(3, dk);
        let w = AttentionWeights::new(vec![AttentionHead { query, key, value }]).unwrap();
        let mut x = random_input(4, 3, 3);
        x.column_mut(0).fill(2.0);
        let out = attention_forward(&x, &w).unwrap();
        assert!(out.attention[0].iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn permutation_equivariance() {
        let w = AttentionWeights::seeded_orthogonal(5, spec(3, 3)).unwrap();
        let x = random_input(6, 5, 4);
        let perm = [4, 2, 0, 5, 1, 3];
        let xp = x.select_rows(&perm);
        let base = attention_forward(&x, &w).unwrap();
        let permuted = attention_forward(&xp, &w).unwrap();
        assert!((base.output.select_rows(&perm) - &permuted.output).amax() < 1e-12);
        for (a, b) in base.attention.iter().zip(&permuted.attention) {
            let expected = a.select_rows(&perm).select_columns(&perm);
            assert!((expected - b).amax() < 1e-12);
        }
    }

    #[test]
    fn projections_are_orthonormal() {
        let w = AttentionWeights::seeded_orthogonal(6, spec(1, 4)).unwrap();
        let q = &w.heads()[0].query;
        assert!((q.transpose() * q - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        let wide = AttentionWeights::seeded_orthogonal(2, spec(1, 5)).unwrap();
        let q = &wide.heads()[0].query;
        assert!((q * q.transpose() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let w = AttentionWeights::seeded_orthogonal(4, spec(1, 2)).unwrap();
        assert!(matches!(
            attention_forward(&random_input(3, 5, 0), &w),
            Err(Error::Dimension(_))
        ));
    }
}
