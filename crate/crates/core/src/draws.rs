//! Storage for saved MCMC states.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::transform::Transformation;

/// Dense `draws x columns` matrix, stored row-major in memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(cols: usize) -> Self {
        DrawMatrix {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            if !data.is_empty() {
                return Err(StarError::Input("zero-width draw matrix with data".into()));
            }
            return Ok(DrawMatrix::new(0));
        }
        if !data.len().is_multiple_of(cols) {
            return Err(StarError::Input(format!(
                "{} values do not fill rows of width {cols}",
                data.len()
            )));
        }
        Ok(DrawMatrix {
            rows: data.len() / cols,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "draw row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Records a draw for a zero-width block so row counts stay aligned.
    pub fn push_empty(&mut self) {
        if self.cols == 0 {
            self.rows += 1;
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.cols..(s + 1) * self.cols]
    }

    pub fn get(&self, s: usize, j: usize) -> f64 {
        self.data[s * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|s| self.get(s, j)).collect()
    }

    pub fn append(&mut self, other: &DrawMatrix) {
        assert_eq!(self.cols, other.cols);
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for s in 0..self.rows {
            for (acc, v) in m.iter_mut().zip(self.row(s)) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.rows.max(1) as f64);
        m
    }

    /// Column-major little-endian bytes.
    pub fn write_column_major(&self, out: &mut Vec<u8>) {
        for j in 0..self.cols {
            for s in 0..self.rows {
                out.extend_from_slice(&self.get(s, j).to_le_bytes());
            }
        }
    }

    pub fn read_column_major(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != rows * cols * 8 {
            return Err(StarError::Input(format!(
                "expected {} bytes for a {rows}x{cols} block, found {}",
                rows * cols * 8,
                bytes.len()
            )));
        }
        let mut data = vec![0.0; rows * cols];
        for (k, chunk) in bytes.chunks_exact(8).enumerate() {
            let (j, s) = (k / rows.max(1), k % rows.max(1));
            data[s * cols + j] = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(DrawMatrix { rows, cols, data })
    }
}

/// Saved states of one fit, merged across chains in chain order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PosteriorDraws {
    /// Linear coefficients on the standardized scale, intercept first.
    pub beta: DrawMatrix,
    /// Concatenated smooth-block coefficients.
    pub alpha: DrawMatrix,
    pub sigma: DrawMatrix,
    /// `[lambda]` or the normalized I-spline weights; empty when fixed.
    pub transform: DrawMatrix,
    /// Conditional mean `mu(x_i)` at the training rows.
    pub mu: DrawMatrix,
    /// Pointwise log-likelihoods.
    pub loglik: DrawMatrix,
    /// Posterior predictive draws at the training rows.
    pub y_pred: DrawMatrix,
    pub chain_lengths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

pub const BLOCK_NAMES: [&str; 7] = ["beta", "alpha", "sigma", "transform", "mu", "loglik", "y_pred"];

impl PosteriorDraws {
    pub fn empty(beta: usize, alpha: usize, transform: usize, n: usize) -> Self {
        PosteriorDraws {
            beta: DrawMatrix::new(beta),
            alpha: DrawMatrix::new(alpha),
            sigma: DrawMatrix::new(1),
            transform: DrawMatrix::new(transform),
            mu: DrawMatrix::new(n),
            loglik: DrawMatrix::new(n),
            y_pred: DrawMatrix::new(n),
            chain_lengths: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn blocks(&self) -> [&DrawMatrix; 7] {
        [
            &self.beta,
            &self.alpha,
            &self.sigma,
            &self.transform,
            &self.mu,
            &self.loglik,
            &self.y_pred,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut DrawMatrix; 7] {
        [
            &mut self.beta,
            &mut self.alpha,
            &mut self.sigma,
            &mut self.transform,
            &mut self.mu,
            &mut self.loglik,
            &mut self.y_pred,
        ]
    }

    pub fn append(&mut self, other: &PosteriorDraws) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            if a.cols() == 0 {
                a.rows += b.rows;
            } else {
                a.append(b);
            }
        }
        self.chain_lengths.extend_from_slice(&other.chain_lengths);
    }

    pub fn block_info(&self) -> Vec<BlockInfo> {
        BLOCK_NAMES
            .iter()
            .zip(self.blocks())
            .map(|(n, b)| BlockInfo {
                name: n.to_string(),
                rows: b.rows(),
                cols: b.cols(),
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for b in self.blocks() {
            b.write_column_major(&mut out);
        }
        out
    }

    pub fn from_bytes(info: &[BlockInfo], chain_lengths: Vec<usize>, bytes: &[u8]) -> Result<Self> {
        if info.len() != BLOCK_NAMES.len() || info.iter().zip(BLOCK_NAMES).any(|(i, n)| i.name != n) {
            return Err(StarError::Input("draw file lists unexpected blocks".into()));
        }
        let mut d = PosteriorDraws::default();
        let mut offset = 0;
        for (slot, bi) in d.blocks_mut().into_iter().zip(info) {
            let len = bi.rows * bi.cols * 8;
            let chunk = bytes
                .get(offset..offset + len)
                .ok_or_else(|| StarError::Input("draw file is truncated".into()))?;
            *slot = DrawMatrix::read_column_major(bi.rows, bi.cols, chunk)?;
            if bi.cols == 0 {
                slot.rows = bi.rows;
            }
            offset += len;
        }
        if offset != bytes.len() {
            return Err(StarError::Input("draw file has trailing bytes".into()));
        }
        d.chain_lengths = chain_lengths;
        Ok(d)
    }

    /// The transformation in force at draw `s`.
    pub fn transformation_at(&self, base: &Transformation, s: usize) -> Transformation {
        let mut g = base.clone();
        match &mut g {
            Transformation::BoxCoxLearned { lambda, .. } => *lambda = self.transform.get(s, 0),
            Transformation::ISpline(sp) => sp.weights = self.transform.row(s).to_vec(),
            Transformation::BoxCox { .. } => {}
        }
        g
    }
}
