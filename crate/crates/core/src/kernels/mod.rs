//! Double-precision forward kernels of the BEV/voxel fusion head with
//! hand-written backward passes, plus the training losses and the
//! confidence-label assignment.
//!
//! Every backward function takes the upstream gradient of a scalar objective
//! with respect to the kernel output and returns gradients for each input and
//! parameter tensor. Parameter gradients reuse the parameter types so that
//! [`Tensors`] can walk them in lockstep.

mod attention;
mod loss;
mod nn;
mod sfwa;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use attention::{
    bvat_fuse, bvat_fuse_backward, cross_attention, cross_attention_backward, AttentionParams,
    BvatGrads, BvatParams, CrossAttentionGrads, PathwayParams,
};
pub use loss::{
    bce_grad, bce_loss, bce_mean, confidence_labels, smooth_l1, smooth_l1_grad, BCE_CLAMP,
    DEFAULT_TAU,
};
pub use nn::{
    layer_norm, layer_norm_backward, softmax, softmax_rows, Activation, LayerNormParams, Mlp,
};
pub use sfwa::{
    knn_gather, sfwa_aggregate, sfwa_backward, KnnBlock, SfwaGrads, SfwaInput, SfwaOutput,
    SfwaParams, VoxelFeatureIndex, DEFAULT_K,
};

pub type Mat = DMatrix<f64>;

/// Dense N×C matrix of finite values with N, C ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Mat);

impl FeatureMatrix {
    pub fn new(data: Mat) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature matrix has non-finite entries".into()));
        }
        Ok(Self(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(mat_from_rows(rows)?)
    }

    /// Entries drawn uniformly from `[-scale, scale)`.
    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Self(random_mat(rows, cols, scale, rng))
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Uniform entries in `[-scale, scale)`.
pub fn random_mat(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub(crate) fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serde adapter storing a matrix as a list of rows.
pub(crate) mod mat_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        mat_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        mat_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Ordered access to every tensor of a parameter set.
pub trait Tensors {
    fn tensors(&self) -> Vec<&Mat>;
    fn tensors_mut(&mut self) -> Vec<&mut Mat>;

    /// Same shapes, all zeros.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }
}

pub(crate) fn expect_shape(what: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::ShapeMismatch(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Adds the 1×C row `b` to every row of `m`.
pub(crate) fn add_row(m: &mut Mat, b: &Mat) {
    for j in 0..m.ncols() {
        let bj = b[(0, j)];
        for i in 0..m.nrows() {
            m[(i, j)] += bj;
        }
    }
}

/// Column sums as a 1×C matrix.
pub(crate) fn col_sums(m: &Mat) -> Mat {
    Mat::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}
