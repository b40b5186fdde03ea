use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{softmax, Mlp};
use super::{expect_shape, FeatureMatrix, Mat, Tensors};
use crate::error::{Error, Result};
use crate::lane::Vec3;
use crate::spatial::KdTree;

/// Neighbour count per scale level.
pub const DEFAULT_K: usize = 12;

/// Nearest-voxel lookup over fixed voxel centres and their features.
#[derive(Debug, Clone)]
pub struct VoxelFeatureIndex {
    tree: KdTree<3>,
    features: Mat,
}

/// k×C_v neighbour block around one query.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnBlock {
    pub block: FeatureMatrix,
    /// Voxel index per row, ascending distance with ties broken by index.
    pub indices: Vec<usize>,
    /// Rows past the number of voxels repeat the nearest voxel.
    pub padded: bool,
}

impl VoxelFeatureIndex {
    /// `features` has one row per centre.
    pub fn new(centers: &[Vec3], features: &FeatureMatrix) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::EmptyVoxelSet);
        }
        if features.nrows() != centers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} voxel centres but {} feature rows",
                centers.len(),
                features.nrows()
            )));
        }
        Ok(Self {
            tree: KdTree::new(centers.iter().map(|c| [c.x, c.y, c.z]).collect()),
            features: features.as_mat().clone(),
        })
    }

    pub fn gather(&self, query: &Vec3, k: usize) -> Result<KnnBlock> {
        if k == 0 {
            return Err(Error::InvalidConfig("knn gather needs k >= 1".into()));
        }
        let mut indices: Vec<usize> = self
            .tree
            .k_nearest(&[query.x, query.y, query.z], k)
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        let padded = indices.len() < k;
        let nearest = indices[0];
        indices.resize(k, nearest);
        let block = Mat::from_fn(k, self.features.ncols(), |r, c| self.features[(indices[r], c)]);
        Ok(KnnBlock {
            block: FeatureMatrix(block),
            indices,
            padded,
        })
    }
}

/// Features of the `k` voxels nearest to `query`; see [`VoxelFeatureIndex`]
/// to amortize the index over many queries.
pub fn knn_gather(query: &Vec3, centers: &[Vec3], features: &FeatureMatrix, k: usize) -> Result<KnnBlock> {
    VoxelFeatureIndex::new(centers, features)?.gather(query, k)
}

/// Neighbour blocks at the three deepest scale levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SfwaInput {
    pub blocks: Vec<FeatureMatrix>,
}

/// `weight_mlp` maps each pooled C_v row to one logit; `output_mlp` maps
/// the concatenated 1×3C_v weighted features to 1×C_sp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfwaParams {
    pub weight_mlp: Mlp,
    pub output_mlp: Mlp,
}

impl SfwaParams {
    pub fn random(c_v: usize, hidden: usize, c_sp: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight_mlp: Mlp::random(c_v, hidden, 1, rng),
            output_mlp: Mlp::random(3 * c_v, hidden, c_sp, rng),
        }
    }
}

impl Tensors for SfwaParams {
    fn tensors(&self) -> Vec<&Mat> {
        let mut t = self.weight_mlp.tensors();
        t.extend(self.output_mlp.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut t = self.weight_mlp.tensors_mut();
        t.extend(self.output_mlp.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfwaOutput {
    /// 1×C_sp.
    pub feature: FeatureMatrix,
    /// Softmax scale weights.
    pub weights: [f64; 3],
}

struct SfwaCache {
    pooled: Mat,
    argmax: Vec<Vec<usize>>,
    weights: [f64; 3],
    weight_cache: super::nn::MlpCache,
    output_cache: super::nn::MlpCache,
}

fn check_input(input: &SfwaInput, p: &SfwaParams) -> Result<usize> {
    if input.blocks.len() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected 3 scale blocks, got {}",
            input.blocks.len()
        )));
    }
    let (k, c_v) = (input.blocks[0].nrows(), input.blocks[0].ncols());
    for (n, b) in input.blocks.iter().enumerate() {
        expect_shape(&format!("scale block {n}"), b.as_mat(), k, c_v)?;
    }
    p.weight_mlp.check("weight mlp")?;
    p.output_mlp.check("output mlp")?;
    if p.weight_mlp.input_dim() != c_v || p.weight_mlp.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "weight mlp must map {c_v} channels to 1 logit"
        )));
    }
    if p.output_mlp.input_dim() != 3 * c_v {
        return Err(Error::ShapeMismatch(format!(
            "output mlp must take {} channels",
            3 * c_v
        )));
    }
    Ok(c_v)
}

fn sfwa_forward(input: &SfwaInput, p: &SfwaParams) -> Result<(Mat, SfwaCache)> {
    let c_v = check_input(input, p)?;
    let mut pooled = Mat::zeros(3, c_v);
    let mut argmax = vec![vec![0; c_v]; 3];
    for (n, block) in input.blocks.iter().enumerate() {
        let b = block.as_mat();
        for c in 0..c_v {
            let mut best = 0;
            for r in 1..b.nrows() {
                if b[(r, c)] > b[(best, c)] {
                    best = r;
                }
            }
            argmax[n][c] = best;
            pooled[(n, c)] = b[(best, c)];
        }
    }
    let (logits, weight_cache) = p.weight_mlp.forward_cached(&pooled)?;
    let w = softmax(&[logits[(0, 0)], logits[(1, 0)], logits[(2, 0)]]);
    let weights = [w[0], w[1], w[2]];
    // Positive weights commute with max-pooling, so scaling the pooled rows
    // equals pooling the scaled blocks.
    let flat = Mat::from_fn(1, 3 * c_v, |_, j| weights[j / c_v] * pooled[(j / c_v, j % c_v)]);
    let (out, output_cache) = p.output_mlp.forward_cached(&flat)?;
    Ok((
        out,
        SfwaCache {
            pooled,
            argmax,
            weights,
            weight_cache,
            output_cache,
        },
    ))
}

/// Max-pools each block, weights the scales by a softmax over per-scale
/// logits, and maps the concatenation to the output feature.
pub fn sfwa_aggregate(input: &SfwaInput, params: &SfwaParams) -> Result<SfwaOutput> {
    let (out, cache) = sfwa_forward(input, params)?;
    Ok(SfwaOutput {
        feature: FeatureMatrix(out),
        weights: cache.weights,
    })
}

#[derive(Debug, Clone)]
pub struct SfwaGrads {
    /// One k×C_v gradient per block; only each column's max entry is non-zero.
    pub d_blocks: Vec<Mat>,
    pub params: SfwaParams,
}

pub fn sfwa_backward(input: &SfwaInput, params: &SfwaParams, d_out: &Mat) -> Result<SfwaGrads> {
    let (out, c) = sfwa_forward(input, params)?;
    expect_shape("sfwa upstream", d_out, 1, out.ncols())?;
    let c_v = c.pooled.ncols();
    let (d_flat, g_out) = params.output_mlp.backward(&c.output_cache, d_out);

    let mut d_pooled = Mat::zeros(3, c_v);
    let mut d_w = [0.0; 3];
    for n in 0..3 {
        for ch in 0..c_v {
            let g = d_flat[(0, n * c_v + ch)];
            d_w[n] += g * c.pooled[(n, ch)];
            d_pooled[(n, ch)] = c.weights[n] * g;
        }
    }
    let dot: f64 = (0..3).map(|n| c.weights[n] * d_w[n]).sum();
    let d_logits = Mat::from_fn(3, 1, |n, _| c.weights[n] * (d_w[n] - dot));
    let (d_pooled_w, g_weight) = params.weight_mlp.backward(&c.weight_cache, &d_logits);
    d_pooled += d_pooled_w;

    let d_blocks = input
        .blocks
        .iter()
        .enumerate()
        .map(|(n, b)| {
            let mut d = Mat::zeros(b.nrows(), c_v);
            for ch in 0..c_v {
                d[(c.argmax[n][ch], ch)] = d_pooled[(n, ch)];
            }
            d
        })
        .collect();
    Ok(SfwaGrads {
        d_blocks,
        params: SfwaParams {
            weight_mlp: g_weight,
            output_mlp: g_out,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn knn_query_on_center_returns_that_voxel() {
        let centers = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let feats = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = knn_gather(&centers[1], &centers, &feats, 1).unwrap();
        assert_eq!(b.indices, vec![1]);
        assert_eq!(b.block.as_mat().row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert!(!b.padded);
    }

    #[test]
    fn knn_pads_with_nearest() {
        let centers: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let feats = FeatureMatrix::new(Mat::from_fn(5, 2, |r, c| (r * 10 + c) as f64)).unwrap();
        let b = knn_gather(&Vec3::new(3.2, 0.0, 0.0), &centers, &feats, 12).unwrap();
        assert!(b.padded);
        assert_eq!(b.indices, vec![3, 4, 2, 1, 0, 3, 3, 3, 3, 3, 3, 3]);
        for r in 5..12 {
            assert_eq!(b.block.as_mat().row(r), b.block.as_mat().row(0));
        }
        assert!(matches!(
            knn_gather(&Vec3::zeros(), &[], &feats, 3),
            Err(Error::EmptyVoxelSet)
        ));
    }

    #[test]
    fn equal_logits_give_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = SfwaParams::random(4, 6, 5, &mut rng);
        p.weight_mlp.w2.fill(0.0);
        let input = SfwaInput {
            blocks: (0..3).map(|_| FeatureMatrix::random(12, 4, 1.0, &mut rng)).collect(),
        };
        let out = sfwa_aggregate(&input, &p).unwrap();
        for w in out.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(out.feature.as_mat().shape(), (1, 5));
    }

    #[test]
    fn wrong_block_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SfwaParams::random(4, 6, 5, &mut rng);
        let input = SfwaInput {
            blocks: vec![FeatureMatrix::random(12, 4, 1.0, &mut rng)],
        };
        assert!(matches!(sfwa_aggregate(&input, &p), Err(Error::ShapeMismatch(_))));
    }
}
