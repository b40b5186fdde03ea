use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{ln_backward, ln_forward, softmax_rows, LayerNormParams, Mlp, MlpCache};
use super::{expect_shape, mat_rows, random_mat, FeatureMatrix, Mat, Tensors};
use crate::error::{Error, Result};

/// Query, key and value projections. `w_q` is C_q×D_h; `w_k` and `w_v`
/// are C_kv×D_h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionParams {
    #[serde(with = "mat_rows")]
    pub w_q: Mat,
    #[serde(with = "mat_rows")]
    pub w_k: Mat,
    #[serde(with = "mat_rows")]
    pub w_v: Mat,
}

impl AttentionParams {
    pub fn random(c_q: usize, c_kv: usize, d_h: usize, rng: &mut impl Rng) -> Self {
        let (sq, skv) = ((3.0 / c_q as f64).sqrt(), (3.0 / c_kv as f64).sqrt());
        Self {
            w_q: random_mat(c_q, d_h, sq, rng),
            w_k: random_mat(c_kv, d_h, skv, rng),
            w_v: random_mat(c_kv, d_h, skv, rng),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.w_q.ncols()
    }

    fn check(&self, q: &Mat, k: &Mat, v: &Mat) -> Result<()> {
        if k.nrows() != v.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "keys have {} rows but values have {}",
                k.nrows(),
                v.nrows()
            )));
        }
        let d = self.head_dim();
        expect_shape("w_q", &self.w_q, q.ncols(), d)?;
        expect_shape("w_k", &self.w_k, k.ncols(), d)?;
        expect_shape("w_v", &self.w_v, v.ncols(), d)
    }
}

impl Tensors for AttentionParams {
    fn tensors(&self) -> Vec<&Mat> {
        vec![&self.w_q, &self.w_k, &self.w_v]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v]
    }
}

struct CaCache {
    q: Mat,
    k: Mat,
    v: Mat,
    qb: Mat,
    kb: Mat,
    vb: Mat,
    attn: Mat,
}

fn ca_forward(q: &Mat, k: &Mat, v: &Mat, p: &AttentionParams) -> Result<(Mat, CaCache)> {
    p.check(q, k, v)?;
    let qb = q * &p.w_q;
    let kb = k * &p.w_k;
    let vb = v * &p.w_v;
    let scale = 1.0 / (p.head_dim() as f64).sqrt();
    let attn = softmax_rows(&((&qb * kb.transpose()) * scale));
    let out = &attn * &vb;
    Ok((
        out,
        CaCache {
            q: q.clone(),
            k: k.clone(),
            v: v.clone(),
            qb,
            kb,
            vb,
            attn,
        },
    ))
}

fn ca_backward(c: &CaCache, p: &AttentionParams, d_out: &Mat) -> CrossAttentionGrads {
    let scale = 1.0 / (p.head_dim() as f64).sqrt();
    let d_attn = d_out * c.vb.transpose();
    let d_vb = c.attn.transpose() * d_out;
    let mut d_scores = d_attn.clone();
    for i in 0..d_scores.nrows() {
        let dot: f64 = c.attn.row(i).dot(&d_attn.row(i));
        for j in 0..d_scores.ncols() {
            d_scores[(i, j)] = c.attn[(i, j)] * (d_attn[(i, j)] - dot);
        }
    }
    let d_qb = (&d_scores * &c.kb) * scale;
    let d_kb = (d_scores.transpose() * &c.qb) * scale;
    CrossAttentionGrads {
        dq: &d_qb * p.w_q.transpose(),
        dk: &d_kb * p.w_k.transpose(),
        dv: &d_vb * p.w_v.transpose(),
        params: AttentionParams {
            w_q: c.q.transpose() * d_qb,
            w_k: c.k.transpose() * d_kb,
            w_v: c.v.transpose() * d_vb,
        },
    }
}

/// `softmax(Q W_q (K W_k)ᵀ / √D_h) · V W_v` with the softmax taken per row.
pub fn cross_attention(
    q: &FeatureMatrix,
    k: &FeatureMatrix,
    v: &FeatureMatrix,
    params: &AttentionParams,
) -> Result<FeatureMatrix> {
    let (out, _) = ca_forward(q.as_mat(), k.as_mat(), v.as_mat(), params)?;
    Ok(FeatureMatrix(out))
}

#[derive(Debug, Clone)]
pub struct CrossAttentionGrads {
    pub dq: Mat,
    pub dk: Mat,
    pub dv: Mat,
    pub params: AttentionParams,
}

pub fn cross_attention_backward(
    q: &FeatureMatrix,
    k: &FeatureMatrix,
    v: &FeatureMatrix,
    params: &AttentionParams,
    d_out: &Mat,
) -> Result<CrossAttentionGrads> {
    let (out, cache) = ca_forward(q.as_mat(), k.as_mat(), v.as_mat(), params)?;
    expect_shape("attention upstream", d_out, out.nrows(), out.ncols())?;
    Ok(ca_backward(&cache, params, d_out))
}

/// One fusion pathway: attention from its query modality into the other,
/// then a feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathwayParams {
    pub attention: AttentionParams,
    pub ffn: Mlp,
}

impl Tensors for PathwayParams {
    fn tensors(&self) -> Vec<&Mat> {
        let mut t = self.attention.tensors();
        t.extend(self.ffn.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut t = self.attention.tensors_mut();
        t.extend(self.ffn.tensors_mut());
        t
    }
}

/// Parameters of the bidirectional fusion block. `bev_query` attends from
/// BEV tokens into spatial tokens; `sp_query` the reverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvatParams {
    pub ln_bev: LayerNormParams,
    pub ln_sp: LayerNormParams,
    pub bev_query: PathwayParams,
    pub sp_query: PathwayParams,
}

impl BvatParams {
    /// Random parameters with FFN hidden width `4·d_h`.
    pub fn random(c_bev: usize, c_sp: usize, d_h: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            ln_bev: LayerNormParams::random(c_bev, rng),
            ln_sp: LayerNormParams::random(c_sp, rng),
            bev_query: PathwayParams {
                attention: AttentionParams::random(c_bev, c_sp, d_h, rng),
                ffn: Mlp::random(d_h, 4 * d_h, d_out, rng),
            },
            sp_query: PathwayParams {
                attention: AttentionParams::random(c_sp, c_bev, d_h, rng),
                ffn: Mlp::random(d_h, 4 * d_h, d_out, rng),
            },
        }
    }

    /// The same block with the roles of the two modalities exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            ln_bev: self.ln_sp.clone(),
            ln_sp: self.ln_bev.clone(),
            bev_query: self.sp_query.clone(),
            sp_query: self.bev_query.clone(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.bev_query.ffn.output_dim()
    }
}

impl Tensors for BvatParams {
    fn tensors(&self) -> Vec<&Mat> {
        let mut t = self.ln_bev.tensors();
        t.extend(self.ln_sp.tensors());
        t.extend(self.bev_query.tensors());
        t.extend(self.sp_query.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut t = self.ln_bev.tensors_mut();
        t.extend(self.ln_sp.tensors_mut());
        t.extend(self.bev_query.tensors_mut());
        t.extend(self.sp_query.tensors_mut());
        t
    }
}

struct BvatCache {
    ln_bev: super::nn::LnCache,
    ln_sp: super::nn::LnCache,
    ca_bev: CaCache,
    ca_sp: CaCache,
    ffn_bev: MlpCache,
    ffn_sp: MlpCache,
}

fn bvat_forward(f_bev: &Mat, f_sp: &Mat, p: &BvatParams) -> Result<(Mat, BvatCache)> {
    if f_bev.nrows() != f_sp.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} BEV tokens but {} spatial tokens",
            f_bev.nrows(),
            f_sp.nrows()
        )));
    }
    if p.bev_query.ffn.output_dim() != p.sp_query.ffn.output_dim() {
        return Err(Error::ShapeMismatch("pathway FFN output widths differ".into()));
    }
    let (l_bev, ln_bev) = ln_forward(f_bev, &p.ln_bev)?;
    let (l_sp, ln_sp) = ln_forward(f_sp, &p.ln_sp)?;
    let (o_bev, ca_bev) = ca_forward(&l_bev, &l_sp, &l_sp, &p.bev_query.attention)?;
    let (o_sp, ca_sp) = ca_forward(&l_sp, &l_bev, &l_bev, &p.sp_query.attention)?;
    let (y_bev, ffn_bev) = p.bev_query.ffn.forward_cached(&o_bev)?;
    let (y_sp, ffn_sp) = p.sp_query.ffn.forward_cached(&o_sp)?;
    Ok((
        y_bev + y_sp,
        BvatCache {
            ln_bev,
            ln_sp,
            ca_bev,
            ca_sp,
            ffn_bev,
            ffn_sp,
        },
    ))
}

/// `Z = FFN(CA(LN F_bev, LN F_sp, LN F_sp)) + FFN(CA(LN F_sp, LN F_bev, LN F_bev))`,
/// with no residual connections.
pub fn bvat_fuse(f_bev: &FeatureMatrix, f_sp: &FeatureMatrix, params: &BvatParams) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix(bvat_forward(f_bev.as_mat(), f_sp.as_mat(), params)?.0))
}

#[derive(Debug, Clone)]
pub struct BvatGrads {
    pub d_bev: Mat,
    pub d_sp: Mat,
    pub params: BvatParams,
}

pub fn bvat_fuse_backward(
    f_bev: &FeatureMatrix,
    f_sp: &FeatureMatrix,
    params: &BvatParams,
    d_out: &Mat,
) -> Result<BvatGrads> {
    let (z, c) = bvat_forward(f_bev.as_mat(), f_sp.as_mat(), params)?;
    expect_shape("fusion upstream", d_out, z.nrows(), z.ncols())?;
    let (d_o_bev, g_ffn_bev) = params.bev_query.ffn.backward(&c.ffn_bev, d_out);
    let (d_o_sp, g_ffn_sp) = params.sp_query.ffn.backward(&c.ffn_sp, d_out);
    let g_bev = ca_backward(&c.ca_bev, &params.bev_query.attention, &d_o_bev);
    let g_sp = ca_backward(&c.ca_sp, &params.sp_query.attention, &d_o_sp);
    let d_l_bev = g_bev.dq + g_sp.dk + g_sp.dv;
    let d_l_sp = g_sp.dq + g_bev.dk + g_bev.dv;
    let (d_bev, g_ln_bev) = ln_backward(&c.ln_bev, &params.ln_bev, &d_l_bev);
    let (d_sp, g_ln_sp) = ln_backward(&c.ln_sp, &params.ln_sp, &d_l_sp);
    Ok(BvatGrads {
        d_bev,
        d_sp,
        params: BvatParams {
            ln_bev: g_ln_bev,
            ln_sp: g_ln_sp,
            bev_query: PathwayParams {
                attention: g_bev.params,
                ffn: g_ffn_bev,
            },
            sp_query: PathwayParams {
                attention: g_sp.params,
                ffn: g_ffn_sp,
            },
        },
    })
}
