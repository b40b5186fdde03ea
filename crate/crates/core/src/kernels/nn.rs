use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{add_row, col_sums, expect_shape, mat_rows, random_mat, FeatureMatrix, Mat, Tensors};
use crate::error::{Error, Result};

/// Max-subtracted softmax. Empty input gives an empty output.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn softmax_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        for (j, v) in softmax(&row).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerNormParams {
    #[serde(with = "mat_rows")]
    pub gain: Mat,
    #[serde(with = "mat_rows")]
    pub bias: Mat,
    #[serde(default = "default_ln_eps")]
    pub epsilon: f64,
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl LayerNormParams {
    /// Unit gain, zero bias.
    pub fn identity(channels: usize) -> Self {
        Self {
            gain: Mat::from_element(1, channels, 1.0),
            bias: Mat::zeros(1, channels),
            epsilon: default_ln_eps(),
        }
    }

    pub fn random(channels: usize, rng: &mut impl Rng) -> Self {
        Self {
            gain: Mat::from_fn(1, channels, |_, _| rng.random_range(0.5..1.5)),
            bias: random_mat(1, channels, 0.5, rng),
            epsilon: default_ln_eps(),
        }
    }

    pub fn channels(&self) -> usize {
        self.gain.ncols()
    }

    pub(crate) fn check(&self, channels: usize) -> Result<()> {
        if channels < 2 {
            return Err(Error::ShapeMismatch(format!(
                "layer norm needs at least 2 channels, got {channels}"
            )));
        }
        expect_shape("layer norm gain", &self.gain, 1, channels)?;
        expect_shape("layer norm bias", &self.bias, 1, channels)?;
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig("layer norm epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

impl Tensors for LayerNormParams {
    fn tensors(&self) -> Vec<&Mat> {
        vec![&self.gain, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.gain, &mut self.bias]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    xhat: Mat,
    rstd: Vec<f64>,
}

pub(crate) fn ln_forward(x: &Mat, p: &LayerNormParams) -> Result<(Mat, LnCache)> {
    p.check(x.ncols())?;
    let c = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let mean = x.row(i).sum() / c;
        let var = x.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
        let r = 1.0 / (var + p.epsilon).sqrt();
        for j in 0..x.ncols() {
            xhat[(i, j)] = (x[(i, j)] - mean) * r;
        }
        rstd.push(r);
    }
    let mut y = xhat.clone();
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            y[(i, j)] = xhat[(i, j)] * p.gain[(0, j)] + p.bias[(0, j)];
        }
    }
    Ok((y, LnCache { xhat, rstd }))
}

pub(crate) fn ln_backward(cache: &LnCache, p: &LayerNormParams, dy: &Mat) -> (Mat, LayerNormParams) {
    let (n, c) = (dy.nrows(), dy.ncols());
    let mut grads = p.zeros_like();
    let mut dx = Mat::zeros(n, c);
    for i in 0..n {
        let mut dxhat = vec![0.0; c];
        for j in 0..c {
            grads.gain[(0, j)] += dy[(i, j)] * cache.xhat[(i, j)];
            grads.bias[(0, j)] += dy[(i, j)];
            dxhat[j] = dy[(i, j)] * p.gain[(0, j)];
        }
        let mean_d = dxhat.iter().sum::<f64>() / c as f64;
        let mean_dx = (0..c).map(|j| dxhat[j] * cache.xhat[(i, j)]).sum::<f64>() / c as f64;
        for j in 0..c {
            dx[(i, j)] = cache.rstd[i] * (dxhat[j] - mean_d - cache.xhat[(i, j)] * mean_dx);
        }
    }
    (dx, grads)
}

/// Row-wise `(x − mean) / √(var + ε) · gain + bias` with population variance.
pub fn layer_norm(x: &FeatureMatrix, p: &LayerNormParams) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix(ln_forward(x.as_mat(), p)?.0))
}

/// Returns `(dx, parameter gradients)`.
pub fn layer_norm_backward(
    x: &FeatureMatrix,
    p: &LayerNormParams,
    dy: &Mat,
) -> Result<(Mat, LayerNormParams)> {
    let (_, cache) = ln_forward(x.as_mat(), p)?;
    expect_shape("layer norm upstream", dy, x.nrows(), x.ncols())?;
    Ok(ln_backward(&cache, p, dy))
}

/// Smooth nonlinearity between the two affine maps of an [`Mlp`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Tanh approximation.
    #[default]
    Gelu,
    Silu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_K: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()),
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

/// Two affine maps with a nonlinearity between, applied row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mlp {
    #[serde(with = "mat_rows")]
    pub w1: Mat,
    #[serde(with = "mat_rows")]
    pub b1: Mat,
    #[serde(with = "mat_rows")]
    pub w2: Mat,
    #[serde(with = "mat_rows")]
    pub b2: Mat,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    x: Mat,
    pre: Mat,
    act: Mat,
}

impl Mlp {
    /// Glorot-style uniform weights and small biases.
    pub fn random(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: random_mat(input, hidden, (3.0 / input as f64).sqrt(), rng),
            b1: random_mat(1, hidden, 0.1, rng),
            w2: random_mat(hidden, output, (3.0 / hidden as f64).sqrt(), rng),
            b2: random_mat(1, output, 0.1, rng),
            activation: Activation::Gelu,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub(crate) fn check(&self, what: &str) -> Result<()> {
        let h = self.hidden_dim();
        expect_shape(&format!("{what} b1"), &self.b1, 1, h)?;
        expect_shape(&format!("{what} w2"), &self.w2, h, self.w2.ncols())?;
        expect_shape(&format!("{what} b2"), &self.b2, 1, self.output_dim())
    }

    pub(crate) fn forward_cached(&self, x: &Mat) -> Result<(Mat, MlpCache)> {
        self.check("mlp")?;
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "mlp expects {} input channels, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut pre = x * &self.w1;
        add_row(&mut pre, &self.b1);
        let act = pre.map(|v| self.activation.apply(v));
        let mut y = &act * &self.w2;
        add_row(&mut y, &self.b2);
        Ok((
            y,
            MlpCache {
                x: x.clone(),
                pre,
                act,
            },
        ))
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Returns `(dx, parameter gradients)`.
    pub(crate) fn backward(&self, cache: &MlpCache, dy: &Mat) -> (Mat, Mlp) {
        let d_act = dy * self.w2.transpose();
        let d_pre = d_act.zip_map(&cache.pre, |d, p| d * self.activation.derivative(p));
        let grads = Mlp {
            w1: cache.x.transpose() * &d_pre,
            b1: col_sums(&d_pre),
            w2: cache.act.transpose() * dy,
            b2: col_sums(dy),
            activation: self.activation,
        };
        (d_pre * self.w1.transpose(), grads)
    }
}

impl Tensors for Mlp {
    fn tensors(&self) -> Vec<&Mat> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_symmetric_and_saturated() {
        assert_eq!(softmax(&[3.0; 4]), vec![0.25; 4]);
        let s = softmax(&[0.0, 50.0]);
        assert!((s[0] - (-50.0f64).exp() / (1.0 + (-50.0f64).exp())).abs() < 1e-30);
        assert!((s[0] - 1.9287e-22).abs() < 1e-25);
        assert!((s[1] - 1.0).abs() < 1e-15);
        assert!(softmax(&[]).is_empty());
    }

    #[test]
    fn softmax_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
            let c = rng.random_range(-100.0..100.0);
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let (a, b) = (softmax(&x), softmax(&shifted));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = FeatureMatrix::from_rows(&[vec![2.0; 5]]).unwrap();
        let y = layer_norm(&x, &LayerNormParams::identity(5)).unwrap();
        assert!(y.as_mat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layer_norm_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = FeatureMatrix::random(6, 9, 3.0, &mut rng);
        let p = LayerNormParams::identity(9);
        let y = layer_norm(&x, &p).unwrap();
        for row in y.as_mat().row_iter() {
            let mean = row.sum() / 9.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
        let one = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(layer_norm(&one, &LayerNormParams::identity(1)).is_err());
    }

    #[test]
    fn activation_derivatives_match_differences() {
        for act in [Activation::Gelu, Activation::Silu] {
            for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} {x}");
            }
        }
    }

    #[test]
    fn mlp_shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::random(4, 8, 2, &mut rng);
        assert_eq!(m.forward(&Mat::zeros(3, 4)).unwrap().shape(), (3, 2));
        assert!(m.forward(&Mat::zeros(3, 5)).is_err());
    }
}
