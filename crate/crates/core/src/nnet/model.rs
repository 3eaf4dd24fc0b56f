use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One hidden ReLU layer: `logits = W2 relu(W1 x + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    /// `h x d_in`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `c x h`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Forward-pass intermediates kept for backpropagation.
pub(crate) struct Activations {
    pub pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

impl MlpModel {
    pub fn zeros(d_in: usize, h: usize, c: usize) -> Self {
        MlpModel {
            w1: Array2::zeros((h, d_in)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((c, h)),
            b2: Array1::zeros(c),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_units(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn param_count(&self) -> usize {
        param_count(self.input_dim(), self.hidden_units(), self.output_dim())
    }

    pub fn same_shape(&self, other: &MlpModel) -> bool {
        self.w1.dim() == other.w1.dim()
            && self.b1.dim() == other.b1.dim()
            && self.w2.dim() == other.w2.dim()
            && self.b2.dim() == other.b2.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// Every parameter in the order W1 (row-major), b1, W2 (row-major), b2.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
    }

    /// Mutable access in the same order as [`MlpModel::params`].
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub(crate) fn activations(&self, x: ArrayView2<f64>) -> Result<Activations> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
                context: "network input width",
            });
        }
        let pre = x.dot(&self.w1.t()) + &self.b1;
        let hidden = pre.mapv(|z| z.max(0.0));
        let logits = hidden.dot(&self.w2.t()) + &self.b2;
        Ok(Activations {
            pre,
            hidden,
            logits,
        })
    }

    /// Logits for every row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.activations(x)?.logits)
    }
}

pub fn param_count(d_in: usize, h: usize, c: usize) -> usize {
    h * d_in + h + c * h + c
}

/// Weights uniform in `±1/sqrt(fan_in)` per layer, biases zero. Stream
/// order: W1 row-major, then W2 row-major.
pub fn init_mlp(d_in: usize, h: usize, c: usize, rng: &mut Rng) -> Result<MlpModel> {
    if d_in == 0 || h == 0 || c == 0 {
        return Err(Error::InvalidDimension(format!(
            "network dims must be >= 1 (d_in={d_in}, h={h}, c={c})"
        )));
    }
    let mut m = MlpModel::zeros(d_in, h, c);
    let a1 = 1.0 / (d_in as f64).sqrt();
    m.w1.mapv_inplace(|_| rng.uniform_range(-a1, a1));
    let a2 = 1.0 / (h as f64).sqrt();
    m.w2.mapv_inplace(|_| rng.uniform_range(-a2, a2));
    Ok(m)
}

/// Width-doubling construction for concatenated inputs.
///
/// `W1' = diag(W1, W1)`, `b1' = [b1 | b1]`, `W2' = [W2 | W2] / 2`,
/// `b2' = b2`, so `lift(m)([x1 | x2]) = (m(x1) + m(x2)) / 2`.
pub fn lift_model(model: &MlpModel) -> MlpModel {
    let (h, d) = model.w1.dim();
    let mut w1 = Array2::zeros((2 * h, 2 * d));
    w1.slice_mut(s![..h, ..d]).assign(&model.w1);
    w1.slice_mut(s![h.., d..]).assign(&model.w1);
    MlpModel {
        w1,
        b1: concatenate![Axis(0), model.b1, model.b1],
        w2: concatenate![Axis(1), model.w2, model.w2] * 0.5,
        b2: model.b2.clone(),
    }
}
