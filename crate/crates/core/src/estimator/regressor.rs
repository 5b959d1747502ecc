use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::head::{Head, PredictedGaussian};
use crate::error::{check_len, Error, Result};
use crate::io::{read_f64s, read_magic, read_u32, write_f64s, write_u32};
use crate::linalg::Matrix;
use crate::lowrank::LowRankMode;
use crate::scalar::{dot, Real};
use crate::sparse::{build_pattern, GridShape};

const SCNR_MAGIC: &[u8; 4] = b"SCNR";

/// One affine layer `z = W h + b`; `W` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![T::zero(); output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn apply(&self, h: &[T]) -> Vec<T> {
        (0..self.output_dim())
            .map(|i| dot(self.weights.row(i), h) + self.bias[i])
            .collect()
    }
}

/// Per-layer gradients, same shapes as the regressor's layers.
pub type Gradients<T> = Vec<Layer<T>>;

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// Inputs to each layer; `inputs[0]` is the conditioning vector.
    pub inputs: Vec<Vec<T>>,
    /// Pre-activation of each hidden layer (rectifier masks).
    pub pre: Vec<Vec<T>>,
    pub output: Vec<T>,
}

/// Feed-forward network mapping a conditioning vector to head parameters:
/// rectified-linear hidden layers, identity output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CondRegressor<T> {
    layers: Vec<Layer<T>>,
    head: Head,
}

impl<T: Real> CondRegressor<T> {
    /// Fan-balanced uniform initialization `±sqrt(6/(fan_in + fan_out))`,
    /// zero biases, seeded.
    pub fn new(input_dim: usize, hidden: &[usize], head: Head, seed: u64) -> Result<Self> {
        let mut reg = Self::zeros(input_dim, hidden, head)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut reg.layers {
            let bound = (6.0 / (layer.input_dim() + layer.output_dim()) as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(reg)
    }

    /// All weights and biases zero; predicts the identity precision factor.
    pub fn zeros(input_dim: usize, hidden: &[usize], head: Head) -> Result<Self> {
        if input_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(head.param_count());
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { layers, head })
    }

    pub fn from_layers(layers: Vec<Layer<T>>, head: Head) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidConfig("regressor needs at least one layer".into()))?;
        let mut prev = first.input_dim();
        for l in &layers {
            check_len("layer input", prev, l.input_dim())?;
            check_len("layer bias", l.output_dim(), l.bias.len())?;
            prev = l.output_dim();
        }
        check_len("regressor output", head.param_count(), prev)?;
        Ok(Self { layers, head })
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    /// `[input, hidden…, output]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.input_dim()];
        v.extend(self.layers.iter().map(|l| l.output_dim()));
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, c: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_trace(c)?.output)
    }

    pub fn forward_trace(&self, c: &[T]) -> Result<Trace<T>> {
        check_len("conditioning vector", self.input_dim(), c.len())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = c.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h);
            inputs.push(h);
            if k == last {
                return Ok(Trace {
                    inputs,
                    pre,
                    output: z,
                });
            }
            h = z.iter().map(|&v| v.max(T::zero())).collect();
            pre.push(z);
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.layers
            .iter()
            .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
            .collect()
    }

    /// Gradients of a scalar loss given `∂loss/∂output = head_grad`.
    pub fn backward(&self, c: &[T], head_grad: &[T]) -> Result<Gradients<T>> {
        let trace = self.forward_trace(c)?;
        let mut grads = self.zero_gradients();
        self.accumulate_backward(&trace, head_grad, T::one(), &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale ·` the gradients for one trace into `grads`.
    /// The rectifier subgradient at exactly zero is 0.
    pub fn accumulate_backward(
        &self,
        trace: &Trace<T>,
        head_grad: &[T],
        scale: T,
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        check_len("head gradient", self.output_dim(), head_grad.len())?;
        let mut delta: Vec<T> = head_grad.iter().map(|&g| g * scale).collect();
        for k in (0..self.layers.len()).rev() {
            let input = &trace.inputs[k];
            let g = &mut grads[k];
            let cols = input.len();
            let gw = g.weights.as_mut_slice();
            for (i, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                g.bias[i] += d;
                for (w, &h) in gw[i * cols..(i + 1) * cols].iter_mut().zip(input) {
                    *w += d * h;
                }
            }
            if k == 0 {
                break;
            }
            let weights = &self.layers[k].weights;
            let mut back = vec![T::zero(); cols];
            for (i, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                for (b, &w) in back.iter_mut().zip(weights.row(i)) {
                    *b += d * w;
                }
            }
            for (b, &z) in back.iter_mut().zip(&trace.pre[k - 1]) {
                if !(z > T::zero()) {
                    *b = T::zero();
                }
            }
            delta = back;
        }
        Ok(())
    }

    /// Regressor output bundled with `mean` as a Gaussian.
    pub fn predict_gaussian(&self, c: &[T], mean: &[T]) -> Result<PredictedGaussian<T>> {
        let out = self.forward(c)?;
        self.head.unpack(&out, mean.to_vec())
    }

    /// Little-endian `SCNR` checkpoint: magic, layer count and sizes (u32),
    /// head descriptor, then per layer the row-major weights and the bias
    /// as f64.
    ///
    /// Head descriptor: `u32 tag` then `0 → n`, `1 → height, width, f`,
    /// `2 → n, n_v, mode (0 precision side, 1 covariance side)`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SCNR_MAGIC)?;
        let sizes = self.layer_sizes();
        write_u32(&mut w, sizes.len())?;
        for s in sizes {
            write_u32(&mut w, s)?;
        }
        match &self.head {
            Head::Diagonal { pattern } => {
                write_u32(&mut w, 0)?;
                write_u32(&mut w, pattern.dim())?;
            }
            Head::SparseChol { pattern } => {
                write_u32(&mut w, 1)?;
                write_u32(&mut w, pattern.shape().height)?;
                write_u32(&mut w, pattern.shape().width)?;
                write_u32(&mut w, pattern.patch())?;
            }
            Head::LowRank { n, rank, mode } => {
                write_u32(&mut w, 2)?;
                write_u32(&mut w, *n)?;
                write_u32(&mut w, *rank)?;
                write_u32(
                    &mut w,
                    match mode {
                        LowRankMode::PrecisionSide => 0,
                        LowRankMode::CovarianceSide => 1,
                    },
                )?;
            }
        }
        for l in &self.layers {
            write_f64s(&mut w, l.weights.as_slice())?;
            write_f64s(&mut w, &l.bias)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        read_magic(&mut r, SCNR_MAGIC, "SCNR")?;
        let count = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&count) {
            return Err(Error::Format {
                format: "SCNR",
                reason: format!("implausible layer count {count}"),
            });
        }
        let sizes = (0..count)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let head = match read_u32(&mut r)? {
            0 => Head::diagonal(read_u32(&mut r)? as usize)?,
            1 => {
                let h = read_u32(&mut r)? as usize;
                let w = read_u32(&mut r)? as usize;
                let f = read_u32(&mut r)? as usize;
                Head::SparseChol {
                    pattern: Arc::new(build_pattern(GridShape::new(h, w)?, f)?),
                }
            }
            2 => {
                let n = read_u32(&mut r)? as usize;
                let rank = read_u32(&mut r)? as usize;
                let mode = match read_u32(&mut r)? {
                    0 => LowRankMode::PrecisionSide,
                    1 => LowRankMode::CovarianceSide,
                    m => {
                        return Err(Error::Format {
                            format: "SCNR",
                            reason: format!("unknown low-rank mode {m}"),
                        })
                    }
                };
                Head::low_rank(n, rank, mode)?
            }
            t => {
                return Err(Error::Format {
                    format: "SCNR",
                    reason: format!("unknown head tag {t}"),
                })
            }
        };
        let mut layers = Vec::with_capacity(count - 1);
        for w in sizes.windows(2) {
            let weights = Matrix::from_vec(w[1], w[0], read_f64s(&mut r, w[0] * w[1])?)?;
            let bias = read_f64s(&mut r, w[1])?;
            layers.push(Layer { weights, bias });
        }
        Self::from_layers(layers, head)
    }
}

/// Forward pass written as explicit loops over the stored weights.
#[cfg(test)]
pub(crate) fn loop_forward(reg: &CondRegressor<f64>, c: &[f64]) -> Vec<f64> {
    let mut h = c.to_vec();
    let n_layers = reg.layers().len();
    for (k, l) in reg.layers().iter().enumerate() {
        let mut z = vec![0.0; l.output_dim()];
        for i in 0..l.output_dim() {
            let mut s = l.bias[i];
            for j in 0..l.input_dim() {
                s += l.weights[(i, j)] * h[j];
            }
            z[i] = if k + 1 < n_layers { s.max(0.0) } else { s };
        }
        h = z;
    }
    h
}
