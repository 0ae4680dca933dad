//! Network representation, the shifted sigmoid, and the inference pass.
//!
//! Layers are indexed from zero: `weights[m]` maps the activations of layer
//! `m` (layer 0 is the input vector) to the pre-activations of layer `m + 1`.
//! With `hidden_layers = M` there are `M + 1` weight matrices and the last one
//! is the output layer.
//!
//! Biases are folded into the weights: when a network has `bias == true`
//! every layer's activation vector is extended with a constant `1.0` before
//! the inner product, so each weight row carries one extra trailing column.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// Exponent arguments of the sigmoid are clamped to this magnitude.
const EXP_CLAMP: f64 = 500.0;

/// Largest double below 0.5; saturated activations stop here.
const HALF_BELOW: f64 = 0.499_999_999_999_999_94;

/// Shifted logistic sigmoid with range (-0.5, 0.5).
pub fn activation(z: f64) -> f64 {
    let z = z.clamp(-EXP_CLAMP, EXP_CLAMP);
    // Evaluated through exp(-|z|) so that sigma(-z) == -sigma(z) bit for bit.
    let e = (-z.abs()).exp();
    let s = (0.5 * (1.0 - e) / (1.0 + e)).min(HALF_BELOW);
    if z < 0.0 {
        -s
    } else {
        s
    }
}

/// Derivative of [`activation`]: `(0.5 + s)(0.5 - s)` with `s = activation(z)`.
///
/// Computed as `e / (1 + e)^2` with `e = exp(-|z|)`, which is the same
/// quantity without the cancellation in `0.5 - s` once `s` saturates.
pub fn activation_derivative(z: f64) -> f64 {
    let e = (-z.abs().min(EXP_CLAMP)).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Layer dimensions: `hidden_layers` hidden layers of `hidden_width` neurons each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
}

impl NetworkShape {
    pub fn new(
        input_dim: usize,
        hidden_layers: usize,
        hidden_width: usize,
        output_dim: usize,
    ) -> Result<Self> {
        let shape = NetworkShape {
            input_dim,
            hidden_layers,
            hidden_width,
            output_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.hidden_layers == 0
            || self.hidden_width == 0
            || self.output_dim == 0
        {
            return Err(invalid(format!(
                "network dimensions must all be >= 1, got {self}"
            )));
        }
        Ok(())
    }

    /// Number of weight matrices (hidden layers plus the output layer).
    pub fn weight_layers(&self) -> usize {
        self.hidden_layers + 1
    }

    /// Width of activation layer `layer`, for `layer` in `0..=hidden_layers + 1`.
    pub fn layer_width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else if layer <= self.hidden_layers {
            self.hidden_width
        } else {
            self.output_dim
        }
    }

    /// Same shape with a different hidden width.
    pub fn with_hidden_width(self, hidden_width: usize) -> Self {
        NetworkShape {
            hidden_width,
            ..self
        }
    }
}

impl std::fmt::Display for NetworkShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.input_dim)?;
        for _ in 0..self.hidden_layers {
            write!(f, "-{}", self.hidden_width)?;
        }
        write!(f, "-{}", self.output_dim)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("matrix rows have differing lengths"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Inner product over the common prefix of `a` and `b`.
///
/// Four independent partial sums let the compiler vectorize; the summation
/// order is fixed, so results are reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Euclidean norm of a slice.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `<row, input>` where `row` may carry a trailing bias weight.
///
/// When `row.len() == input.len() + 1` the last entry of `row` multiplies an
/// implicit constant `1.0`.
pub fn affine(row: &[f64], input: &[f64]) -> f64 {
    let d = dot(row, input);
    if row.len() > input.len() {
        d + row[input.len()]
    } else {
        d
    }
}

/// `input` with a trailing `1.0` when `bias` is set.
pub fn augment(input: &[f64], bias: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(input.len() + usize::from(bias));
    v.extend_from_slice(input);
    if bias {
        v.push(1.0);
    }
    v
}

/// Per-layer pre-activations and activations for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `hidden_layers + 2` vectors: the input, each hidden layer, the output layer.
    pub activations: Vec<Vec<f64>>,
    /// `hidden_layers + 1` vectors; `pre_activations[m]` feeds `activations[m + 1]`.
    pub pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always has an output layer")
    }
}

/// A fully connected feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    shape: NetworkShape,
    bias: bool,
    weights: Vec<Matrix>,
}

impl Network {
    /// All-zero weights.
    pub fn zeros(shape: NetworkShape, bias: bool) -> Self {
        let weights = (0..shape.weight_layers())
            .map(|m| {
                Matrix::zeros(
                    shape.layer_width(m + 1),
                    shape.layer_width(m) + usize::from(bias),
                )
            })
            .collect();
        Network {
            shape,
            bias,
            weights,
        }
    }

    /// Builds a network from explicit weight matrices, checking every shape.
    pub fn from_weights(shape: NetworkShape, bias: bool, weights: Vec<Matrix>) -> Result<Self> {
        shape.validate()?;
        if weights.len() != shape.weight_layers() {
            return Err(invalid(format!(
                "expected {} weight matrices, got {}",
                shape.weight_layers(),
                weights.len()
            )));
        }
        for (m, w) in weights.iter().enumerate() {
            let rows = shape.layer_width(m + 1);
            let cols = shape.layer_width(m) + usize::from(bias);
            if w.rows() != rows || w.cols() != cols {
                return Err(invalid(format!(
                    "weight layer {m} should be {rows}x{cols}, got {}x{}",
                    w.rows(),
                    w.cols()
                )));
            }
            if w.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("weight layer {m} has non-finite entries")));
            }
        }
        Ok(Network {
            shape,
            bias,
            weights,
        })
    }

    /// Seeded uniform initialization in `(-r, r)` with `r = 1/sqrt(fan_in)`,
    /// where `fan_in` counts the bias column.
    pub fn init(shape: NetworkShape, seed: u64, bias: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::zeros(shape, bias);
        for w in &mut net.weights {
            let r = 1.0 / (w.cols() as f64).sqrt();
            for v in w.as_mut_slice() {
                // gen_range over a half-open range can return -r; reject it.
                *v = loop {
                    let x = rng.gen_range(-r..r);
                    if x != -r {
                        break x;
                    }
                };
            }
        }
        net
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn output_weights(&self) -> &Matrix {
        self.weights.last().expect("network always has an output layer")
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(invalid(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.shape.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("input contains non-finite values"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.weights.len());
        activations.push(x.to_vec());
        for w in &self.weights {
            let input = activations.last().expect("non-empty");
            let z: Vec<f64> = (0..w.rows()).map(|j| affine(w.row(j), input)).collect();
            activations.push(z.iter().map(|&v| activation(v)).collect());
            pre_activations.push(z);
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
        })
    }

    /// Index of the largest output activation; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.forward(x)?.output()))
    }
}

/// Seeded initialization with bias columns.
pub fn init_network(shape: NetworkShape, seed: u64) -> Network {
    Network::init(shape, seed, true)
}

/// First index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
