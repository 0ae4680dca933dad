//! Per-sample gradient ascent on the margin objective, and the squared-error
//! backpropagation baseline that shares everything except the objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{repeat_seed, LabelledDataset};
use crate::error::{invalid, Error, Result};
use crate::experiments::evaluate_accuracy;
use crate::gradients::{exact_gradient, paper_gradient_with, GradientMode, GradientSet, PaperOptions};
use crate::network::{activation_derivative, Network, NetworkShape};
use crate::objective::{subset_objective, TargetEncoding, DEFAULT_LAMBDA};

/// Which objective a run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Gradient ascent on the margin objective.
    Margin,
    /// Gradient descent on summed squared error ("ANN").
    SquaredError,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Margin => "margin",
            Algorithm::SquaredError => "ann",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "margin" => Ok(Algorithm::Margin),
            "ann" | "squared_error" | "squared-error" => Ok(Algorithm::SquaredError),
            _ => Err(invalid(format!("algorithm must be `margin` or `ann`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub paper_options: PaperOptions,
    pub algorithm: Algorithm,
    pub shuffle_each_epoch: bool,
    /// One summed-gradient step per epoch instead of one step per sample.
    pub full_batch: bool,
    /// Fold a bias column into every layer.
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: DEFAULT_LAMBDA,
            alpha: 0.01,
            epochs: 200,
            seed: 0,
            gradient_mode: GradientMode::Exact,
            paper_options: PaperOptions::default(),
            algorithm: Algorithm::Margin,
            shuffle_each_epoch: true,
            full_batch: false,
            bias: true,
        }
    }
}

impl TrainConfig {
    pub fn with_algorithm(self, algorithm: Algorithm) -> Self {
        TrainConfig { algorithm, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Per-epoch history plus the trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Margin objective (maximized) or summed squared error (minimized),
    /// over the training set, after each epoch.
    pub per_epoch_objective: Vec<f64>,
    pub per_epoch_train_accuracy: Vec<f64>,
    pub final_network: Network,
}

impl TrainLog {
    pub fn final_train_accuracy(&self) -> f64 {
        self.per_epoch_train_accuracy.last().copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,objective,train_accuracy\n");
        for (e, (obj, acc)) in self
            .per_epoch_objective
            .iter()
            .zip(&self.per_epoch_train_accuracy)
            .enumerate()
        {
            out.push_str(&format!("{},{obj},{acc}\n", e + 1));
        }
        out
    }
}

/// Margin-objective gradient in the configured mode.
pub fn margin_gradient(
    net: &Network,
    x: &[f64],
    t: &TargetEncoding,
    config: &TrainConfig,
) -> Result<GradientSet> {
    match config.gradient_mode {
        GradientMode::Exact => exact_gradient(net, x, t, config.lambda),
        GradientMode::Paper => {
            let trace = net.forward(x)?;
            paper_gradient_with(net, &trace, t, config.lambda, config.paper_options)
        }
    }
}

/// Summed squared error between the output activations and the target.
pub fn squared_error_loss(net: &Network, x: &[f64], t: &TargetEncoding) -> Result<f64> {
    let trace = net.forward(x)?;
    Ok(trace
        .output()
        .iter()
        .zip(t.values())
        .map(|(o, t)| (o - t) * (o - t))
        .sum())
}

/// Backpropagated gradient of [`squared_error_loss`].
pub fn squared_error_gradient(net: &Network, x: &[f64], t: &TargetEncoding) -> Result<GradientSet> {
    if t.len() != net.shape().output_dim {
        return Err(invalid("target length does not match network outputs"));
    }
    let trace = net.forward(x)?;
    let layers = net.weights().len();
    let mut grad = GradientSet::zeros_like(net);
    let mut dz: Vec<f64> = trace
        .output()
        .iter()
        .zip(t.values())
        .zip(&trace.pre_activations[layers - 1])
        .map(|((o, t), z)| 2.0 * (o - t) * activation_derivative(*z))
        .collect();
    for m in (0..layers).rev() {
        let w = &net.weights()[m];
        let a = &trace.activations[m];
        let g = &mut grad.per_layer[m];
        for (j, d) in dz.iter().enumerate() {
            for (k, gk) in g.row_mut(j).iter_mut().enumerate() {
                *gk = d * a.get(k).copied().unwrap_or(1.0);
            }
        }
        if m > 0 {
            let z_below = &trace.pre_activations[m - 1];
            dz = (0..a.len())
                .map(|k| {
                    let s: f64 = dz.iter().enumerate().map(|(j, d)| d * w.get(j, k)).sum();
                    s * activation_derivative(z_below[k])
                })
                .collect();
        }
    }
    Ok(grad)
}

fn objective_gradient(
    net: &Network,
    x: &[f64],
    t: &TargetEncoding,
    config: &TrainConfig,
) -> Result<GradientSet> {
    match config.algorithm {
        Algorithm::Margin => margin_gradient(net, x, t, config),
        Algorithm::SquaredError => squared_error_gradient(net, x, t),
    }
}

/// Ascent for the margin objective, descent for squared error.
fn step_sign(algorithm: Algorithm) -> f64 {
    match algorithm {
        Algorithm::Margin => 1.0,
        Algorithm::SquaredError => -1.0,
    }
}

fn apply(net: &mut Network, grad: &GradientSet, scale: f64) -> Result<()> {
    if let Some((l, r, c)) = grad.first_non_finite() {
        return Err(Error::Numeric(format!(
            "non-finite gradient at layer {l}, row {r}, column {c}"
        )));
    }
    for (w, g) in net.weights_mut().iter_mut().zip(&grad.per_layer) {
        for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *wv += scale * gv;
        }
    }
    Ok(())
}

/// One in-place update `w <- w + alpha * dJ_t/dw` (or `w - alpha * dL/dw` for
/// the squared-error baseline).
pub fn sgd_step(net: &mut Network, x: &[f64], t: &TargetEncoding, config: &TrainConfig) -> Result<()> {
    let grad = objective_gradient(net, x, t, config)?;
    apply(net, &grad, step_sign(config.algorithm) * config.alpha)
}

fn with_context(e: Error, context: String) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("{context}: {msg}")),
        other => other,
    }
}

fn epoch_objective(net: &Network, data: &LabelledDataset, all: &[usize], config: &TrainConfig) -> Result<f64> {
    match config.algorithm {
        Algorithm::Margin => subset_objective(net, data, all, config.lambda),
        Algorithm::SquaredError => {
            let n = net.shape().output_dim;
            let mut total = 0.0;
            for &i in all {
                let t = TargetEncoding::new(data.labels()[i], n)?;
                total += squared_error_loss(net, &data.features()[i], &t)?;
            }
            Ok(total)
        }
    }
}

/// Trains with whichever algorithm `config` names.
///
/// `alpha = 0` is accepted here (it leaves the initial network untouched)
/// even though [`TrainConfig::validate`] rejects it for user-facing configs.
pub fn train(data: &LabelledDataset, shape: NetworkShape, config: &TrainConfig) -> Result<TrainLog> {
    if config.alpha == 0.0 {
        TrainConfig { alpha: 1.0, ..*config }.validate()?;
    } else {
        config.validate()?;
    }
    shape.validate()?;
    if data.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if data.feature_dim() != shape.input_dim {
        return Err(invalid(format!(
            "data has {} features, network expects {}",
            data.feature_dim(),
            shape.input_dim
        )));
    }
    if data.class_count() > shape.output_dim {
        return Err(invalid(format!(
            "data has {} classes, network has {} outputs",
            data.class_count(),
            shape.output_dim
        )));
    }

    let mut net = Network::init(shape, config.seed, config.bias);
    let targets: Vec<TargetEncoding> = data
        .labels()
        .iter()
        .map(|&l| TargetEncoding::new(l, shape.output_dim))
        .collect::<Result<_>>()?;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut order = all.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(repeat_seed(config.seed, usize::MAX));
    let sign = step_sign(config.algorithm);

    let mut log = TrainLog {
        per_epoch_objective: Vec::with_capacity(config.epochs),
        per_epoch_train_accuracy: Vec::with_capacity(config.epochs),
        final_network: net.clone(),
    };

    for epoch in 0..config.epochs {
        if config.full_batch {
            let mut total = GradientSet::zeros_like(&net);
            for &i in &all {
                let g = objective_gradient(&net, &data.features()[i], &targets[i], config)
                    .map_err(|e| with_context(e, format!("epoch {epoch}, sample {i}")))?;
                total.add_scaled(&g, 1.0);
            }
            apply(&mut net, &total, sign * config.alpha)
                .map_err(|e| with_context(e, format!("epoch {epoch}, full batch")))?;
        } else {
            if config.shuffle_each_epoch {
                order.shuffle(&mut rng);
            }
            for &i in &order {
                sgd_step(&mut net, &data.features()[i], &targets[i], config)
                    .map_err(|e| with_context(e, format!("epoch {epoch}, sample {i}")))?;
            }
        }
        log.per_epoch_objective
            .push(epoch_objective(&net, data, &all, config)?);
        log.per_epoch_train_accuracy
            .push(evaluate_accuracy(&net, data, &all)?);
    }
    log.final_network = net;
    Ok(log)
}

pub fn train_margin(data: &LabelledDataset, shape: NetworkShape, config: &TrainConfig) -> Result<TrainLog> {
    if config.algorithm != Algorithm::Margin {
        return Err(invalid("train_margin needs algorithm = margin"));
    }
    train(data, shape, config)
}

pub fn train_squared_error(
    data: &LabelledDataset,
    shape: NetworkShape,
    config: &TrainConfig,
) -> Result<TrainLog> {
    if config.algorithm != Algorithm::SquaredError {
        return Err(invalid("train_squared_error needs algorithm = ann"));
    }
    train(data, shape, config)
}
