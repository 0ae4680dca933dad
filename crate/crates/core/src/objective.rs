//! The margin objective for a single sample and over a dataset.
//!
//! For one sample the objective is
//!
//! ```text
//! J_t = sum_i t_i <w_out_i, y_last> / |w_out_i|
//!     - lambda * sum_{hidden m, j} z_mj * sigma(z_mj) / |w_mj|
//! ```
//!
//! The first sum rewards output hyperplanes whose normalized distance to the
//! sample agrees in sign with the target. The second penalizes the normalized
//! distance of each hidden neuron's input to its own hyperplane, with the
//! neuron's own output acting as the label. Every `|w|` is floored at
//! [`NORM_FLOOR`].

use crate::data::LabelledDataset;
use crate::error::{invalid, Result};
use crate::network::{activation, affine, norm, ForwardTrace, Network};

/// Lower bound applied to every weight-row norm in a margin denominator.
pub const NORM_FLOOR: f64 = 1e-8;

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// `max(|w|, NORM_FLOOR)`.
pub fn floored_norm(w: &[f64]) -> f64 {
    norm(w).max(NORM_FLOOR)
}

/// One-vs-rest target: `+0.5` at the true class, `-0.5` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEncoding {
    values: Vec<f64>,
    class: usize,
}

impl TargetEncoding {
    pub const POSITIVE: f64 = 0.5;
    pub const NEGATIVE: f64 = -0.5;

    pub fn new(class: usize, class_count: usize) -> Result<Self> {
        if class >= class_count {
            return Err(invalid(format!(
                "class index {class} out of range for {class_count} classes"
            )));
        }
        let mut values = vec![Self::NEGATIVE; class_count];
        values[class] = Self::POSITIVE;
        Ok(TargetEncoding { values, class })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-sample objective split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub output_margin: f64,
    pub abstraction_penalty: f64,
    pub j_t: f64,
    pub lambda: f64,
}

fn check_compatible(w: &[f64], y: &[f64]) -> Result<()> {
    if w.len() == y.len() || w.len() == y.len() + 1 {
        Ok(())
    } else {
        Err(invalid(format!(
            "weight row of length {} does not fit an input of length {}",
            w.len(),
            y.len()
        )))
    }
}

/// `<w, y> * t / max(|w|, eps)`.
pub fn output_margin_term(w_out_row: &[f64], y_last_hidden: &[f64], t_i: f64) -> Result<f64> {
    check_compatible(w_out_row, y_last_hidden)?;
    Ok(affine(w_out_row, y_last_hidden) * t_i / floored_norm(w_out_row))
}

/// `z * sigma(z) / max(|w|, eps)` with `z = <w, y>`. Never negative.
pub fn abstraction_penalty_term(w_row: &[f64], y_in: &[f64]) -> Result<f64> {
    check_compatible(w_row, y_in)?;
    let z = affine(w_row, y_in);
    Ok(penalty_value(z, floored_norm(w_row)))
}

fn penalty_value(z: f64, norm: f64) -> f64 {
    z * activation(z) / norm
}

pub(crate) fn check_trace(net: &Network, trace: &ForwardTrace) -> Result<()> {
    let shape = net.shape();
    let layers = shape.weight_layers();
    if trace.activations.len() != layers + 1 || trace.pre_activations.len() != layers {
        return Err(invalid("trace depth does not match the network"));
    }
    for (m, a) in trace.activations.iter().enumerate() {
        if a.len() != shape.layer_width(m) {
            return Err(invalid(format!(
                "trace layer {m} has width {}, network expects {}",
                a.len(),
                shape.layer_width(m)
            )));
        }
    }
    for (m, z) in trace.pre_activations.iter().enumerate() {
        if z.len() != shape.layer_width(m + 1) {
            return Err(invalid(format!("trace pre-activation layer {m} has wrong width")));
        }
    }
    Ok(())
}

/// `J_t` for one sample, from a trace produced by `net.forward`.
pub fn sample_objective(
    net: &Network,
    trace: &ForwardTrace,
    t: &TargetEncoding,
    lambda: f64,
) -> Result<ObjectiveBreakdown> {
    check_trace(net, trace)?;
    let shape = net.shape();
    if t.len() != shape.output_dim {
        return Err(invalid(format!(
            "target has {} entries, network has {} outputs",
            t.len(),
            shape.output_dim
        )));
    }
    let weights = net.weights();
    let out = net.output_weights();
    let y_last = &trace.activations[shape.hidden_layers];

    let output_margin: f64 = (0..out.rows())
        .map(|i| affine(out.row(i), y_last) * t.values()[i] / floored_norm(out.row(i)))
        .sum();

    let abstraction_penalty: f64 = weights[..shape.hidden_layers]
        .iter()
        .enumerate()
        .map(|(m, w)| {
            (0..w.rows())
                .map(|j| penalty_value(trace.pre_activations[m][j], floored_norm(w.row(j))))
                .sum::<f64>()
        })
        .sum();

    Ok(ObjectiveBreakdown {
        output_margin,
        abstraction_penalty,
        j_t: output_margin - lambda * abstraction_penalty,
        lambda,
    })
}

/// `J_t` for a raw input.
pub fn objective_for_input(
    net: &Network,
    x: &[f64],
    t: &TargetEncoding,
    lambda: f64,
) -> Result<f64> {
    let trace = net.forward(x)?;
    Ok(sample_objective(net, &trace, t, lambda)?.j_t)
}

/// Sum of `J_t` over the given rows of `data`.
pub fn subset_objective(
    net: &Network,
    data: &LabelledDataset,
    indices: &[usize],
    lambda: f64,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(invalid("objective over an empty sample set"));
    }
    let n = net.shape().output_dim;
    let mut total = 0.0;
    for &i in indices {
        let t = TargetEncoding::new(data.labels()[i], n)?;
        total += objective_for_input(net, &data.features()[i], &t, lambda)?;
    }
    Ok(total)
}

/// Sum of `J_t` over every sample in `data`.
pub fn dataset_objective(net: &Network, data: &LabelledDataset, lambda: f64) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    subset_objective(net, data, &all, lambda)
}
