//! Gradients of the per-sample margin objective.
//!
//! Three routes are provided:
//!
//! * [`exact_gradient`]: reverse-mode chain rule through the objective as it
//!   is implemented in [`crate::objective`], including bias columns and the
//!   norm floor. This is what the trainer uses by default.
//! * [`paper_gradient`]: the published delta/gamma recursions evaluated
//!   literally. It matches the exact route on the output layer but not, in
//!   general, on hidden layers; [`gradient_check`] quantifies the gap.
//! * [`finite_difference_gradient`]: central differences of the objective,
//!   used as the independent oracle for both.
//!
//! Paper-mode helpers take 1-based hidden layer numbers: hidden layer `m`
//! (`1 <= m <= M`) is produced by `weights[m - 1]` and its outputs are
//! `trace.activations[m]`.

use crate::error::{invalid, Error, Result};
use crate::network::{activation, activation_derivative, affine, augment, norm, ForwardTrace, Matrix, Network};
use crate::objective::{check_trace, floored_norm, objective_for_input, TargetEncoding, NORM_FLOOR};

/// Default relative step for [`finite_difference_gradient`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// One matrix per weight layer, shaped like the network's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub per_layer: Vec<Matrix>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            per_layer: net
                .weights()
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn matches(&self, net: &Network) -> bool {
        self.per_layer.len() == net.weights().len()
            && self
                .per_layer
                .iter()
                .zip(net.weights())
                .all(|(g, w)| g.same_shape(w))
    }

    /// First `(layer, row, column)` holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(usize, usize, usize)> {
        for (l, g) in self.per_layer.iter().enumerate() {
            for r in 0..g.rows() {
                if let Some(c) = g.row(r).iter().position(|v| !v.is_finite()) {
                    return Some((l, r, c));
                }
            }
        }
        None
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += scale * y;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.per_layer
            .iter()
            .flat_map(|m| m.as_slice())
            .map(|v| v * v)
            .sum()
    }
}

/// Which analytic gradient to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Exact,
    Paper,
}

impl GradientMode {
    pub fn label(self) -> &'static str {
        match self {
            GradientMode::Exact => "exact",
            GradientMode::Paper => "paper",
        }
    }
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GradientMode::Exact),
            "paper" => Ok(GradientMode::Paper),
            _ => Err(invalid(format!("gradient mode must be `exact` or `paper`, got `{s}`"))),
        }
    }
}

/// Knobs for the literal recursions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PaperOptions {
    /// Sum the hidden-chain seed over the first `N` (output count) neurons of
    /// the layer above instead of over that layer's full width.
    pub literal_n_bound: bool,
}

// ---------------------------------------------------------------------------
// Exact gradient
// ---------------------------------------------------------------------------

/// `d/dw` of `1 / max(|w|, eps)` is `-w / |w|^3` above the floor and zero below.
fn inverse_norm_slope(n: f64) -> Option<f64> {
    (n > NORM_FLOOR).then(|| 1.0 / (n * n * n))
}

/// Gradient of `J_t` with respect to every weight.
pub fn exact_gradient(
    net: &Network,
    x: &[f64],
    t: &TargetEncoding,
    lambda: f64,
) -> Result<GradientSet> {
    let shape = net.shape();
    if t.len() != shape.output_dim {
        return Err(invalid("target length does not match network outputs"));
    }
    let trace = net.forward(x)?;
    let hidden = shape.hidden_layers;
    let mut grad = GradientSet::zeros_like(net);

    // Output layer: sum_i t_i z_i / n_i.
    let out = net.output_weights();
    let y_last = &trace.activations[hidden];
    let mut upstream = vec![0.0; y_last.len()];
    {
        let g = &mut grad.per_layer[hidden];
        for i in 0..out.rows() {
            let w = out.row(i);
            let t_i = t.values()[i];
            let raw_norm = norm(w);
            let n = raw_norm.max(NORM_FLOOR);
            let z = trace.pre_activations[hidden][i];
            let row = g.row_mut(i);
            for (k, gk) in row.iter_mut().enumerate() {
                let input = y_last.get(k).copied().unwrap_or(1.0);
                *gk = t_i * input / n;
            }
            if let Some(s) = inverse_norm_slope(raw_norm) {
                for (gk, wk) in row.iter_mut().zip(w) {
                    *gk -= t_i * z * s * wk;
                }
            }
            for (u, wk) in upstream.iter_mut().zip(w) {
                *u += t_i * wk / n;
            }
        }
    }

    // Hidden layers: backpropagated margin minus lambda * z sigma(z) / n.
    for m in (0..hidden).rev() {
        let w = &net.weights()[m];
        let a = &trace.activations[m];
        let z = &trace.pre_activations[m];
        let norms: Vec<f64> = (0..w.rows()).map(|j| norm(w.row(j))).collect();
        let mut dz = vec![0.0; w.rows()];
        for j in 0..w.rows() {
            let n = norms[j].max(NORM_FLOOR);
            let s = activation(z[j]);
            let ds = activation_derivative(z[j]);
            // d/dz [z sigma(z)] = sigma(z) + z sigma'(z)
            dz[j] = upstream[j] * ds - lambda * (s + z[j] * ds) / n;
        }
        let g = &mut grad.per_layer[m];
        for j in 0..w.rows() {
            let wj = w.row(j);
            let row = g.row_mut(j);
            for (k, gk) in row.iter_mut().enumerate() {
                *gk = dz[j] * a.get(k).copied().unwrap_or(1.0);
            }
            if let Some(slope) = inverse_norm_slope(norms[j]) {
                let pen = z[j] * activation(z[j]);
                for (gk, wk) in row.iter_mut().zip(wj) {
                    *gk += lambda * pen * slope * wk;
                }
            }
        }
        if m > 0 {
            let mut next = vec![0.0; a.len()];
            for (j, d) in dz.iter().enumerate() {
                for (nk, wk) in next.iter_mut().zip(w.row(j)) {
                    *nk += d * wk;
                }
            }
            upstream = next;
        }
    }

    if let Some((l, r, c)) = grad.first_non_finite() {
        return Err(Error::Numeric(format!(
            "exact gradient is non-finite at layer {l}, row {r}, column {c}"
        )));
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Literal recursions
// ---------------------------------------------------------------------------

/// Continues a delta chain downward: from the vector at hidden layer `level`
/// produces the vectors at `level - 1, ..., 1`.
fn recurse_down(net: &Network, trace: &ForwardTrace, seed: Vec<f64>, level: usize) -> Vec<Vec<f64>> {
    let mut chain = vec![seed];
    for k in (2..=level).rev() {
        let w = &net.weights()[k - 1];
        let upper = chain.last().expect("non-empty");
        let z_below = &trace.pre_activations[k - 2];
        let next = (0..z_below.len())
            .map(|j| {
                let s: f64 = upper.iter().enumerate().map(|(s, d)| d * w.get(s, j)).sum();
                s * activation_derivative(z_below[j])
            })
            .collect();
        chain.push(next);
    }
    chain
}

/// Output-margin deltas, ordered from hidden layer `M` down to hidden layer 1.
pub fn paper_delta_output_chain(
    net: &Network,
    trace: &ForwardTrace,
    t: &TargetEncoding,
) -> Result<Vec<Vec<f64>>> {
    check_trace(net, trace)?;
    let shape = net.shape();
    if t.len() != shape.output_dim {
        return Err(invalid("target length does not match network outputs"));
    }
    let hidden = shape.hidden_layers;
    let out = net.output_weights();
    let z = &trace.pre_activations[hidden - 1];
    let seed = (0..z.len())
        .map(|j| {
            let s: f64 = (0..out.rows())
                .map(|s| t.values()[s] / floored_norm(out.row(s)) * out.get(s, j))
                .sum();
            s * activation_derivative(z[j])
        })
        .collect();
    Ok(recurse_down(net, trace, seed, hidden))
}

/// Penalty deltas seeded at hidden layer `target_layer`, ordered from
/// `target_layer` down to 1.
///
/// The seed sums over the neurons of the layer two above (`weights[m]`, whose
/// outputs are `activations[m + 1]`), optionally truncated to the first `N`.
pub fn paper_delta_hidden_chain(
    net: &Network,
    trace: &ForwardTrace,
    target_layer: usize,
    options: PaperOptions,
) -> Result<Vec<Vec<f64>>> {
    check_trace(net, trace)?;
    let shape = net.shape();
    let m = target_layer;
    if m == 0 || m > shape.hidden_layers {
        return Err(invalid(format!(
            "hidden layer {m} out of range 1..={}",
            shape.hidden_layers
        )));
    }
    let w_above = &net.weights()[m];
    let y_above = &trace.activations[m + 1];
    let bound = if options.literal_n_bound {
        shape.output_dim.min(w_above.rows())
    } else {
        w_above.rows()
    };
    let z = &trace.pre_activations[m - 1];
    let seed = (0..z.len())
        .map(|j| {
            let s: f64 = (0..bound)
                .map(|s| y_above[s] / floored_norm(w_above.row(s)) * w_above.get(s, j))
                .sum();
            s * activation_derivative(z[j])
        })
        .collect();
    Ok(recurse_down(net, trace, seed, m))
}

/// Gamma for a single weight row and its (already augmented, if biased) input.
pub fn paper_gamma_row(w: &[f64], y_in: &[f64]) -> Result<Vec<f64>> {
    if w.len() != y_in.len() {
        return Err(invalid(format!(
            "gamma needs equal lengths, got {} and {}",
            w.len(),
            y_in.len()
        )));
    }
    let z = affine(w, y_in);
    let y = activation(z);
    let n = floored_norm(w);
    let ds = activation_derivative(z);
    Ok(y_in
        .iter()
        .zip(w)
        .map(|(yk, wk)| y / n * yk - z * y / (n * n * n) * wk + z * ds / n * yk)
        .collect())
}

/// Gamma of neuron `neuron` in hidden layer `layer`.
pub fn paper_gamma(net: &Network, trace: &ForwardTrace, layer: usize, neuron: usize) -> Result<Vec<f64>> {
    check_trace(net, trace)?;
    let shape = net.shape();
    if layer == 0 || layer > shape.hidden_layers || neuron >= shape.hidden_width {
        return Err(invalid(format!("no hidden neuron ({layer}, {neuron})")));
    }
    let input = augment(&trace.activations[layer - 1], net.has_bias());
    paper_gamma_row(net.weights()[layer - 1].row(neuron), &input)
}

/// Output-row gradient `(t/|w|) y - (t <w, y> / |w|^3) w` for `y` already augmented.
pub fn paper_output_row_gradient(w: &[f64], y: &[f64], t_i: f64) -> Result<Vec<f64>> {
    if w.len() != y.len() {
        return Err(invalid("output row and input lengths differ"));
    }
    let n = floored_norm(w);
    let z = affine(w, y);
    Ok(y.iter()
        .zip(w)
        .map(|(yk, wk)| t_i / n * yk - t_i * z / (n * n * n) * wk)
        .collect())
}

/// Gradient assembled from the literal recursions.
pub fn paper_gradient(
    net: &Network,
    trace: &ForwardTrace,
    t: &TargetEncoding,
    lambda: f64,
) -> Result<GradientSet> {
    paper_gradient_with(net, trace, t, lambda, PaperOptions::default())
}

pub fn paper_gradient_with(
    net: &Network,
    trace: &ForwardTrace,
    t: &TargetEncoding,
    lambda: f64,
    options: PaperOptions,
) -> Result<GradientSet> {
    check_trace(net, trace)?;
    let shape = net.shape();
    let hidden = shape.hidden_layers;
    let bias = net.has_bias();
    let mut grad = GradientSet::zeros_like(net);

    let y_last = augment(&trace.activations[hidden], bias);
    let out = net.output_weights();
    for i in 0..out.rows() {
        let row = paper_output_row_gradient(out.row(i), &y_last, t.values()[i])?;
        grad.per_layer[hidden].row_mut(i).copy_from_slice(&row);
    }

    let out_chain = paper_delta_output_chain(net, trace, t)?;
    // hidden_chains[s - 1] is the chain seeded at hidden layer s.
    let hidden_chains: Vec<Vec<Vec<f64>>> = (1..=hidden)
        .map(|s| paper_delta_hidden_chain(net, trace, s, options))
        .collect::<Result<_>>()?;

    for m in 1..=hidden {
        let y_in = augment(&trace.activations[m - 1], bias);
        let delta_out = &out_chain[hidden - m];
        let w = &net.weights()[m - 1];
        for i in 0..w.rows() {
            let penalty_delta: f64 = (m + 1..=hidden).map(|s| hidden_chains[s - 1][s - m][i]).sum();
            let coeff = delta_out[i] - lambda * penalty_delta;
            let gamma = paper_gamma_row(w.row(i), &y_in)?;
            let row = grad.per_layer[m - 1].row_mut(i);
            for ((g, yk), gk) in row.iter_mut().zip(&y_in).zip(&gamma) {
                *g = coeff * yk - lambda * gk;
            }
        }
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central differences of an arbitrary scalar function of the weights.
///
/// Each coordinate is perturbed by `h = step * max(1, |w|)`.
pub fn fd_gradient_of<F>(net: &Network, step: f64, f: F) -> Result<GradientSet>
where
    F: Fn(&Network) -> Result<f64>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(invalid(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut probe = net.clone();
    let mut grad = GradientSet::zeros_like(net);
    for l in 0..net.weights().len() {
        let len = net.weights()[l].as_slice().len();
        for idx in 0..len {
            let orig = net.weights()[l].as_slice()[idx];
            let h = step * orig.abs().max(1.0);
            probe.weights_mut()[l].as_mut_slice()[idx] = orig + h;
            let up = f(&probe)?;
            probe.weights_mut()[l].as_mut_slice()[idx] = orig - h;
            let down = f(&probe)?;
            probe.weights_mut()[l].as_mut_slice()[idx] = orig;
            grad.per_layer[l].as_mut_slice()[idx] = (up - down) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Central-difference gradient of `J_t`.
pub fn finite_difference_gradient(
    net: &Network,
    x: &[f64],
    t: &TargetEncoding,
    lambda: f64,
    step: f64,
) -> Result<GradientSet> {
    net.check_input(x)?;
    fd_gradient_of(net, step, |n| objective_for_input(n, x, t, lambda))
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Worst-case disagreement between an analytic gradient and the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// `(layer, row, column)` of the largest relative error.
    pub worst_coordinate: (usize, usize, usize),
    pub mode_compared: GradientMode,
    /// Largest relative error within each weight layer.
    pub per_layer_rel_error: Vec<f64>,
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-8)
}

pub fn compare_gradients(
    analytic: &GradientSet,
    reference: &GradientSet,
    mode: GradientMode,
) -> Result<GradCheckReport> {
    if analytic.per_layer.len() != reference.per_layer.len()
        || analytic
            .per_layer
            .iter()
            .zip(&reference.per_layer)
            .any(|(a, b)| !a.same_shape(b))
    {
        return Err(invalid("gradient sets have different shapes"));
    }
    let mut report = GradCheckReport {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_coordinate: (0, 0, 0),
        mode_compared: mode,
        per_layer_rel_error: vec![0.0; analytic.per_layer.len()],
    };
    for (l, (a, f)) in analytic.per_layer.iter().zip(&reference.per_layer).enumerate() {
        for r in 0..a.rows() {
            for c in 0..a.cols() {
                let (av, fv) = (a.get(r, c), f.get(r, c));
                let abs = (av - fv).abs();
                let rel = relative_error(av, fv);
                report.max_abs_error = report.max_abs_error.max(abs);
                report.per_layer_rel_error[l] = report.per_layer_rel_error[l].max(rel);
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst_coordinate = (l, r, c);
                }
            }
        }
    }
    Ok(report)
}

/// Compares the chosen analytic mode with central differences at the default step.
pub fn gradient_check(
    net: &Network,
    x: &[f64],
    t: &TargetEncoding,
    lambda: f64,
    mode: GradientMode,
) -> Result<GradCheckReport> {
    let analytic = match mode {
        GradientMode::Exact => exact_gradient(net, x, t, lambda)?,
        GradientMode::Paper => paper_gradient(net, &net.forward(x)?, t, lambda)?,
    };
    let fd = finite_difference_gradient(net, x, t, lambda, DEFAULT_FD_STEP)?;
    compare_gradients(&analytic, &fd, mode)
}
