//! Line-oriented text format for trained networks.
//!
//! ```text
//! mbnn-model v1
//! <input_dim> <hidden_layers> <hidden_width> <output_dim>
//! <one line per neuron row, weight layers in order, bias column last>
//! ```
//!
//! Values are written with 17 significant digits so that reading a file back
//! reproduces every weight bit for bit. Whether the network carries bias
//! columns is inferred from the row length.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Matrix, Network, NetworkShape};

pub const MODEL_HEADER: &str = "mbnn-model v1";

pub fn model_to_string(net: &Network) -> String {
    let s = net.shape();
    let mut out = format!(
        "{MODEL_HEADER}\n{} {} {} {}\n",
        s.input_dim, s.hidden_layers, s.hidden_width, s.output_dim
    );
    for w in net.weights() {
        for r in 0..w.rows() {
            let line: Vec<String> = w.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn model_from_str(text: &str, origin: &str) -> Result<Network> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column: None,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, MODEL_HEADER)) => {}
        Some((n, other)) => return Err(err(n, format!("expected `{MODEL_HEADER}`, found `{other}`"))),
        None => return Err(err(1, "empty model file".into())),
    }
    let (n, dims) = lines.next().ok_or_else(|| err(2, "missing dimension line".into()))?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|d| d.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(n, format!("bad dimension line `{dims}`")))?;
    let [input_dim, hidden_layers, hidden_width, output_dim] = dims[..] else {
        return Err(err(n, format!("expected 4 dimensions, found {}", dims.len())));
    };
    let shape = NetworkShape::new(input_dim, hidden_layers, hidden_width, output_dim)
        .map_err(|e| err(n, e.to_string()))?;

    let mut bias = None;
    let mut weights = Vec::with_capacity(shape.weight_layers());
    for m in 0..shape.weight_layers() {
        let mut rows = Vec::with_capacity(shape.layer_width(m + 1));
        for _ in 0..shape.layer_width(m + 1) {
            let (n, line) = lines
                .next()
                .ok_or_else(|| err(text.lines().count() + 1, "unexpected end of file".into()))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| err(n, "row contains a non-numeric or non-finite value".into()))?;
            let width = shape.layer_width(m);
            let has_bias = match row.len() {
                l if l == width + 1 => true,
                l if l == width => false,
                l => return Err(err(n, format!("expected {} or {} values, found {l}", width, width + 1))),
            };
            if *bias.get_or_insert(has_bias) != has_bias {
                return Err(err(n, "inconsistent bias columns".into()));
            }
            rows.push(row);
        }
        weights.push(Matrix::from_rows(&rows)?);
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(err(n, format!("trailing content `{extra}`")));
    }
    Network::from_weights(shape, bias.unwrap_or(true), weights)
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(net)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_str(&text, &path.display().to_string())
}
