//! Flag and config-file merging.
//!
//! A config file holds `key = value` lines named after the long flags
//! (`lambda = 0.1`, `label-col = last`); `#` starts a comment. Flags given on
//! the command line always win over file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mbnn::data::LabelColumn;
use mbnn::gradients::GradientMode;
use mbnn::trainer::{Algorithm, TrainConfig};
use mbnn::NetworkShape;

use crate::CliError;

/// Every key accepted in a config file.
pub const KNOWN_KEYS: &[&str] = &[
    "data",
    "header",
    "label-col",
    "shape",
    "lambda",
    "alpha",
    "epochs",
    "seed",
    "repeats",
    "fraction",
    "algorithm",
    "grad-mode",
    "out",
    "jobs",
    "hidden",
    "isolet-binary",
    "no-timing",
    "log",
    "model",
    "instances",
    "full-batch",
];

/// Raw merged values; typed accessors report errors against the flag name.
#[derive(Debug, Clone, Default)]
pub struct CliConfig {
    values: BTreeMap<String, String>,
}

pub fn parse_config_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "{origin}: line {}: expected `key = value`",
                i + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!(
                "{origin}: line {}: unknown key `{key}`",
                i + 1
            )));
        }
        values.insert(key, value.trim().to_string());
    }
    Ok(values)
}

impl CliConfig {
    /// Layers `flags` (already stringified, `None` when absent) over the file.
    pub fn merge(
        file: Option<&Path>,
        flags: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self, CliError> {
        let mut values = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::usage(format!("--config {}: {e}", path.display()))
                })?;
                parse_config_text(&text, &path.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        for (key, value) in flags {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Ok(CliConfig { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The merged settings in config-file syntax, for run manifests.
    pub fn to_text(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("--{key} `{v}`: {e}"))),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(CliError::usage(format!("--{key}: expected true or false, got `{v}`"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| CliError::usage(format!("--{key} `{s}`: {e}")))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    pub fn data_path(&self) -> Result<PathBuf, CliError> {
        self.raw("data")
            .map(PathBuf::from)
            .ok_or_else(|| CliError::usage("missing required --data PATH"))
    }

    pub fn label_column(&self) -> Result<LabelColumn, CliError> {
        Ok(self.parsed("label-col")?.unwrap_or_default())
    }

    /// `--shape` as (layer count, uniform width).
    pub fn hidden(&self) -> Result<Option<(usize, usize)>, CliError> {
        let Some(widths) = self.list::<usize>("shape")? else {
            return Ok(None);
        };
        let first = widths[0];
        if first == 0 || widths.iter().any(|&w| w != first) {
            return Err(CliError::usage(format!(
                "--shape `{}`: hidden widths must be equal and positive",
                self.raw("shape").unwrap_or_default()
            )));
        }
        Ok(Some((widths.len(), first)))
    }

    pub fn shape_for(
        &self,
        input_dim: usize,
        output_dim: usize,
        default_width: usize,
    ) -> Result<NetworkShape, CliError> {
        let (layers, width) = self.hidden()?.unwrap_or((1, default_width));
        NetworkShape::new(input_dim, layers, width, output_dim).map_err(CliError::usage_from)
    }

    /// Training settings for `algorithm`, validated.
    pub fn train_config(&self, algorithm: Algorithm) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let config = TrainConfig {
            lambda: self.parsed("lambda")?.unwrap_or(d.lambda),
            alpha: self.parsed("alpha")?.unwrap_or(d.alpha),
            epochs: self.parsed("epochs")?.unwrap_or(d.epochs),
            seed: self.seed()?,
            gradient_mode: self.parsed::<GradientMode>("grad-mode")?.unwrap_or_default(),
            algorithm,
            full_batch: self.flag("full-batch")?,
            ..d
        };
        config.validate().map_err(CliError::usage_from)?;
        Ok(config)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        Ok(self.parsed("seed")?.unwrap_or(0))
    }

    /// `--algorithm`, or every algorithm when absent.
    pub fn algorithms(&self, default_all: bool) -> Result<Vec<Algorithm>, CliError> {
        match self.list::<Algorithm>("algorithm")? {
            Some(a) => Ok(a),
            None if default_all => Ok(vec![Algorithm::Margin, Algorithm::SquaredError]),
            None => Ok(vec![Algorithm::Margin]),
        }
    }

    pub fn jobs(&self) -> Result<usize, CliError> {
        let jobs = self.parsed("jobs")?.unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be >= 1"));
        }
        Ok(jobs)
    }

    pub fn repeats(&self) -> Result<usize, CliError> {
        let repeats = self.parsed("repeats")?.unwrap_or(mbnn::data::SplitSpec::DEFAULT_REPEATS);
        if repeats == 0 {
            return Err(CliError::usage("--repeats must be >= 1"));
        }
        Ok(repeats)
    }
}

/// Hidden width used when `--shape` is absent, chosen by dataset name.
pub fn default_hidden_width(dataset_name: &str) -> usize {
    let name = dataset_name.to_ascii_lowercase();
    if name.contains("isolet") {
        32
    } else if name.contains("magic") {
        16
    } else {
        8
    }
}
