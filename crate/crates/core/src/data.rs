//! Dataset loading, normalization, target encoding and seeded splits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::objective::TargetEncoding;

/// Standard deviations at or below this are treated as zero variance.
pub const STDDEV_FLOOR: f64 = 1e-12;

/// Which CSV column holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(LabelColumn::Last);
        }
        s.parse::<usize>()
            .map(LabelColumn::Index)
            .map_err(|_| invalid(format!("label column must be `last` or an index, got `{s}`")))
    }
}

/// Per-feature z-score parameters. Zero-variance features carry `(0, 1)` so
/// that applying them is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl FeatureStats {
    pub fn from_rows(features: &[Vec<f64>], rows: &[usize]) -> Result<Self> {
        let Some(&first) = rows.first() else {
            return Err(invalid("cannot compute feature statistics from zero rows"));
        };
        let d = features[first].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, x) in mean.iter_mut().zip(&features[r]) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((v, x), m) in var.iter_mut().zip(&features[r]).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut stddev: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        for (m, s) in mean.iter_mut().zip(stddev.iter_mut()) {
            if *s <= STDDEV_FLOOR {
                *m = 0.0;
                *s = 1.0;
            }
        }
        Ok(FeatureStats { mean, stddev })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.stddev))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Two-line text form: means, then standard deviations, 17 significant digits.
    pub fn to_text(&self) -> String {
        let line = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        format!("{}\n{}\n", line(&self.mean), line(&self.stddev))
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut parse = |line_no: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: line_no,
                column: None,
                message: "missing line".into(),
            })?;
            line.split(',')
                .enumerate()
                .map(|(c, cell)| {
                    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: origin.to_string(),
                        line: line_no,
                        column: Some(c + 1),
                        message: format!("`{cell}` is not a number"),
                    })
                })
                .collect()
        };
        let mean = parse(1)?;
        let stddev = parse(2)?;
        if mean.len() != stddev.len() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 2,
                column: None,
                message: "mean and stddev lines differ in length".into(),
            });
        }
        Ok(FeatureStats { mean, stddev })
    }
}

/// Feature matrix plus class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_stats: Option<FeatureStats>,
}

impl LabelledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(invalid("dataset has no samples"));
        }
        if features.len() != labels.len() {
            return Err(invalid(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(invalid("dataset has no feature columns"));
        }
        if let Some(i) = features.iter().position(|r| r.len() != d) {
            return Err(invalid(format!("row {i} has {} features, expected {d}", features[i].len())));
        }
        if let Some(i) = features.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(invalid(format!("row {i} contains a non-finite feature")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(invalid(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(LabelledDataset {
            features,
            labels,
            class_names,
            feature_stats: None,
        })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_stats(&self) -> Option<&FeatureStats> {
        self.feature_stats.as_ref()
    }

    /// Rows at `indices`, in that order, sharing this dataset's classes.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut out = LabelledDataset::new(
            indices.iter().map(|&i| self.features[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
        )?;
        out.feature_stats = self.feature_stats.clone();
        Ok(out)
    }

    /// This dataset followed by `other`, whose labels are remapped by class name.
    pub fn concat(&self, other: &LabelledDataset) -> Result<Self> {
        if other.feature_dim() != self.feature_dim() {
            return Err(invalid("cannot concatenate datasets of different widths"));
        }
        let mut class_names = self.class_names.clone();
        let mut remap = Vec::with_capacity(other.class_names.len());
        for name in &other.class_names {
            let idx = match class_names.iter().position(|c| c == name) {
                Some(i) => i,
                None => {
                    class_names.push(name.clone());
                    class_names.len() - 1
                }
            };
            remap.push(idx);
        }
        let mut features = self.features.clone();
        features.extend(other.features.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().map(|&l| remap[l]));
        LabelledDataset::new(features, labels, class_names)
    }

    /// Replaces labels and class names, keeping the features.
    pub fn relabel(&self, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        LabelledDataset::new(self.features.clone(), labels, class_names)
    }

    /// Serializes back to CSV: features with 17 significant digits, label token last.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (row, &label) in self.features.iter().zip(&self.labels) {
            for x in row {
                let _ = write!(out, "{x:.16e},");
            }
            out.push_str(&self.class_names[label]);
            out.push('\n');
        }
        out
    }
}

/// Parses comma-separated text. `origin` names the source in error messages.
pub fn parse_csv(
    text: &str,
    origin: &str,
    has_header: bool,
    label_column: LabelColumn,
) -> Result<LabelledDataset> {
    let parse_err = |line: usize, column: Option<usize>, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut width: Option<usize> = None;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        if has_header && n == 0 {
            continue;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    line_no,
                    None,
                    format!("expected {w} columns, found {}", cells.len()),
                ))
            }
            _ => {}
        }
        if cells.len() < 2 {
            return Err(parse_err(line_no, None, "need at least one feature and a label".into()));
        }
        let label_at = match label_column {
            LabelColumn::Last => cells.len() - 1,
            LabelColumn::Index(i) if i < cells.len() => i,
            LabelColumn::Index(i) => {
                return Err(parse_err(
                    line_no,
                    None,
                    format!("label column {i} out of range for {} columns", cells.len()),
                ))
            }
        };
        let mut row = Vec::with_capacity(cells.len() - 1);
        for (c, cell) in cells.iter().enumerate() {
            if c == label_at {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(line_no, Some(c + 1), format!("`{cell}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line_no, Some(c + 1), format!("`{cell}` is not finite")));
            }
            row.push(v);
        }
        let token = cells[label_at];
        if token.is_empty() {
            return Err(parse_err(line_no, Some(label_at + 1), "empty label".into()));
        }
        let idx = *class_index.entry(token.to_string()).or_insert_with(|| {
            class_names.push(token.to_string());
            class_names.len() - 1
        });
        features.push(row);
        labels.push(idx);
    }

    if features.is_empty() {
        return Err(parse_err(0, None, "no data rows".into()));
    }
    LabelledDataset::new(features, labels, class_names)
}

pub fn load_csv(path: &Path, has_header: bool, label_column: LabelColumn) -> Result<LabelledDataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, &path.display().to_string(), has_header, label_column)
}

/// Z-scores every row with statistics taken from `train_indices` only.
pub fn normalize(data: &LabelledDataset, train_indices: &[usize]) -> Result<LabelledDataset> {
    let stats = FeatureStats::from_rows(&data.features, train_indices)?;
    Ok(apply_stats(data, stats))
}

/// Applies previously computed statistics to every row.
pub fn apply_stats(data: &LabelledDataset, stats: FeatureStats) -> LabelledDataset {
    LabelledDataset {
        features: data.features.iter().map(|r| stats.apply(r)).collect(),
        labels: data.labels.clone(),
        class_names: data.class_names.clone(),
        feature_stats: Some(stats),
    }
}

pub fn encode_targets(labels: &[usize], class_count: usize) -> Result<Vec<TargetEncoding>> {
    labels
        .iter()
        .map(|&l| TargetEncoding::new(l, class_count))
        .collect()
}

/// Random train/test partitioning, repeated `repeats` times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub repeats: usize,
}

impl SplitSpec {
    pub const DEFAULT_REPEATS: usize = 5;

    pub fn new(train_fraction: f64, seed: u64, repeats: usize) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(invalid(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        if repeats == 0 {
            return Err(invalid("repeats must be >= 1"));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
            repeats,
        })
    }

    /// `floor(train_fraction * total)`.
    pub fn train_size(&self, total: usize) -> usize {
        (self.train_fraction * total as f64).floor() as usize
    }
}

/// Train and test row indices for one repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seed for the shuffle of repeat `repeat` under base seed `seed`.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ (repeat as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Partition for a single repeat.
pub fn split_once(total: usize, spec: &SplitSpec, repeat: usize) -> Result<Partition> {
    let n_train = spec.train_size(total);
    if n_train == 0 {
        return Err(invalid(format!(
            "train fraction {} of {total} samples leaves an empty training set",
            spec.train_fraction
        )));
    }
    if n_train >= total {
        return Err(invalid("train fraction leaves an empty test set"));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(repeat_seed(spec.seed, repeat));
    idx.shuffle(&mut rng);
    let test = idx.split_off(n_train);
    Ok(Partition { train: idx, test })
}

pub fn split(data: &LabelledDataset, spec: &SplitSpec) -> Result<Vec<Partition>> {
    (0..spec.repeats)
        .map(|r| split_once(data.len(), spec, r))
        .collect()
}

/// Letter classes 1..=26 to vowel (1) / consonant (0).
pub fn isolet_binarize(letters: &[u32]) -> Result<Vec<usize>> {
    letters
        .iter()
        .map(|&l| match l {
            1 | 5 | 9 | 15 | 21 => Ok(1),
            2..=26 => Ok(0),
            _ => Err(invalid(format!("letter class {l} outside 1..=26"))),
        })
        .collect()
}

/// Class names produced by [`binarize_isolet_dataset`].
pub const ISOLET_BINARY_CLASSES: [&str; 2] = ["consonant", "vowel"];

/// Converts a 26-class ISOLET dataset (label tokens such as `5` or `5.`) to
/// the vowel/consonant task.
pub fn binarize_isolet_dataset(data: &LabelledDataset) -> Result<LabelledDataset> {
    let letters: Vec<u32> = data
        .labels()
        .iter()
        .map(|&l| {
            let token = &data.class_names()[l];
            token
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 0.0)
                .map(|v| v as u32)
                .ok_or_else(|| invalid(format!("ISOLET label `{token}` is not a letter number")))
        })
        .collect::<Result<_>>()?;
    let labels = isolet_binarize(&letters)?;
    data.relabel(
        labels,
        ISOLET_BINARY_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Fixed 40-sample two-class set in the plane, separable by the line
/// `x = 0` with every point at distance >= 0.5 from it.
pub fn separable_2d() -> LabelledDataset {
    let mut features = Vec::with_capacity(40);
    let mut labels = Vec::with_capacity(40);
    for i in 0..20 {
        let dx = 0.5 + 0.25 * (i % 5) as f64;
        let y = -1.0 + 0.5 * (i / 5) as f64 + 0.05 * (i % 3) as f64;
        features.push(vec![dx, y]);
        labels.push(1);
        features.push(vec![-dx - 0.1 * (i % 2) as f64, -y + 0.2]);
        labels.push(0);
    }
    LabelledDataset::new(features, labels, vec!["left".into(), "right".into()])
        .expect("fixed dataset is valid")
}
