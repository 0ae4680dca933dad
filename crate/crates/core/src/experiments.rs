//! Repeated split-train-evaluate trials, benchmark tables and hidden-width sweeps.
//!
//! Trials are keyed by `(fraction, algorithm, repeat)` and always reported in
//! request order, so running them on several threads never changes output.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{normalize, split_once, LabelledDataset, SplitSpec};
use crate::error::{invalid, Error, Result};
use crate::network::{Network, NetworkShape};
use crate::trainer::{train, Algorithm, TrainConfig};

/// Fraction of `indices` whose prediction equals the stored label.
pub fn evaluate_accuracy(net: &Network, data: &LabelledDataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(invalid("accuracy over an empty index set"));
    }
    let mut correct = 0usize;
    for &i in indices {
        if net.predict(&data.features()[i])? == data.labels()[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Outcome of one split/train/evaluate run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub dataset_name: String,
    pub train_fraction: f64,
    pub algorithm: Algorithm,
    pub repeat: usize,
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub wall_time: f64,
    /// Configuration as passed in; the network is seeded with
    /// `config.seed + repeat` and the split with `(config.seed, repeat)`.
    pub config: TrainConfig,
    pub shape: NetworkShape,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Splits, normalizes on the training rows, trains and scores held-out rows.
pub fn run_trial(
    dataset_name: &str,
    data: &LabelledDataset,
    fraction: f64,
    shape: NetworkShape,
    config: &TrainConfig,
    repeat_index: usize,
) -> Result<TrialResult> {
    let spec = SplitSpec::new(fraction, config.seed, repeat_index + 1)?;
    let part = split_once(data.len(), &spec, repeat_index)?;
    let normalized = normalize(data, &part.train)?;
    let train_set = normalized.subset(&part.train)?;
    let trial_config = TrainConfig {
        seed: config.seed.wrapping_add(repeat_index as u64),
        ..*config
    };

    let start = Instant::now();
    let log = train(&train_set, shape, &trial_config).map_err(|e| match e {
        Error::Numeric(msg) => Error::Numeric(format!(
            "{dataset_name} fraction {fraction} {} repeat {repeat_index}: {msg}",
            config.algorithm
        )),
        other => other,
    })?;
    let wall_time = start.elapsed().as_secs_f64();

    let test_accuracy = evaluate_accuracy(&log.final_network, &normalized, &part.test)?;
    Ok(TrialResult {
        dataset_name: dataset_name.to_string(),
        train_fraction: fraction,
        algorithm: config.algorithm,
        repeat: repeat_index,
        test_accuracy,
        train_accuracy: log.final_train_accuracy(),
        wall_time,
        config: *config,
        shape,
        train_rows: part.train,
        test_rows: part.test,
    })
}

/// Mean and standard deviation of one (fraction, algorithm[, hidden]) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub fraction: f64,
    pub algorithm: Algorithm,
    pub hidden: usize,
    pub mean_accuracy: f64,
    pub stddev: f64,
    pub repeats: usize,
}

/// Arithmetic mean and sample standard deviation (zero for a single value).
pub fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(trials: &[TrialResult]) -> SummaryRow {
    let acc: Vec<f64> = trials.iter().map(|t| t.test_accuracy).collect();
    let (mean_accuracy, stddev) = mean_and_stddev(&acc);
    let first = &trials[0];
    SummaryRow {
        dataset: first.dataset_name.clone(),
        fraction: first.train_fraction,
        algorithm: first.algorithm,
        hidden: first.shape.hidden_width,
        mean_accuracy,
        stddev,
        repeats: trials.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    /// Ordered by fraction, then config, then repeat, as requested.
    pub trials: Vec<TrialResult>,
    /// One row per (fraction, config).
    pub summary: Vec<SummaryRow>,
}

impl Benchmark {
    pub fn cell(&self, fraction: f64, algorithm: Algorithm) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.fraction == fraction && r.algorithm == algorithm)
    }
}

struct Task {
    fraction: f64,
    shape: NetworkShape,
    config: TrainConfig,
    repeat: usize,
}

fn run_tasks(
    dataset_name: &str,
    data: &LabelledDataset,
    tasks: &[Task],
    jobs: usize,
) -> Result<Vec<TrialResult>> {
    let run = |t: &Task| run_trial(dataset_name, data, t.fraction, t.shape, &t.config, t.repeat);
    if jobs <= 1 {
        return tasks.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| tasks.par_iter().map(run).collect())
}

/// Every (fraction x config x repeat) trial plus per-cell summaries.
pub fn run_benchmark(
    dataset_name: &str,
    data: &LabelledDataset,
    fractions: &[f64],
    shape: NetworkShape,
    configs: &[TrainConfig],
    repeats: usize,
    jobs: usize,
) -> Result<Benchmark> {
    if fractions.is_empty() || configs.is_empty() {
        return Err(invalid("benchmark needs at least one fraction and one configuration"));
    }
    if repeats == 0 {
        return Err(invalid("repeats must be >= 1"));
    }
    for c in configs {
        c.validate()?;
    }
    let mut tasks = Vec::new();
    for &fraction in fractions {
        for config in configs {
            for repeat in 0..repeats {
                tasks.push(Task {
                    fraction,
                    shape,
                    config: *config,
                    repeat,
                });
            }
        }
    }
    let trials = run_tasks(dataset_name, data, &tasks, jobs)?;
    let summary = trials.chunks(repeats).map(summarize).collect();
    Ok(Benchmark { trials, summary })
}

/// Mean accuracy against hidden width for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub algorithm: Algorithm,
    pub mean_accuracy: Vec<f64>,
    pub stddev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub hidden_counts: Vec<usize>,
    pub series: Vec<SweepSeries>,
    pub trials: Vec<TrialResult>,
    /// One row per (hidden count, config), hidden-major.
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    pub fn series_for(&self, algorithm: Algorithm) -> Option<&SweepSeries> {
        self.series.iter().find(|s| s.algorithm == algorithm)
    }
}

/// Trains every config at every hidden width (other dimensions from `shape`).
#[allow(clippy::too_many_arguments)]
pub fn hidden_sweep(
    dataset_name: &str,
    data: &LabelledDataset,
    fraction: f64,
    shape: NetworkShape,
    hidden_counts: &[usize],
    configs: &[TrainConfig],
    repeats: usize,
    jobs: usize,
) -> Result<SweepResult> {
    if hidden_counts.is_empty() {
        return Err(invalid("sweep needs at least one hidden count"));
    }
    if hidden_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("hidden counts must be strictly ascending"));
    }
    if configs.is_empty() || repeats == 0 {
        return Err(invalid("sweep needs a configuration and repeats >= 1"));
    }
    for c in configs {
        c.validate()?;
    }
    let mut tasks = Vec::new();
    for &h in hidden_counts {
        let s = shape.with_hidden_width(h);
        s.validate()?;
        for config in configs {
            for repeat in 0..repeats {
                tasks.push(Task {
                    fraction,
                    shape: s,
                    config: *config,
                    repeat,
                });
            }
        }
    }
    let trials = run_tasks(dataset_name, data, &tasks, jobs)?;
    let summary: Vec<SummaryRow> = trials.chunks(repeats).map(summarize).collect();
    let series = configs
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let rows: Vec<&SummaryRow> = summary.iter().skip(ci).step_by(configs.len()).collect();
            SweepSeries {
                algorithm: c.algorithm,
                mean_accuracy: rows.iter().map(|r| r.mean_accuracy).collect(),
                stddev: rows.iter().map(|r| r.stddev).collect(),
            }
        })
        .collect();
    Ok(SweepResult {
        hidden_counts: hidden_counts.to_vec(),
        series,
        trials,
        summary,
    })
}

/// Header of [`results_csv`].
pub const RESULTS_HEADER: &str =
    "dataset,fraction,algorithm,hidden,seed,repeat,test_accuracy,train_accuracy,wall_time_s";
pub const SUMMARY_HEADER: &str = "dataset,fraction,algorithm,mean_accuracy,stddev,repeats";
pub const SWEEP_HEADER: &str = "dataset,fraction,hidden,algorithm,mean_accuracy,stddev,repeats";

/// Per-trial CSV. With `record_time == false` the wall-time column is written
/// as `0` so that reruns produce identical bytes.
pub fn results_csv(trials: &[TrialResult], record_time: bool) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for t in trials {
        let time = if record_time {
            format!("{:.3}", t.wall_time)
        } else {
            "0".to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t.dataset_name,
            t.train_fraction,
            t.algorithm,
            t.shape.hidden_width,
            t.config.seed,
            t.repeat,
            t.test_accuracy,
            t.train_accuracy,
            time
        );
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.dataset, r.fraction, r.algorithm, r.mean_accuracy, r.stddev, r.repeats
        );
    }
    out
}

pub fn sweep_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.dataset, r.fraction, r.hidden, r.algorithm, r.mean_accuracy, r.stddev, r.repeats
        );
    }
    out
}

/// Human-readable table: one line per row.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<12} {:>9} {:>7} {:>8} {:>9} {:>8} {:>7}\n",
        "dataset", "fraction", "hidden", "algo", "mean_acc", "stddev", "repeats"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>7} {:>8} {:>9.4} {:>8.4} {:>7}",
            r.dataset, r.fraction, r.hidden, r.algorithm, r.mean_accuracy, r.stddev, r.repeats
        );
    }
    out
}
