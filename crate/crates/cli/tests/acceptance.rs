//! End-to-end acceptance checks.
//!
//! Runs without the libtest harness so that every criterion prints its
//! `[criterion N] PASS|FAIL ...` line; the process exits non-zero if any
//! criterion fails. Arguments filter criteria by name substring, e.g.
//! `cargo test --test acceptance -- banknote`. The dataset criteria (5-7)
//! read UCI files from `$MBNN_DATA_DIR` (default: `<workspace>/data`).

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mbnn::data::{
    binarize_isolet_dataset, load_csv, repeat_seed, separable_2d, LabelColumn, LabelledDataset,
};
use mbnn::experiments::{hidden_sweep, run_benchmark};
use mbnn::gradients::{
    compare_gradients, exact_gradient, finite_difference_gradient, paper_gradient,
    relative_error, GradientMode, DEFAULT_FD_STEP,
};
use mbnn::model_io::{load_model, model_to_string, save_model};
use mbnn::network::norm;
use mbnn::objective::{
    abstraction_penalty_term, dataset_objective, output_margin_term, TargetEncoding,
};
use mbnn::trainer::{sgd_step, train, Algorithm, TrainConfig};
use mbnn::{Network, NetworkShape};

fn report(criterion: u32, pass: bool, detail: impl AsRef<str>) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[criterion {criterion}] {verdict} {}", detail.as_ref());
    pass
}

/// Deterministic uniform draws in `[lo, hi)`.
struct Draws {
    seed: u64,
    next: usize,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Draws { seed, next: 0 }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (repeat_seed(self.seed, self.next) >> 11) as f64 / (1u64 << 53) as f64;
        self.next += 1;
        lo + (hi - lo) * u
    }

    fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    fn index(&mut self, n: usize) -> usize {
        ((self.uniform(0.0, 1.0) * n as f64) as usize).min(n - 1)
    }
}

const SHAPES: [(usize, usize, usize, usize); 4] = [(10, 2, 8, 4), (10, 1, 8, 4), (5, 2, 4, 3), (3, 1, 6, 2)];
const LAMBDAS: [f64; 3] = [0.0, 0.1, 1.0];

/// 24 instances: every shape x lambda x bias combination.
fn gradient_instances() -> Vec<(Network, Vec<f64>, TargetEncoding, f64)> {
    let mut out = Vec::new();
    let mut draws = Draws::new(2024);
    for (k, &(d, m, h, n)) in SHAPES.iter().enumerate() {
        for (j, &lambda) in LAMBDAS.iter().enumerate() {
            for bias in [true, false] {
                let seed = (k * 100 + j * 10 + bias as usize) as u64;
                let net = Network::init(NetworkShape::new(d, m, h, n).unwrap(), seed, bias);
                let x = draws.vec(d, -2.0, 2.0);
                let t = TargetEncoding::new(draws.index(n), n).unwrap();
                out.push((net, x, t, lambda));
            }
        }
    }
    out
}

fn criterion_1_gradient_correctness() -> bool {
    let instances = gradient_instances();
    let mut worst: f64 = 0.0;
    for (net, x, t, lambda) in &instances {
        let exact = exact_gradient(net, x, t, *lambda).unwrap();
        let fd = finite_difference_gradient(net, x, t, *lambda, DEFAULT_FD_STEP).unwrap();
        worst = worst.max(compare_gradients(&exact, &fd, GradientMode::Exact).unwrap().max_rel_error);
    }
    report(
        1,
        instances.len() >= 20 && worst < 1e-4,
        format!("exact vs FD max_rel_error {worst:.3e} over {} instances (< 1e-4)", instances.len()),
    )
}

fn criterion_2_paper_formula_fidelity() -> bool {
    let mut paper_worst: f64 = 0.0;
    let mut row_worst: f64 = 0.0;
    let mut rows_checked = 0;
    for (net, x, t, lambda) in &gradient_instances() {
        let trace = net.forward(x).unwrap();
        let paper = paper_gradient(net, &trace, t, *lambda).unwrap();
        let fd = finite_difference_gradient(net, x, t, *lambda, DEFAULT_FD_STEP).unwrap();
        paper_worst = paper_worst.max(compare_gradients(&paper, &fd, GradientMode::Paper).unwrap().max_rel_error);

        let exact = exact_gradient(net, x, t, *lambda).unwrap();
        let last = net.weights().len() - 1;
        let out = net.output_weights();
        for i in 0..out.rows() {
            if norm(out.row(i)) <= 1e-4 {
                continue;
            }
            rows_checked += 1;
            for (p, e) in paper.per_layer[last].row(i).iter().zip(exact.per_layer[last].row(i)) {
                row_worst = row_worst.max(relative_error(*p, *e));
            }
        }
    }
    println!("[criterion 2] paper-mode vs FD max_rel_error {paper_worst:.3e} (informational)");
    report(
        2,
        rows_checked > 0 && row_worst <= 1e-10,
        format!("output-row formula vs exact max_rel_error {row_worst:.3e} over {rows_checked} rows (<= 1e-10)"),
    )
}

fn criterion_3_objective_invariants() -> bool {
    const CASES: usize = 1000;
    let mut draws = Draws::new(3);
    let mut failures = Vec::new();

    for case in 0..CASES {
        let len = 1 + draws.index(8);
        let w = draws.vec(len, -3.0, 3.0);
        let y = draws.vec(len, -0.5, 0.5);
        let p = abstraction_penalty_term(&w, &y).unwrap();
        if p < 0.0 {
            failures.push(format!("penalty {p} < 0 at case {case}"));
        }
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        if abstraction_penalty_term(&neg, &y).unwrap() != p {
            failures.push(format!("penalty not even at case {case}"));
        }
    }

    for case in 0..CASES {
        let len = 1 + draws.index(8);
        let w = draws.vec(len, -3.0, 3.0);
        let y = draws.vec(len, -0.5, 0.5);
        let t = if case % 2 == 0 { 0.5 } else { -0.5 };
        let base = output_margin_term(&w, &y, t).unwrap();
        for c in [2.0, 10.0, 1000.0] {
            let scaled: Vec<f64> = w.iter().map(|v| c * v).collect();
            let m = output_margin_term(&scaled, &y, t).unwrap();
            if (m - base).abs() > 1e-12 * base.abs().max(1.0) {
                failures.push(format!("margin not scale-free at case {case}, c={c}"));
            }
        }
        if output_margin_term(&w, &y, -t).unwrap() != -base {
            failures.push(format!("margin sign flip fails at case {case}"));
        }
    }

    let net = Network::init(NetworkShape::new(3, 2, 4, 3).unwrap(), 11, true);
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let random_set = |draws: &mut Draws| {
        let n = 1 + draws.index(6);
        let features = (0..n).map(|_| draws.vec(3, -2.0, 2.0)).collect();
        let labels = (0..n).map(|_| draws.index(3)).collect();
        LabelledDataset::new(features, labels, names.clone()).unwrap()
    };
    for case in 0..CASES {
        let a = random_set(&mut draws);
        let b = random_set(&mut draws);
        let lambda = LAMBDAS[case % 3];
        let ja = dataset_objective(&net, &a, lambda).unwrap();
        let jb = dataset_objective(&net, &b, lambda).unwrap();
        let jab = dataset_objective(&net, &a.concat(&b).unwrap(), lambda).unwrap();
        if (jab - (ja + jb)).abs() > 1e-12 * jab.abs().max(1.0) {
            failures.push(format!("additivity fails at case {case}"));
        }
    }

    report(
        3,
        failures.is_empty(),
        format!(
            "{CASES} cases each: penalty >= 0 and even, margin 0-homogeneous (c = 2, 10, 1000), sign flip, additivity; {} violations {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn criterion_4_ascent_sanity() -> bool {
    let data = separable_2d();
    let shape = NetworkShape::new(2, 1, 4, 2).unwrap();
    let config = TrainConfig {
        alpha: 1e-3,
        epochs: 200,
        seed: 0,
        full_batch: true,
        ..TrainConfig::default()
    };
    let initial = dataset_objective(&Network::init(shape, 0, true), &data, config.lambda).unwrap();
    let log = train(&data, shape, &config).unwrap();
    let mut series = vec![initial];
    series.extend(&log.per_epoch_objective);
    let min_step = series.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let acc = log.final_train_accuracy();
    report(
        4,
        min_step >= -1e-6 && acc == 1.0,
        format!("200 full-batch iterations: smallest objective change {min_step:.3e} (>= -1e-6), final train accuracy {acc}"),
    )
}

fn data_dir() -> PathBuf {
    std::env::var_os("MBNN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
            manifest.ancestors().nth(2).unwrap_or(manifest).join("data")
        })
}

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn banknote() -> Result<LabelledDataset, String> {
    let path = data_dir().join("data_banknote_authentication.txt");
    if !path.exists() {
        return Err(format!("dataset not found: {}", path.display()));
    }
    load_csv(&path, false, LabelColumn::Last).map_err(|e| e.to_string())
}

fn isolet() -> Result<LabelledDataset, String> {
    let dir = data_dir();
    let parts: Vec<PathBuf> = if dir.join("isolet.data").exists() {
        vec![dir.join("isolet.data")]
    } else {
        vec![dir.join("isolet1+2+3+4.data"), dir.join("isolet5.data")]
    };
    let mut data: Option<LabelledDataset> = None;
    for p in &parts {
        if !p.exists() {
            return Err(format!("dataset not found: {}", p.display()));
        }
        let next = load_csv(p, false, LabelColumn::Last).map_err(|e| e.to_string())?;
        data = Some(match data {
            None => next,
            Some(d) => d.concat(&next).map_err(|e| e.to_string())?,
        });
    }
    binarize_isolet_dataset(&data.unwrap()).map_err(|e| e.to_string())
}

fn both_algorithms() -> Vec<TrainConfig> {
    let margin = TrainConfig::default();
    vec![margin, margin.with_algorithm(Algorithm::SquaredError)]
}

fn criterion_5_banknote() -> bool {
    let data = match banknote() {
        Ok(d) => d,
        Err(e) => return report(5, false, e),
    };
    let shape = NetworkShape::new(4, 1, 8, 2).unwrap();
    let b = run_benchmark("banknote", &data, &[0.10, 0.01], shape, &both_algorithms(), 5, jobs()).unwrap();
    let m10 = b.cell(0.10, Algorithm::Margin).unwrap().mean_accuracy;
    let m01 = b.cell(0.01, Algorithm::Margin).unwrap().mean_accuracy;
    let a01 = b.cell(0.01, Algorithm::SquaredError).unwrap().mean_accuracy;
    report(
        5,
        m10 >= 0.96 && m01 >= 0.90 && m01 > a01 - 0.01,
        format!("margin 10%: {m10:.4} (>= 0.96), margin 1%: {m01:.4} (>= 0.90), ann 1%: {a01:.4}"),
    )
}

fn criterion_6_isolet_binary() -> bool {
    let data = match isolet() {
        Ok(d) => d,
        Err(e) => return report(6, false, e),
    };
    let shape = NetworkShape::new(617, 1, 32, 2).unwrap();
    let b = run_benchmark("isolet", &data, &[0.0333], shape, &both_algorithms(), 5, jobs()).unwrap();
    let m = b.cell(0.0333, Algorithm::Margin).unwrap().mean_accuracy;
    let a = b.cell(0.0333, Algorithm::SquaredError).unwrap().mean_accuracy;
    report(
        6,
        m >= 0.80 && m >= a - 0.01,
        format!("margin 3.33%: {m:.4} (>= 0.80), ann: {a:.4}"),
    )
}

fn criterion_7_hidden_sweep() -> bool {
    let data = match isolet() {
        Ok(d) => d,
        Err(e) => return report(7, false, e),
    };
    let shape = NetworkShape::new(617, 1, 32, 2).unwrap();
    let counts = [8, 16, 32, 64, 128];
    let sweep = hidden_sweep("isolet", &data, 0.0333, shape, &counts, &both_algorithms(), 5, jobs()).unwrap();
    let series = &sweep.series_for(Algorithm::Margin).unwrap().mean_accuracy;
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmax = counts[series.iter().position(|&v| v == max).unwrap()];
    report(
        7,
        max - min > 0.01,
        format!("margin series {series:.4?}: max at {argmax} hidden, spread {:.4} (> 0.01)", max - min),
    )
}

fn seconds_per_step(width: usize) -> f64 {
    let shape = NetworkShape::new(16, 2, width, 4).unwrap();
    let config = TrainConfig::default();
    let mut net = Network::init(shape, 1, true);
    let mut draws = Draws::new(8);
    let samples: Vec<(Vec<f64>, TargetEncoding)> = (0..64)
        .map(|i| (draws.vec(16, -1.0, 1.0), TargetEncoding::new(i % 4, 4).unwrap()))
        .collect();
    let steps = 400;
    (0..7)
        .map(|_| {
            let start = Instant::now();
            for k in 0..steps {
                let (x, t) = &samples[k % samples.len()];
                sgd_step(&mut net, x, t, &config).unwrap();
            }
            start.elapsed().as_secs_f64() / steps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_8_complexity() -> bool {
    let t32 = seconds_per_step(32);
    let t64 = seconds_per_step(64);
    let ratio = t64 / t32;
    report(
        8,
        ratio <= 5.0,
        format!("per-sample step 16-64-64-4 {:.1}us vs 16-32-32-4 {:.1}us: ratio {ratio:.2} (<= 5)", t64 * 1e6, t32 * 1e6),
    )
}

fn mbnn(args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_mbnn")).args(args).output().unwrap();
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn criterion_9_determinism_and_round_trips() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sep.csv");
    std::fs::write(&data, separable_2d().to_csv()).unwrap();
    let d = data.to_str().unwrap();
    let mut problems = Vec::new();

    let mut bench = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let (code, _) = mbnn(&[
            "benchmark", "--data", d, "--fraction", "0.5,0.25", "--repeats", "3", "--epochs", "20",
            "--no-timing", "--jobs", "2", "--out", out.to_str().unwrap(),
        ]);
        if code != 0 {
            problems.push(format!("benchmark exit {code}"));
        }
        bench.push(std::fs::read(out.join("results.csv")).unwrap_or_default());
    }
    if bench[0] != bench[1] || bench[0].is_empty() {
        problems.push("benchmark results differ between runs".into());
    }

    let mut models = Vec::new();
    let mut train_acc = String::new();
    for run in ["m1.txt", "m2.txt"] {
        let model = dir.path().join(run);
        let (code, out) = mbnn(&["train", "--data", d, "--epochs", "40", "--seed", "5", "--out", model.to_str().unwrap()]);
        if code != 0 {
            problems.push(format!("train exit {code}"));
        }
        train_acc = out.lines().find_map(|l| l.strip_prefix("final train accuracy ")).unwrap_or("").to_string();
        models.push(std::fs::read(&model).unwrap_or_default());
    }
    if models[0] != models[1] || models[0].is_empty() {
        problems.push("trained models differ between runs".into());
    }

    let model = dir.path().join("m1.txt");
    let (code, out) = mbnn(&["eval", "--data", d, "--model", model.to_str().unwrap()]);
    let eval_acc = out.lines().find_map(|l| l.strip_prefix("accuracy ")).unwrap_or("");
    if code != 0 || eval_acc != train_acc {
        problems.push(format!("eval accuracy `{eval_acc}` vs logged train accuracy `{train_acc}`"));
    }

    let mut exact = true;
    for (seed, bias) in [(1, true), (2, false)] {
        let net = Network::init(NetworkShape::new(7, 3, 5, 3).unwrap(), seed, bias);
        let path = dir.path().join(format!("rt{seed}.txt"));
        save_model(&net, &path).unwrap();
        let back = load_model(&path).unwrap();
        exact &= back == net && model_to_string(&back) == model_to_string(&net);
    }
    if !exact {
        problems.push("model save/load changed weights".into());
    }

    report(
        9,
        problems.is_empty(),
        format!("byte-identical reruns, exact model round trip, eval accuracy {eval_acc} == log {train_acc}; problems {problems:?}"),
    )
}

type Criterion = (&'static str, fn() -> bool);

const CRITERIA: [Criterion; 9] = [
    ("criterion_1_gradient_correctness", criterion_1_gradient_correctness),
    ("criterion_2_paper_formula_fidelity", criterion_2_paper_formula_fidelity),
    ("criterion_3_objective_invariants", criterion_3_objective_invariants),
    ("criterion_4_ascent_sanity", criterion_4_ascent_sanity),
    ("criterion_5_banknote", criterion_5_banknote),
    ("criterion_6_isolet_binary", criterion_6_isolet_binary),
    ("criterion_7_hidden_sweep", criterion_7_hidden_sweep),
    ("criterion_8_complexity", criterion_8_complexity),
    ("criterion_9_determinism_and_round_trips", criterion_9_determinism_and_round_trips),
];

fn main() -> std::process::ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (name, check) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let pass = std::panic::catch_unwind(check).unwrap_or_else(|_| {
            println!("[{name}] FAIL panicked");
            false
        });
        if !pass {
            failed.push(name);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if failed.is_empty() {
        std::process::ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        std::process::ExitCode::FAILURE
    }
}
