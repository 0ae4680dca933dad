use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mbnn::data::{
    apply_stats, binarize_isolet_dataset, load_csv, normalize, repeat_seed, split_once,
    FeatureStats, LabelledDataset, SplitSpec,
};
use mbnn::experiments::{
    evaluate_accuracy, format_summary, hidden_sweep, results_csv, run_benchmark, summary_csv,
    sweep_csv,
};
use mbnn::gradients::{
    compare_gradients, exact_gradient, finite_difference_gradient, paper_gradient,
    GradCheckReport, GradientMode, DEFAULT_FD_STEP,
};
use mbnn::model_io::{load_model, save_model};
use mbnn::objective::TargetEncoding;
use mbnn::trainer::train as train_network;
use mbnn::{Network, NetworkShape};

use crate::config::{default_hidden_width, CliConfig};
use crate::CliError;

const GRADCHECK_TOLERANCE: f64 = 1e-4;
const DEFAULT_INSTANCES: usize = 24;
const DEFAULT_FRACTIONS: [f64; 3] = [0.10, 0.02, 0.01];
const DEFAULT_SWEEP_FRACTION: f64 = 0.0333;
const DEFAULT_HIDDEN: [usize; 5] = [8, 16, 32, 64, 128];

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn sidecar(model: &Path, ext: &str) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Settings with the effective seed spelled out, in config-file syntax.
fn manifest(c: &CliConfig, seed: u64) -> String {
    let mut c = c.clone();
    c.set("seed", seed.to_string());
    format!("# mbnn run settings; replay with --config\n{}", c.to_text())
}

/// Loads `--data` (several comma-separated files are concatenated).
fn load_dataset(c: &CliConfig) -> Result<(String, LabelledDataset), CliError> {
    let raw = c.data_path()?;
    let header = c.flag("header")?;
    let label = c.label_column()?;
    let mut data: Option<LabelledDataset> = None;
    for part in raw.to_string_lossy().split(',') {
        let next = load_csv(Path::new(part), header, label).map_err(CliError::usage_from)?;
        data = Some(match data {
            None => next,
            Some(d) => d.concat(&next).map_err(CliError::usage_from)?,
        });
    }
    let mut data = data.expect("split yields at least one part");
    if c.flag("isolet-binary")? {
        data = binarize_isolet_dataset(&data).map_err(CliError::usage_from)?;
    }
    let name = Path::new(raw.to_string_lossy().split(',').next().unwrap_or_default())
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    Ok((name, data))
}

fn single_algorithm(c: &CliConfig) -> Result<mbnn::trainer::Algorithm, CliError> {
    let algorithms = c.algorithms(false)?;
    match algorithms.as_slice() {
        [a] => Ok(*a),
        _ => Err(CliError::usage("--algorithm takes a single value for this command")),
    }
}

pub fn train(c: &CliConfig) -> Result<u8, CliError> {
    let config = c.train_config(single_algorithm(c)?)?;
    let (name, data) = load_dataset(c)?;
    let shape = c.shape_for(data.feature_dim(), data.class_count(), default_hidden_width(&name))?;
    let out = c.raw("out").map(PathBuf::from).unwrap_or_else(|| "model.txt".into());
    let log_path = c.raw("log").map(PathBuf::from).unwrap_or_else(|| sidecar(&out, ".log.csv"));

    let all: Vec<usize> = (0..data.len()).collect();
    let normalized = normalize(&data, &all).map_err(CliError::usage_from)?;
    let log = train_network(&normalized, shape, &config).map_err(|e| match e {
        mbnn::Error::Numeric(m) => CliError::runtime(format!("training {name}: {m}")),
        other => CliError::usage_from(other),
    })?;

    save_model(&log.final_network, &out).map_err(|e| CliError::runtime(e.to_string()))?;
    let stats = normalized.feature_stats().expect("normalize records its statistics");
    write(&sidecar(&out, ".stats"), &stats.to_text())?;
    write(&sidecar(&out, ".classes"), &(data.class_names().join("\n") + "\n"))?;
    write(&sidecar(&out, ".run"), &manifest(c, config.seed))?;
    write(&log_path, &log.to_csv())?;

    println!("dataset {name}: {} rows, shape {shape}, {}", data.len(), config.algorithm);
    println!("seed {}", config.seed);
    println!("model {}", out.display());
    println!("log {}", log_path.display());
    println!("final train accuracy {}", log.final_train_accuracy());
    Ok(0)
}

pub fn eval(c: &CliConfig) -> Result<u8, CliError> {
    let model_path = c
        .raw("model")
        .map(PathBuf::from)
        .ok_or_else(|| CliError::usage("missing required --model PATH"))?;
    let net = load_model(&model_path).map_err(CliError::usage_from)?;
    let (_, mut data) = load_dataset(c)?;
    let shape = net.shape();
    if data.feature_dim() != shape.input_dim {
        return Err(CliError::usage(format!(
            "dimension mismatch: dataset has {} features, model expects {}",
            data.feature_dim(),
            shape.input_dim
        )));
    }

    let classes_path = sidecar(&model_path, ".classes");
    if let Ok(text) = fs::read_to_string(&classes_path) {
        let names: Vec<String> = text.lines().map(str::to_string).collect();
        let labels = data
            .labels()
            .iter()
            .map(|&l| {
                let label = &data.class_names()[l];
                names.iter().position(|n| n == label).ok_or_else(|| {
                    CliError::usage(format!("label `{label}` was not seen when the model was trained"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        data = data.relabel(labels, names).map_err(CliError::usage_from)?;
    }
    if data.class_count() > shape.output_dim {
        return Err(CliError::usage(format!(
            "dataset has {} classes, model has {} outputs",
            data.class_count(),
            shape.output_dim
        )));
    }

    let stats_path = sidecar(&model_path, ".stats");
    if let Ok(text) = fs::read_to_string(&stats_path) {
        let stats = FeatureStats::from_text(&text, &stats_path.display().to_string())
            .map_err(CliError::usage_from)?;
        if stats.mean.len() != data.feature_dim() {
            return Err(CliError::usage(format!(
                "{} holds {} features, dataset has {}",
                stats_path.display(),
                stats.mean.len(),
                data.feature_dim()
            )));
        }
        data = apply_stats(&data, stats);
    }

    let all: Vec<usize> = (0..data.len()).collect();
    let accuracy = evaluate_accuracy(&net, &data, &all).map_err(CliError::usage_from)?;
    println!("rows {}", data.len());
    println!("accuracy {accuracy}");
    Ok(0)
}

struct Instance {
    shape: NetworkShape,
    bias: bool,
    lambda: f64,
    seed: u64,
}

const GRADCHECK_SHAPES: [(usize, usize, usize, usize); 6] = [
    (10, 2, 8, 4),
    (10, 1, 8, 4),
    (6, 2, 5, 3),
    (4, 1, 6, 2),
    (3, 2, 3, 2),
    (2, 1, 4, 3),
];

fn gradcheck_instances(c: &CliConfig) -> Result<Vec<Instance>, CliError> {
    let count = c.parsed("instances")?.unwrap_or(DEFAULT_INSTANCES);
    if count == 0 {
        return Err(CliError::usage("--instances must be >= 1"));
    }
    let seed = c.seed()?;
    let lambda: Option<f64> = c.parsed("lambda")?;
    if lambda.is_some_and(|l| !(l >= 0.0 && l.is_finite())) {
        return Err(CliError::usage("--lambda must be finite and >= 0"));
    }
    let dims = match c.raw("data") {
        Some(_) => {
            let (_, data) = load_dataset(c)?;
            Some((data.feature_dim(), data.class_count()))
        }
        None => None,
    };
    let hidden = c.hidden()?;
    (0..count)
        .map(|i| {
            let (d, m, h, n) = GRADCHECK_SHAPES[i % GRADCHECK_SHAPES.len()];
            let (d, n) = dims.unwrap_or((d, n));
            let (m, h) = hidden.unwrap_or((m, h));
            Ok(Instance {
                shape: NetworkShape::new(d, m, h, n).map_err(CliError::usage_from)?,
                bias: (i / 3) % 2 == 0,
                lambda: lambda.unwrap_or([0.0, 0.1, 1.0][i % 3]),
                seed: seed.wrapping_add(i as u64),
            })
        })
        .collect()
}

/// Uniform in [-2, 2), drawn from the instance seed.
fn gradcheck_input(seed: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let u = (repeat_seed(seed, k) >> 11) as f64 / (1u64 << 53) as f64;
            4.0 * u - 2.0
        })
        .collect()
}

fn fmt_layers(r: &GradCheckReport) -> String {
    r.per_layer_rel_error
        .iter()
        .map(|e| format!("{e:.2e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn gradcheck(c: &CliConfig, corrupt_exact: bool) -> Result<u8, CliError> {
    let instances = gradcheck_instances(c)?;
    let numeric = |e: mbnn::Error| CliError::runtime(format!("gradient check: {e}"));
    let mut worst: [Option<(usize, GradCheckReport)>; 2] = [None, None];

    println!("instance shape bias lambda exact_rel exact_per_layer paper_rel paper_per_layer");
    for (i, inst) in instances.iter().enumerate() {
        let net = Network::init(inst.shape, inst.seed, inst.bias);
        let x = gradcheck_input(inst.seed, inst.shape.input_dim);
        let t = TargetEncoding::new(i % inst.shape.output_dim, inst.shape.output_dim)
            .map_err(CliError::usage_from)?;
        let fd = finite_difference_gradient(&net, &x, &t, inst.lambda, DEFAULT_FD_STEP).map_err(numeric)?;
        let mut exact = exact_gradient(&net, &x, &t, inst.lambda).map_err(numeric)?;
        if corrupt_exact {
            for layer in &mut exact.per_layer {
                for v in layer.as_mut_slice() {
                    *v = *v * 1.01 + 1e-3;
                }
            }
        }
        let trace = net.forward(&x).map_err(numeric)?;
        let paper = paper_gradient(&net, &trace, &t, inst.lambda).map_err(numeric)?;
        let reports = [
            compare_gradients(&exact, &fd, GradientMode::Exact).map_err(numeric)?,
            compare_gradients(&paper, &fd, GradientMode::Paper).map_err(numeric)?,
        ];
        println!(
            "{i} {} {} {} {:.3e} [{}] {:.3e} [{}]",
            inst.shape,
            inst.bias,
            inst.lambda,
            reports[0].max_rel_error,
            fmt_layers(&reports[0]),
            reports[1].max_rel_error,
            fmt_layers(&reports[1]),
        );
        for (slot, report) in worst.iter_mut().zip(reports) {
            if slot.as_ref().is_none_or(|(_, w)| report.max_rel_error > w.max_rel_error) {
                *slot = Some((i, report));
            }
        }
    }

    let mut summary = String::new();
    for (slot, note) in worst.iter().zip(["", " (informational)"]) {
        let (i, r) = slot.as_ref().expect("at least one instance");
        let (l, row, col) = r.worst_coordinate;
        let _ = writeln!(
            summary,
            "{} max_rel_error {:.6e} max_abs_error {:.6e} at instance {i} layer {l} row {row} col {col}{note}",
            r.mode_compared, r.max_rel_error, r.max_abs_error
        );
    }
    print!("{summary}");
    println!(
        "seed {} instances {} fd_step {DEFAULT_FD_STEP:e} tolerance {GRADCHECK_TOLERANCE:e}",
        c.seed()?,
        instances.len()
    );
    let exact_err = worst[0].as_ref().map(|(_, r)| r.max_rel_error).unwrap_or(0.0);
    if exact_err < GRADCHECK_TOLERANCE {
        println!("PASS");
        Ok(0)
    } else {
        println!("FAIL: exact-mode max_rel_error {exact_err:.3e} >= {GRADCHECK_TOLERANCE:e}");
        Ok(1)
    }
}

fn check_fractions(fractions: &[f64], seed: u64, rows: usize) -> Result<(), CliError> {
    for &f in fractions {
        let spec = SplitSpec::new(f, seed, 1).map_err(|e| CliError::usage(format!("--fraction {f}: {e}")))?;
        split_once(rows, &spec, 0).map_err(|e| CliError::usage(format!("--fraction {f}: {e}")))?;
    }
    Ok(())
}

fn out_dir(c: &CliConfig, default: &str) -> Result<PathBuf, CliError> {
    let dir = c.raw("out").map(PathBuf::from).unwrap_or_else(|| default.into());
    fs::create_dir_all(&dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn benchmark(c: &CliConfig) -> Result<u8, CliError> {
    let algorithms = c.algorithms(true)?;
    let configs = algorithms
        .iter()
        .map(|&a| c.train_config(a))
        .collect::<Result<Vec<_>, _>>()?;
    let repeats = c.repeats()?;
    let jobs = c.jobs()?;
    let fractions = c.list::<f64>("fraction")?.unwrap_or(DEFAULT_FRACTIONS.to_vec());
    let (name, data) = load_dataset(c)?;
    let shape = c.shape_for(data.feature_dim(), data.class_count(), default_hidden_width(&name))?;
    check_fractions(&fractions, configs[0].seed, data.len())?;
    let dir = out_dir(c, "benchmark-out")?;

    let bench = run_benchmark(&name, &data, &fractions, shape, &configs, repeats, jobs)
        .map_err(|e| CliError::runtime(format!("benchmark on {name}: {e}")))?;

    write(&dir.join("results.csv"), &results_csv(&bench.trials, !c.flag("no-timing")?))?;
    write(&dir.join("summary.csv"), &summary_csv(&bench.summary))?;
    write(&dir.join("run.conf"), &manifest(c, configs[0].seed))?;

    println!("dataset {name}: {} rows, shape {shape}, seed {}", data.len(), configs[0].seed);
    print!("{}", format_summary(&bench.summary));
    println!("wrote {}", dir.display());
    Ok(0)
}

pub fn sweep(c: &CliConfig) -> Result<u8, CliError> {
    let algorithms = c.algorithms(true)?;
    let configs = algorithms
        .iter()
        .map(|&a| c.train_config(a))
        .collect::<Result<Vec<_>, _>>()?;
    let repeats = c.repeats()?;
    let jobs = c.jobs()?;
    let fraction = match c.list::<f64>("fraction")?.as_deref() {
        None => DEFAULT_SWEEP_FRACTION,
        Some([f]) => *f,
        Some(_) => return Err(CliError::usage("sweep takes a single --fraction")),
    };
    let hidden = c.list::<usize>("hidden")?.unwrap_or(DEFAULT_HIDDEN.to_vec());
    if hidden.contains(&0) || hidden.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::usage("--hidden must be positive and strictly ascending"));
    }
    let (name, data) = load_dataset(c)?;
    let shape = c.shape_for(data.feature_dim(), data.class_count(), hidden[0])?;
    check_fractions(&[fraction], configs[0].seed, data.len())?;
    let dir = out_dir(c, "sweep-out")?;

    let result = hidden_sweep(&name, &data, fraction, shape, &hidden, &configs, repeats, jobs)
        .map_err(|e| CliError::runtime(format!("sweep on {name}: {e}")))?;

    write(&dir.join("results.csv"), &results_csv(&result.trials, !c.flag("no-timing")?))?;
    write(&dir.join("sweep.csv"), &sweep_csv(&result.summary))?;
    write(&dir.join("run.conf"), &manifest(c, configs[0].seed))?;

    println!("dataset {name}: {} rows, fraction {fraction}, seed {}", data.len(), configs[0].seed);
    print!("{}", format_summary(&result.summary));
    println!("wrote {}", dir.display());
    Ok(0)
}
