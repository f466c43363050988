use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pfn_bench::analysis::{analyze, learning_curves, rank_summary, write_rows_csv, Metric};
use pfn_bench::protocol::preprocess;
use pfn_bench::{
    load_report, pfn_predict_proba, run_benchmark, save_report, BaselineMethod, BenchConfig, BenchmarkRecord, Method,
    PfnMethod,
};
use pfn_core::data::{
    builtin_problem, generate_problem, load_checkpoint, load_csv_dataset, save_dataset, Dataset, LABEL_COLUMN,
};
use pfn_core::model::{argmax_rows, Checkpoint};
use pfn_core::numeric::Matrix;
use pfn_core::train::{holdout_seed, meta_train, task_stream_seed};
use serde::Serialize;

use crate::config::{DatasetSource, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TEXT: &str = "summary.txt";
pub const EFFICIENCY_FILE: &str = "efficiency.csv";
pub const PARETO_FILE: &str = "pareto.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const DATASETS_FILE: &str = "datasets.json";
pub const PROBABILITIES_FILE: &str = "probabilities.csv";
pub const RANKS_JSON: &str = "ranks.json";
pub const RANKS_TEXT: &str = "ranks.txt";

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| runtime(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, files: &mut Vec<PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| runtime(path, e))?;
    write_text(path, &(text + "\n"), files)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], files: &mut Vec<PathBuf>) -> Result<()> {
    write_rows_csv(rows, path)?;
    files.push(path.to_path_buf());
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(dir, e))
}

/// Meta-trains and writes checkpoints, the training log and the manifest.
pub fn meta_train_cmd(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.prior.validate(Some(&cfg.model))?;
    create_dir(out)?;
    let outcome = meta_train(&cfg.model, &cfg.train, &cfg.prior, Some(out))?;
    let mut m = Manifest::new("meta-train");
    m.seed("seed", cfg.seed);
    m.seed("prior", cfg.prior.seed);
    m.seed("task_stream", task_stream_seed(cfg.train.seed, &cfg.prior));
    m.seed("holdout", holdout_seed(cfg.train.seed, &cfg.prior));
    m.outputs(&outcome.files)?;
    let ck = &outcome.checkpoint;
    m.notes.push(format!("checkpoint content checksum {:016x}", ck.content_checksum()));
    if let Some(e) = outcome.log.entries.last() {
        m.notes.push(format!(
            "step {}: loss {:.4}, held-out accuracy {:.4}",
            e.step, e.loss, e.holdout_acc
        ));
    }
    Ok(m)
}

/// Writes each configured toy problem as `<name>.csv`, `<name>_test.csv`
/// and `<name>.toml`.
pub fn gen_data_cmd(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    create_dir(out)?;
    let mut m = Manifest::new("gen-data");
    m.seed("seed", cfg.seed);
    let g = &cfg.gen_data;
    for name in &g.problems {
        let ds = generate_builtin(name, g.n_train, g.n_test, cfg.seed, &mut m.notes)?;
        let files = save_dataset(&ds, out)?;
        let mut paths = vec![files.csv, files.meta];
        paths.extend(files.test_csv);
        m.outputs(&paths)?;
    }
    Ok(m)
}

fn generate_builtin(name: &str, n_train: usize, n_test: usize, seed: u64, notes: &mut Vec<String>) -> Result<Dataset> {
    let spec = builtin_problem(name).ok_or_else(|| CliError::Config(format!("unknown built-in problem {name:?}")))?;
    let g = generate_problem(&spec, n_train, n_test, seed)?;
    notes.extend(g.notes);
    Ok(g.train.with_test(g.test)?)
}

/// Dataset shape as echoed at the top of benchmark summaries.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub n_classes: usize,
    pub n_features: usize,
    pub n_rows: usize,
    /// Rows of the fixed test split, if the dataset has one.
    pub n_fixed_test: Option<usize>,
    pub discrete_columns: Vec<usize>,
    pub imbalance_guard: bool,
}

impl DatasetInfo {
    pub fn of(ds: &Dataset) -> Self {
        DatasetInfo {
            name: ds.name.clone(),
            n_classes: ds.n_classes,
            n_features: ds.n_features(),
            n_rows: ds.n_rows(),
            n_fixed_test: ds.test.as_ref().map(|t| t.n_rows()),
            discrete_columns: (0..ds.n_features()).filter(|&i| ds.discrete[i]).collect(),
            imbalance_guard: ds.guard.is_some(),
        }
    }
}

pub fn dataset_header(infos: &[DatasetInfo]) -> String {
    let mut s = String::from("Datasets:\n");
    for d in infos {
        let _ = write!(
            s,
            "  {}: {} classes, {} features, {} rows",
            d.name, d.n_classes, d.n_features, d.n_rows
        );
        if let Some(t) = d.n_fixed_test {
            let _ = write!(s, ", {t} fixed test rows");
        }
        if !d.discrete_columns.is_empty() {
            let _ = write!(s, ", discrete columns {:?}", d.discrete_columns);
        }
        if d.imbalance_guard {
            s.push_str(", imbalance guard");
        }
        s.push('\n');
    }
    s.push('\n');
    s
}

fn load_pfn_checkpoint(path: Option<&Path>) -> Result<Checkpoint> {
    let path = path.ok_or_else(|| CliError::Config("method PFN needs bench.checkpoint or --checkpoint".into()))?;
    load_checkpoint(path).map_err(|e| CliError::Config(format!("cannot load checkpoint: {e}")))
}

/// Runs the protocol and writes the report, summaries, efficiency, Pareto
/// and learning-curve tables. The checkpoint and datasets are resolved
/// before any method runs.
pub fn bench_cmd(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let b = &cfg.bench;
    let mut m = Manifest::new("bench");
    m.seed("seed", cfg.seed);
    let mut methods: Vec<Arc<dyn Method>> = Vec::new();
    for name in &b.methods {
        let method: Arc<dyn Method> = match name.as_str() {
            "PFN" => {
                let ck = load_pfn_checkpoint(b.checkpoint.as_deref())?;
                m.input(b.checkpoint.as_deref().expect("loaded"))?;
                Arc::new(PfnMethod { checkpoint: Arc::new(ck) })
            }
            "KNN" => Arc::new(BaselineMethod {
                folds: b.tune_folds,
                max_configs: b.tune_max_configs,
                ..BaselineMethod::knn()
            }),
            "DT" => Arc::new(BaselineMethod {
                folds: b.tune_folds,
                max_configs: b.tune_max_configs,
                ..BaselineMethod::tree()
            }),
            other => return Err(CliError::Config(format!("unknown method {other:?}"))),
        };
        methods.push(method);
    }
    let datasets = load_datasets(cfg, &mut m)?;
    create_dir(out)?;

    let bc = BenchConfig {
        n_reps: b.n_reps,
        test_fraction: b.test_fraction,
        seed: cfg.seed,
        workers: cfg.workers,
    };
    let records = run_benchmark(&datasets, &methods, &bc)?;
    let infos: Vec<DatasetInfo> = datasets.iter().map(DatasetInfo::of).collect();
    let mut files = Vec::new();
    let report = out.join(REPORT_FILE);
    save_report(&records, &report)?;
    files.push(report);
    write_json(&out.join(DATASETS_FILE), &infos, &mut files)?;
    write_analysis(cfg, &records, &infos, out, &mut files)?;
    m.outputs(&files)?;
    Ok(m)
}

fn load_datasets(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<Dataset>> {
    let sources = if cfg.bench.datasets.is_empty() {
        cfg.gen_data
            .problems
            .iter()
            .map(|p| DatasetSource::Builtin {
                builtin: p.clone(),
                n_train: None,
                n_test: None,
            })
            .collect()
    } else {
        cfg.bench.datasets.clone()
    };
    let mut out = Vec::new();
    for s in sources {
        let ds = match s {
            DatasetSource::Builtin { builtin, n_train, n_test } => generate_builtin(
                &builtin,
                n_train.unwrap_or(cfg.gen_data.n_train),
                n_test.unwrap_or(cfg.gen_data.n_test),
                cfg.seed,
                &mut m.notes,
            )?,
            DatasetSource::Files { csv, meta } => {
                let ds = load_csv_dataset(&csv, &meta)?;
                m.input(&csv)?;
                m.input(&meta)?;
                ds
            }
        };
        if out.iter().any(|d: &Dataset| d.name == ds.name) {
            return Err(CliError::Config(format!("dataset name {:?} appears twice", ds.name)));
        }
        out.push(ds);
    }
    Ok(out)
}

fn write_analysis(
    cfg: &RunConfig,
    records: &[BenchmarkRecord],
    infos: &[DatasetInfo],
    out: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let a = &cfg.analysis;
    let analysis = analyze(records, a.alpha, a.efficiency_threshold, a.log_time)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        datasets: &'a [DatasetInfo],
        #[serde(flatten)]
        analysis: &'a pfn_bench::analysis::Analysis,
    }
    write_json(
        &out.join(SUMMARY_JSON),
        &Summary {
            datasets: infos,
            analysis: &analysis,
        },
        files,
    )?;
    let text = dataset_header(infos) + &analysis.to_text();
    write_text(&out.join(SUMMARY_TEXT), &text, files)?;
    write_csv(&out.join(EFFICIENCY_FILE), &analysis.efficiency, files)?;
    write_csv(&out.join(PARETO_FILE), &analysis.pareto, files)?;
    write_csv(&out.join(CURVES_FILE), &learning_curves(records), files)?;
    Ok(())
}

fn load_records(report: &Path, m: &mut Manifest) -> Result<Vec<BenchmarkRecord>> {
    if !report.is_file() {
        return Err(CliError::Config(format!("report {} not found", report.display())));
    }
    let records = load_report(report)?;
    m.input(report)?;
    Ok(records)
}

/// Re-runs the analysis of an existing report. Dataset shapes are echoed
/// when a `datasets.json` sits next to the report.
pub fn report_cmd(cfg: &RunConfig, report: &Path, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::new("report");
    let records = load_records(report, &mut m)?;
    let info_path = report.with_file_name(DATASETS_FILE);
    let infos: Vec<DatasetInfo> = if info_path.is_file() {
        let text = std::fs::read_to_string(&info_path).map_err(|e| runtime(&info_path, e))?;
        m.input(&info_path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", info_path.display())))?
    } else {
        Vec::new()
    };
    create_dir(out)?;
    let mut files = Vec::new();
    write_analysis(cfg, &records, &infos, out, &mut files)?;
    m.outputs(&files)?;
    Ok(m)
}

/// Rank statistics of one metric from an existing report; returns the
/// manifest and the text table.
pub fn stats_cmd(cfg: &RunConfig, report: &Path, out: &Path) -> Result<(Manifest, String)> {
    let mut m = Manifest::new("stats");
    let records = load_records(report, &mut m)?;
    let metric = Metric::parse(&cfg.analysis.metric)
        .ok_or_else(|| CliError::Config(format!("unknown metric {:?}", cfg.analysis.metric)))?;
    let (summary, notes) = rank_summary(&records, metric, cfg.analysis.alpha, pfn_stats::DEFAULT_EXACT_LIMIT)?;
    m.notes.extend(notes);
    let mut text = summary.to_table();
    for n in &m.notes {
        let _ = writeln!(text, "- {n}");
    }
    create_dir(out)?;
    let mut files = Vec::new();
    write_json(&out.join(RANKS_JSON), &summary, &mut files)?;
    write_text(&out.join(RANKS_TEXT), &text, &mut files)?;
    m.outputs(&files)?;
    Ok((m, text))
}

/// Feature rows of a headered CSV; with `labeled`, the last column must be
/// `label` and is returned separately. An unlabeled file may still carry a
/// trailing `label` column, which is ignored.
pub fn read_table(path: &Path, labeled: bool) -> Result<(Vec<String>, Matrix<f64>, Vec<usize>)> {
    let bad = |line: u64, d: String| CliError::Config(format!("{}:{line}: {d}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let has_label = header.iter().last() == Some(LABEL_COLUMN);
    if labeled && !has_label {
        return Err(bad(1, format!("last column must be `{LABEL_COLUMN}`")));
    }
    let n_feat = header.len() - usize::from(has_label);
    let names: Vec<String> = header.iter().take(n_feat).map(str::to_string).collect();
    let (mut values, mut y) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        for (c, f) in rec.iter().take(n_feat).enumerate() {
            let v: f64 = f.parse().map_err(|_| bad(line, format!("column {:?}: {f:?} is not a number", names[c])))?;
            if !v.is_finite() {
                return Err(bad(line, format!("column {:?}: non-finite value", names[c])));
            }
            values.push(v);
        }
        if labeled {
            let f = &rec[n_feat];
            y.push(f.parse().map_err(|_| bad(line, format!("label {f:?} is not a non-negative integer")))?);
        }
    }
    let rows = values.len() / n_feat.max(1);
    let x = Matrix::from_vec(rows, n_feat, values)?;
    Ok((names, x, y))
}

/// In-context class probabilities for each query row. Columns are `p_<label>`
/// for each label present in the training file, followed by the predicted
/// label.
pub fn predict_cmd(checkpoint: &Path, train: &Path, query: &Path, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::new("predict");
    let ck = load_checkpoint(checkpoint).map_err(|e| CliError::Config(format!("cannot load checkpoint: {e}")))?;
    let (names, x, y) = read_table(train, true)?;
    let (qnames, xq, _) = read_table(query, false)?;
    if names != qnames {
        return Err(CliError::Config(format!(
            "query columns {qnames:?} differ from training columns {names:?}"
        )));
    }
    if y.is_empty() {
        return Err(CliError::Config(format!("{}: no training rows", train.display())));
    }
    for p in [checkpoint, train, query] {
        m.input(p)?;
    }
    let prep = preprocess(&x, &y, &xq)?;
    let method = PfnMethod { checkpoint: Arc::new(ck) };
    if let Some(issue) = method.capacity_issue(x.rows(), x.cols(), prep.labels.n_classes()) {
        return Err(CliError::Config(issue));
    }
    let probs = pfn_predict_proba(
        &method.checkpoint,
        &prep.x_train.cast::<f32>(),
        &prep.y_train,
        prep.labels.n_classes(),
        &prep.x_test.cast::<f32>(),
    )?;
    let pred = argmax_rows(&probs);
    create_dir(out)?;
    let path = out.join(PROBABILITIES_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| runtime(&path, e))?;
    let mut header: Vec<String> = prep.labels.classes.iter().map(|c| format!("p_{c}")).collect();
    header.push("prediction".into());
    w.write_record(&header).map_err(|e| runtime(&path, e))?;
    for (r, &p) in pred.iter().enumerate() {
        let mut row: Vec<String> = probs.row(r).iter().map(|v| v.to_string()).collect();
        row.push(prep.labels.decode(p).to_string());
        w.write_record(&row).map_err(|e| runtime(&path, e))?;
    }
    w.flush().map_err(|e| runtime(&path, e))?;
    m.outputs([&path])?;
    Ok(m)
}
