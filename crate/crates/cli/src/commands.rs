//! The subcommands, each writing its artifacts under `output_dir`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mega_core::checkpoint::{load_params, save_params};
use mega_core::eval::{
    embed_dataset, export_feature_heatmap, linear_probe, run_protocol_with, scheme_for_params, write_atomic,
    ProbeConfig, ProtocolConfig,
};
use mega_core::gnn::{init_params, ModelDims, ModelParams};
use mega_core::gradcheck::{run_gradcheck, GradcheckReport};
use mega_core::graph::{
    build_node_features, parse_tu_dataset, parse_tu_dataset_report, split_dataset, Dataset, FeatureScheme,
    SplitFractions,
};
use mega_core::train::{train_with, IterationRecord, Mode, StepKind};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PARAMS_FILE: &str = "params.mega1";
pub const EVAL_FILE: &str = "eval.json";
pub const SWEEP_FILE: &str = "sweep_lambda.csv";

pub fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    Ok(parse_tu_dataset(&cfg.data_root, &cfg.dataset)?)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json<T: Serialize>(path: &Path, value: &T) -> CliResult<String> {
    serde_json::to_string(value).map_err(|source| CliError::Json { path: path.into(), source })
}

/// One line of the metrics file.
#[derive(Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum MetricsLine<'a> {
    Iteration {
        #[serde(flatten)]
        record: &'a IterationRecord,
        /// Effective weight of the feature term.
        lambda: f64,
    },
    Summary(&'a TrainSummary),
}

/// Final record of `train`. Contains nothing run-dependent beyond the
/// configuration, so reruns reproduce it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub dataset: String,
    pub mode: Mode,
    pub seed: u64,
    pub lambda: f64,
    pub epochs: usize,
    pub iterations: usize,
    pub meta_steps: usize,
    pub train_graphs: usize,
    pub final_l_contrast: Option<f64>,
    pub final_l_mega: Option<f64>,
    /// Probe accuracies on the same split (one run of the protocol).
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub params_file: PathBuf,
}

/// Trains once on the split for `seed`, streaming metrics to
/// `metrics.jsonl` and saving the parameters.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainSummary> {
    let dataset = load_dataset(cfg)?;
    ensure_dir(&cfg.output_dir)?;
    let seed = cfg.hyper.seed;
    let split = split_dataset(&dataset.labels(), SplitFractions::default(), seed)?;
    let data = build_node_features(&dataset, FeatureScheme::auto(&dataset, &split.train))?;
    let width = data.feature_width().expect("features built");
    let params = init_params(ModelDims { input: width, ..cfg.dims }, seed)?;
    let lambda = cfg.mode.lambda(&cfg.hyper);

    let metrics_path = cfg.output_dir.join(METRICS_FILE);
    let tmp = tempfile::NamedTempFile::new_in(&cfg.output_dir).map_err(|e| CliError::io(&metrics_path, e))?;
    let mut out = BufWriter::new(tmp.reopen().map_err(|e| CliError::io(&metrics_path, e))?);
    let write_line = |out: &mut BufWriter<File>, line: &MetricsLine| -> CliResult<()> {
        let text = to_json(&metrics_path, line)?;
        writeln!(out, "{text}").map_err(|e| CliError::io(&metrics_path, e))
    };

    let mut sink_error = None;
    let outcome = train_with(&data, &split.train, params, cfg.hyper, cfg.mode, |record| {
        if let Err(e) = write_line(&mut out, &MetricsLine::Iteration { record, lambda }) {
            let msg = e.to_string();
            sink_error = Some(e);
            return Err(mega_core::Error::InvalidArgument(format!("metrics sink: {msg}")));
        }
        Ok(())
    });
    if let Some(e) = sink_error {
        return Err(e);
    }
    let outcome = outcome?;

    let params_file = cfg.output_dir.join(PARAMS_FILE);
    save_params(&params_file, &outcome.params)?;
    let table = embed_dataset(&outcome.params.contrast.encoder, &data)?;
    let probe = linear_probe(&table, &split, ProbeConfig::default())?;
    let records = &outcome.log.records;
    let summary = TrainSummary {
        dataset: cfg.dataset.clone(),
        mode: cfg.mode,
        seed,
        lambda,
        epochs: cfg.hyper.epochs,
        iterations: records.len(),
        meta_steps: records.iter().filter(|r| r.step == StepKind::Meta).count(),
        train_graphs: split.train.len(),
        final_l_contrast: records.last().map(|r| r.l_contrast),
        final_l_mega: records.iter().rev().find(|r| r.step == StepKind::Meta).and_then(|r| r.l_mega),
        val_accuracy: probe.val_accuracy,
        test_accuracy: probe.test_accuracy,
        params_file,
    };
    write_line(&mut out, &MetricsLine::Summary(&summary))?;
    let file = out.into_inner().map_err(|e| CliError::io(&metrics_path, e.into_error()))?;
    file.sync_all().map_err(|e| CliError::io(&metrics_path, e))?;
    tmp.persist(&metrics_path).map_err(|e| CliError::io(&metrics_path, e.error))?;
    Ok(summary)
}

/// Contents of `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    /// `None` when a parameter file was evaluated instead of training.
    pub mode: Option<Mode>,
    pub params_file: Option<PathBuf>,
    pub n_runs: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Loads a parameter file whose architecture must match the configuration
/// (the input width is checked against the dataset later).
pub fn load_params_for(cfg: &RunConfig, path: &Path) -> CliResult<ModelParams> {
    let params = load_params(path, None)?;
    let found = params.dims();
    let want = ModelDims { input: found.input, ..cfg.dims };
    if found != want {
        return Err(mega_core::Error::Checkpoint(format!(
            "{}: dimension header {found:?} does not match configuration {want:?}",
            path.display()
        ))
        .into());
    }
    Ok(params)
}

fn protocol(cfg: &RunConfig, params: Option<ModelParams>) -> ProtocolConfig {
    ProtocolConfig {
        dims: cfg.dims,
        n_runs: cfg.n_runs,
        fixed_params: params,
        ..ProtocolConfig::new(cfg.mode, cfg.hyper)
    }
}

/// Runs the multi-run protocol, training per run unless `params` is given,
/// and writes `eval.json`.
pub fn cmd_eval(cfg: &RunConfig, params: Option<&Path>) -> CliResult<EvalReport> {
    let dataset = load_dataset(cfg)?;
    let fixed = params.map(|p| load_params_for(cfg, p)).transpose()?;
    ensure_dir(&cfg.output_dir)?;
    let outcome = run_protocol_with(&dataset, &protocol(cfg, fixed), |_, _| Ok(()))?;
    let report = EvalReport {
        dataset: cfg.dataset.clone(),
        mode: if params.is_some() { None } else { Some(cfg.mode) },
        params_file: params.map(Path::to_path_buf),
        n_runs: cfg.n_runs,
        seeds: outcome.runs.iter().map(|r| r.seed).collect(),
        accuracies: outcome.result.accuracies.clone(),
        mean: outcome.result.mean,
        std: outcome.result.std,
    };
    let path = cfg.output_dir.join(EVAL_FILE);
    let text = serde_json::to_string_pretty(&report).map_err(|source| CliError::Json { path: path.clone(), source })?;
    write_atomic(&path, text.as_bytes())?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda,mean,std\n");
    for r in rows {
        out.push_str(&format!("{:?},{:.6},{:.6}\n", r.lambda, r.mean, r.std));
    }
    out
}

/// Full protocol in `mega` mode once per value of `lambda` (0 is the
/// instance-only ablation), on up to `jobs` worker threads. Writes
/// `sweep_lambda.csv` in the order of `values`.
pub fn cmd_sweep_lambda(cfg: &RunConfig, values: &[f64], jobs: usize) -> CliResult<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep-lambda: no lambda values given".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CliError::Usage(format!("sweep-lambda: lambda must be nonnegative, got {v}")));
    }
    if cfg.mode != Mode::Mega {
        log::info!("sweep-lambda runs mode mega; configured mode {} ignored", cfg.mode);
    }
    let dataset = load_dataset(cfg)?;
    ensure_dir(&cfg.output_dir)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<SweepRow>>>> = Mutex::new(values.iter().map(|_| None).collect());
    let run_one = |lambda: f64| -> CliResult<SweepRow> {
        let mut point = cfg.clone();
        point.mode = Mode::Mega;
        point.hyper.lambda = lambda;
        let outcome = run_protocol_with(&dataset, &protocol(&point, None), |_, _| Ok(()))?;
        log::info!("lambda {lambda}: {:.4} +- {:.4}", outcome.result.mean, outcome.result.std);
        Ok(SweepRow { lambda, mean: outcome.result.mean, std: outcome.result.std })
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, values.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&lambda) = values.get(i) else { break };
                let row = run_one(lambda);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(row);
            });
        }
    });
    let rows = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect::<CliResult<Vec<_>>>()?;
    write_atomic(&cfg.output_dir.join(SWEEP_FILE), sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// Runs the finite-difference suites; failing checks make this an error
/// after the report has been produced.
pub fn cmd_gradcheck(seed: u64, corrupt_fixture: bool) -> CliResult<GradcheckReport> {
    Ok(run_gradcheck(seed, corrupt_fixture)?)
}

pub fn format_gradcheck(report: &GradcheckReport) -> String {
    let mut out = format!("{:<22} {:<7} {:>12} {:>10}  status\n", "check", "order", "max rel err", "tolerance");
    for c in &report.checks {
        let order = match c.order {
            mega_core::gradcheck::CheckOrder::First => "first",
            mega_core::gradcheck::CheckOrder::Second => "second",
        };
        let status = if c.passed() { "ok" } else { "FAIL" };
        out.push_str(&format!(
            "{:<22} {:<7} {:>12.3e} {:>10.0e}  {status}\n",
            c.name, order, c.max_rel_error, c.tolerance
        ));
    }
    out
}

/// Embeds the dataset with the encoder from `params` and writes a PPM.
pub fn cmd_heatmap(cfg: &RunConfig, params: &Path, out: &Path) -> CliResult<()> {
    let dataset = load_dataset(cfg)?;
    let params = load_params_for(cfg, params)?;
    let data = build_node_features(&dataset, scheme_for_params(&dataset, &params)?)?;
    let table = embed_dataset(&params.contrast.encoder, &data)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    export_feature_heatmap(&table, out)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub graphs: usize,
    pub classes: usize,
    pub class_counts: Vec<usize>,
    pub class_values: Vec<i64>,
    pub node_labels: Option<usize>,
    pub nodes: usize,
    pub edges: usize,
    /// Width of the automatically chosen features over the whole dataset.
    pub feature_width: usize,
    pub warnings: Vec<String>,
}

pub fn cmd_inspect(cfg: &RunConfig) -> CliResult<DatasetSummary> {
    let report = parse_tu_dataset_report(&cfg.data_root, &cfg.dataset)?;
    let d = &report.dataset;
    let mut class_counts = vec![0; d.n_classes];
    for l in d.labels() {
        class_counts[l] += 1;
    }
    let all: Vec<usize> = (0..d.len()).collect();
    Ok(DatasetSummary {
        name: d.name.clone(),
        graphs: d.len(),
        classes: d.n_classes,
        class_counts,
        class_values: d.class_values.clone(),
        node_labels: d.has_node_labels().then(|| d.node_label_values().len()),
        nodes: d.total_nodes(),
        edges: d.total_edges(),
        feature_width: FeatureScheme::auto(d, &all).width(d),
        warnings: report.warnings.clone(),
    })
}

pub fn format_inspect(s: &DatasetSummary) -> String {
    let mut out = format!("dataset         {}\n", s.name);
    out.push_str(&format!("graphs          {}\n", s.graphs));
    out.push_str(&format!(
        "classes         {} (raw labels {:?}, counts {:?})\n",
        s.classes, s.class_values, s.class_counts
    ));
    match s.node_labels {
        Some(n) => out.push_str(&format!("node labels     {n}\n")),
        None => out.push_str("node labels     none (degree features)\n"),
    }
    out.push_str(&format!("nodes           {}\n", s.nodes));
    out.push_str(&format!("edges           {}\n", s.edges));
    out.push_str(&format!("feature width   {}\n", s.feature_width));
    for w in &s.warnings {
        out.push_str(&format!("warning         {w}\n"));
    }
    out
}
