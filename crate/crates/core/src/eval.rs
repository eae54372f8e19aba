//! Frozen-encoder evaluation: graph embeddings, a logistic-regression probe,
//! the multi-run protocol and a heatmap export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gnn::{embed_graphs, init_params, EdgeWeights, EncoderParams, ModelDims, ModelParams};
use crate::graph::{batch_graphs, build_node_features, split_dataset, Dataset, FeatureScheme, Split, SplitFractions};
use crate::train::{train_with, Hyperparams, IterationRecord, MetricsLog, Mode};

/// Graphs embedded per forward pass; embeddings do not depend on it.
const EMBED_CHUNK: usize = 64;

/// One embedding row per graph with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub embeddings: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl EmbeddingTable {
    pub fn new(embeddings: Tensor, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if embeddings.shape().rank() != 2 || embeddings.rows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for embeddings of shape {:?}",
                labels.len(),
                embeddings.dims()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!("label {l} outside {n_classes} classes")));
        }
        Ok(EmbeddingTable { embeddings, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }
}

/// Readout of the encoder with unit edge weights; no augmenter, no head.
pub fn embed_dataset(encoder: &EncoderParams, dataset: &Dataset) -> Result<EmbeddingTable> {
    let d = encoder.out_dim();
    let mut data = Vec::with_capacity(dataset.len() * d);
    for start in (0..dataset.len()).step_by(EMBED_CHUNK) {
        let idx: Vec<usize> = (start..(start + EMBED_CHUNK).min(dataset.len())).collect();
        let batch = batch_graphs(&dataset.subset(&idx))?;
        data.extend_from_slice(embed_graphs(&batch, &EdgeWeights::ones(&batch), encoder)?.data());
    }
    EmbeddingTable::new(Tensor::new(data, &[dataset.len(), d])?, dataset.labels(), dataset.n_classes)
}

/// Per-column affine map to zero mean and unit variance, fitted on a subset.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread keep unit scale.
    pub fn fit(x: &Tensor, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("standardizer needs at least one row".into()));
        }
        let d = x.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Fixed settings of the logistic-regression probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub l2: f64,
    pub lr: f64,
    pub steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { l2: 1e-3, lr: 0.1, steps: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeFit {
    /// Test accuracy at the step with the best validation accuracy.
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub best_step: usize,
}

struct Softmax {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Softmax {
    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weight
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        let p = self.probabilities(x);
        (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best })
    }

    fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) == y).count() as f64 / xs.len() as f64
    }
}

/// Multinomial logistic regression trained full-batch by gradient descent on
/// standardized embeddings (train-split statistics only). The weights start
/// at zero, so the fit is deterministic.
pub fn linear_probe(table: &EmbeddingTable, split: &Split, config: ProbeConfig) -> Result<ProbeFit> {
    let k = table.n_classes;
    if k < 2 {
        return Err(Error::InvalidArgument("probe needs at least two classes".into()));
    }
    let mut present = vec![false; k];
    for &i in &split.train {
        present[table.labels[i]] = true;
    }
    if let Some(c) = present.iter().position(|p| !p) {
        return Err(Error::ClassAbsent(c));
    }
    let x = &table.embeddings;
    let std = Standardizer::fit(x, &split.train)?;
    let prep = |rows: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (rows.iter().map(|&r| std.apply(x.row(r))).collect(), rows.iter().map(|&r| table.labels[r]).collect())
    };
    let (tx, ty) = prep(&split.train);
    let (vx, vy) = prep(&split.val);
    let (sx, sy) = prep(&split.test);

    let d = table.dim();
    let n = tx.len() as f64;
    let mut model = Softmax { weight: vec![vec![0.0; d]; k], bias: vec![0.0; k] };
    let mut best: Option<ProbeFit> = None;
    for step in 1..=config.steps {
        let mut gw = vec![vec![0.0; d]; k];
        let mut gb = vec![0.0; k];
        for (xi, &yi) in tx.iter().zip(&ty) {
            let p = model.probabilities(xi);
            for c in 0..k {
                let delta = (p[c] - f64::from(u8::from(c == yi))) / n;
                gb[c] += delta;
                for (g, v) in gw[c].iter_mut().zip(xi) {
                    *g += delta * v;
                }
            }
        }
        for c in 0..k {
            for (w, g) in model.weight[c].iter_mut().zip(&gw[c]) {
                *w -= config.lr * (g + config.l2 * *w);
            }
            model.bias[c] -= config.lr * gb[c];
        }
        let val_accuracy = model.accuracy(&vx, &vy);
        if best.as_ref().is_none_or(|b| val_accuracy >= b.val_accuracy) {
            best = Some(ProbeFit { test_accuracy: model.accuracy(&sx, &sy), val_accuracy, best_step: step });
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("probe needs at least one step".into()))
}

/// Per-run accuracies with their mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl ProbeResult {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::InvalidArgument("no accuracies to aggregate".into()));
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = (accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        Ok(ProbeResult { accuracies, mean, std })
    }
}

/// Settings of the seeded multi-run protocol.
#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub mode: Mode,
    pub hyper: Hyperparams,
    /// Architecture; the input width is taken from the built features.
    pub dims: ModelDims,
    pub n_runs: usize,
    pub fractions: SplitFractions,
    pub probe: ProbeConfig,
    /// Trained parameters to evaluate instead of training each run.
    pub fixed_params: Option<ModelParams>,
}

impl ProtocolConfig {
    pub fn new(mode: Mode, hyper: Hyperparams) -> Self {
        ProtocolConfig {
            mode,
            hyper,
            dims: ModelDims::with_input(1),
            n_runs: 10,
            fractions: SplitFractions::default(),
            probe: ProbeConfig::default(),
            fixed_params: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub split: Split,
    pub scheme: FeatureScheme,
    pub probe: ProbeFit,
    pub log: MetricsLog,
    pub params: ModelParams,
}

#[derive(Clone, Debug)]
pub struct ProtocolOutcome {
    pub result: ProbeResult,
    pub runs: Vec<RunOutcome>,
}

/// Run `r` uses seed `hyper.seed + r` for its split, initialization and
/// batch order: split, build features, train (unless fixed parameters are
/// given or the mode does not train), embed, probe.
pub fn run_protocol_with<F>(dataset: &Dataset, config: &ProtocolConfig, mut on_record: F) -> Result<ProtocolOutcome>
where
    F: FnMut(usize, &IterationRecord) -> Result<()>,
{
    if config.n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be positive".into()));
    }
    config.fractions.validate()?;
    let labels = dataset.labels();
    let mut runs = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs {
        let seed = config.hyper.seed.wrapping_add(run as u64);
        let split = split_dataset(&labels, config.fractions, seed)?;
        let scheme = match &config.fixed_params {
            Some(p) => scheme_for_params(dataset, p)?,
            None => FeatureScheme::auto(dataset, &split.train),
        };
        let data = build_node_features(dataset, scheme)?;
        let width = data.feature_width().ok_or_else(|| Error::Scheme("features not built".into()))?;
        let params = match &config.fixed_params {
            Some(p) => p.clone(),
            None => init_params(ModelDims { input: width, ..config.dims }, seed)?,
        };
        let hyper = Hyperparams { seed, ..config.hyper };
        let (params, log) = if config.fixed_params.is_some() {
            (params, MetricsLog::default())
        } else {
            let out = train_with(&data, &split.train, params, hyper, config.mode, |rec| on_record(run, rec))?;
            (out.params, out.log)
        };
        let table = embed_dataset(&params.contrast.encoder, &data)?;
        let probe = linear_probe(&table, &split, config.probe)?;
        log::info!("run {run} (seed {seed}): test accuracy {:.4}", probe.test_accuracy);
        runs.push(RunOutcome { run, seed, split, scheme, probe, log, params });
    }
    let result = ProbeResult::from_accuracies(runs.iter().map(|r| r.probe.test_accuracy).collect())?;
    Ok(ProtocolOutcome { result, runs })
}

pub fn run_protocol(dataset: &Dataset, config: &ProtocolConfig) -> Result<ProtocolOutcome> {
    run_protocol_with(dataset, config, |_, _| Ok(()))
}

/// Feature scheme matching saved parameters: node labels when the width
/// fits, otherwise degree one-hot with the cap implied by the width.
pub fn scheme_for_params(dataset: &Dataset, params: &ModelParams) -> Result<FeatureScheme> {
    let width = params.dims().input;
    if dataset.has_node_labels() && dataset.node_label_values().len() == width {
        return Ok(FeatureScheme::NodeLabelOneHot);
    }
    if width >= 2 {
        return Ok(FeatureScheme::DegreeOneHot { cap: width - 1 });
    }
    Err(Error::FeatureWidth { expected: width, found: dataset.node_label_values().len() })
}

/// Fixed 256-entry ramp from dark blue through teal and green to yellow.
pub fn color_ramp() -> [[u8; 3]; 256] {
    const ANCHORS: [[f64; 3]; 5] =
        [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let mut ramp = [[0u8; 3]; 256];
    for (i, px) in ramp.iter_mut().enumerate() {
        let t = i as f64 / 255.0 * (ANCHORS.len() - 1) as f64;
        let k = (t.floor() as usize).min(ANCHORS.len() - 2);
        let f = t - k as f64;
        for c in 0..3 {
            px[c] = (ANCHORS[k][c] * (1.0 - f) + ANCHORS[k + 1][c] * f).round() as u8;
        }
    }
    ramp
}

/// Heatmap pixels: one row per graph sorted by class (stable), one column
/// per embedding dimension, values min-max normalized over the whole table.
pub fn heatmap_pixels(table: &EmbeddingTable) -> (usize, usize, Vec<u8>) {
    let (h, w) = (table.len(), table.dim());
    let mut order: Vec<usize> = (0..h).collect();
    order.sort_by_key(|&i| table.labels[i]);
    let data = table.embeddings.data();
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ramp = color_ramp();
    let mut pixels = Vec::with_capacity(h * w * 3);
    for &i in &order {
        for &v in table.embeddings.row(i) {
            let idx = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as usize } else { 0 };
            pixels.extend_from_slice(&ramp[idx.min(255)]);
        }
    }
    (w, h, pixels)
}

/// Writes the heatmap as a binary PPM, atomically.
pub fn export_feature_heatmap(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let (w, h, pixels) = heatmap_pixels(table);
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(&pixels);
    write_atomic(path, &bytes)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
