//! Alternating training: contrastive updates of the encoder and projection
//! head, meta updates of the augmenter through a virtual inner step.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augmenter::lga_edge_weights;
use crate::autodiff::{adam_step, adam_step_with, backward, sgd_virtual_step, AdamState, Tape, Tensor};
use crate::error::{Error, Result};
use crate::gnn::{embed_graphs, project, ContrastParams, EdgeWeights, ModelParams, ParamSet};
use crate::graph::{batch_graphs, Dataset, GraphBatch};
use crate::losses::{feature_corr, instance_corr, mega_terms, nt_xent, FeaturePairBatch, MegaTerms};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub tau: f64,
    pub lambda: f64,
    /// Step size of the virtual inner update.
    pub inner_lr: f64,
    pub augmenter_lr: f64,
    pub encoder_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            tau: 0.5,
            lambda: 0.1,
            inner_lr: 1e-3,
            augmenter_lr: 1e-4,
            encoder_lr: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("tau", self.tau), ("augmenter_lr", self.augmenter_lr), ("encoder_lr", self.encoder_lr)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        // A zero inner step is allowed: it switches the meta gradient off.
        for (name, v) in [("inner_lr", self.inner_lr), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Learned augmenter, full objective.
    Mega,
    /// Learned augmenter, instance term only (`lambda = 0`).
    MegaIl,
    /// Contrastive training with unit edge weights, no augmenter.
    Ccl,
    /// Randomly initialized encoder, no training.
    GinRiu,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Mega, Mode::MegaIl, Mode::Ccl, Mode::GinRiu];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mega => "mega",
            Mode::MegaIl => "mega-il",
            Mode::Ccl => "ccl",
            Mode::GinRiu => "gin-riu",
        }
    }

    pub fn lambda(self, h: &Hyperparams) -> f64 {
        if self == Mode::MegaIl {
            0.0
        } else {
            h.lambda
        }
    }

    pub fn uses_augmenter(self) -> bool {
        matches!(self, Mode::Mega | Mode::MegaIl)
    }

    pub fn trains(self) -> bool {
        self != Mode::GinRiu
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown mode '{s}' (expected mega, mega-il, ccl or gin-riu)"))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Contrast,
    Meta,
}

/// One processed batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub epoch: usize,
    pub step: StepKind,
    pub batch_size: usize,
    pub l_contrast: f64,
    /// The MEGA objective and its parts. Contrast steps report them for the
    /// current batch when defined (no all-zero feature column).
    pub l_mega: Option<f64>,
    pub trace_c: Option<f64>,
    pub offdiag_c: Option<f64>,
    /// Unscaled feature term; multiply by lambda for its share of `l_mega`.
    pub feature_term: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<IterationRecord>,
}

impl MetricsLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parameters, optimizer moments and the global iteration counter.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParams,
    pub contrast_adam: AdamState,
    pub augmenter_adam: AdamState,
    pub iteration: u64,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        let contrast_adam = AdamState::new(&params.contrast.tensors());
        let augmenter_adam = AdamState::new(&params.augmenter.tensors());
        TrainState { params, contrast_adam, augmenter_adam, iteration: 0 }
    }
}

fn features(batch: &GraphBatch, weights: &EdgeWeights, p: &ContrastParams) -> Result<Tensor> {
    project(&embed_graphs(batch, weights, &p.encoder)?, &p.projection)
}

fn ensure_finite(what: &str, iteration: u64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} at iteration {iteration} is {v}")))
    }
}

/// Gradient of the MEGA objective with respect to the augmenter.
#[derive(Clone, Debug)]
pub struct MetaGradient {
    pub grads: Vec<Tensor>,
    pub l_contrast: f64,
    pub terms: MegaTerms,
}

/// Builds the full meta pipeline on a fresh tape and differentiates the MEGA
/// objective back to the augmenter:
///
/// 1. edge weights from the augmenter, recorded;
/// 2. the contrastive loss at the current encoder and head;
/// 3. a differentiable SGD step of size `inner_lr` on that loss;
/// 4. both views re-encoded with the stepped parameters, the augmented view
///    detached so the augmenter is reached only through step 3.
pub fn meta_gradient(
    params: &ModelParams,
    batch: &GraphBatch,
    tau: f64,
    lambda: f64,
    inner_lr: f64,
) -> Result<MetaGradient> {
    let tape = Tape::new();
    let contrast = params.contrast.watch(&tape);
    let sigma = params.augmenter.watch(&tape);
    let weights = lga_edge_weights(batch, &sigma)?;

    let l_contrast = contrastive_loss(&contrast, batch, &weights, tau)?;
    let inner = backward(&l_contrast, &contrast.tensors(), true)?;
    let stepped = contrast.with_tensors(&sgd_virtual_step(&contrast.tensors(), &inner, inner_lr)?)?;

    let terms = mega_objective(&stepped, batch, &weights.detach(), lambda)?;
    let grads = backward(&terms.loss, &sigma.tensors(), false)?.for_params(&sigma.tensors())?;
    Ok(MetaGradient { grads, l_contrast: l_contrast.item(), terms })
}

/// NT-Xent between the original view and the view weighted by `weights`.
pub fn contrastive_loss(
    contrast: &ContrastParams,
    batch: &GraphBatch,
    weights: &EdgeWeights,
    tau: f64,
) -> Result<Tensor> {
    let pairs = FeaturePairBatch::new(
        features(batch, &EdgeWeights::ones(batch), contrast)?,
        features(batch, weights, contrast)?,
    )?;
    nt_xent(&pairs, tau)
}

/// MEGA objective between the original view and the view weighted by `weights`.
pub fn mega_objective(
    contrast: &ContrastParams,
    batch: &GraphBatch,
    weights: &EdgeWeights,
    lambda: f64,
) -> Result<MegaTerms> {
    let pairs = FeaturePairBatch::new(
        features(batch, &EdgeWeights::ones(batch), contrast)?,
        features(batch, weights, contrast)?,
    )?;
    mega_terms(&instance_corr(&pairs)?, &feature_corr(&pairs)?, lambda)
}

/// Drives the schedule: one call to [`Trainer::step`] per batch.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub state: TrainState,
    pub hyper: Hyperparams,
    pub mode: Mode,
}

impl Trainer {
    pub fn new(params: ModelParams, hyper: Hyperparams, mode: Mode) -> Result<Self> {
        hyper.validate()?;
        Ok(Trainer { state: TrainState::new(params), hyper, mode })
    }

    pub fn params(&self) -> &ModelParams {
        &self.state.params
    }

    /// Step kind for the next iteration: even iterations contrast, odd ones
    /// meta; CCL only contrasts.
    pub fn next_step_kind(&self) -> StepKind {
        if self.mode.uses_augmenter() && self.state.iteration % 2 == 1 {
            StepKind::Meta
        } else {
            StepKind::Contrast
        }
    }

    pub fn step(&mut self, batch: &GraphBatch, epoch: usize) -> Result<IterationRecord> {
        if !self.mode.trains() {
            return Err(Error::InvalidArgument("gin-riu mode does not train".into()));
        }
        if batch.n_graphs() < 2 {
            return Err(Error::InvalidArgument("a training batch needs at least two graphs".into()));
        }
        let record = match self.next_step_kind() {
            StepKind::Contrast => self.contrast_step(batch, epoch)?,
            StepKind::Meta => self.meta_step(batch, epoch)?,
        };
        self.state.iteration += 1;
        Ok(record)
    }

    /// Adam update of encoder and head on the contrastive loss; the
    /// augmenter's weights enter as constants.
    pub fn contrast_step(&mut self, batch: &GraphBatch, epoch: usize) -> Result<IterationRecord> {
        let it = self.state.iteration;
        let lambda = self.mode.lambda(&self.hyper);
        let weights = if self.mode.uses_augmenter() {
            lga_edge_weights(batch, &self.state.params.augmenter)?.detach()
        } else {
            EdgeWeights::ones(batch)
        };
        let tape = Tape::new();
        let contrast = self.state.params.contrast.watch(&tape);
        let pairs = FeaturePairBatch::new(
            features(batch, &EdgeWeights::ones(batch), &contrast)?,
            features(batch, &weights, &contrast)?,
        )?;
        let loss = nt_xent(&pairs, self.hyper.tau)?;
        let l_contrast = ensure_finite("contrastive loss", it, loss.item())?;
        let grads = backward(&loss, &contrast.tensors(), false)?;
        let updated = adam_step(&contrast.tensors(), &grads, &mut self.state.contrast_adam, self.hyper.encoder_lr)?;
        let diagnostics = FeaturePairBatch::new(pairs.z.detach(), pairs.z_aug.detach())
            .and_then(|p| mega_terms(&instance_corr(&p)?, &feature_corr(&p)?, lambda))
            .ok();
        self.state.params.contrast = self.state.params.contrast.with_tensors(&updated)?;
        Ok(IterationRecord {
            iteration: it,
            epoch,
            step: StepKind::Contrast,
            batch_size: batch.n_graphs(),
            l_contrast,
            l_mega: diagnostics.as_ref().map(|t| t.loss.item()),
            trace_c: diagnostics.as_ref().map(|t| t.trace_c),
            offdiag_c: diagnostics.as_ref().map(|t| t.offdiag_c),
            feature_term: diagnostics.as_ref().map(|t| t.feature),
        })
    }

    /// Adam update of the augmenter along the meta gradient; encoder and head
    /// are left exactly as they were.
    pub fn meta_step(&mut self, batch: &GraphBatch, epoch: usize) -> Result<IterationRecord> {
        let it = self.state.iteration;
        let h = self.hyper;
        let mg = meta_gradient(&self.state.params, batch, h.tau, self.mode.lambda(&h), h.inner_lr)?;
        let l_contrast = ensure_finite("contrastive loss", it, mg.l_contrast)?;
        let l_mega = ensure_finite("meta objective", it, mg.terms.loss.item())?;
        if mg.grads.iter().any(|g| !g.all_finite()) {
            let norms: Vec<f64> = mg.grads.iter().map(Tensor::l2_norm).collect();
            return Err(Error::NonFinite(format!("meta gradient at iteration {it}: per-tensor norms {norms:?}")));
        }
        let sigma = self.state.params.augmenter.tensors();
        let updated = adam_step_with(&sigma, &mg.grads, &mut self.state.augmenter_adam, h.augmenter_lr)?;
        self.state.params.augmenter = self.state.params.augmenter.with_tensors(&updated)?;
        Ok(IterationRecord {
            iteration: it,
            epoch,
            step: StepKind::Meta,
            batch_size: batch.n_graphs(),
            l_contrast,
            l_mega: Some(l_mega),
            trace_c: Some(mg.terms.trace_c),
            offdiag_c: Some(mg.terms.offdiag_c),
            feature_term: Some(mg.terms.feature),
        })
    }
}

/// Shuffled batches of `indices` for one epoch; a final batch with fewer
/// than two graphs is dropped.
pub fn epoch_batches(indices: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect()
}

/// Result of [`train`]: final parameters (the encoder is what downstream
/// evaluation uses) and the per-iteration log.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: MetricsLog,
}

/// Trains on the graphs at `indices` for `hyper.epochs` epochs, calling
/// `on_record` after every iteration.
pub fn train_with<F>(
    dataset: &Dataset,
    indices: &[usize],
    params: ModelParams,
    hyper: Hyperparams,
    mode: Mode,
    mut on_record: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&IterationRecord) -> Result<()>,
{
    hyper.validate()?;
    if dataset.feature_width().is_none() {
        return Err(Error::Scheme("train: node features not built".into()));
    }
    let mut log = MetricsLog::default();
    if !mode.trains() {
        return Ok(TrainOutcome { params, log });
    }
    if indices.len() < 2 {
        return Err(Error::Dataset(format!("train: need at least two graphs, got {}", indices.len())));
    }
    let mut trainer = Trainer::new(params, hyper, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    rng.set_stream(1);
    for epoch in 0..hyper.epochs {
        for chunk in epoch_batches(indices, hyper.batch_size, &mut rng) {
            let batch = batch_graphs(&dataset.subset(&chunk))?;
            let record = trainer.step(&batch, epoch)?;
            log::debug!(
                "epoch {epoch} it {} {:?}: contrast {:.4} mega {:?}",
                record.iteration,
                record.step,
                record.l_contrast,
                record.l_mega
            );
            on_record(&record)?;
            log.records.push(record);
        }
    }
    Ok(TrainOutcome { params: trainer.state.params, log })
}

pub fn train(
    dataset: &Dataset,
    indices: &[usize],
    params: ModelParams,
    hyper: Hyperparams,
    mode: Mode,
) -> Result<TrainOutcome> {
    train_with(dataset, indices, params, hyper, mode, |_| Ok(()))
}
