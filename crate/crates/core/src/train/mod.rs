//! Training loop, evaluation, early-detection sweeps and ablation runs.

mod metrics;
mod sweep;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{ClassScores, Metrics};
pub use sweep::{
    ablation_run, default_count_checkpoints, default_time_checkpoints, early_detection_sweep, EarlyDetectionCurve,
    SweepMode, SweepOptions,
};

use crate::autodiff::{Adam, AdamConfig, ParamStore, Tape, TensorError};
use crate::corpus::{split_dataset, CorpusError, Dataset, Split};
use crate::graph::{assemble_hetero_graph, GraphConfig, GraphError};
use crate::model::{HgatModel, ModelConfig, ModelError};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("tweet `{0}` is unknown or unlabeled")]
    Unlabeled(String),
    #[error("cannot evaluate an empty id set")]
    EmptyIds,
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: TensorError },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    /// L2 coefficient λ.
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            adam: AdamConfig::default(),
            weight_decay: 1e-4,
            patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) || !(self.adam.lr > 0.0) {
            return Err(TrainError::Config("weight_decay must be >= 0 and lr > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// One JSON object per line.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Model carrying the parameters of the best validation epoch.
    pub model: HgatModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// `(tweet_row, class)` targets for `ids`.
pub fn targets(d: &Dataset, ids: &[String]) -> Result<Vec<(usize, usize)>, TrainError> {
    let index = d.tweet_index();
    ids.iter()
        .map(|id| {
            let row = *index.get(id.as_str()).ok_or_else(|| TrainError::Unlabeled(id.clone()))?;
            let label = d.tweets()[row].label.ok_or_else(|| TrainError::Unlabeled(id.clone()))?;
            Ok((row, label.index()))
        })
        .collect()
}

fn accuracy_on(probs: &crate::autodiff::Matrix, targets: &[(usize, usize)]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = targets.iter().filter(|&&(r, c)| probs.argmax_row(r) == c).count();
    hits as f64 / targets.len() as f64
}

/// Trains `model` in place of its current parameters and returns it with
/// the parameters of the best validation epoch (earliest on ties).
pub fn train(mut model: HgatModel, d: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let train_targets = targets(d, &split.train_ids)?;
    let val_targets = targets(d, &split.val_ids)?;
    if train_targets.is_empty() {
        return Err(TrainError::EmptyIds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut adam = Adam::new(cfg.adam.clone());
    let mut order = train_targets.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bound = tape.bind_all(model.params())?;
            let (loss, _) = model
                .loss(&mut tape, &bound, batch, cfg.weight_decay)
                .map_err(|e| diverged(e, epoch))?;
            loss_sum += tape.scalar(loss);
            batches += 1;
            let grads = tape.backward(loss)?;
            adam.step(model.params_mut(), grads, epoch)?;
        }
        let probs = model.predict().map_err(|e| diverged(e, epoch))?;
        let record = EpochRecord {
            epoch,
            lr: cfg.adam.lr_at(epoch),
            train_loss: loss_sum / batches as f64,
            train_accuracy: accuracy_on(&probs, &train_targets),
            val_accuracy: accuracy_on(&probs, &val_targets),
        };
        let improved = best.as_ref().is_none_or(|(_, acc, _)| record.val_accuracy > *acc);
        if improved {
            best = Some((epoch, record.val_accuracy, model.params().clone()));
        }
        history.push(record);
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_val_accuracy, params) = best.expect("at least one epoch ran");
    model.load_params(params)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_accuracy,
    })
}

fn diverged(e: ModelError, epoch: usize) -> TrainError {
    match e {
        ModelError::Tensor(source @ TensorError::NonFinite { .. }) => TrainError::Diverged { epoch, source },
        other => TrainError::Model(other),
    }
}

/// Argmax predictions of `model` scored on `ids`.
pub fn evaluate(model: &HgatModel, d: &Dataset, ids: &[String]) -> Result<Metrics, TrainError> {
    let t = targets(d, ids)?;
    let probs = model.predict()?;
    Metrics::from_pairs(t.iter().map(|&(r, c)| (c, probs.argmax_row(r)))).ok_or(TrainError::EmptyIds)
}

/// Everything a run needs besides the dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Split seeded from the run seed.
pub fn split_for(d: &Dataset, seed: u64) -> Result<Split, TrainError> {
    Ok(split_dataset(d, derive_seed(seed, "split"))?)
}

/// Builds the graph and a fresh model, trains it, and returns it with
/// test metrics.
pub fn fit(
    d: &Dataset,
    split: &Split,
    settings: &RunSettings,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
) -> Result<(TrainOutcome, Metrics), TrainError> {
    settings.train.validate()?;
    let model = fresh_model(d, settings, pretrained)?;
    let outcome = train(model, d, split, &settings.train)?;
    let test = evaluate(&outcome.model, d, &split.test_ids)?;
    Ok((outcome, test))
}

fn fresh_model(
    d: &Dataset,
    settings: &RunSettings,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
) -> Result<HgatModel, TrainError> {
    let g = assemble_hetero_graph(d, &settings.graph)?;
    Ok(HgatModel::new(d, &g, settings.model.clone(), derive_seed(settings.train.seed, "init"), pretrained)?)
}

/// Rebuilds the model [`fit`] trained under `settings` and loads `params`
/// into it. Non-parameter state (user features without dataset values) is
/// regenerated from the same seed.
pub fn restore_model(d: &Dataset, settings: &RunSettings, params: ParamStore) -> Result<HgatModel, TrainError> {
    let mut model = fresh_model(d, settings, None)?;
    model.load_params(params)?;
    Ok(model)
}
