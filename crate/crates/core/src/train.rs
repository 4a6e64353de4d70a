//! Minibatch SGD with momentum and a step-halving learning rate.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::features::{FeatureKind, TinyConv};
use crate::model::checkpoint::{Checkpoint, CheckpointMeta};
use crate::model::{loss_and_grad, Dims, IBowImgParams, Labeled, Model, ModelKind, SMemConfig, SMemParams};
use crate::optim::Momentum;
use crate::pipeline::{FeaturePipeline, PreparedSet};
use crate::rng::Rng;
use crate::text::{build_vocab, Vocabulary};

/// What `train` fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Model(ModelKind),
    PositionHeuristic,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Model(k) => k.fmt(f),
            Method::PositionHeuristic => f.write_str("position-heuristic"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "position-heuristic" {
            Ok(Method::PositionHeuristic)
        } else {
            s.parse().map(Method::Model)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate: f64,
    /// The learning rate halves every this many epochs.
    pub halving_period: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    /// `smem-<H>hop`, `ibowimg` or `position-heuristic`.
    pub model: String,
    pub features: FeatureKind,
    pub embed_dim: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Output channels of the tiny convolution.
    pub conv_channels: usize,
    /// Standardize fixed features per dimension with training statistics.
    pub standardize: bool,
    pub min_word_freq: usize,
    pub top_answers: usize,
    /// Question length `T`; defaults to the longest training question.
    pub max_len: Option<usize>,
    pub init_gain: f64,
    /// Compute per-sample gradients on the rayon pool. Results are
    /// bitwise identical to the sequential path.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            momentum: 0.9,
            learning_rate: 0.01,
            halving_period: 6,
            epochs: 50,
            weight_decay: 0.0,
            dropout: 0.0,
            seed: 0,
            model: "smem-1hop".into(),
            features: FeatureKind::GridPatch,
            embed_dim: 64,
            grid_rows: 4,
            grid_cols: 4,
            conv_channels: 12,
            standardize: true,
            min_word_freq: 1,
            top_answers: 1000,
            max_len: None,
            init_gain: 1.0,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn method(&self) -> Result<Method> {
        self.model.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.method()?;
        if self.batch_size == 0 || self.halving_period == 0 {
            return Err(Error::Usage("batch size and halving period must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Usage("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Usage("momentum must lie in [0, 1)".into()));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 || self.embed_dim == 0 {
            return Err(Error::Usage("grid and embedding sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::json("train config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn smem_config(&self, hops: usize) -> SMemConfig {
        SMemConfig {
            embed_dim: self.embed_dim,
            hops,
            dropout: self.dropout,
            weight_decay: self.weight_decay,
            init_gain: self.init_gain,
        }
    }
}

/// `base / 2^⌊epoch/period⌋`, epochs counted from zero.
pub fn lr_at(base: f64, period: usize, epoch: usize) -> f64 {
    base / 2f64.powi((epoch / period) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

/// Everything needed to run a trained model on new data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub vocab: Vocabulary,
    pub pipeline: FeaturePipeline,
    pub max_len: usize,
}

impl TrainedModel {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                locations: self.pipeline.grid_rows * self.pipeline.grid_cols,
                grid_rows: self.pipeline.grid_rows,
                grid_cols: self.pipeline.grid_cols,
                feature_kind: self.pipeline.kind,
                vocab_hash: self.vocab.hash(),
            },
            model: self.model.clone(),
            norm: self.pipeline.norm.clone(),
        }
    }

    /// Rebuilds from a checkpoint and the vocabulary it was trained with.
    pub fn from_checkpoint(ck: Checkpoint, vocab: Vocabulary) -> Result<Self> {
        if ck.meta.vocab_hash != vocab.hash() {
            return Err(Error::Usage(format!(
                "vocabulary hash {:016x} does not match checkpoint {:016x}",
                vocab.hash(),
                ck.meta.vocab_hash
            )));
        }
        let max_len = ck.model.max_len();
        Ok(Self {
            pipeline: FeaturePipeline {
                kind: ck.meta.feature_kind,
                grid_rows: ck.meta.grid_rows,
                grid_cols: ck.meta.grid_cols,
                norm: ck.norm,
            },
            model: ck.model,
            vocab,
            max_len,
        })
    }

    pub fn prepare(&self, ds: &Dataset, dir: Option<&Path>) -> Result<PreparedSet> {
        PreparedSet::build(ds, dir, &self.pipeline, &self.vocab, self.max_len)
    }

    pub fn evaluate(&self, ds: &Dataset, dir: Option<&Path>) -> Result<EvalReport> {
        let set = self.prepare(ds, dir)?;
        evaluate(&self.model, &set, ds, &self.vocab)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trained: TrainedModel,
    /// The model after the epoch with the best validation accuracy (or the
    /// lowest training loss without validation data).
    pub best: Model,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochMetrics>,
    pub truncated_questions: usize,
    pub skipped_samples: usize,
}

/// Data handed to [`train`]; `dir` resolves precomputed feature paths.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'d> {
    pub train: &'d Dataset,
    pub val: Option<&'d Dataset>,
    pub dir: Option<&'d Path>,
    pub val_dir: Option<&'d Path>,
}

/// Trains a parametric model. Random streams: parameters from
/// `seed`·stream 1, shuffling from stream 2, dropout from stream 3.
pub fn train(cfg: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    train_with(cfg, data, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(cfg: &TrainConfig, data: TrainData<'_>, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let kind = match cfg.method()? {
        Method::Model(k) => k,
        Method::PositionHeuristic => {
            return Err(Error::Usage("the position heuristic is fitted, not trained".into()))
        }
    };
    let vocab = build_vocab(
        data.train.samples.iter().map(|s| (s.question.as_str(), s.answer.as_str())),
        cfg.min_word_freq,
        cfg.top_answers,
    )?;
    let max_len = cfg.max_len.unwrap_or(vocab.max_len());
    let mut pipeline = FeaturePipeline::new(cfg.features, cfg.grid_rows, cfg.grid_cols);
    pipeline.fit(data.train, data.dir, cfg.standardize)?;
    let set = PreparedSet::build(data.train, data.dir, &pipeline, &vocab, max_len)?;
    let first = set
        .images
        .first()
        .ok_or_else(|| Error::Usage("training set has no images".into()))?;
    let dims = Dims {
        vocab: vocab.len(),
        locations: first.tensor.rows(),
        feature_dim: pipeline.feature_dim(first, cfg.conv_channels),
        max_len,
        answers: vocab.num_answers(),
    };

    let root = Rng::new(cfg.seed);
    let mut init_rng = root.derive(1);
    let mut model = match kind {
        ModelKind::SMem { hops } => Model::SMem(SMemParams::init(&cfg.smem_config(hops), dims, &mut init_rng)?),
        ModelKind::IBowImg => Model::IBowImg(IBowImgParams::init(cfg.embed_dim, dims, cfg.init_gain, &mut init_rng)),
    };
    let conv = cfg.features == FeatureKind::TinyConv;
    if conv {
        model.set_conv(Some(TinyConv::init(cfg.conv_channels, &mut init_rng)));
    }

    let val_set = match data.val {
        Some(v) => Some(PreparedSet::build(v, data.val_dir, &pipeline, &vocab, max_len)?),
        None => None,
    };
    let trainable: Vec<usize> = (0..set.samples.len()).filter(|&i| set.samples[i].trainable()).collect();
    if trainable.is_empty() {
        return Err(Error::Data("no trainable samples (all questions empty or answers excluded)".into()));
    }
    let mut shuffle_rng = root.derive(2);
    let dropout_root = root.derive(3);
    let mut opt = Momentum::new(&model, cfg.learning_rate, cfg.momentum, cfg.weight_decay);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = model.clone();
    let mut best_epoch = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut order = trainable.clone();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg.learning_rate, cfg.halving_period, epoch);
        opt.set_lr(lr);
        order.copy_from_slice(&trainable);
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Labeled<'_>> = chunk
                .iter()
                .map(|&i| {
                    let s = &set.samples[i];
                    Labeled {
                        input: set.input(s, conv).expect("trainable samples have questions"),
                        target: s.target.expect("trainable samples have targets"),
                    }
                })
                .collect();
            let drop_rng = dropout_root.derive(((epoch as u64) << 32) | b as u64);
            let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &drop_rng));
            let loss = loss_and_grad(&mut model, &batch, dropout, cfg.parallel)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            opt.step(&mut model)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / trainable.len() as f64;
        let val_accuracy = match (&val_set, data.val) {
            (Some(vs), Some(v)) => Some(evaluate(&model, vs, v, &vocab)?.accuracy),
            _ => None,
        };
        let score = val_accuracy.unwrap_or(-train_loss);
        if score > best_score {
            best_score = score;
            best = model.clone();
            best_epoch = Some(epoch);
        }
        let m = EpochMetrics {
            epoch,
            learning_rate: lr,
            train_loss,
            val_accuracy,
        };
        on_epoch(&m);
        history.push(m);
    }
    model.zero_grads_all();
    best.zero_grads_all();
    Ok(TrainOutcome {
        trained: TrainedModel {
            model,
            vocab,
            pipeline,
            max_len,
        },
        best,
        best_epoch,
        history,
        truncated_questions: set.truncated,
        skipped_samples: set.samples.len() - trainable.len(),
    })
}

impl Model {
    /// Drops every gradient slot so checkpoints and comparisons only see
    /// parameter values.
    pub fn zero_grads_all(&mut self) {
        use crate::param::ParamSet;
        self.visit_mut(&mut |_, t| t.grad = None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_every_period() {
        assert_eq!(lr_at(0.01, 6, 0), 0.01);
        assert_eq!(lr_at(0.01, 6, 5), 0.01);
        assert_eq!(lr_at(0.01, 6, 6), 0.005);
        assert_eq!(lr_at(0.01, 6, 13), 0.0025);
    }

    #[test]
    fn method_names() {
        assert_eq!("smem-2hop".parse::<Method>().unwrap(), Method::Model(ModelKind::SMem { hops: 2 }));
        assert_eq!("ibowimg".parse::<Method>().unwrap(), Method::Model(ModelKind::IBowImg));
        assert_eq!("position-heuristic".parse::<Method>().unwrap(), Method::PositionHeuristic);
        assert!("smem-0hop".parse::<Method>().is_err());
        assert_eq!(Method::Model(ModelKind::SMem { hops: 3 }).to_string(), "smem-3hop");
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let c = TrainConfig::from_json(r#"{"epochs": 3, "model": "ibowimg"}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 50);
        assert!(TrainConfig::from_json(r#"{"epoch": 3}"#).is_err());
    }
}
