//! Trainable models and the per-batch loss/gradient computation.

pub mod checkpoint;
pub mod ibowimg;
pub mod smem;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::features::TinyConv;
use crate::param::ParamSet;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::text::EncodedQuestion;

pub use ibowimg::IBowImgParams;
pub use smem::{Dims, Dropout, HopTrace, SMemConfig, SMemForward, SMemParams};

/// Uniform(−a, a) with `a = gain·√(6/(fan_in+fan_out))`.
pub(crate) fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, gain: f64, rng: &mut Rng) -> Tensor {
    let a = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-a, a)).collect()).expect("shape matches data")
}

/// Embeds an encoded question of length `t ≤ max_len`; padding becomes
/// zero rows that receive no gradient.
pub(crate) fn embed_question<'a>(
    g: &mut Graph<'a>,
    table: &'a Tensor,
    q: &EncodedQuestion,
    max_len: usize,
) -> Result<(Var, usize)> {
    let t = q.len();
    if t == 0 || t > max_len {
        return Err(Error::dim("question", &[t], &[max_len]));
    }
    if q.mask.len() != t {
        return Err(Error::dim("question_mask", &[q.mask.len()], &[t]));
    }
    if q.real_len() == 0 {
        return Err(Error::EmptyQuestion);
    }
    let vocab = table.rows() - 1;
    let ids = q.lookup_ids();
    if let Some(bad) = ids.iter().flatten().find(|&&id| id >= vocab) {
        return Err(Error::Data(format!("token id {bad} outside vocabulary of {vocab}")));
    }
    let e = g.param(table);
    Ok((g.embedding(e, &ids)?, t))
}

/// Where a sample's spatial memory comes from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureInput<'a> {
    /// A fixed `L×M` matrix.
    Matrix(&'a Tensor),
    /// `L×75` conv patches for a model with a trainable extractor.
    Patches(&'a Tensor),
}

#[derive(Debug, Clone, Copy)]
pub struct SampleInput<'a> {
    pub question: &'a EncodedQuestion,
    pub features: FeatureInput<'a>,
}

impl<'a> SampleInput<'a> {
    pub fn new(question: &'a EncodedQuestion, features: FeatureInput<'a>) -> Self {
        Self { question, features }
    }

    pub(crate) fn feature_var(&self, g: &mut Graph<'a>, conv: Option<&'a TinyConv>) -> Result<Var> {
        match (self.features, conv) {
            (FeatureInput::Matrix(s), None) => Ok(g.constant_ref(s)),
            (FeatureInput::Patches(p), Some(c)) => {
                let pv = g.constant_ref(p);
                c.forward(g, pv)
            }
            (FeatureInput::Matrix(_), Some(_)) => Err(Error::Usage(
                "model has a trainable extractor but received a feature matrix".into(),
            )),
            (FeatureInput::Patches(_), None) => Err(Error::Usage(
                "received conv patches but the model has no trainable extractor".into(),
            )),
        }
    }
}

#[derive(Debug, Default)]
pub struct ForwardOptions<'r> {
    pub dropout: Option<Dropout<'r>>,
    /// Replace hop-1 attention with the uniform `1/L` (ablation).
    pub uniform_hop1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SMem { hops: usize },
    IBowImg,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::SMem { hops } => write!(f, "smem-{hops}hop"),
            ModelKind::IBowImg => f.write_str("ibowimg"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ibowimg" {
            return Ok(ModelKind::IBowImg);
        }
        s.strip_prefix("smem-")
            .and_then(|r| r.strip_suffix("hop"))
            .and_then(|h| h.parse::<usize>().ok())
            .filter(|&h| h >= 1)
            .map(|hops| ModelKind::SMem { hops })
            .ok_or_else(|| Error::Usage(format!("unknown model {s:?}; expected smem-<H>hop or ibowimg")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    SMem(SMemParams),
    IBowImg(IBowImgParams),
}

#[derive(Debug, Clone)]
pub struct ModelForward {
    pub logits: Var,
    pub smem: Option<SMemForward>,
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::SMem(p) => ModelKind::SMem { hops: p.hops() },
            Model::IBowImg(_) => ModelKind::IBowImg,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            Model::SMem(p) => p.embed_dim(),
            Model::IBowImg(p) => p.embed_dim(),
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            Model::SMem(p) => p.max_len(),
            Model::IBowImg(p) => p.max_len(),
        }
    }

    pub fn answers(&self) -> usize {
        match self {
            Model::SMem(p) => p.answers(),
            Model::IBowImg(p) => p.answers(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Model::SMem(p) => p.vocab_size(),
            Model::IBowImg(p) => p.vocab_size(),
        }
    }

    pub fn conv(&self) -> Option<&TinyConv> {
        match self {
            Model::SMem(p) => p.conv.as_ref(),
            Model::IBowImg(p) => p.conv.as_ref(),
        }
    }

    pub fn set_conv(&mut self, conv: Option<TinyConv>) {
        match self {
            Model::SMem(p) => p.conv = conv,
            Model::IBowImg(p) => p.conv = conv,
        }
    }

    pub fn forward<'a>(
        &'a self,
        g: &mut Graph<'a>,
        input: &SampleInput<'a>,
        opts: ForwardOptions<'_>,
    ) -> Result<ModelForward> {
        match self {
            Model::SMem(p) => {
                let f = p.forward(g, input, opts)?;
                Ok(ModelForward {
                    logits: f.logits,
                    smem: Some(f),
                })
            }
            Model::IBowImg(p) => Ok(ModelForward {
                logits: p.forward(g, input)?,
                smem: None,
            }),
        }
    }

    /// Evaluation-mode answer distribution and, for the memory network, the
    /// per-hop trace.
    pub fn predict(&self, input: &SampleInput<'_>, uniform_hop1: bool) -> Result<(Vec<f64>, Option<HopTrace>)> {
        let mut g = Graph::new();
        let f = self.forward(
            &mut g,
            input,
            ForwardOptions {
                dropout: None,
                uniform_hop1,
            },
        )?;
        let p = g.row_softmax(f.logits)?;
        let probs = g.value(p).data().to_vec();
        if probs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite answer probability".into()));
        }
        let trace = f.smem.as_ref().map(|s| HopTrace::from_forward(&g, s, probs.clone()));
        Ok((probs, trace))
    }

    /// Cross-entropy of one sample and its gradient per tensor (visiting
    /// order).
    pub fn sample_loss_and_grad(
        &self,
        input: &SampleInput<'_>,
        target: usize,
        opts: ForwardOptions<'_>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, input, opts)?;
        let loss = g.softmax_cross_entropy(f.logits, target)?;
        let value = g.value(loss).data()[0];
        let grads = g.backward(loss)?;
        let mut out = Vec::new();
        self.visit(&mut |_, t| out.push(g.param_grad(&grads, t)));
        Ok((value, out))
    }
}

impl ParamSet for Model {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        match self {
            Model::SMem(p) => p.visit(f),
            Model::IBowImg(p) => p.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        match self {
            Model::SMem(p) => p.visit_mut(f),
            Model::IBowImg(p) => p.visit_mut(f),
        }
    }
}

/// One labelled example.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub input: SampleInput<'a>,
    pub target: usize,
}

/// Mean cross-entropy over `batch` and its gradient, stored into the
/// model's gradient slots.
///
/// Per-sample gradients are summed in sample order whether or not the
/// samples run in parallel, so both paths produce identical bits. Dropout,
/// when given, draws sample `i`'s mask from `rng.derive(i)`.
pub fn loss_and_grad(
    model: &mut Model,
    batch: &[Labeled<'_>],
    dropout: Option<(f64, &Rng)>,
    parallel: bool,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let shared: &Model = model;
    let per_sample = |(i, s): (usize, &Labeled<'_>)| {
        let mut rng = dropout.map(|(_, r)| r.derive(i as u64));
        let opts = ForwardOptions {
            dropout: dropout.zip(rng.as_mut()).map(|((rate, _), rng)| Dropout { rate, rng }),
            uniform_hop1: false,
        };
        shared.sample_loss_and_grad(&s.input, s.target, opts)
    };
    let results: Vec<Result<(f64, Vec<Vec<f64>>)>> = if parallel {
        batch.par_iter().enumerate().map(per_sample).collect()
    } else {
        batch.iter().enumerate().map(per_sample).collect()
    };
    let mut total = 0.0;
    let mut sum: Option<Vec<Vec<f64>>> = None;
    for r in results {
        let (loss, grads) = r?;
        total += loss;
        match &mut sum {
            None => sum = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut sum = sum.expect("nonempty batch").into_iter();
    model.visit_mut(&mut |_, t| {
        let mut g = sum.next().expect("one gradient per tensor");
        g.iter_mut().for_each(|x| *x *= scale);
        t.grad = Some(g);
    });
    Ok(total * scale)
}

/// Mean cross-entropy over `batch` without building gradients; the
/// reference the finite-difference checker perturbs.
pub fn mean_loss(model: &Model, batch: &[Labeled<'_>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut total = 0.0;
    for s in batch {
        let mut g = Graph::new();
        let f = model.forward(&mut g, &s.input, ForwardOptions::default())?;
        let loss = g.softmax_cross_entropy(f.logits, s.target)?;
        total += g.value(loss).data()[0];
    }
    Ok(total / batch.len() as f64)
}
