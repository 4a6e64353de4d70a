//! Accuracy reports and the multi-annotator consensus metric.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::smem::argmax;
use crate::model::Model;
use crate::pipeline::PreparedSet;
use crate::text::{normalize_answer, Vocabulary};

/// `min(#matching human answers / 3, 1)` after answer normalization.
pub fn vqa_consensus(pred: &str, human_answers: &[impl AsRef<str>]) -> f64 {
    let p = normalize_answer(pred);
    let matches = human_answers.iter().filter(|a| normalize_answer(a.as_ref()) == p).count();
    (matches as f64 / 3.0).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub category: String,
    pub answer: String,
    /// `None` when the question could not be encoded.
    pub predicted: Option<String>,
    pub correct: bool,
    pub probs: Vec<f64>,
    /// Argmax location of each hop's attention (memory network only).
    pub attention_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_category: BTreeMap<String, CategoryScore>,
    /// Mean consensus score, when the dataset carries human answers.
    pub vqa_consensus: Option<f64>,
    pub samples: Vec<SampleRecord>,
}

impl EvalReport {
    /// Builds the aggregate scores from per-sample records.
    pub fn from_records(samples: Vec<SampleRecord>, consensus: Option<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Usage("cannot evaluate an empty dataset".into()));
        }
        let mut per_category: BTreeMap<String, CategoryScore> = BTreeMap::new();
        for s in &samples {
            let c = per_category.entry(s.category.clone()).or_insert(CategoryScore {
                count: 0,
                correct: 0,
                accuracy: 0.0,
            });
            c.count += 1;
            c.correct += s.correct as usize;
        }
        for c in per_category.values_mut() {
            c.accuracy = c.correct as f64 / c.count as f64;
        }
        let correct = samples.iter().filter(|s| s.correct).count();
        let vqa_consensus = consensus
            .filter(|c| !c.is_empty())
            .map(|c| c.iter().sum::<f64>() / c.len() as f64);
        Ok(Self {
            accuracy: correct as f64 / samples.len() as f64,
            per_category,
            vqa_consensus,
            samples,
        })
    }

    pub fn summary(&self) -> String {
        let mut s = format!("accuracy {:.4} on {} samples", self.accuracy, self.samples.len());
        for (name, c) in &self.per_category {
            s.push_str(&format!("; {name} {:.4}", c.accuracy));
        }
        if let Some(v) = self.vqa_consensus {
            s.push_str(&format!("; consensus {v:.4}"));
        }
        s
    }
}

/// Argmax-prediction accuracy of `model` on `ds`, in evaluation mode.
/// Samples are scored in parallel but reported in dataset order.
pub fn evaluate(model: &Model, set: &PreparedSet, ds: &Dataset, vocab: &Vocabulary) -> Result<EvalReport> {
    let conv = model.conv().is_some();
    let records: Vec<SampleRecord> = set
        .samples
        .par_iter()
        .map(|ps| {
            let src = &ds.samples[ps.index];
            let mut rec = SampleRecord {
                index: ps.index,
                category: src.category.clone(),
                answer: normalize_answer(&src.answer),
                predicted: None,
                correct: false,
                probs: Vec::new(),
                attention_argmax: Vec::new(),
            };
            if let Some(input) = set.input(ps, conv) {
                let (probs, trace) = model.predict(&input, false)?;
                let class = argmax(&probs);
                let predicted = vocab.answer(class).map(str::to_string);
                rec.correct = ps.target == Some(class);
                rec.predicted = predicted;
                rec.probs = probs;
                if let Some(t) = trace {
                    rec.attention_argmax = (0..t.attention.len()).map(|h| t.argmax_location(h)).collect();
                }
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let consensus = consensus_scores(&records, ds);
    EvalReport::from_records(records, consensus)
}

pub(crate) fn consensus_scores(records: &[SampleRecord], ds: &Dataset) -> Option<Vec<f64>> {
    let scored: Vec<f64> = records
        .iter()
        .filter(|r| !ds.samples[r.index].human_answers.is_empty())
        .map(|r| {
            r.predicted
                .as_deref()
                .map_or(0.0, |p| vqa_consensus(p, &ds.samples[r.index].human_answers))
        })
        .collect();
    (!scored.is_empty()).then_some(scored)
}
