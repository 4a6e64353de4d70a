//! A baseline that answers from the square's absolute position alone: the
//! majority answer per (3×3 cell of the square's centroid, question
//! category), fitted on training data.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, QASample};
use crate::error::{Error, Result};
use crate::eval::{consensus_scores, EvalReport, SampleRecord};
use crate::text::normalize_answer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionHeuristic {
    /// Answers by overall training frequency, ties lexicographic; earlier
    /// answers win majority ties.
    pub answers: Vec<String>,
    /// `"row,col,category"` → answer.
    pub table: BTreeMap<String, String>,
    /// Most frequent training answer, used for unseen keys.
    pub fallback: String,
}

fn key(ds: &Dataset, s: &QASample) -> Result<String> {
    let b = s
        .square_box
        .ok_or_else(|| Error::Usage("position heuristic needs square geometry on every sample".into()))?;
    let img = ds.image_of(s);
    let (cx, cy) = b.center();
    let col = ((3.0 * cx / img.width() as f64) as usize).min(2);
    let row = ((3.0 * cy / img.height() as f64) as usize).min(2);
    Ok(format!("{row},{col},{}", s.category))
}

impl PositionHeuristic {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Usage("cannot fit the position heuristic on no data".into()));
        }
        let mut freq: HashMap<String, usize> = HashMap::new();
        for s in &train.samples {
            *freq.entry(normalize_answer(&s.answer)).or_insert(0) += 1;
        }
        let mut answers: Vec<(String, usize)> = freq.into_iter().collect();
        answers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let answers: Vec<String> = answers.into_iter().map(|(a, _)| a).collect();
        let rank: HashMap<&str, usize> = answers.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

        let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for s in &train.samples {
            let c = counts.entry(key(train, s)?).or_insert_with(|| vec![0; answers.len()]);
            c[rank[normalize_answer(&s.answer).as_str()]] += 1;
        }
        let table = counts
            .into_iter()
            .map(|(k, c)| {
                let best = (0..c.len()).fold(0, |b, i| if c[i] > c[b] { i } else { b });
                (k, answers[best].clone())
            })
            .collect();
        Ok(Self {
            fallback: answers[0].clone(),
            answers,
            table,
        })
    }

    pub fn predict(&self, ds: &Dataset, s: &QASample) -> Result<&str> {
        Ok(self.table.get(&key(ds, s)?).unwrap_or(&self.fallback))
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<EvalReport> {
        let records = ds
            .samples
            .iter()
            .enumerate()
            .map(|(index, s)| {
                let p = self.predict(ds, s)?.to_string();
                let answer = normalize_answer(&s.answer);
                Ok(SampleRecord {
                    index,
                    category: s.category.clone(),
                    correct: p == answer,
                    answer,
                    predicted: Some(p),
                    probs: Vec::new(),
                    attention_argmax: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let consensus = consensus_scores(&records, ds);
        EvalReport::from_records(records, consensus)
    }
}

/// Fits on `train`, scores on `test`.
pub fn position_heuristic_baseline(train: &Dataset, test: &Dataset) -> Result<EvalReport> {
    PositionHeuristic::fit(train)?.evaluate(test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec, Task};

    #[test]
    fn solves_the_absolute_task() {
        let spec = SynthSpec {
            task: Task::Absolute,
            train: 100,
            test: 40,
            seed: 3,
            ..Default::default()
        };
        let s = generate(&spec).unwrap();
        let r = position_heuristic_baseline(&s.train, &s.test).unwrap();
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn one_image_train_set_is_deterministic() {
        let spec = SynthSpec {
            train: 1,
            test: 5,
            seed: 1,
            ..Default::default()
        };
        let s = generate(&spec).unwrap();
        let a = PositionHeuristic::fit(&s.train).unwrap();
        let b = PositionHeuristic::fit(&s.train).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fallback, "no");
        assert_eq!(a.evaluate(&s.test).unwrap(), b.evaluate(&s.test).unwrap());
    }

    #[test]
    fn missing_geometry_is_usage_error() {
        let spec = SynthSpec {
            train: 2,
            test: 1,
            ..Default::default()
        };
        let mut s = generate(&spec).unwrap();
        s.train.samples[0].square_box = None;
        assert!(matches!(PositionHeuristic::fit(&s.train), Err(Error::Usage(_))));
    }
}
