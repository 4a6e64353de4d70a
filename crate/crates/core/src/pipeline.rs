//! Turning a [`Dataset`] into model inputs: spatial features per image and
//! encoded questions with answer classes.

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{self, FeatureKind, FeatureNorm, GridGeometry, SpatialFeatures};
use crate::model::{FeatureInput, SampleInput};
use crate::tensor::Tensor;
use crate::text::{EncodedQuestion, Vocabulary};

/// How raw images become the memory `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline {
    pub kind: FeatureKind,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Per-dimension standardization fitted on training features (fixed
    /// extractors only).
    pub norm: Option<FeatureNorm>,
}

/// Per-image model input: a feature matrix or conv patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    pub tensor: Tensor,
    pub geometry: GridGeometry,
}

impl FeaturePipeline {
    pub fn new(kind: FeatureKind, grid_rows: usize, grid_cols: usize) -> Self {
        Self {
            kind,
            grid_rows,
            grid_cols,
            norm: None,
        }
    }

    fn fixed_features(&self, ds: &Dataset, dir: Option<&Path>) -> Result<Vec<SpatialFeatures>> {
        ds.images
            .par_iter()
            .map(|entry| match self.kind {
                FeatureKind::GridPatch => features::extract_grid_patch(&entry.image, self.grid_rows, self.grid_cols),
                FeatureKind::Precomputed => {
                    let rel = entry.features.as_ref().ok_or_else(|| {
                        Error::Data(format!("image {} has no precomputed feature file", entry.path))
                    })?;
                    let path = dir.map(|d| d.join(rel)).unwrap_or_else(|| rel.into());
                    features::load_precomputed(&path)
                }
                FeatureKind::TinyConv => unreachable!("conv inputs are patches"),
            })
            .collect()
    }

    /// Fits the standardization on `train` (fixed extractors only).
    pub fn fit(&mut self, train: &Dataset, dir: Option<&Path>, standardize: bool) -> Result<()> {
        self.norm = None;
        if standardize && self.kind != FeatureKind::TinyConv {
            let feats = self.fixed_features(train, dir)?;
            self.norm = Some(FeatureNorm::fit(&feats)?);
        }
        Ok(())
    }

    /// Feature dimension `M` the model will see, given `channels` for the
    /// conv extractor.
    pub fn feature_dim(&self, sample: &ImageInput, conv_channels: usize) -> usize {
        match self.kind {
            FeatureKind::TinyConv => conv_channels,
            _ => sample.tensor.cols(),
        }
    }

    pub fn inputs(&self, ds: &Dataset, dir: Option<&Path>) -> Result<Vec<ImageInput>> {
        if self.kind == FeatureKind::TinyConv {
            return ds
                .images
                .par_iter()
                .map(|e| {
                    let (tensor, geometry) = features::conv_patches(&e.image, self.grid_rows, self.grid_cols)?;
                    Ok(ImageInput { tensor, geometry })
                })
                .collect();
        }
        self.fixed_features(ds, dir)?
            .into_iter()
            .map(|f| {
                let f = match &self.norm {
                    Some(n) => n.apply(&f)?,
                    None => f,
                };
                Ok(ImageInput {
                    tensor: f.matrix,
                    geometry: f.geometry,
                })
            })
            .collect()
    }
}

/// A dataset sample ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    /// Index into the source dataset's samples.
    pub index: usize,
    pub image: usize,
    /// `None` when no question word is in the vocabulary.
    pub question: Option<EncodedQuestion>,
    /// `None` when the answer is outside the kept answer classes.
    pub target: Option<usize>,
}

impl PreparedSample {
    pub fn trainable(&self) -> bool {
        self.question.is_some() && self.target.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    pub images: Vec<ImageInput>,
    pub samples: Vec<PreparedSample>,
    /// Questions with more in-vocabulary tokens than `T`.
    pub truncated: usize,
    /// Questions with no in-vocabulary token.
    pub empty: usize,
}

impl PreparedSet {
    pub fn build(
        ds: &Dataset,
        dir: Option<&Path>,
        pipeline: &FeaturePipeline,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<Self> {
        let images = pipeline.inputs(ds, dir)?;
        let mut samples = Vec::with_capacity(ds.samples.len());
        let (mut truncated, mut empty) = (0, 0);
        for (index, s) in ds.samples.iter().enumerate() {
            let question = match vocab.encode_question(&s.question, max_len) {
                Ok(q) => {
                    truncated += q.truncated as usize;
                    Some(q)
                }
                Err(Error::EmptyQuestion) => {
                    empty += 1;
                    None
                }
                Err(e) => return Err(e),
            };
            samples.push(PreparedSample {
                index,
                image: s.image,
                question,
                target: vocab.answer_id(&s.answer),
            });
        }
        Ok(Self {
            images,
            samples,
            truncated,
            empty,
        })
    }

    /// Model input for a sample with a question.
    pub fn input<'a>(&'a self, s: &'a PreparedSample, conv: bool) -> Option<SampleInput<'a>> {
        let t = &self.images[s.image].tensor;
        let features = if conv {
            FeatureInput::Patches(t)
        } else {
            FeatureInput::Matrix(t)
        };
        s.question.as_ref().map(|q| SampleInput::new(q, features))
    }
}
