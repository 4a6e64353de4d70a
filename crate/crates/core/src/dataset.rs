//! In-memory datasets and their on-disk form: a `manifest.jsonl` with one
//! record per question plus binary PPM images (and optionally `SMEMFEAT`
//! feature files) next to it.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RasterImage;

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Pixel rectangle `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl From<[usize; 4]> for PixelBox {
    fn from([x, y, w, h]: [usize; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<PixelBox> for [usize; 4] {
    fn from(b: PixelBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl PixelBox {
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    /// Centroid in pixel coordinates (pixel centers at `+0.5`).
    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn intersects(&self, o: &PixelBox) -> bool {
        self.x < o.right() && o.x < self.right() && self.y < o.bottom() && o.y < self.bottom()
    }

    /// Grows the box by `m` pixels on every side (saturating at zero).
    pub fn inflate(&self, m: usize) -> PixelBox {
        let x = self.x.saturating_sub(m);
        let y = self.y.saturating_sub(m);
        PixelBox {
            x,
            y,
            w: self.right() + m - x,
            h: self.bottom() + m - y,
        }
    }
}

/// One question about one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QASample {
    /// Index into [`Dataset::images`].
    pub image: usize,
    pub question: String,
    pub answer: String,
    /// Position word for the synthetic tasks.
    pub category: String,
    pub square_box: Option<PixelBox>,
    pub object_box: Option<PixelBox>,
    /// Additional annotator answers, when a dataset has them.
    pub human_answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageEntry {
    /// Path relative to the dataset directory.
    pub path: String,
    pub image: RasterImage,
    /// Relative path of a precomputed feature file, if any.
    pub features: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub images: Vec<ImageEntry>,
    pub samples: Vec<QASample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    image: String,
    question: String,
    answer: String,
    category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    square_box: Option<PixelBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object_box: Option<PixelBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    human_answers: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image_of(&self, s: &QASample) -> &RasterImage {
        &self.images[s.image].image
    }

    /// Manifest text, one JSON object per line in sample order.
    pub fn manifest(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.samples {
            let img = &self.images[s.image];
            let rec = Record {
                image: img.path.clone(),
                question: s.question.clone(),
                answer: s.answer.clone(),
                category: s.category.clone(),
                square_box: s.square_box,
                object_box: s.object_box,
                features: img.features.clone(),
                human_answers: s.human_answers.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::json("manifest record", e))?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes the manifest and every image below `dir` (created if needed).
    /// Feature files are the caller's business; see
    /// [`crate::features::write_precomputed`].
    pub fn save(&self, dir: &Path) -> Result<()> {
        for img in &self.images {
            let path = dir.join(&img.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            img.image.write_ppm(&path)?;
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_NAME);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(self.manifest()?.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    /// Reads `dir/manifest.jsonl` and the images it references. Images are
    /// indexed in order of first reference.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut ds = Dataset::default();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{} line {}", path.display(), lineno + 1), e))?;
            let image = match index.get(&rec.image) {
                Some(&i) => i,
                None => {
                    let img = RasterImage::read_ppm(&dir.join(&rec.image))?;
                    ds.images.push(ImageEntry {
                        path: rec.image.clone(),
                        image: img,
                        features: rec.features.clone(),
                    });
                    index.insert(rec.image.clone(), ds.images.len() - 1);
                    ds.images.len() - 1
                }
            };
            ds.samples.push(QASample {
                image,
                question: rec.question,
                answer: rec.answer,
                category: rec.category,
                square_box: rec.square_box,
                object_box: rec.object_box,
                human_answers: rec.human_answers,
            });
        }
        if ds.samples.is_empty() {
            return Err(Error::Data(format!("{} has no samples", path.display())));
        }
        Ok(ds)
    }
}
