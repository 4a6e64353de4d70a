//! Attention visualization: per-hop heatmaps, overlays on the source image,
//! a JSON sidecar with the raw weights, and correlation dumps.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::GridGeometry;
use crate::image::{write_pgm, RasterImage};
use crate::model::{HopTrace, Model};
use crate::pipeline::PreparedSet;
use crate::train::TrainedModel;

/// Gray level used when every weight is equal and min-max scaling is
/// undefined.
pub const FLAT_LEVEL: u8 = 128;

/// Min-max scales `weights` to 0–255 (rounded); a flat vector maps to
/// [`FLAT_LEVEL`].
pub fn scale_weights(weights: &[f64]) -> Vec<u8> {
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![FLAT_LEVEL; weights.len()];
    }
    weights
        .iter()
        .map(|w| ((w - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// One gray byte per pixel: each pixel takes the scaled weight of its grid
/// cell (nearest-neighbor upsampling).
pub fn attention_heatmap(weights: &[f64], geometry: &GridGeometry, width: usize, height: usize) -> Result<Vec<u8>> {
    if weights.len() != geometry.len() {
        return Err(Error::dim("attention_heatmap", &[weights.len()], &[geometry.rows, geometry.cols]));
    }
    let levels = scale_weights(weights);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            out.push(levels[geometry.cell_of(x, y)]);
        }
    }
    Ok(out)
}

/// `round((image + heat) / 2)` per channel, the heatmap taken as gray.
pub fn overlay(img: &RasterImage, heat: &[u8]) -> Result<RasterImage> {
    if heat.len() != img.width() * img.height() {
        return Err(Error::dim("overlay", &[img.height(), img.width()], &[heat.len()]));
    }
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &c)| (c as u16 + heat[i / 3] as u16).div_ceil(2) as u8)
        .collect();
    RasterImage::new(img.width(), img.height(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopSummary {
    pub hop: usize,
    pub weights: Vec<f64>,
    pub argmax_cell: usize,
    pub argmax_row: usize,
    pub argmax_col: usize,
    /// Hop 1 only: the question word with maximum correlation at the
    /// argmax cell.
    pub argword: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionSidecar {
    pub sample: usize,
    pub question: String,
    pub tokens: Vec<String>,
    pub answer: String,
    pub predicted: Option<String>,
    pub probs: Vec<f64>,
    pub hops: Vec<HopSummary>,
}

/// Evaluation-mode trace of one dataset sample.
pub fn trace_sample(trained: &TrainedModel, set: &PreparedSet, sample: usize) -> Result<HopTrace> {
    let ps = set
        .samples
        .get(sample)
        .ok_or_else(|| Error::Usage(format!("sample {sample} out of range ({} samples)", set.samples.len())))?;
    if !matches!(trained.model, Model::SMem(_)) {
        return Err(Error::Usage("attention maps need a memory-network checkpoint".into()));
    }
    let input = set
        .input(ps, trained.model.conv().is_some())
        .ok_or(Error::EmptyQuestion)?;
    let (_, trace) = trained.model.predict(&input, false)?;
    Ok(trace.expect("memory network produces a trace"))
}

fn grid_for(trained: &TrainedModel, img: &RasterImage) -> Result<GridGeometry> {
    GridGeometry::for_image(
        img.width(),
        img.height(),
        trained.pipeline.grid_rows,
        trained.pipeline.grid_cols,
    )
}

/// Writes, for each sample, `sample_<i>_hop<k>.pgm`,
/// `sample_<i>_hop<k>_overlay.ppm` and `sample_<i>.json` into `out`.
pub fn export_attention_maps(
    trained: &TrainedModel,
    ds: &Dataset,
    dir: Option<&Path>,
    samples: &[usize],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let set = trained.prepare(ds, dir)?;
    let mut written = Vec::new();
    for &i in samples {
        let trace = trace_sample(trained, &set, i)?;
        let src = &ds.samples[i];
        let img = ds.image_of(src);
        let geometry = grid_for(trained, img)?;
        let q = set.samples[i].question.as_ref().expect("traced samples have questions");
        let tokens = trained.vocab.decode(q);
        let mut hops = Vec::new();
        for (h, weights) in trace.attention.iter().enumerate() {
            let heat = attention_heatmap(weights, &geometry, img.width(), img.height())?;
            let pgm = out.join(format!("sample_{i:05}_hop{}.pgm", h + 1));
            write_pgm(&pgm, img.width(), img.height(), &heat)?;
            let ppm = out.join(format!("sample_{i:05}_hop{}_overlay.ppm", h + 1));
            overlay(img, &heat)?.write_ppm(&ppm)?;
            written.extend([pgm, ppm]);
            let cell = trace.argmax_location(h);
            hops.push(HopSummary {
                hop: h + 1,
                weights: weights.clone(),
                argmax_cell: cell,
                argmax_row: cell / geometry.cols,
                argmax_col: cell % geometry.cols,
                argword: (h == 0).then(|| tokens[trace.argword[cell]].clone()),
            });
        }
        let probs = trace.probs.clone();
        let class = crate::model::smem::argmax(&probs);
        let sidecar = AttentionSidecar {
            sample: i,
            question: src.question.clone(),
            tokens,
            answer: src.answer.clone(),
            predicted: trained.vocab.answer(class).map(str::to_string),
            probs,
            hops,
        };
        let json = out.join(format!("sample_{i:05}.json"));
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json("attention sidecar", e))?;
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
        written.push(json);
    }
    Ok(written)
}

/// `token,correlation` rows: for each real question word, its hop-1
/// correlation with the location of highest attention.
pub fn correlation_csv(trained: &TrainedModel, set: &PreparedSet, sample: usize) -> Result<String> {
    let trace = trace_sample(trained, set, sample)?;
    let q = set.samples[sample].question.as_ref().expect("traced samples have questions");
    let cell = trace.argmax_location(0);
    let mut csv = String::from("token,correlation\n");
    for (j, &id) in q.ids.iter().enumerate() {
        if !q.mask[j] {
            continue;
        }
        let token = trained.vocab.token(id as usize).unwrap_or("?");
        csv.push_str(&format!("{token},{}\n", trace.correlation[j][cell]));
    }
    Ok(csv)
}

pub fn export_correlation_csv(
    trained: &TrainedModel,
    ds: &Dataset,
    dir: Option<&Path>,
    sample: usize,
    path: &Path,
) -> Result<()> {
    let set = trained.prepare(ds, dir)?;
    let csv = correlation_csv(trained, &set, sample)?;
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_give_flat_map() {
        let g = GridGeometry::for_image(8, 8, 2, 2).unwrap();
        let heat = attention_heatmap(&[0.25; 4], &g, 8, 8).unwrap();
        assert!(heat.iter().all(|&v| v == FLAT_LEVEL));
    }

    #[test]
    fn one_hot_gives_single_bright_cell() {
        let g = GridGeometry::for_image(8, 8, 2, 2).unwrap();
        let heat = attention_heatmap(&[0.0, 0.0, 1.0, 0.0], &g, 8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expect = if y >= 4 && x < 4 { 255 } else { 0 };
                assert_eq!(heat[y * 8 + x], expect);
            }
        }
    }

    #[test]
    fn overlay_keeps_dimensions_and_blends() {
        let img = RasterImage::filled(6, 4, [255, 0, 100]);
        let o = overlay(&img, &[255; 24]).unwrap();
        assert_eq!((o.width(), o.height()), (6, 4));
        assert_eq!(o.pixel(0, 0), [255, 128, 178]);
    }
}
