//! Spatial memory construction: an `L×M` matrix of per-cell visual features
//! over a `rows×cols` image grid.
//!
//! Three sources are provided:
//! * [`extract_grid_patch`]: twelve fixed color/texture statistics per cell,
//! * [`TinyConv`]: one trainable 5×5 convolution + ReLU per cell,
//! * [`load_precomputed`]: externally computed features in the `SMEMFEAT`
//!   file format.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::image::RasterImage;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Which extractor produces the spatial memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    #[default]
    GridPatch,
    TinyConv,
    Precomputed,
}

impl FeatureKind {
    pub fn code(self) -> u32 {
        match self {
            FeatureKind::GridPatch => 0,
            FeatureKind::TinyConv => 1,
            FeatureKind::Precomputed => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        [FeatureKind::GridPatch, FeatureKind::TinyConv, FeatureKind::Precomputed]
            .into_iter()
            .find(|k| k.code() == code)
    }
}

/// Number of statistics produced by [`extract_grid_patch`].
pub const GRID_PATCH_DIMS: usize = 12;

pub const GRID_PATCH_NAMES: [&str; GRID_PATCH_DIMS] = [
    "mean_r",
    "mean_g",
    "mean_b",
    "red_frac",
    "white_frac",
    "gray_frac",
    "std_r",
    "std_g",
    "std_b",
    "grad_x",
    "grad_y",
    "edge_frac",
];

// Pixel classes, on 8-bit channels.
const RED_MIN_R: u8 = 200;
const RED_MAX_GB: u8 = 80;
const WHITE_MIN: u8 = 230;
const GRAY_MAX_SPREAD: u8 = 30;
const GRAY_MEAN_RANGE: (f64, f64) = (60.0, 200.0);
/// Threshold on the unit-step central-difference gradient magnitude of
/// intensity (intensity in `[0, 1]`).
const EDGE_THRESHOLD: f64 = 0.1;

pub fn is_red(c: [u8; 3]) -> bool {
    c[0] > RED_MIN_R && c[1] < RED_MAX_GB && c[2] < RED_MAX_GB
}

pub fn is_white(c: [u8; 3]) -> bool {
    c.iter().all(|&v| v > WHITE_MIN)
}

pub fn is_gray_object(c: [u8; 3]) -> bool {
    let max = *c.iter().max().expect("3 channels");
    let min = *c.iter().min().expect("3 channels");
    let mean = c.iter().map(|&v| v as f64).sum::<f64>() / 3.0;
    max - min < GRAY_MAX_SPREAD && (GRAY_MEAN_RANGE.0..=GRAY_MEAN_RANGE.1).contains(&mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Row-major cell rectangles, in the coordinates of the image padded to
    /// a multiple of the grid.
    pub cells: Vec<CellRect>,
}

impl GridGeometry {
    pub fn for_image(width: usize, height: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Usage(format!("grid must be positive, got {rows}x{cols}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Usage(format!("zero-size image {width}x{height}")));
        }
        let cw = width.div_ceil(cols);
        let ch = height.div_ceil(rows);
        let cells = (0..rows)
            .flat_map(|r| {
                (0..cols).map(move |c| CellRect {
                    x: c * cw,
                    y: r * ch,
                    w: cw,
                    h: ch,
                })
            })
            .collect();
        Ok(Self { rows, cols, cells })
    }

    /// Geometry without an image: unit cells. Used for features loaded from
    /// files, where the source resolution is unknown.
    pub fn unit(rows: usize, cols: usize) -> Self {
        Self::for_image(cols, rows, rows, cols).expect("positive grid")
    }

    /// Most square factorization `rows × cols = l` with `rows ≤ cols`.
    pub fn near_square(l: usize) -> Self {
        let rows = (1..=l).take_while(|r| r * r <= l).filter(|r| l.is_multiple_of(*r)).last().unwrap_or(1);
        Self::unit(rows, l / rows)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell index containing pixel `(x, y)`.
    pub fn cell_of(&self, x: usize, y: usize) -> usize {
        let r = (y / self.cells[0].h).min(self.rows - 1);
        let c = (x / self.cells[0].w).min(self.cols - 1);
        r * self.cols + c
    }
}

/// The spatial memory `S`: one feature row per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFeatures {
    pub matrix: Tensor,
    pub geometry: GridGeometry,
}

impl SpatialFeatures {
    pub fn new(matrix: Tensor, geometry: GridGeometry) -> Result<Self> {
        if matrix.rank() != 2 || matrix.rows() != geometry.len() {
            return Err(Error::dim("spatial_features", matrix.shape(), &[geometry.rows, geometry.cols]));
        }
        if !matrix.is_finite() {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(Self { matrix, geometry })
    }

    /// Number of grid cells `L`.
    pub fn locations(&self) -> usize {
        self.matrix.rows()
    }

    /// Feature dimension `M`.
    pub fn dims(&self) -> usize {
        self.matrix.cols()
    }
}

/// Twelve statistics per grid cell.
///
/// Per cell, with `I = (R+G+B)/(3·255)`:
/// mean R, G, B in `[0, 1]`; fractions of red, white and gray-object pixels
/// (see [`is_red`], [`is_white`], [`is_gray_object`]); per-channel standard
/// deviation in `[0, 1]`; horizontal and vertical intensity-gradient means,
/// `(I(x+d) − I(x−d)) / 2` with `d` half the cell extent, sampled with edge
/// replication; and the fraction of pixels whose unit-step gradient
/// magnitude exceeds 0.1.
///
/// Images that do not divide evenly are padded by edge replication.
pub fn extract_grid_patch(img: &RasterImage, rows: usize, cols: usize) -> Result<SpatialFeatures> {
    let geometry = GridGeometry::for_image(img.width(), img.height(), rows, cols)?;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let intensity: Vec<f64> = img
        .data()
        .chunks(3)
        .map(|c| (c[0] as f64 + c[1] as f64 + c[2] as f64) / (3.0 * 255.0))
        .collect();
    let at = |x: i64, y: i64| intensity[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];

    let mut data = Vec::with_capacity(geometry.len() * GRID_PATCH_DIMS);
    for cell in &geometry.cells {
        let dx = (cell.w / 2).max(1) as i64;
        let dy = (cell.h / 2).max(1) as i64;
        let mut sum = [0.0f64; 3];
        let mut sum_sq = [0.0f64; 3];
        let (mut red, mut white, mut gray, mut edges) = (0usize, 0usize, 0usize, 0usize);
        let (mut gx_sum, mut gy_sum) = (0.0f64, 0.0f64);
        for y in cell.y..cell.y + cell.h {
            for x in cell.x..cell.x + cell.w {
                let (xi, yi) = (x as i64, y as i64);
                let px = img.pixel_clamped(xi, yi);
                for k in 0..3 {
                    let v = px[k] as f64 / 255.0;
                    sum[k] += v;
                    sum_sq[k] += v * v;
                }
                red += is_red(px) as usize;
                white += is_white(px) as usize;
                gray += is_gray_object(px) as usize;
                gx_sum += (at(xi + dx, yi) - at(xi - dx, yi)) / 2.0;
                gy_sum += (at(xi, yi + dy) - at(xi, yi - dy)) / 2.0;
                let ex = (at(xi + 1, yi) - at(xi - 1, yi)) / 2.0;
                let ey = (at(xi, yi + 1) - at(xi, yi - 1)) / 2.0;
                edges += ((ex * ex + ey * ey).sqrt() > EDGE_THRESHOLD) as usize;
            }
        }
        let n = (cell.w * cell.h) as f64;
        let mean = sum.map(|s| s / n);
        let std: Vec<f64> = (0..3)
            .map(|k| (sum_sq[k] / n - mean[k] * mean[k]).max(0.0).sqrt())
            .collect();
        data.extend_from_slice(&mean);
        data.extend_from_slice(&[red as f64 / n, white as f64 / n, gray as f64 / n]);
        data.extend_from_slice(&std);
        data.extend_from_slice(&[gx_sum / n, gy_sum / n, edges as f64 / n]);
    }
    let matrix = Tensor::new(&[geometry.len(), GRID_PATCH_DIMS], data)?;
    SpatialFeatures::new(matrix, geometry)
}

/// Per-dimension standardization fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    /// Mean and population standard deviation over every cell of every
    /// input. Dimensions with standard deviation below `1e-6` are only
    /// centered.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a SpatialFeatures>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for f in features {
            if sum.is_empty() {
                sum = vec![0.0; f.dims()];
                sum_sq = vec![0.0; f.dims()];
            } else if f.dims() != sum.len() {
                return Err(Error::dim("feature_norm", &[sum.len()], &[f.dims()]));
            }
            for i in 0..f.locations() {
                for (k, v) in f.matrix.row(i).iter().enumerate() {
                    sum[k] += v;
                    sum_sq[k] += v * v;
                }
            }
            count += f.locations();
        }
        if count == 0 {
            return Err(Error::Usage("cannot fit feature normalization on no data".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let s = (sq / n - m * m).max(0.0).sqrt();
                if s < 1e-6 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, f: &SpatialFeatures) -> Result<SpatialFeatures> {
        if f.dims() != self.mean.len() {
            return Err(Error::dim("feature_norm", &[self.mean.len()], f.matrix.shape()));
        }
        let m = f.dims();
        let data = f
            .matrix
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % m]) / self.std[i % m])
            .collect();
        SpatialFeatures::new(Tensor::new(f.matrix.shape(), data)?, f.geometry.clone())
    }

    pub fn to_tensors(&self) -> (Tensor, Tensor) {
        (Tensor::row_vector(&self.mean), Tensor::row_vector(&self.std))
    }

    pub fn from_tensors(mean: &Tensor, std: &Tensor) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::dim("feature_norm", mean.shape(), std.shape()));
        }
        Ok(Self {
            mean: mean.data().to_vec(),
            std: std.data().to_vec(),
        })
    }
}

pub const CONV_KERNEL: usize = 5;
const CONV_INPUTS: usize = 3 * CONV_KERNEL * CONV_KERNEL;

/// One trainable convolution layer with a 5×5 kernel and ReLU.
///
/// Each grid cell is area-averaged down to 5×5 sub-blocks and the kernel is
/// applied once per cell, i.e. a stride-5 convolution over the image
/// downsampled to `5·rows × 5·cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyConv {
    /// `C × 75`, input index `channel·25 + dy·5 + dx`.
    pub kernel: Tensor,
    /// `1 × C`.
    pub bias: Tensor,
}

impl TinyConv {
    pub fn init(channels: usize, rng: &mut Rng) -> Self {
        let a = (6.0 / (CONV_INPUTS + channels) as f64).sqrt();
        let data = (0..channels * CONV_INPUTS).map(|_| rng.uniform(-a, a)).collect();
        Self {
            kernel: Tensor::new(&[channels, CONV_INPUTS], data).expect("positive channels"),
            bias: Tensor::zeros(&[1, channels]),
        }
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[channels, CONV_INPUTS]),
            bias: Tensor::zeros(&[1, channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.kernel.rows()
    }

    /// `relu(patches · kernelᵀ + bias)` on the tape.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, patches: Var) -> Result<Var> {
        let k = g.param(&self.kernel);
        let b = g.param(&self.bias);
        let kt = g.transpose(k)?;
        let lin = g.matmul(patches, kt)?;
        let biased = g.add_row(lin, b)?;
        Ok(g.relu(biased))
    }

    pub fn extract(&self, img: &RasterImage, rows: usize, cols: usize) -> Result<SpatialFeatures> {
        let (patches, geometry) = conv_patches(img, rows, cols)?;
        let mut g = Graph::new();
        let p = g.constant(patches);
        let out = self.forward(&mut g, p)?;
        SpatialFeatures::new(g.value(out).clone(), geometry)
    }
}

/// Convenience wrapper for [`TinyConv::extract`].
pub fn extract_tiny_conv(img: &RasterImage, params: &TinyConv, rows: usize, cols: usize) -> Result<SpatialFeatures> {
    params.extract(img, rows, cols)
}

/// The `L × 75` conv input: per cell, 5×5 area-averaged sub-blocks of each
/// channel scaled to `[0, 1]`.
pub fn conv_patches(img: &RasterImage, rows: usize, cols: usize) -> Result<(Tensor, GridGeometry)> {
    let geometry = GridGeometry::for_image(img.width(), img.height(), rows, cols)?;
    let cell = geometry.cells[0];
    if cell.w < CONV_KERNEL || cell.h < CONV_KERNEL {
        return Err(Error::dim(
            "tiny_conv",
            &[cell.h, cell.w],
            &[CONV_KERNEL, CONV_KERNEL],
        ));
    }
    let bounds = |extent: usize, j: usize| (j * extent / CONV_KERNEL, (j + 1) * extent / CONV_KERNEL);
    let mut data = Vec::with_capacity(geometry.len() * CONV_INPUTS);
    for c in &geometry.cells {
        let mut patch = [0.0f64; CONV_INPUTS];
        for by in 0..CONV_KERNEL {
            let (y0, y1) = bounds(c.h, by);
            for bx in 0..CONV_KERNEL {
                let (x0, x1) = bounds(c.w, bx);
                let mut s = [0.0f64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let px = img.pixel_clamped((c.x + x) as i64, (c.y + y) as i64);
                        for k in 0..3 {
                            s[k] += px[k] as f64 / 255.0;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                for k in 0..3 {
                    patch[k * 25 + by * CONV_KERNEL + bx] = s[k] / n;
                }
            }
        }
        data.extend_from_slice(&patch);
    }
    Ok((Tensor::new(&[geometry.len(), CONV_INPUTS], data)?, geometry))
}

pub const FEATURE_MAGIC: &[u8; 8] = b"SMEMFEAT";
pub const FEATURE_VERSION: u32 = 1;
const FEATURE_HEADER: usize = 8 + 4 + 4 + 4;

/// Serializes `magic, u32 version, u32 L, u32 M, L·M f32` (little-endian).
pub fn precomputed_bytes(f: &SpatialFeatures) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER + 4 * f.matrix.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.locations() as u32).to_le_bytes());
    out.extend_from_slice(&(f.dims() as u32).to_le_bytes());
    for v in f.matrix.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_precomputed(path: &Path, f: &SpatialFeatures) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&precomputed_bytes(f)).map_err(|e| Error::io(path, e))
}

pub fn parse_precomputed(bytes: &[u8]) -> Result<SpatialFeatures> {
    let fmt = |offset: usize, msg: String| Error::Format { offset, msg };
    if bytes.len() < 8 {
        return Err(fmt(bytes.len(), "truncated magic".into()));
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err(fmt(0, "bad magic, expected SMEMFEAT".into()));
    }
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| fmt(bytes.len(), format!("truncated header, need field at offset {off}")))
    };
    let version = u32_at(8)?;
    if version != FEATURE_VERSION {
        return Err(fmt(8, format!("unsupported version {version}")));
    }
    let l = u32_at(12)? as usize;
    let m = u32_at(16)? as usize;
    if l == 0 || m == 0 {
        return Err(fmt(12, format!("empty feature matrix {l}x{m}")));
    }
    let expected = FEATURE_HEADER + 4 * l * m;
    if bytes.len() < expected {
        return Err(fmt(bytes.len(), format!("truncated payload, expected {expected} bytes total")));
    }
    if bytes.len() > expected {
        return Err(fmt(expected, "trailing bytes after payload".into()));
    }
    let data = bytes[FEATURE_HEADER..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    SpatialFeatures::new(Tensor::new(&[l, m], data)?, GridGeometry::near_square(l))
}

pub fn load_precomputed(path: &Path) -> Result<SpatialFeatures> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_precomputed(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::WHITE;

    const RED: [u8; 3] = [230, 30, 30];

    #[test]
    fn white_image_statistics() {
        let img = RasterImage::filled(64, 64, WHITE);
        let f = extract_grid_patch(&img, 4, 4).unwrap();
        assert_eq!(f.matrix.shape(), &[16, 12]);
        for i in 0..16 {
            let r = f.matrix.row(i);
            assert_eq!(&r[..6], &[1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
            assert!(r[6..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pure_red_cell() {
        let mut img = RasterImage::filled(64, 64, WHITE);
        img.fill_rect(16, 16, 16, 16, [255, 0, 0]);
        let f = extract_grid_patch(&img, 4, 4).unwrap();
        let r = f.matrix.row(5);
        assert_eq!(&r[..4], &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn half_red_cell_counts_pixels() {
        let mut img = RasterImage::filled(64, 64, WHITE);
        img.fill_rect(0, 0, 8, 16, RED);
        let f = extract_grid_patch(&img, 4, 4).unwrap();
        let red = f.matrix.row(0)[3];
        // 8*16 red of 16*16 pixels
        assert!((red - 0.5).abs() <= 1.0 / 256.0);
        assert!((f.matrix.row(0)[4] - 0.5).abs() <= 1.0 / 256.0);
    }

    #[test]
    fn moving_square_swaps_red_fraction() {
        let mut a = RasterImage::filled(64, 64, WHITE);
        a.fill_rect(18, 2, 12, 12, RED);
        let mut b = RasterImage::filled(64, 64, WHITE);
        b.fill_rect(50, 34, 12, 12, RED);
        let fa = extract_grid_patch(&a, 4, 4).unwrap();
        let fb = extract_grid_patch(&b, 4, 4).unwrap();
        // cell 1 in a, cell 11 in b
        assert_eq!(fa.matrix.row(1)[3], fb.matrix.row(11)[3]);
        assert_eq!(fa.matrix.row(11)[3], fb.matrix.row(1)[3]);
        assert_eq!(fa.matrix.row(1)[3], 144.0 / 256.0);
    }

    #[test]
    fn uneven_image_is_padded() {
        let img = RasterImage::filled(10, 7, WHITE);
        let f = extract_grid_patch(&img, 2, 3).unwrap();
        assert_eq!(f.locations(), 6);
        assert!(f.geometry.cells.iter().all(|c| c.w == 4 && c.h == 4));
        assert!(f.matrix.is_finite());
    }

    #[test]
    fn extraction_is_deterministic() {
        let mut img = RasterImage::filled(64, 64, WHITE);
        img.fill_ellipse(20, 20, 14, 11, [128, 128, 128]);
        img.fill_rect(5, 40, 12, 12, RED);
        let a = extract_grid_patch(&img, 4, 4).unwrap();
        let b = extract_grid_patch(&img, 4, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pixel_classes() {
        assert!(is_red(RED));
        assert!(!is_red([200, 30, 30]));
        assert!(is_white([231, 231, 231]));
        assert!(is_gray_object([128, 128, 128]));
        assert!(!is_gray_object([250, 250, 250]));
        assert!(!is_gray_object([128, 90, 128]));
    }

    #[test]
    fn gray_fraction_counts_object() {
        let mut img = RasterImage::filled(32, 32, WHITE);
        img.fill_rect(0, 0, 16, 16, [128, 128, 128]);
        let f = extract_grid_patch(&img, 2, 2).unwrap();
        assert_eq!(f.matrix.row(0)[5], 1.0);
        assert_eq!(f.matrix.row(3)[5], 0.0);
    }

    #[test]
    fn norm_standardizes() {
        let mut img = RasterImage::filled(32, 32, WHITE);
        img.fill_rect(0, 0, 16, 16, RED);
        let f = extract_grid_patch(&img, 2, 2).unwrap();
        let norm = FeatureNorm::fit([&f]).unwrap();
        let z = norm.apply(&f).unwrap();
        for k in 0..12 {
            let col: Vec<f64> = (0..4).map(|i| z.matrix.row(i)[k]).collect();
            assert!(col.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn zero_conv_gives_zero_features() {
        let img = RasterImage::filled(40, 40, [10, 200, 90]);
        let f = extract_tiny_conv(&img, &TinyConv::zeros(4), 4, 4).unwrap();
        assert!(f.matrix.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_gives_constant_conv_features() {
        let img = RasterImage::filled(64, 64, [100, 150, 200]);
        let mut conv = TinyConv::zeros(1);
        // identity-like: center tap of the red channel
        conv.kernel.data_mut()[12] = 1.0;
        let f = extract_tiny_conv(&img, &conv, 4, 4).unwrap();
        let v0 = f.matrix.data()[0];
        assert!((v0 - 100.0 / 255.0).abs() < 1e-15);
        assert!(f.matrix.data().iter().all(|&v| v == v0));
    }

    #[test]
    fn conv_rejects_tiny_cells() {
        let img = RasterImage::filled(12, 12, WHITE);
        assert!(matches!(
            extract_tiny_conv(&img, &TinyConv::zeros(2), 4, 4),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn precomputed_round_trip_and_faults() {
        let data: Vec<f64> = (0..49 * 1024).map(|i| ((i % 97) as f32 * 0.25) as f64).collect();
        let f = SpatialFeatures::new(Tensor::new(&[49, 1024], data).unwrap(), GridGeometry::near_square(49)).unwrap();
        let bytes = precomputed_bytes(&f);
        let back = parse_precomputed(&bytes).unwrap();
        assert_eq!(back.matrix.shape(), &[49, 1024]);
        assert_eq!((back.geometry.rows, back.geometry.cols), (7, 7));
        assert_eq!(back.matrix, f.matrix);
        assert_eq!(precomputed_bytes(&back), bytes);

        let cut = &bytes[..bytes.len() - 10];
        match parse_precomputed(cut).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, bytes.len() - 10),
            e => panic!("{e}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_precomputed(&bad), Err(Error::Format { offset: 0, .. })));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(parse_precomputed(&v2), Err(Error::Format { offset: 8, .. })));
        assert!(matches!(parse_precomputed(&bytes[..14]), Err(Error::Format { offset: 14, .. })));
    }
}
