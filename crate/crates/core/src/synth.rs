//! Synthetic spatial-reasoning datasets.
//!
//! *Absolute*: a red square on white, placed in one of the four N/S/W/E
//! cells of a 3×3 partition; questions ask whether it is on the
//! top/bottom/left/right of the image.
//!
//! *Relative*: a gray ellipse ("blob") with a red square next to one side
//! of its bounding box; questions ask about the square's side relative to
//! the blob.
//!
//! Every image yields four questions, one per position word, exactly one of
//! which is answered "yes". Train and test layouts are disjoint: a layout's
//! split is a fixed function of its geometry, and each split only accepts
//! its own layouts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, ImageEntry, PixelBox, QASample};
use crate::error::{Error, Result};
use crate::image::{RasterImage, Rgb, WHITE};
use crate::rng::Rng;

pub const SQUARE_COLOR: Rgb = [230, 30, 30];
pub const OBJECT_COLOR: Rgb = [128, 128, 128];
pub const OBJECT_NOUN: &str = "blob";

/// One layout in this many goes to the test split.
const TEST_BUCKETS: u64 = 5;
/// Rejection-sampling budget per image before the geometry is declared
/// infeasible.
const MAX_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Top,
    Bottom,
    Left,
    Right,
}

impl Position {
    pub const ALL: [Position; 4] = [Position::Top, Position::Bottom, Position::Left, Position::Right];

    pub fn word(self) -> &'static str {
        match self {
            Position::Top => "top",
            Position::Bottom => "bottom",
            Position::Left => "left",
            Position::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Position {
        match self {
            Position::Top => Position::Bottom,
            Position::Bottom => Position::Top,
            Position::Left => Position::Right,
            Position::Right => Position::Left,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Position::ALL
            .into_iter()
            .find(|p| p.word() == s)
            .ok_or_else(|| Error::Data(format!("unknown position word {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[serde(alias = "abs")]
    Absolute,
    #[serde(alias = "rel")]
    Relative,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" | "absolute" => Ok(Task::Absolute),
            "rel" | "relative" => Ok(Task::Relative),
            _ => Err(Error::Usage(format!("unknown task {s:?}; expected abs or rel"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Absolute => "abs",
            Task::Relative => "rel",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub task: Task,
    pub width: usize,
    pub height: usize,
    pub square: usize,
    /// Blob bounding-box extents are drawn from `[object_min, object_max]`.
    pub object_min: usize,
    pub object_max: usize,
    /// Pixels between the square and the blob's bounding box.
    pub gap: usize,
    /// Extra blobs with no adjacent square (relative task only).
    pub distractors: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            task: Task::Absolute,
            width: 64,
            height: 64,
            square: 12,
            object_min: 10,
            object_max: 14,
            gap: 2,
            distractors: 0,
            train: 2000,
            test: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSplits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Half-open pixel ranges `[lo, hi)` of the 3×3 partition along one axis.
fn thirds(extent: usize) -> [usize; 4] {
    [0, extent / 3, 2 * extent / 3, extent]
}

/// The placement zone of `pos` in the absolute task.
pub fn absolute_zone(spec: &SynthSpec, pos: Position) -> PixelBox {
    let xs = thirds(spec.width);
    let ys = thirds(spec.height);
    let (col, row) = match pos {
        Position::Top => (1, 0),
        Position::Bottom => (1, 2),
        Position::Left => (0, 1),
        Position::Right => (2, 1),
    };
    PixelBox {
        x: xs[col],
        y: ys[row],
        w: xs[col + 1] - xs[col],
        h: ys[row + 1] - ys[row],
    }
}

/// 3×3 cell `(row, col)` of a pixel coordinate.
pub fn third_cell(spec: &SynthSpec, x: f64, y: f64) -> (usize, usize) {
    let xs = thirds(spec.width);
    let ys = thirds(spec.height);
    let idx = |b: [usize; 4], v: f64| (1..3).filter(|&i| v >= b[i] as f64).count();
    (idx(ys, y), idx(xs, x))
}

/// Absolute answer recomputed from the square's geometry alone.
pub fn absolute_label(spec: &SynthSpec, square: &PixelBox) -> Option<Position> {
    let (cx, cy) = square.center();
    match third_cell(spec, cx, cy) {
        (0, 1) => Some(Position::Top),
        (2, 1) => Some(Position::Bottom),
        (1, 0) => Some(Position::Left),
        (1, 2) => Some(Position::Right),
        _ => None,
    }
}

/// Side of `object` on which `square` sits, recomputed from geometry.
pub fn relative_label(square: &PixelBox, object: &PixelBox) -> Option<Position> {
    if square.bottom() <= object.y {
        Some(Position::Top)
    } else if square.y >= object.bottom() {
        Some(Position::Bottom)
    } else if square.right() <= object.x {
        Some(Position::Left)
    } else if square.x >= object.right() {
        Some(Position::Right)
    } else {
        None
    }
}

pub fn question_text(task: Task, pos: Position) -> String {
    match task {
        Task::Absolute => format!("Is there a red square on the {pos}?"),
        Task::Relative => format!("Is there a red square on the {pos} of the {OBJECT_NOUN}?"),
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train == 0 || self.test == 0 {
            return Err(Error::Spec("train and test counts must be positive".into()));
        }
        if self.square == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Spec("image and square sizes must be positive".into()));
        }
        match self.task {
            Task::Absolute => {
                for pos in Position::ALL {
                    let z = absolute_zone(self, pos);
                    if self.square > z.w || self.square > z.h {
                        return Err(Error::Spec(format!(
                            "square of side {} does not fit the {pos} zone ({}x{})",
                            self.square, z.w, z.h
                        )));
                    }
                }
            }
            Task::Relative => {
                if self.object_min == 0 || self.object_min > self.object_max {
                    return Err(Error::Spec("need 0 < object_min <= object_max".into()));
                }
                let margin = self.object_max + self.gap;
                if 2 * margin + self.square > self.width.min(self.height) {
                    return Err(Error::Spec(format!(
                        "a {}px square with {}px blobs on every side does not fit {}x{}",
                        self.square, self.object_max, self.width, self.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which split a layout belongs to. Deterministic across platforms.
fn layout_split(task: Task, boxes: &[PixelBox]) -> Split {
    let mut h = Sha256::new();
    h.update([task as u8]);
    for b in boxes {
        for v in <[usize; 4]>::from(*b) {
            h.update((v as u32).to_le_bytes());
        }
    }
    let d = h.finalize();
    let v = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    if v % TEST_BUCKETS == 0 {
        Split::Test
    } else {
        Split::Train
    }
}

struct Layout {
    square: PixelBox,
    object: Option<PixelBox>,
    distractors: Vec<PixelBox>,
    answer: Position,
}

fn sample_in(rng: &mut Rng, lo: usize, hi_inclusive: usize) -> usize {
    lo + rng.below(hi_inclusive - lo + 1)
}

fn absolute_layout(spec: &SynthSpec, rng: &mut Rng) -> Layout {
    let pos = Position::ALL[rng.below(4)];
    let z = absolute_zone(spec, pos);
    let x = sample_in(rng, z.x, z.right() - spec.square);
    let y = sample_in(rng, z.y, z.bottom() - spec.square);
    Layout {
        square: PixelBox {
            x,
            y,
            w: spec.square,
            h: spec.square,
        },
        object: None,
        distractors: Vec::new(),
        answer: pos,
    }
}

/// The square is drawn uniformly from the central region where a blob fits
/// on any side of it; the blob then goes on the side opposite the answer,
/// its extent along that side jittered so the square's center stays over it.
fn relative_layout(spec: &SynthSpec, rng: &mut Rng) -> Result<Layout> {
    let margin = spec.object_max + spec.gap;
    let s = spec.square;
    let x = sample_in(rng, margin, spec.width - margin - s);
    let y = sample_in(rng, margin, spec.height - margin - s);
    let square = PixelBox { x, y, w: s, h: s };
    let answer = Position::ALL[rng.below(4)];
    let ow = sample_in(rng, spec.object_min, spec.object_max);
    let oh = sample_in(rng, spec.object_min, spec.object_max);
    // offset of the object's near edge so that the square's center lies
    // strictly inside the object's extent along the shared axis
    let along = |rng: &mut Rng, start: usize, extent: usize| start + s / 2 - sample_in(rng, 1, extent - 1);
    let object = match answer {
        Position::Top => PixelBox {
            x: along(rng, x, ow),
            y: square.bottom() + spec.gap,
            w: ow,
            h: oh,
        },
        Position::Bottom => PixelBox {
            x: along(rng, x, ow),
            y: y - spec.gap - oh,
            w: ow,
            h: oh,
        },
        Position::Left => PixelBox {
            x: square.right() + spec.gap,
            y: along(rng, y, oh),
            w: ow,
            h: oh,
        },
        Position::Right => PixelBox {
            x: x - spec.gap - ow,
            y: along(rng, y, oh),
            w: ow,
            h: oh,
        },
    };
    let mut distractors = Vec::with_capacity(spec.distractors);
    for _ in 0..spec.distractors {
        let mut placed = None;
        for _ in 0..MAX_TRIES {
            let dw = sample_in(rng, spec.object_min, spec.object_max);
            let dh = sample_in(rng, spec.object_min, spec.object_max);
            let d = PixelBox {
                x: sample_in(rng, 0, spec.width - dw),
                y: sample_in(rng, 0, spec.height - dh),
                w: dw,
                h: dh,
            };
            let clear = |b: &PixelBox| !d.intersects(&b.inflate(spec.gap + s));
            if clear(&square) && clear(&object) && distractors.iter().all(|o: &PixelBox| !d.intersects(o)) {
                placed = Some(d);
                break;
            }
        }
        distractors.push(placed.ok_or_else(|| Error::Spec(format!("no room for {} distractors", spec.distractors)))?);
    }
    Ok(Layout {
        square,
        object: Some(object),
        distractors,
        answer,
    })
}

fn render(spec: &SynthSpec, layout: &Layout) -> RasterImage {
    let mut img = RasterImage::filled(spec.width, spec.height, WHITE);
    for b in layout.object.iter().chain(&layout.distractors) {
        img.fill_ellipse(b.x, b.y, b.w, b.h, OBJECT_COLOR);
    }
    let q = layout.square;
    img.fill_rect(q.x, q.y, q.w, q.h, SQUARE_COLOR);
    img
}

fn generate_split(spec: &SynthSpec, split: Split) -> Result<Dataset> {
    let mut rng = Rng::with_stream(spec.seed, split.stream());
    let count = match split {
        Split::Train => spec.train,
        Split::Test => spec.test,
    };
    let mut ds = Dataset::default();
    for i in 0..count {
        let mut found = None;
        for _ in 0..MAX_TRIES {
            let layout = match spec.task {
                Task::Absolute => absolute_layout(spec, &mut rng),
                Task::Relative => relative_layout(spec, &mut rng)?,
            };
            let key: Vec<PixelBox> = std::iter::once(layout.square).chain(layout.object).collect();
            if layout_split(spec.task, &key) == split {
                found = Some(layout);
                break;
            }
        }
        let layout = found.ok_or_else(|| Error::Spec(format!("could not draw a {} layout", split.name())))?;
        ds.images.push(ImageEntry {
            path: format!("images/{}_{i:05}.ppm", split.name()),
            image: render(spec, &layout),
            features: None,
        });
        for pos in Position::ALL {
            ds.samples.push(QASample {
                image: i,
                question: question_text(spec.task, pos),
                answer: if pos == layout.answer { "yes" } else { "no" }.into(),
                category: pos.word().into(),
                square_box: Some(layout.square),
                object_box: layout.object,
                human_answers: Vec::new(),
            });
        }
    }
    Ok(ds)
}

/// Generates both splits; train and test draw from separate streams of the
/// spec's seed.
pub fn generate(spec: &SynthSpec) -> Result<SynthSplits> {
    spec.validate()?;
    Ok(SynthSplits {
        train: generate_split(spec, Split::Train)?,
        test: generate_split(spec, Split::Test)?,
    })
}

pub fn gen_absolute(spec: &SynthSpec) -> Result<SynthSplits> {
    generate(&SynthSpec {
        task: Task::Absolute,
        ..spec.clone()
    })
}

pub fn gen_relative(spec: &SynthSpec) -> Result<SynthSplits> {
    generate(&SynthSpec {
        task: Task::Relative,
        ..spec.clone()
    })
}

/// Recomputes a sample's answer from its stored geometry.
pub fn oracle_answer(spec: &SynthSpec, sample: &QASample) -> Result<&'static str> {
    let square = sample
        .square_box
        .ok_or_else(|| Error::Data("sample has no square geometry".into()))?;
    let truth = match (spec.task, sample.object_box) {
        (Task::Absolute, _) => absolute_label(spec, &square),
        (Task::Relative, Some(obj)) => relative_label(&square, &obj),
        (Task::Relative, None) => return Err(Error::Data("relative sample without object box".into())),
    };
    let truth = truth.ok_or_else(|| Error::Data("square geometry matches no position".into()))?;
    let asked: Position = sample.category.parse()?;
    Ok(if asked == truth { "yes" } else { "no" })
}
