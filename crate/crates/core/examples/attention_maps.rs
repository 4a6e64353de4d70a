//! Exports per-hop attention heatmaps, overlays, JSON sidecars and the
//! word/location correlation table for a handful of test images, after
//! training on the absolute-position task (about half a minute).
//!
//!     cargo run --release --example attention_maps -- /tmp/smem-viz

use std::path::PathBuf;

use smem_vqa::repro::{task_config, task_spec};
use smem_vqa::synth::{generate, Task};
use smem_vqa::train::{train, TrainData};
use smem_vqa::viz::{correlation_csv, export_attention_maps};

fn main() -> smem_vqa::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smem-viz"));
    let splits = generate(&task_spec(Task::Absolute))?;
    let trained = train(
        &task_config("smem-1hop"),
        TrainData {
            train: &splits.train,
            val: None,
            dir: None,
            val_dir: None,
        },
    )?
    .trained;

    let samples = [0, 1, 2, 3];
    let files = export_attention_maps(&trained, &splits.test, None, &samples, &out)?;
    println!("wrote {} files to {}", files.len(), out.display());

    let set = trained.prepare(&splits.test, None)?;
    for &i in &samples {
        let s = &splits.test.samples[i];
        println!("\n{} ({}), square at {:?}", s.question, s.answer, s.square_box.expect("geometry"));
        print!("{}", correlation_csv(&trained, &set, i)?);
    }
    Ok(())
}
