//! Ingests externally computed feature maps (the `SMEMFEAT` format) instead
//! of extracting features from pixels. The "external" features here are
//! patch statistics written to disk by hand; a real pipeline would dump CNN
//! activations in the same layout. Training then follows the absolute-task
//! protocol, so expect about half a minute.
//!
//!     cargo run --release --example precomputed_features

use smem_vqa::dataset::Dataset;
use smem_vqa::features::{extract_grid_patch, load_precomputed, write_precomputed, FeatureKind};
use smem_vqa::repro::{task_config, task_spec};
use smem_vqa::synth::{generate, Task};
use smem_vqa::train::{train, TrainData};

fn attach_features(ds: &mut Dataset, dir: &std::path::Path, split: &str) -> smem_vqa::Result<()> {
    std::fs::create_dir_all(dir.join("features")).map_err(|e| smem_vqa::Error::io(dir, e))?;
    for (i, entry) in ds.images.iter_mut().enumerate() {
        let rel = format!("features/{split}_{i:05}.feat");
        write_precomputed(&dir.join(&rel), &extract_grid_patch(&entry.image, 4, 4)?)?;
        entry.features = Some(rel);
    }
    ds.save(dir)
}

fn main() -> smem_vqa::Result<()> {
    let tmp = tempfile::tempdir().map_err(|e| smem_vqa::Error::io(std::env::temp_dir(), e))?;
    let mut splits = generate(&task_spec(Task::Absolute))?;
    let (train_dir, test_dir) = (tmp.path().join("train"), tmp.path().join("test"));
    attach_features(&mut splits.train, &train_dir, "train")?;
    attach_features(&mut splits.test, &test_dir, "test")?;

    let sample = load_precomputed(&train_dir.join("features/train_00000.feat"))?;
    println!("feature map: {} locations x {} dims", sample.locations(), sample.dims());

    let mut cfg = task_config("smem-1hop");
    cfg.features = FeatureKind::Precomputed;
    let train_ds = Dataset::load(&train_dir)?;
    let test_ds = Dataset::load(&test_dir)?;
    let out = train(
        &cfg,
        TrainData {
            train: &train_ds,
            val: None,
            dir: Some(&train_dir),
            val_dir: None,
        },
    )?;
    println!("{}", out.trained.evaluate(&test_ds, Some(&test_dir))?.summary());
    Ok(())
}
