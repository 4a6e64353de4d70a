//! Writes both synthetic position tasks to disk and shows what a sample
//! looks like.
//!
//!     cargo run --release --example generate_dataset -- /tmp/smem-data

use std::path::PathBuf;

use smem_vqa::synth::{generate, SynthSpec, Task};

fn main() -> smem_vqa::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("smem-data"));

    for task in [Task::Absolute, Task::Relative] {
        let spec = SynthSpec {
            task,
            train: 200,
            test: 50,
            seed: 7,
            ..SynthSpec::default()
        };
        let splits = generate(&spec)?;
        let dir = root.join(task.to_string());
        splits.train.save(&dir.join("train"))?;
        splits.test.save(&dir.join("test"))?;

        println!("{task}: {} train / {} test samples in {}", splits.train.len(), splits.test.len(), dir.display());
        let image = &splits.train.images[0];
        println!("  image {} ({}x{})", image.path, image.image.width(), image.image.height());
        for s in splits.train.samples.iter().filter(|s| s.image == 0) {
            println!("  {:<48} -> {}", s.question, s.answer);
        }
    }
    Ok(())
}
