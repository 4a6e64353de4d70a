//! The relative-position task: the memory network against the bag-of-words
//! baseline and a lookup table keyed on the square's absolute position.
//!
//!     cargo run --release --example relative_baselines

use smem_vqa::heuristic::position_heuristic_baseline;
use smem_vqa::repro::{task_config, task_spec};
use smem_vqa::synth::{generate, Task};
use smem_vqa::train::{train, TrainData};

fn main() -> smem_vqa::Result<()> {
    let splits = generate(&task_spec(Task::Relative))?;
    let data = TrainData {
        train: &splits.train,
        val: None,
        dir: None,
        val_dir: None,
    };
    for model in ["smem-1hop", "smem-2hop", "ibowimg"] {
        let out = train(&task_config(model), data)?;
        println!("{model:<20} {}", out.trained.evaluate(&splits.test, None)?.summary());
    }
    let h = position_heuristic_baseline(&splits.train, &splits.test)?;
    println!("{:<20} {}", "position-heuristic", h.summary());
    Ok(())
}
