//! Trains the one-hop memory network on the absolute-position task and
//! reports accuracy plus where hop-1 attention lands.
//!
//!     cargo run --release --example train_absolute -- [epochs]

use smem_vqa::repro::{task_config, task_spec};
use smem_vqa::synth::{absolute_zone, generate, Position, Task};
use smem_vqa::train::{train_with, TrainData};

fn main() -> smem_vqa::Result<()> {
    let epochs = std::env::args().nth(1).map_or(50, |e| e.parse().expect("epochs"));
    let spec = task_spec(Task::Absolute);
    let splits = generate(&spec)?;

    let mut cfg = task_config("smem-1hop");
    cfg.epochs = epochs;
    let outcome = train_with(
        &cfg,
        TrainData {
            train: &splits.train,
            val: Some(&splits.test),
            dir: None,
            val_dir: None,
        },
        |m| {
            if m.epoch % 5 == 0 {
                println!("epoch {:>2}  loss {:.4}  test {:.4}", m.epoch, m.train_loss, m.val_accuracy.unwrap_or(0.0));
            }
        },
    )?;
    let report = outcome.trained.evaluate(&splits.test, None)?;
    println!("{}", report.summary());

    // How often the attended 16x16 cell touches the asked-about zone or the
    // zone holding the square.
    let cell_box = |cell: usize| smem_vqa::dataset::PixelBox {
        x: (cell % 4) * 16,
        y: (cell / 4) * 16,
        w: 16,
        h: 16,
    };
    let (mut hits, mut correct) = (0, 0);
    for rec in report.samples.iter().filter(|r| r.correct) {
        let s = &splits.test.samples[rec.index];
        let asked: Position = s.category.parse()?;
        let square = s.square_box.expect("synthetic geometry");
        let cell = cell_box(rec.attention_argmax[0]);
        let touches = |p: Position| absolute_zone(&spec, p).intersects(&cell);
        let holds = |p: Position| {
            let z = absolute_zone(&spec, p);
            square.x >= z.x && square.right() <= z.right() && square.y >= z.y && square.bottom() <= z.bottom()
        };
        correct += 1;
        hits += (touches(asked) || Position::ALL.into_iter().any(|p| holds(p) && touches(p))) as usize;
    }
    println!("attention on the queried or the square's zone: {hits}/{correct}");
    Ok(())
}
