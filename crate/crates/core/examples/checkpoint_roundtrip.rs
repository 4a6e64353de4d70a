//! Saves a trained model with its vocabulary, reloads it and checks that
//! predictions and bytes are unchanged.
//!
//!     cargo run --release --example checkpoint_roundtrip

use smem_vqa::model::checkpoint::Checkpoint;
use smem_vqa::synth::{generate, SynthSpec};
use smem_vqa::text::Vocabulary;
use smem_vqa::train::{train, TrainConfig, TrainData, TrainedModel};

fn main() -> smem_vqa::Result<()> {
    let splits = generate(&SynthSpec {
        train: 100,
        test: 25,
        seed: 11,
        ..SynthSpec::default()
    })?;
    let cfg = TrainConfig {
        epochs: 3,
        model: "smem-2hop".into(),
        ..TrainConfig::default()
    };
    let trained = train(
        &cfg,
        TrainData {
            train: &splits.train,
            val: None,
            dir: None,
            val_dir: None,
        },
    )?
    .trained;

    let dir = tempfile::tempdir().map_err(|e| smem_vqa::Error::io(std::env::temp_dir(), e))?;
    let (ckpt, vocab) = (dir.path().join("model.ckpt"), dir.path().join("vocab.json"));
    trained.checkpoint().save(&ckpt)?;
    trained.vocab.save(&vocab)?;

    let restored = TrainedModel::from_checkpoint(Checkpoint::load(&ckpt)?, Vocabulary::load(&vocab)?)?;
    let bytes = std::fs::metadata(&ckpt).map_err(|e| smem_vqa::Error::io(&ckpt, e))?.len();
    println!("checkpoint: {bytes} bytes, vocabulary hash {:016x}", restored.vocab.hash());
    println!("identical parameters: {}", restored.model == trained.model);
    println!(
        "identical reports:    {}",
        restored.evaluate(&splits.test, None)? == trained.evaluate(&splits.test, None)?
    );
    println!("identical bytes:      {}", restored.checkpoint().to_bytes() == trained.checkpoint().to_bytes());
    Ok(())
}
