//! Backpropagation against central finite differences, for every parameter
//! group of a small two-hop model with a trainable convolutional extractor.
//!
//!     cargo run --release --example gradient_check

use smem_vqa::features::{conv_patches, TinyConv};
use smem_vqa::gradcheck::finite_diff_check;
use smem_vqa::image::RasterImage;
use smem_vqa::model::smem::{Dims, SMemConfig, SMemParams};
use smem_vqa::model::{loss_and_grad, mean_loss, FeatureInput, Labeled, Model, SampleInput};
use smem_vqa::repro::{pad_question, GRADCHECK_STEP, GRADCHECK_TOL};
use smem_vqa::rng::Rng;

fn main() -> smem_vqa::Result<()> {
    let mut rng = Rng::new(17);
    let dims = Dims {
        vocab: 6,
        locations: 4,
        feature_dim: 5,
        max_len: 4,
        answers: 3,
    };
    let cfg = SMemConfig {
        embed_dim: 8,
        hops: 2,
        ..SMemConfig::default()
    };
    let mut params = SMemParams::init(&cfg, dims, &mut rng)?;
    let mut conv = TinyConv::init(dims.feature_dim, &mut rng);
    conv.bias.data_mut().fill(1.0);
    params.conv = Some(conv);
    let mut model = Model::SMem(params);

    let images: Vec<RasterImage> = (0..3)
        .map(|_| RasterImage::new(20, 20, (0..1200).map(|_| rng.below(256) as u8).collect()))
        .collect::<Result<_, _>>()?;
    let patches = images
        .iter()
        .map(|im| conv_patches(im, 2, 2).map(|(p, _)| p))
        .collect::<Result<Vec<_>, _>>()?;
    let questions = [pad_question(&[0, 1, 5], 1), pad_question(&[2, 2], 2), pad_question(&[4, 3, 1, 0], 0)];
    let batch = || -> Vec<Labeled<'_>> {
        (0..3)
            .map(|i| Labeled {
                input: SampleInput::new(&questions[i], FeatureInput::Patches(&patches[i])),
                target: i,
            })
            .collect()
    };

    loss_and_grad(&mut model, &batch(), None, false)?;
    let report = finite_diff_check(&mut model, GRADCHECK_STEP, None, |m| mean_loss(m, &batch()))?;
    for t in &report.per_tensor {
        println!("{:<12} {:>4} coords  max rel err {:.2e}", t.name, t.checked, t.max_rel_error);
    }
    let ok = report.max_rel_error < GRADCHECK_TOL;
    println!("overall {:.2e} ({})", report.max_rel_error, if ok { "ok" } else { "too large" });
    Ok(())
}
