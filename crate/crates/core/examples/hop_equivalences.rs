//! Two structural facts about the memory network, checked numerically:
//! a two-hop model whose second evidence embedding is zero predicts exactly
//! like its one-hop prefix, and flat hop-1 attention turns the evidence into
//! the mean-pooled embedding that the bag-of-words baseline uses.
//!
//!     cargo run --example hop_equivalences

use smem_vqa::model::smem::{Dims, SMemConfig};
use smem_vqa::model::{FeatureInput, Model, SampleInput};
use smem_vqa::repro::{random_features, random_question, random_smem};
use smem_vqa::rng::Rng;

fn main() -> smem_vqa::Result<()> {
    let dims = Dims {
        vocab: 10,
        locations: 9,
        feature_dim: 6,
        max_len: 7,
        answers: 4,
    };
    let cfg = SMemConfig {
        embed_dim: 12,
        hops: 2,
        ..SMemConfig::default()
    };
    let mut two = random_smem(&cfg, dims, 5)?;
    two.evidence[1].w.data_mut().fill(0.0);
    two.evidence[1].b.data_mut().fill(0.0);
    let mut one = two.clone();
    one.evidence.truncate(1);
    let (two, one) = (Model::SMem(two), Model::SMem(one));

    let mut rng = Rng::new(6);
    let s = random_features(dims.locations, dims.feature_dim, &mut rng);
    let q = random_question(dims.vocab, 4, 3, &mut rng);
    let input = SampleInput::new(&q, FeatureInput::Matrix(&s));
    let (p2, t2) = two.predict(&input, false)?;
    let (p1, _) = one.predict(&input, false)?;
    println!("one hop: {p1:.6?}");
    println!("two hop: {p2:.6?}");
    println!("hop-2 attention: {:.3?}", t2.expect("trace").attention[1]);

    let (_, flat) = one.predict(&input, true)?;
    let flat = flat.expect("trace");
    println!("flat hop-1 attention: {:.4?}", flat.attention[0]);
    println!("evidence (mean-pooled embedding): {:.4?}", &flat.evidence[0][..4]);
    Ok(())
}
