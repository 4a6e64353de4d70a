//! The multi-annotator consensus score: full credit once three annotators
//! agree with the prediction, partial credit below that.
//!
//!     cargo run --example consensus_metric

use smem_vqa::eval::vqa_consensus;

fn main() {
    let humans = ["two", "2", "two", "three", "Two.", "three", "four", "three", "three", "three"];
    for pred in ["two", "three", "four", "five"] {
        println!("{pred:>5}: {:.3}", vqa_consensus(pred, &humans));
    }
}
