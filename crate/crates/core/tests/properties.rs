use proptest::prelude::*;

use smem_vqa::tensor::{masked_rowwise_max, relu, row_softmax, Tensor};
use smem_vqa::text::tokenize;
use smem_vqa::train::lr_at;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-50.0f64..50.0, r * c).prop_map(move |d| Tensor::new(&[r, c], d).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in matrix(4, 9)) {
        let p = row_softmax(&x).unwrap();
        for i in 0..p.rows() {
            let row = p.row(i);
            prop_assert!(row.iter().all(|&v| v >= 0.0 && v.is_finite()));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ignores_row_shifts(x in matrix(3, 6), shift in -500.0f64..500.0) {
        let shifted = Tensor::new(x.shape(), x.data().iter().map(|v| v + shift).collect()).unwrap();
        let a = row_softmax(&x).unwrap();
        let b = row_softmax(&shifted).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn softmax_survives_huge_logits(big in 1e3f64..1e300) {
        let p = row_softmax(&Tensor::row_vector(&[big, 0.0, -big])).unwrap();
        prop_assert!(p.is_finite());
        prop_assert!((p.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relu_is_max_with_zero(x in matrix(3, 7)) {
        let r = relu(&x);
        for (a, b) in x.data().iter().zip(r.data()) {
            prop_assert_eq!(*b, a.max(0.0));
        }
    }

    #[test]
    fn masked_max_ignores_masked_rows(x in matrix(6, 5), seed in any::<u64>()) {
        let rows = x.rows();
        let mut mask: Vec<bool> = (0..rows).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        mask[(seed as usize) % rows] = true;
        let (m, arg) = masked_rowwise_max(&x, &mask).unwrap();
        for j in 0..x.cols() {
            let want = (0..rows).filter(|&i| mask[i]).map(|i| x.get2(i, j)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(m.data()[j], want);
            prop_assert!(mask[arg[j]]);
            prop_assert_eq!(x.get2(arg[j], j), want);
        }
        // overwriting masked rows changes nothing
        let mut scrambled = x.clone();
        let cols = x.cols();
        for i in (0..rows).filter(|&i| !mask[i]) {
            scrambled.data_mut()[i * cols..(i + 1) * cols].fill(1e9);
        }
        let (m2, arg2) = masked_rowwise_max(&scrambled, &mask).unwrap();
        prop_assert_eq!(m.data(), m2.data());
        prop_assert_eq!(arg, arg2);
    }

    #[test]
    fn tokens_are_lowercase_and_trimmed(s in "[A-Za-z ,.?!']{0,40}") {
        for tok in tokenize(&s) {
            prop_assert!(!tok.is_empty());
            prop_assert_eq!(tok.to_lowercase(), tok.clone());
            prop_assert!(!tok.starts_with(|c: char| c.is_ascii_punctuation()));
            prop_assert!(!tok.ends_with(|c: char| c.is_ascii_punctuation()));
            prop_assert!(!tok.contains(' '));
        }
    }

    #[test]
    fn tokenizing_twice_is_stable(s in "\\PC{0,40}") {
        let once = tokenize(&s);
        prop_assert_eq!(tokenize(&once.join(" ")), once);
    }

    #[test]
    fn lr_halves_every_period(epoch in 0usize..200, period in 1usize..20) {
        let lr = lr_at(0.01, period, epoch);
        prop_assert_eq!(lr, 0.01 / 2f64.powi((epoch / period) as i32));
    }
}

#[test]
fn lr_at_epoch_thirteen() {
    assert_eq!(lr_at(0.01, 6, 13), 0.0025);
    assert_eq!(lr_at(0.01, 6, 5), 0.01);
    assert_eq!(lr_at(0.01, 6, 6), 0.005);
}
