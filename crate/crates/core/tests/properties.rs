use ndarray::Array2;
use proptest::prelude::*;

use pat_core::autodiff::Primitive;
use pat_core::data::stratified_split;
use pat_core::diagnostics::angle_between;
use pat_core::ssa::parse_quantity;

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in vec_of(7)) {
        let y = Primitive::Softmax.forward(Array2::from_shape_vec((1, 7), v).unwrap().view()).unwrap();
        prop_assert!((y.sum() - 1.0).abs() < 1e-12);
        prop_assert!(y.iter().all(|p| *p > 0.0));
    }

    #[test]
    fn max_normalize_peaks_at_one(v in prop::collection::vec(0.01f64..10.0, 6)) {
        let y = Primitive::MaxNormalize.forward(Array2::from_shape_vec((1, 6), v).unwrap().view()).unwrap();
        prop_assert!((y.iter().cloned().fold(f64::MIN, f64::max) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn angle_is_symmetric_and_scale_free(a in vec_of(5), b in vec_of(5), s in 0.1f64..10.0) {
        let ab = angle_between(&a, &b).unwrap();
        let ba = angle_between(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
        if let (Some(x), Some(y)) = (ab, angle_between(&scaled, &b).unwrap()) {
            prop_assert!((x - y).abs() < 1e-9);
            prop_assert!((0.0..=180.0).contains(&x));
        }
    }

    #[test]
    fn prefixed_quantities_match_scientific_notation(m in 1u32..100_000, k in 0usize..6) {
        let (prefix, exp) = [("p", -12), ("n", -9), ("u", -6), ("m", -3), ("", 0), ("k", 3)][k];
        let parsed = parse_quantity(&format!("{m} {prefix}J"), "J").unwrap();
        let direct: f64 = format!("{m}e{exp}").parse().unwrap();
        prop_assert_eq!(parsed, direct);
    }

    #[test]
    fn split_partitions_every_class(labels in prop::collection::vec(0usize..4, 8..60), seed in 0u64..1000) {
        let x = Array2::from_shape_fn((labels.len(), 1), |(i, _)| i as f64);
        let (tr, te) = stratified_split(&x, &labels, 0.25, seed).unwrap();
        prop_assert_eq!(tr.len() + te.len(), labels.len());
        let mut seen: Vec<usize> = tr.x.column(0).iter().chain(te.x.column(0).iter()).map(|v| *v as usize).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
    }
}
