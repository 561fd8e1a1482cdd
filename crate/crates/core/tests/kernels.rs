mod common;

use common::*;
use otopipe::evaluation::{binary_auc, mcc, ConfusionMatrix};
use otopipe::imaging::{fingerprint, hamming, laplacian_variance, shannon_entropy, thumbnail, GrayImage};
use otopipe::manifest::ClassLabel;
use otopipe::rng::SplitMix64;
use otopipe::stats::{anova_from_raw, f_cdf, f_crit, f_sf, Source};
use num_traits::ToPrimitive;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

fn image_strategy(min: usize, max: usize) -> impl Strategy<Value = GrayImage> {
    (min..=max, min..=max, any::<u64>())
        .prop_map(|(w, h, seed)| random_image(&mut SplitMix64::new(seed), w, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn laplacian_matches_oracle(img in image_strategy(3, 24)) {
        let got = laplacian_variance(&img).unwrap();
        let want = laplacian_variance_oracle(&img);
        prop_assert!(rel_close(got, want, 1e-9) || (got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn laplacian_is_transpose_invariant(img in image_strategy(3, 16)) {
        let a = laplacian_variance(&img).unwrap();
        let b = laplacian_variance(&img.transpose()).unwrap();
        prop_assert!(rel_close(a, b, 1e-12));
    }

    #[test]
    fn entropy_matches_oracle(img in image_strategy(1, 24)) {
        let got = shannon_entropy(&img);
        let want = entropy_oracle(&img);
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
        prop_assert!((0.0..=8.0).contains(&got));
    }

    #[test]
    fn fingerprint_matches_oracle(img in image_strategy(8, 80)) {
        let fp = fingerprint(&img).unwrap();
        let thumb = thumbnail_oracle(&img);
        prop_assert_eq!(&fp.thumb[..], &thumb[..]);
        prop_assert_eq!(fp.bits, hash_oracle(&thumb));
    }

    #[test]
    fn hamming_matches_oracle(a in any::<u64>(), b in any::<u64>()) {
        let mk = |bits| otopipe::imaging::FrameFingerprint { bits, thumb: Box::new([0; 1024]) };
        prop_assert_eq!(hamming(&mk(a), &mk(b)), hamming_oracle(a, b));
        prop_assert_eq!(hamming(&mk(a), &mk(a)), 0);
    }

    #[test]
    fn mcc_matches_exact_rational(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let cm = ConfusionMatrix::from_pairs(
            pairs.iter().map(|&(t, p)| (ClassLabel::ALL[t], ClassLabel::ALL[p])),
        );
        let got = mcc(&cm);
        match mcc_oracle(&truth, &pred, 4) {
            None => prop_assert!(got.degenerate && got.value == 0.0),
            Some((sq, negative)) => {
                let want = sq.to_f64().unwrap();
                prop_assert!(!got.degenerate);
                prop_assert!(rel_close(got.value * got.value, want, 1e-9) || want < 1e-300);
                if want > 0.0 {
                    prop_assert_eq!(got.value < 0.0, negative);
                }
            }
        }
    }

    #[test]
    fn auc_matches_pairwise(v in prop::collection::vec((0u8..6, any::<bool>()), 1..80)) {
        // Coarse scores force plenty of ties.
        let scores: Vec<f64> = v.iter().map(|p| f64::from(p.0) / 5.0).collect();
        let pos: Vec<bool> = v.iter().map(|p| p.1).collect();
        let got = binary_auc(&scores, &pos);
        let want = auc_oracle(&scores, &pos);
        match (got, want) {
            (Some(g), Some(w)) => prop_assert!((g - w).abs() <= 1e-12),
            (g, w) => prop_assert_eq!(g, w),
        }
    }

    #[test]
    fn anova_matches_exact_rational(seed in any::<u64>(), n in 2usize..9, b in 2usize..5) {
        let mut rng = SplitMix64::new(seed);
        let values: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| (0..b).map(|_| (0..n).map(|_| rng.next_gaussian() * 3.0 + 0.5).collect()).collect())
            .collect();
        let t = anova_from_raw(&values, 0.05).unwrap();
        let o = anova_oracle(&values);
        for (source, exact) in [
            (Source::Sample, &o.sample),
            (Source::Columns, &o.columns),
            (Source::Interaction, &o.interaction),
            (Source::Within, &o.within),
            (Source::Total, &o.total),
        ] {
            let want = to_f64(exact);
            let got = t.row(source).ss;
            prop_assert!(rel_close(got, want, 1e-10) || (got - want).abs() < 1e-12, "{source}: {got} vs {want}");
        }
    }

    #[test]
    fn f_distribution_matches_statrs(x in 0.01f64..50.0, d1 in 1u32..40, d2 in 1u32..80) {
        let dist = FisherSnedecor::new(f64::from(d1), f64::from(d2)).unwrap();
        prop_assert!((f_cdf(x, d1, d2) - dist.cdf(x)).abs() < 1e-9);
        prop_assert!((f_sf(x, d1, d2) - dist.sf(x)).abs() < 1e-9);
    }

    #[test]
    fn f_crit_matches_statrs(alpha in 0.001f64..0.5, d1 in 1u32..20, d2 in 2u32..60) {
        // statrs' own quantile search is coarser than ours, so compare
        // through its CDF instead.
        let dist = FisherSnedecor::new(f64::from(d1), f64::from(d2)).unwrap();
        let got = f_crit(alpha, d1, d2).unwrap();
        prop_assert!((dist.sf(got) - alpha).abs() < 1e-9, "{got}");
    }
}

#[test]
fn flat_images_have_zero_blur_score() {
    for v in [0u8, 17, 255] {
        let img = GrayImage::filled(9, 7, v).unwrap();
        assert_eq!(laplacian_variance(&img).unwrap(), 0.0);
        assert_eq!(shannon_entropy(&img), 0.0);
    }
}

#[test]
fn thumbnail_of_exact_size_image_is_identity() {
    let img = random_image(&mut SplitMix64::new(5), 32, 32);
    assert_eq!(&thumbnail(&img)[..], img.data());
}
