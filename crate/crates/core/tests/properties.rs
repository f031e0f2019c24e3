use proptest::prelude::*;
use trunkgauge::evaluation::{error_histogram, error_stats, round_summary};
use trunkgauge::geometry::{mean_gap_pixels, TrimPolicy};
use trunkgauge::gmm::{responsibilities, Cov2, GaussianComponent, GmmModel};
use trunkgauge::segmentation::{classify_pixel, ClassifierModel, Label};
use trunkgauge::{srgb_to_uv, Rgb8, UvPoint};

fn component() -> impl Strategy<Value = GaussianComponent> {
    (-80.0..80.0f64, -80.0..80.0f64, 0.5..10.0f64, 0.5..10.0f64, -0.9..0.9f64).prop_map(|(u, v, a, b, rho)| {
        GaussianComponent::new(1.0, UvPoint::new(u, v), Cov2::new(a * a, rho * a * b, b * b))
    })
}

fn mixture() -> impl Strategy<Value = GmmModel> {
    prop::collection::vec((component(), 0.1..1.0f64), 1..4).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        GmmModel::new(
            parts
                .into_iter()
                .map(|(c, w)| GaussianComponent { weight: w / total, ..c })
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn uv_is_finite_and_black_is_origin(r: u8, g: u8, b: u8) {
        let p = srgb_to_uv(Rgb8::new(r, g, b));
        prop_assert!(p.u.is_finite() && p.v.is_finite());
        if r == g && g == b {
            prop_assert!(p.u.abs() < 1e-9 && p.v.abs() < 1e-9);
        }
    }

    #[test]
    fn identical_class_models_classify_as_background(m in mixture(), u in -100.0..100.0f64, v in -100.0..100.0f64) {
        let model = ClassifierModel::new(m.clone(), m);
        prop_assert_eq!(classify_pixel(UvPoint::new(u, v), &model), Label::Background);
    }

    #[test]
    fn responsibilities_are_a_distribution(m in mixture(), u in -100.0..100.0f64, v in -100.0..100.0f64) {
        let x = UvPoint::new(u, v);
        prop_assert!(m.log_density(x).is_finite());
        let r = responsibilities(&[x], &m).unwrap();
        let row = r.row(0);
        prop_assert!(row.iter().all(|g| (0.0..=1.0).contains(g)));
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_conserves_counts(errors in prop::collection::vec(0.0..5.0f64, 0..200), w in 0.01..1.0f64) {
        let h = error_histogram(&errors, w).unwrap();
        prop_assert_eq!(h.total(), errors.len());
    }

    #[test]
    fn self_comparison_has_zero_error(x in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let s = error_stats(&x, &x).unwrap();
        prop_assert_eq!((s.mean_abs_error, s.std_abs_error, s.max_abs_error), (0.0, 0.0, 0.0));
    }

    #[test]
    fn round_means_are_sorted(rounds in prop::collection::vec(prop::collection::vec((0.0..50.0f64, 0.0..50.0f64), 1..10), 1..10)) {
        let input: Vec<(Vec<f64>, Vec<f64>)> = rounds.iter().map(|r| r.iter().copied().unzip()).collect();
        let s = round_summary(&input).unwrap();
        for w in s.rounds.windows(2) {
            prop_assert!(w[0].stats.mean_abs_error >= w[1].stats.mean_abs_error);
        }
    }

    #[test]
    fn trimmed_mean_stays_within_the_samples(gaps in prop::collection::vec(100.0..400.0f64, 1..80)) {
        let g = mean_gap_pixels(&gaps, TrimPolicy::default()).unwrap();
        let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(g.gap_px >= lo - 1e-9 && g.gap_px <= hi + 1e-9);
        prop_assert_eq!(g.used + g.trimmed, gaps.len());
        prop_assert!(g.used * 2 > gaps.len());
    }
}
