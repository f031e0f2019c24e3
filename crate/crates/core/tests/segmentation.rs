mod common;

use image::{Rgb, RgbImage};
use rand::Rng;
use trunkgauge::commands::corpus_specs;
use trunkgauge::error::SegmentationError;
use trunkgauge::evaluation::{synth_scene, SceneSpec};
use trunkgauge::gmm::{Cov2, GaussianComponent, GmmModel};
use trunkgauge::segmentation::*;
use trunkgauge::{image_to_uv, srgb_to_uv, Rgb8, UvPoint};

use common::*;

fn pair(img: RgbImage, mask: BinaryMask) -> LabeledImagePair {
    LabeledImagePair::new(img, mask).unwrap()
}

fn scene_pairs(count: usize, seed: u64) -> Vec<LabeledImagePair> {
    let template = SceneSpec { edge_jitter_px: 2.0, ..SceneSpec::default() };
    corpus_specs(&template, count, 8.0, seed)
        .iter()
        .map(|s| {
            let (img, truth) = synth_scene(s).unwrap();
            pair(img, truth.ideal_mask)
        })
        .collect()
}

fn single(mean: UvPoint, var: f64) -> GmmModel {
    GmmModel::new(vec![GaussianComponent::new(1.0, mean, Cov2::scaled_identity(var))]).unwrap()
}

#[test]
fn two_pixel_image_routes_one_point_each() {
    let mut img = RgbImage::new(2, 1);
    img.put_pixel(0, 0, Rgb([200, 30, 30]));
    img.put_pixel(1, 0, Rgb([30, 120, 30]));
    let mask = BinaryMask::from_fn(2, 1, |x, _| x == 0);
    let sets = build_training_sets(&[pair(img, mask)], 100, 0).unwrap();
    assert_eq!(sets.pads, vec![srgb_to_uv(Rgb8::new(200, 30, 30))]);
    assert_eq!(sets.background, vec![srgb_to_uv(Rgb8::new(30, 120, 30))]);
}

#[test]
fn cap_subsamples_deterministically() {
    let mut rng = seeded(1);
    let img = RgbImage::from_fn(40, 25, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    let mut mask = BinaryMask::new(40, 25);
    mask.set(0, 0, Label::Pads);
    let p = vec![pair(img, mask)];
    let a = build_training_sets(&p, 100, 7).unwrap();
    let b = build_training_sets(&p, 100, 7).unwrap();
    let c = build_training_sets(&p, 100, 8).unwrap();
    assert_eq!(a.background.len(), 100);
    assert_eq!(a.background_total, 999);
    assert_eq!(a.pads.len(), 1);
    assert_eq!(a, b);
    assert_ne!(a.background, c.background);
}

#[test]
fn dataset_sizes_match_mask_counts() {
    let pairs = scene_pairs(8, 2);
    let sets = build_training_sets(&pairs, usize::MAX, 0).unwrap();
    let mut pads = 0;
    let mut bg = 0;
    for p in &pairs {
        for y in 0..p.mask.height() {
            for x in 0..p.mask.width() {
                if p.mask.is_pads(x, y) {
                    pads += 1;
                } else {
                    bg += 1;
                }
            }
        }
    }
    assert_eq!((sets.pads.len(), sets.background.len()), (pads, bg));
    assert_eq!((sets.pads_total, sets.background_total), (pads, bg));
}

#[test]
fn missing_class_is_insufficient_data() {
    let img = RgbImage::from_pixel(4, 4, Rgb([1, 2, 3]));
    let err = build_training_sets(&[pair(img.clone(), BinaryMask::new(4, 4))], 10, 0).unwrap_err();
    assert_eq!(err, SegmentationError::InsufficientData { class: "pads" });
    let all = BinaryMask::from_fn(4, 4, |_, _| true);
    let err = build_training_sets(&[pair(img, all)], 10, 0).unwrap_err();
    assert_eq!(err, SegmentationError::InsufficientData { class: "background" });
    assert_eq!(build_training_sets(&[], 10, 0).unwrap_err(), SegmentationError::NoTrainingImages);
}

#[test]
fn mismatched_pair_is_rejected() {
    assert!(LabeledImagePair::new(RgbImage::new(3, 3), BinaryMask::new(3, 4)).is_err());
}

/// Whether `p` lies inside the convex hull of `pts`.
fn in_hull(pts: &[UvPoint], p: UvPoint) -> bool {
    let mut v: Vec<(f64, f64)> = pts.iter().map(|q| (q.u, q.v)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(v.iter()) } else { Box::new(v.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], (p.u, p.v)) >= 0.0)
}

#[test]
fn pads_means_lie_in_the_red_cloud() {
    let pairs = scene_pairs(4, 3);
    let model = train_classifier(&pairs, &TrainConfig::default()).unwrap();
    let sets = build_training_sets(&pairs, usize::MAX, 0).unwrap();
    for c in model.pads.components() {
        assert!(in_hull(&sets.pads, c.mean), "{:?}", c.mean);
    }
    assert_eq!(model.pads.mode_count(), 2);
    assert_eq!(model.background.mode_count(), 3);
    let meta = model.metadata.as_ref().unwrap();
    assert_eq!(meta.image_count, 4);
    assert_eq!(meta.pads_pixels, sets.pads.len());
}

#[test]
fn training_is_deterministic_and_honors_mode_counts() {
    let pairs = scene_pairs(2, 4);
    let cfg = TrainConfig { pads_modes: 1, background_modes: 2, ..TrainConfig::default() };
    let a = train_classifier(&pairs, &cfg).unwrap();
    let b = train_classifier(&pairs, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.pads.mode_count(), a.background.mode_count()), (1, 2));
}

#[test]
fn ties_go_to_background() {
    let m = single(UvPoint::new(10.0, 10.0), 4.0);
    let model = ClassifierModel::new(m.clone(), m);
    for x in [UvPoint::new(10.0, 10.0), UvPoint::new(-50.0, 3.0)] {
        assert_eq!(classify_pixel(x, &model), Label::Background);
    }
}

#[test]
fn pads_mean_is_classified_as_pads() {
    let model = ClassifierModel::new(single(UvPoint::new(120.0, 20.0), 9.0), single(UvPoint::new(-20.0, 10.0), 9.0));
    assert_eq!(classify_pixel(UvPoint::new(120.0, 20.0), &model), Label::Pads);
    assert_eq!(classify_pixel(UvPoint::new(-20.0, 10.0), &model), Label::Background);
}

#[test]
fn shared_density_scaling_keeps_labels() {
    // Doubling every coordinate scales both class densities by 1/4.
    let mut rng = seeded(5);
    let scale = |m: &GmmModel| {
        GmmModel::new(
            m.components()
                .iter()
                .map(|c| {
                    GaussianComponent::new(
                        c.weight,
                        UvPoint::new(2.0 * c.mean.u, 2.0 * c.mean.v),
                        Cov2::new(4.0 * c.cov.xx, 4.0 * c.cov.xy, 4.0 * c.cov.yy),
                    )
                })
                .collect(),
        )
        .unwrap()
    };
    for _ in 0..10 {
        let model = ClassifierModel::new(random_model(&mut rng, 2, 40.0, 3.0, 9.0), random_model(&mut rng, 3, 40.0, 3.0, 9.0));
        let scaled = ClassifierModel::new(scale(&model.pads), scale(&model.background));
        for _ in 0..1000 {
            let x = UvPoint::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let x2 = UvPoint::new(2.0 * x.u, 2.0 * x.v);
            assert_eq!(classify_pixel(x, &model), classify_pixel(x2, &scaled));
        }
    }
}

#[test]
fn classify_image_is_pixelwise() {
    let pairs = scene_pairs(2, 6);
    let model = train_classifier(&pairs, &TrainConfig::default()).unwrap();
    let img = &pairs[1].image;
    let mask = classify_image(img, &model).unwrap();
    let plane = image_to_uv(img).unwrap();
    assert_eq!(mask.dimensions(), img.dimensions());
    for y in 0..img.height() {
        for x in 0..img.width() {
            assert_eq!(mask.get(x, y), classify_pixel(plane.get(x, y), &model));
        }
    }
    assert_eq!(mask, classify_image(img, &model).unwrap());
}

#[test]
fn uniform_images() {
    let pairs = scene_pairs(2, 7);
    let model = train_classifier(&pairs, &TrainConfig::default()).unwrap();
    let red = RgbImage::from_pixel(20, 10, Rgb([196, 32, 38]));
    assert_eq!(classify_image(&red, &model).unwrap().count_pads(), 200);
    let green = RgbImage::from_pixel(20, 10, Rgb([70, 110, 50]));
    assert_eq!(classify_image(&green, &model).unwrap().count_pads(), 0);
    assert!(classify_image(&RgbImage::new(0, 0), &model).is_err());
}

#[test]
fn accuracy_away_from_boundaries() {
    let train = scene_pairs(4, 8);
    let model = train_classifier(&train, &TrainConfig::default()).unwrap();
    let (mut right, mut total) = (0usize, 0usize);
    for p in scene_pairs(4, 9) {
        let mask = classify_image(&p.image, &model).unwrap();
        let (w, h) = p.mask.dimensions();
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                let label = p.mask.get(x, y);
                let interior = (-2i64..=2).all(|dy| {
                    (-2i64..=2).all(|dx| p.mask.get((x as i64 + dx) as u32, (y as i64 + dy) as u32) == label)
                });
                if interior {
                    total += 1;
                    right += usize::from(mask.get(x, y) == label);
                }
            }
        }
    }
    let accuracy = right as f64 / total as f64;
    assert!(accuracy >= 0.999, "{accuracy}");
}

#[test]
fn opening_removes_specks_and_keeps_blocks() {
    let mut mask = BinaryMask::from_fn(30, 30, |x, y| (5..20).contains(&x) && (5..25).contains(&y));
    mask.set(27, 2, Label::Pads);
    let opened = mask.opened_3x3();
    assert!(!opened.is_pads(27, 2));
    assert_eq!(opened.count_pads(), 15 * 20);
}
