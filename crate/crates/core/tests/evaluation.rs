mod common;

use rand::Rng;
use trunkgauge::commands::corpus_specs;
use trunkgauge::error::EvalError;
use trunkgauge::evaluation::*;
use trunkgauge::geometry::{measure_diameter, MeasureConfig, TrimPolicy};

use common::seeded;

fn scalar_stats(m: &[f64], r: &[f64]) -> (f64, f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for i in 0..m.len() {
        let e = (m[i] - r[i]).abs();
        sum += e;
        max = max.max(e);
    }
    let mean = sum / m.len() as f64;
    let mut ss = 0.0;
    for i in 0..m.len() {
        let e = (m[i] - r[i]).abs();
        ss += (e - mean) * (e - mean);
    }
    (mean, (ss / (m.len() as f64 - 1.0)).sqrt(), max)
}

fn random_pairs(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let r: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..60.0)).collect();
    let m = r.iter().map(|x| x + rng.random_range(-2.0..2.0)).collect();
    (m, r)
}

#[test]
fn stats_examples() {
    let s = error_stats(&[10.0, 12.0], &[11.0, 11.0]).unwrap();
    assert_eq!((s.mean_abs_error, s.std_abs_error, s.max_abs_error, s.count), (1.0, 0.0, 1.0, 2));
    let x = [41.5, 38.25, 50.0];
    let s = error_stats(&x, &x).unwrap();
    assert_eq!((s.mean_abs_error, s.std_abs_error, s.max_abs_error), (0.0, 0.0, 0.0));
    assert!(matches!(error_stats(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch { .. })));
    assert_eq!(error_stats(&[], &[]), Err(EvalError::Empty));
}

#[test]
fn stats_match_scalar_loop() {
    let mut rng = seeded(840);
    let (m, r) = random_pairs(&mut rng, 840);
    let s = error_stats(&m, &r).unwrap();
    let (mean, std, max) = scalar_stats(&m, &r);
    assert!((s.mean_abs_error - mean).abs() <= 1e-12);
    assert!((s.std_abs_error - std).abs() <= 1e-12);
    assert_eq!(s.max_abs_error, max);
    let below = m.iter().zip(&r).filter(|(a, b)| (*a - *b).abs() < 0.5).count();
    assert_eq!(s.fraction_below(0.5), below as f64 / 840.0);
}

#[test]
fn histogram_examples() {
    let h = error_histogram(&[0.1, 0.3, 0.3], 0.2).unwrap();
    assert_eq!(h.counts, vec![1, 2]);
    assert_eq!(h.total(), 3);
    let h = error_histogram(&[], 0.2).unwrap();
    assert_eq!(h.total(), 0);
    assert_eq!(error_histogram(&[0.1], -0.2), Err(EvalError::BinWidth(-0.2)));
}

#[test]
fn histogram_of_uniform_errors() {
    let mut rng = seeded(3);
    let errors: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..2.0)).collect();
    let h = error_histogram(&errors, 0.2).unwrap();
    assert_eq!(h.counts.len(), 10);
    assert_eq!(h.total(), 10_000);
    for c in &h.counts {
        assert!((850..=1150).contains(c), "{c}");
    }
    let edges = h.edges();
    for e in &errors {
        let k = h.counts.len() - edges.iter().rev().skip(1).position(|lo| e >= lo).unwrap() - 1;
        assert!(*e >= edges[k] && *e < edges[k + 1]);
    }
}

#[test]
fn round_examples() {
    let s = round_summary(&[(vec![1.0], vec![0.0]), (vec![2.0], vec![0.0])]).unwrap();
    let means: Vec<f64> = s.rounds.iter().map(|r| r.stats.mean_abs_error).collect();
    assert_eq!(means, vec![2.0, 1.0]);
    assert_eq!(s.rounds[0].round, 1);

    let same = vec![(vec![1.0, 2.0], vec![0.0, 0.0]); 3];
    let order: Vec<usize> = round_summary(&same).unwrap().rounds.iter().map(|r| r.round).collect();
    assert_eq!(order, vec![0, 1, 2]);

    // Equal means, larger spread first.
    let s = round_summary(&[(vec![1.0, 1.0], vec![0.0, 0.0]), (vec![0.0, 2.0], vec![0.0, 0.0])]).unwrap();
    assert_eq!(s.rounds[0].round, 1);

    assert_eq!(round_summary(&[(vec![], vec![])]), Err(EvalError::EmptyRound(0)));
}

#[test]
fn rounds_compose_from_error_stats() {
    let mut rng = seeded(28);
    let rounds: Vec<(Vec<f64>, Vec<f64>)> = (0..28).map(|_| random_pairs(&mut rng, 30)).collect();
    let s = round_summary(&rounds).unwrap();
    assert_eq!(s.rounds.len(), 28);
    for w in s.rounds.windows(2) {
        assert!(w[0].stats.mean_abs_error >= w[1].stats.mean_abs_error);
    }
    for r in &s.rounds {
        let (m, re) = &rounds[r.round];
        assert_eq!(r.stats, error_stats(m, re).unwrap());
    }
}

#[test]
fn cross_compare() {
    assert_eq!(cross_condition_compare(&[30.0, 31.0], &[30.0, 31.0]).unwrap(), (0.0, 0.0));
    let offsets: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.25 * i as f64 } else { -0.5 }).collect();
    let matched: Vec<f64> = (0..16).map(|i| 25.0 + i as f64).collect();
    let crossed: Vec<f64> = matched.iter().zip(&offsets).map(|(m, o)| m + o).collect();
    let (mean, std) = cross_condition_compare(&matched, &crossed).unwrap();
    let (m, s, _) = scalar_stats(&matched, &crossed);
    assert_eq!((mean, std), (m, s));
    assert!(cross_condition_compare(&[1.0], &[]).is_err());
}

#[test]
fn generator_is_deterministic() {
    let spec = SceneSpec { edge_jitter_px: 3.0, tilt_deg: 4.0, seed: 11, ..SceneSpec::default() };
    let (a, ta) = synth_scene(&spec).unwrap();
    let (b, tb) = synth_scene(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.ideal_mask, tb.ideal_mask);
    let (c, _) = synth_scene(&SceneSpec { seed: 12, ..spec }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn brightness_leaves_geometry_alone() {
    let spec = SceneSpec { edge_jitter_px: 3.0, tilt_deg: -6.0, seed: 5, ..SceneSpec::default() };
    let (bright, tb) = synth_scene(&spec).unwrap();
    let (dim, td) = synth_scene(&SceneSpec { brightness: 0.5, ..spec }).unwrap();
    assert_eq!(tb.ideal_mask, td.ideal_mask);
    assert_ne!(bright, dim);
    let sum = |img: &image::RgbImage| img.pixels().map(|p| p[1] as u64).sum::<u64>();
    assert!(sum(&dim) < sum(&bright));
}

#[test]
fn noiseless_render_recovers_the_gap() {
    let spec = SceneSpec { color_noise: 0.0, ..SceneSpec::default() };
    let (_, truth) = synth_scene(&spec).unwrap();
    let cfg = MeasureConfig { trim: TrimPolicy::Disabled, ..MeasureConfig::default() };
    let r = measure_diameter(&truth.ideal_mask, 20.0, &cfg).unwrap();
    assert_eq!(r.gap_px, spec.gap_px);
    assert!((r.diameter_mm - truth.diameter_mm(20.0)).abs() < 1e-9);
}

#[test]
fn out_of_frame_scene_is_rejected() {
    let spec = SceneSpec { gap_px: 700.0, ..SceneSpec::default() };
    assert!(matches!(synth_scene(&spec), Err(EvalError::InvalidScene(_))));
    let spec = SceneSpec { width: 0, ..SceneSpec::default() };
    assert!(synth_scene(&spec).is_err());
}

fn luminosity_cfg() -> LuminosityConfig {
    LuminosityConfig {
        train: Default::default(),
        measure: MeasureConfig::default(),
        seed: 9,
    }
}

#[test]
fn same_condition_gives_near_zero_differences() {
    let template = SceneSpec { edge_jitter_px: 3.0, ..SceneSpec::default() };
    let specs = corpus_specs(&template, 8, 8.0, 21);
    let table = run_luminosity_from_specs(&specs, &specs, 20.0, 4, &luminosity_cfg()).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0].condition, Condition::Dim);
    for row in &table.rows {
        assert_eq!(row.pairs + row.failures, 4);
        assert!(row.mean_abs_diff_px() <= 0.1, "{}: {}", row.label(), row.mean_abs_diff_px());
    }
}

#[test]
fn luminosity_table_is_reproducible() {
    let template = SceneSpec { edge_jitter_px: 3.0, ..SceneSpec::default() };
    let bright = corpus_specs(&template, 6, 8.0, 22);
    let dim = corpus_specs(&SceneSpec { brightness: 0.55, ..template }, 6, 8.0, 23);
    let a = run_luminosity_from_specs(&bright, &dim, 20.0, 3, &luminosity_cfg()).unwrap();
    let b = run_luminosity_from_specs(&bright, &dim, 20.0, 3, &luminosity_cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.bright_train.len(), 3);
    assert_eq!(a.rows[1].label(), "test_bright|gmm_bright vs test_bright|gmm_dim");
}

#[test]
fn too_few_scenes() {
    let specs = corpus_specs(&SceneSpec::default(), 4, 0.0, 1);
    let err = run_luminosity_from_specs(&specs, &specs, 20.0, 4, &luminosity_cfg()).unwrap_err();
    assert_eq!(err, EvalError::InsufficientScenes { have: 4, train_count: 4 });
}
