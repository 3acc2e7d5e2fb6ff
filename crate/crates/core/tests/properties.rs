//! Property tests over random inputs.

use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use siamflow::config::Config;
use siamflow::eval::{robustness_report, RobustnessTriple};
use siamflow::io::{decode_featuremap, decode_flo, decode_pgm, encode_featuremap, encode_flo, encode_pgm, kitti_decode, kitti_encode};
use siamflow::loss::{hinge_loss, select_batch, thresholded_loss, Candidate, Label, LossConfig, PairSample};
use siamflow::matcher::{consistency_filter, init_flow, match_cost, propagate, random_search, PassDirection};
use siamflow::{FeatureMap, FlowField, Image, Point};

fn image(w: usize, h: usize, values: &[f32]) -> Image {
    Image::from_fn(w, h, |x, y| values[(y * w + x) % values.len()])
}

fn feature_map(w: usize, h: usize, dim: usize, values: &[f32]) -> FeatureMap {
    let data = (0..w * h * dim).map(|i| values[i % values.len()]).collect();
    FeatureMap::new(w, h, dim, data).unwrap()
}

fn flow(w: usize, h: usize, values: &[(f32, f32)]) -> FlowField {
    FlowField::from_fn(w, h, |x, y| values[(y * w + x) % values.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thresholded_at_zero_is_hinge(d in 0.0f64..5.0, m in 0.0f64..5.0, pos in any::<bool>()) {
        let label = if pos { Label::Positive } else { Label::Negative };
        let (h, t) = (hinge_loss(d, label, m), thresholded_loss(d, label, m, 0.0));
        prop_assert_eq!(h.loss.to_bits(), t.loss.to_bits());
        prop_assert_eq!(h.grad.to_bits(), t.grad.to_bits());
    }

    #[test]
    fn losses_are_nonnegative(d in 0.0f64..5.0, m in 0.0f64..5.0, t in 0.0f64..1.0, pos in any::<bool>()) {
        let label = if pos { Label::Positive } else { Label::Negative };
        prop_assert!(hinge_loss(d, label, m).loss >= 0.0);
        prop_assert!(thresholded_loss(d, label, m, t).loss >= 0.0);
    }

    #[test]
    fn selected_batches_hold_only_nonzero_losses(
        dists in prop::collection::vec((0.0f64..3.0, any::<bool>()), 1..200),
        t in 0.0f64..1.0,
        batch in 1usize..50,
    ) {
        let cfg = LossConfig::thresholded(t);
        let stream = dists.iter().map(|&(d, p)| if p { PairSample::positive(d) } else { PairSample::negative(d, 3) });
        let sel = select_batch(stream, &cfg, batch);
        prop_assert!(sel.batch.iter().all(|c| c.loss(&cfg) > 0.0));
        prop_assert_eq!(sel.scanned, sel.batch.len() + sel.rejected);
        prop_assert!(sel.exhausted || sel.batch.len() == batch);
    }

    #[test]
    fn robustness_invariant_under_monotone_maps(
        dists in prop::collection::vec((0.0f64..4.0, 0.0f64..4.0), 1..300),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let triples: Vec<RobustnessTriple> = (0..dists.len())
            .map(|i| RobustnessTriple {
                pair_index: 0,
                p1: Point::new(i as i32, 0),
                p2_pos: Point::new(i as i32, 0),
                p2_neg: Point::new(i as i32 + 2, 0),
                pixel_distance: 2 + i as u32 % 100,
                displacement: (i % 40) as f64,
            })
            .collect();
        let base = robustness_report(&triples, &dists).unwrap();
        for f in [|x: f64| x.sqrt(), |x: f64| (x * 3.0).exp(), |x: f64| x.powi(5)] {
            let mapped: Vec<_> = dists.iter().map(|&(p, n)| (f(p), f(n))).collect();
            prop_assert_eq!(robustness_report(&triples, &mapped).unwrap().r, base.r);
        }
        let affine: Vec<_> = dists.iter().map(|&(p, n)| (scale * p + shift, scale * n + shift)).collect();
        prop_assert_eq!(robustness_report(&triples, &affine).unwrap().r_dist, base.r_dist);
    }

    #[test]
    fn consistency_validity_monotone_in_epsilon(
        w in 2usize..10,
        h in 2usize..10,
        fwd in prop::collection::vec((-3.0f32..3.0, -3.0f32..3.0), 1..50),
        bwd in prop::collection::vec((-3.0f32..3.0, -3.0f32..3.0), 1..50),
        e1 in 0.0f32..3.0,
        de in 0.0f32..3.0,
    ) {
        let (f, b) = (flow(w, h, &fwd), flow(w, h, &bwd));
        let small = consistency_filter(&f, &b, None, e1).unwrap();
        let large = consistency_filter(&f, &b, None, e1 + de).unwrap();
        prop_assert!(small.valid.iter().zip(&large.valid).all(|(&s, &l)| !s || l));
    }

    #[test]
    fn matcher_steps_never_raise_costs(
        seed in any::<u64>(),
        values in prop::collection::vec(0.0f32..1.0, 7..40),
        others in prop::collection::vec(0.0f32..1.0, 5..40),
    ) {
        let (w, h) = (9, 7);
        let fm1 = feature_map(w, h, 3, &values);
        let fm2 = feature_map(w, h, 3, &others);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = init_flow(&fm1, &fm2, &mut rng, 4.0).unwrap();
        for i in 0..field.len() {
            let (x, y) = (i % w, i / w);
            let c = match_cost(&fm1, &fm2, Point::new(x as i32, y as i32), field.get(x, y));
            prop_assert_eq!(c, field.cost[i]);
        }
        for pass in 0..4 {
            let before = field.cost.clone();
            if pass % 2 == 0 {
                let dir = if pass == 0 { PassDirection::Forward } else { PassDirection::Backward };
                propagate(&mut field, &fm1, &fm2, dir, 4.0).unwrap();
            } else {
                random_search(&mut field, &fm1, &fm2, 2.0, 4.0, &mut rng).unwrap();
            }
            prop_assert!(field.cost.iter().zip(&before).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn pgm_round_trip(w in 1usize..12, h in 1usize..12, raw in prop::collection::vec(0u16..=65535, 1..64), wide in any::<bool>()) {
        let maxval = if wide { 65535 } else { 255 };
        let img = Image::from_fn(w, h, |x, y| (u32::from(raw[(y * w + x) % raw.len()]) % (u32::from(maxval) + 1)) as f32 / f32::from(maxval));
        let bytes = encode_pgm(&img, maxval);
        let back = decode_pgm(&bytes, Path::new("p.pgm")).unwrap();
        prop_assert_eq!(back.maxval, maxval);
        prop_assert!(back.image.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() <= 1e-6));
        prop_assert_eq!(encode_pgm(&back.image, maxval), bytes);
    }

    #[test]
    fn flo_round_trip(w in 1usize..10, h in 1usize..10, uv in prop::collection::vec((-50.0f32..50.0, -50.0f32..50.0), 1..40)) {
        let f = flow(w, h, &uv);
        let back = decode_flo(&encode_flo(&f, false), Path::new("f.flo")).unwrap();
        prop_assert_eq!(&back.u, &f.u);
        prop_assert_eq!(&back.v, &f.v);
    }

    #[test]
    fn flo_sentinel_marks_invalid(w in 1usize..8, h in 1usize..8, holes in prop::collection::vec(any::<bool>(), 1..20)) {
        let mut f = FlowField::from_fn(w, h, |x, y| (x as f32, -(y as f32)));
        for i in 0..f.len() {
            f.valid[i] = !holes[i % holes.len()];
        }
        let back = decode_flo(&encode_flo(&f, true), Path::new("f.flo")).unwrap();
        prop_assert_eq!(&back.valid, &f.valid);
    }

    #[test]
    fn kitti_quantization_round_trip(x in -500.0f32..500.0) {
        let q = kitti_decode(kitti_encode(x));
        prop_assert!((q - x).abs() <= 0.5 / 64.0 + 1e-4);
        prop_assert_eq!(kitti_encode(q), kitti_encode(x));
    }

    #[test]
    fn featuremap_round_trip(w in 1usize..6, h in 1usize..6, dim in 1usize..5, values in prop::collection::vec(-3.0f32..3.0, 1..30), win in 1usize..9) {
        let mut fm = feature_map(w, h, dim, &values);
        fm.set_window(win);
        let back = decode_featuremap(&encode_featuremap(&fm), Path::new("f.sfmap")).unwrap();
        prop_assert_eq!(back, fm);
    }

    #[test]
    fn config_text_round_trip(
        lr in 1e-5f64..1.0,
        m in 0.1f64..4.0,
        t in 0.0f64..1.0,
        eps in 0.0f32..5.0,
        samples in 1usize..1_000_000,
        seed in any::<u64>(),
    ) {
        let mut cfg = Config::default();
        cfg.train.lr_start = lr;
        cfg.train.loss.margin = m;
        cfg.train.loss.threshold = t;
        cfg.train.total_samples = samples;
        cfg.train.seed = seed;
        cfg.consistency.epsilon = eps;
        let back = Config::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn image_helper_fills_every_pixel() {
    let img = image(3, 2, &[0.25, 0.5]);
    assert_eq!(img.data(), &[0.25, 0.5, 0.25, 0.5, 0.25, 0.5]);
}
