//! Training sample invariants checked over many draws on synthetic pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use siamflow::loss::Label;
use siamflow::sampler::{
    level_probabilities, sample_multiresolution, sample_triplet, ImagePair, NegativeOffsetDist, PairPyramid,
    SampleTriplet,
};
use siamflow::synth::{generate_synthetic_pair, SynthConfig};
use siamflow::{Image, Point};

const WINDOW: usize = 9;

fn pair(seed: u64) -> ImagePair {
    generate_synthetic_pair(&SynthConfig {
        seed,
        width: 64,
        height: 56,
        max_displacement: 6.0,
        occluder_count: 2,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn window_inside(img: &Image, c: Point) -> bool {
    let half = (WINDOW / 2) as i32;
    let (x0, y0) = (c.x - half, c.y - half);
    x0 >= 0 && y0 >= 0 && x0 + WINDOW as i32 <= img.width() as i32 && y0 + WINDOW as i32 <= img.height() as i32
}

fn check_triplet(p: &ImagePair, t: &SampleTriplet) {
    let (pos, neg) = (t.positive, t.negative);
    assert_eq!(pos.label, Label::Positive);
    assert_eq!(neg.label, Label::Negative);
    assert_eq!(pos.p1, neg.p1);
    let (x, y) = (pos.p1.x as usize, pos.p1.y as usize);
    assert!(window_inside(&p.i1, pos.p1));
    assert!(!p.occlusion[y * p.width() + x], "occluded anchor {:?}", pos.p1);
    let (u, v) = (p.flow.u[y * p.width() + x], p.flow.v[y * p.width() + x]);
    let expected = Point::new((x as f32 + u).round() as i32, (y as f32 + v).round() as i32);
    assert_eq!(pos.p2, expected);
    assert!(window_inside(&p.i2, pos.p2));
    assert_eq!(pos.pixel_distance, 0);

    assert!(window_inside(&p.i2, neg.p2));
    assert_ne!(neg.p2, pos.p2);
    let (dx, dy) = (f64::from(neg.p2.x - pos.p2.x), f64::from(neg.p2.y - pos.p2.y));
    assert_eq!(neg.pixel_distance, dx.hypot(dy).round() as u32);
    assert!(neg.pixel_distance >= 2);
    assert_eq!(neg.displacement, pos.displacement);
}

#[test]
fn triplets_respect_windows_occlusion_and_ground_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..4 {
        let p = pair(seed);
        let dist = NegativeOffsetDist::for_image(p.width(), p.height());
        for _ in 0..2000 {
            let t = sample_triplet(&p, &dist, WINDOW, &mut rng).unwrap();
            check_triplet(&p, &t);
        }
    }
}

#[test]
fn multiresolution_levels_follow_their_probabilities() {
    let p = pair(7);
    let pyr = PairPyramid::new(p, 3, WINDOW).unwrap();
    let dist = NegativeOffsetDist::for_image(64, 56);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 6000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let t = sample_multiresolution(&pyr, &dist, WINDOW, &mut rng).unwrap();
        let level = t.positive.resolution_level;
        assert_eq!(level, t.negative.resolution_level);
        check_triplet(&pyr.levels[level], &t);
        counts[level] += 1;
    }
    // Weights 1 : 0.6 : 0.36.
    let total = 1.0 + 0.6 + 0.36;
    for (k, w) in [1.0, 0.6, 0.36].iter().enumerate() {
        let expect = w / total;
        assert!((level_probabilities(3, 0.6)[k] - expect).abs() < 1e-12);
        let got = counts[k] as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((got - expect).abs() < 4.0 * se, "level {k}: {got} vs {expect}");
    }
}

#[test]
fn pyramid_levels_halve_dimensions_and_flow() {
    let p = pair(8);
    let pyr = PairPyramid::new(p.clone(), 2, WINDOW).unwrap();
    let l1 = &pyr.levels[1];
    assert_eq!((l1.width(), l1.height()), (32, 28));
    // Conservative occlusion: any occluded child marks the parent.
    for y in 0..28 {
        for x in 0..32 {
            let any = (0..2).any(|dy| (0..2).any(|dx| p.occlusion[(2 * y + dy) * 64 + 2 * x + dx]));
            if any {
                assert!(l1.occlusion[y * 32 + x], "({x},{y})");
            }
        }
    }
    let mean = |v: &[f32]| v.iter().map(|&a| f64::from(a)).sum::<f64>() / v.len() as f64;
    let ratio = mean(&l1.flow.u) / mean(&p.flow.u);
    assert!((ratio - 0.5).abs() < 0.05, "u ratio {ratio}");
}

#[test]
fn negative_radius_histogram_matches_mixture() {
    let dist = NegativeOffsetDist::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 40_000;
    let bins = [(2.0, 5.0), (5.0, 16.5), (16.5, 40.0), (40.0, 120.0), (120.0, 256.5)];
    let mut counts = vec![0usize; bins.len()];
    for _ in 0..n {
        let r = dist.sample_radius(&mut rng);
        assert!((2.0..=256.0).contains(&r), "{r}");
        if let Some(k) = bins.iter().position(|&(lo, hi)| r >= lo && r < hi) {
            counts[k] += 1;
        }
    }
    // Independent oracle: uniform integers 2..=16 with weight 1/2, log-uniform on [16, 256] with 1/2.
    let oracle = |lo: f64, hi: f64| {
        let near = (2..=16).filter(|&k| f64::from(k) >= lo && f64::from(k) < hi).count() as f64 / 15.0;
        let (l, h) = (lo.max(16.0), hi.min(256.0));
        let far = if h > l { (h / l).ln() / 16f64.ln() } else { 0.0 };
        0.5 * near + 0.5 * far
    };
    for (k, &(lo, hi)) in bins.iter().enumerate() {
        let expect = oracle(lo, hi);
        assert!((dist.radius_probability(lo, hi) - expect).abs() < 1e-12);
        let got = counts[k] as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((got - expect).abs() < 4.0 * se, "bin {lo}..{hi}: {got} vs {expect}");
    }
}
