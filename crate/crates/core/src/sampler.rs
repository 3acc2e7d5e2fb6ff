//! Training-pair extraction from image pairs with ground-truth flow.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{downsample_mask_any, FlowField};
use crate::image::{Image, Point};
use crate::loss::Label;
use crate::pyramid::downsample_image;

const MAX_RETRIES: usize = 10_000;

/// Two frames, the ground-truth flow from the first to the second, and the
/// occlusion mask on the first frame (true = the pixel's match is hidden).
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub i1: Image,
    pub i2: Image,
    pub flow: FlowField,
    pub occlusion: Vec<bool>,
}

impl ImagePair {
    pub fn new(i1: Image, i2: Image, flow: FlowField, occlusion: Vec<bool>) -> Result<Self> {
        let (w, h) = (i1.width(), i1.height());
        if (i2.width(), i2.height()) != (w, h) || (flow.width(), flow.height()) != (w, h) || occlusion.len() != w * h {
            return Err(Error::Shape(format!(
                "image pair parts disagree: I1 {w}x{h}, I2 {}x{}, flow {}x{}, mask {} px",
                i2.width(),
                i2.height(),
                flow.width(),
                flow.height(),
                occlusion.len()
            )));
        }
        Ok(Self { i1, i2, flow, occlusion })
    }

    pub fn width(&self) -> usize {
        self.i1.width()
    }

    pub fn height(&self) -> usize {
        self.i1.height()
    }

    #[inline]
    pub fn is_occluded(&self, x: usize, y: usize) -> bool {
        self.occlusion[y * self.width() + x]
    }

    /// Copy with both frames normalized to zero mean and unit deviation.
    pub fn normalized(&self) -> Self {
        Self {
            i1: normalize_image(&self.i1).0,
            i2: normalize_image(&self.i2).0,
            flow: self.flow.clone(),
            occlusion: self.occlusion.clone(),
        }
    }

    /// Integer match position of `p1` under the ground truth, or `None` when
    /// the flow is invalid there.
    pub fn true_match(&self, p1: Point) -> Option<Point> {
        let (x, y) = (p1.x as usize, p1.y as usize);
        if !self.flow.is_valid(x, y) {
            return None;
        }
        let (u, v) = self.flow.get(x, y);
        Some(Point::new(
            (p1.x as f32 + u).round() as i32,
            (p1.y as f32 + v).round() as i32,
        ))
    }
}

/// Marks pixels whose ground-truth forward and backward flows fail to cancel
/// within `tolerance` pixels. Stand-in for datasets without occlusion masks.
pub fn occlusion_proxy(forward: &FlowField, backward: &FlowField, tolerance: f32) -> Vec<bool> {
    let mut occ = vec![true; forward.len()];
    for y in 0..forward.height() {
        for x in 0..forward.width() {
            if !forward.is_valid(x, y) {
                continue;
            }
            let (u, v) = forward.get(x, y);
            if let Some((bu, bv)) = backward.sample_bilinear(x as f32 + u, y as f32 + v) {
                let (eu, ev) = (u + bu, v + bv);
                occ[forward.index(x, y)] = (eu * eu + ev * ev).sqrt() > tolerance;
            }
        }
    }
    occ
}

/// Subtracts the mean and divides by the population standard deviation.
/// Flat images are divided by `std + 1e-8` and flagged with `true`.
pub fn normalize_image(raw: &Image) -> (Image, bool) {
    let (mean, std) = raw.mean_std();
    let degenerate = std < 1e-6;
    let scale = if degenerate { std + 1e-8 } else { std };
    let data = raw
        .data()
        .iter()
        .map(|&v| ((f64::from(v) - mean) / scale) as f32)
        .collect();
    (
        Image::new(raw.width(), raw.height(), data).expect("same shape"),
        degenerate,
    )
}

/// Distribution of negative offsets around the true match: a discrete
/// uniform near component on `[min_distance, near_radius]` mixed with a
/// log-uniform far component on `[near_radius, far_cap]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeOffsetDist {
    pub min_distance: u32,
    pub near_radius: u32,
    pub far_cap: f64,
    pub near_probability: f64,
}

impl Default for NegativeOffsetDist {
    fn default() -> Self {
        Self {
            min_distance: 2,
            near_radius: 16,
            far_cap: 256.0,
            near_probability: 0.5,
        }
    }
}

impl NegativeOffsetDist {
    /// Defaults with the far cap limited to half the image diagonal.
    pub fn for_image(width: usize, height: usize) -> Self {
        let diag = ((width * width + height * height) as f64).sqrt();
        let mut d = Self::default();
        d.far_cap = d.far_cap.min(diag / 2.0).max(f64::from(d.near_radius) + 1.0);
        d
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_distance <= self.near_radius && f64::from(self.near_radius) < self.far_cap) {
            return Err(Error::InvalidArgument(format!(
                "negative distribution needs min_distance <= near_radius < far_cap, got {} / {} / {}",
                self.min_distance, self.near_radius, self.far_cap
            )));
        }
        if !(0.0..=1.0).contains(&self.near_probability) {
            return Err(Error::InvalidArgument("near_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Draws an offset radius from the mixture.
    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.near_probability {
            f64::from(rng.random_range(self.min_distance..=self.near_radius))
        } else {
            let (lo, hi) = (f64::from(self.near_radius).max(1.0).ln(), self.far_cap.ln());
            (lo + rng.random::<f64>() * (hi - lo)).exp()
        }
    }

    /// Probability that [`Self::sample_radius`] lands in `[lo, hi)`.
    pub fn radius_probability(&self, lo: f64, hi: f64) -> f64 {
        let p = self.near_probability;
        let (a, b) = (self.min_distance, self.near_radius);
        let near_hits = (a..=b).filter(|&k| f64::from(k) >= lo && f64::from(k) < hi).count();
        let near = p * near_hits as f64 / f64::from(b - a + 1);
        let (flo, fhi) = (f64::from(b).max(1.0), self.far_cap);
        let (l, h) = (lo.max(flo), hi.min(fhi));
        let far = if h > l { (1.0 - p) * (h / l).ln() / (fhi / flo).ln() } else { 0.0 };
        near + far
    }

    /// Integer offset with rounded length at least `min_distance`.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> (i32, i32) {
        loop {
            let r = self.sample_radius(rng);
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let dx = (r * angle.cos()).round() as i32;
            let dy = (r * angle.sin()).round() as i32;
            if rounded_length(dx, dy) >= self.min_distance {
                return (dx, dy);
            }
        }
    }
}

fn rounded_length(dx: i32, dy: i32) -> u32 {
    f64::from(dx * dx + dy * dy).sqrt().round() as u32
}

/// One training pair: window centers in `I1` and `I2` (in the coordinates of
/// `resolution_level`), its label and bookkeeping for robustness curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingSample {
    pub p1: Point,
    pub p2: Point,
    pub label: Label,
    /// Rounded distance between `p2` and the true match.
    pub pixel_distance: u32,
    /// Length of the true displacement `p2⁺ − p1`.
    pub displacement: f64,
    pub resolution_level: usize,
}

/// Positive and negative sample sharing the anchor `p1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleTriplet {
    pub positive: TrainingSample,
    pub negative: TrainingSample,
}

/// Whether `p1` can anchor a positive sample with `window`-sized patches.
pub fn is_admissible(pair: &ImagePair, p1: Point, window: usize) -> Option<Point> {
    if !pair.i1.contains_window(p1, window) || pair.is_occluded(p1.x as usize, p1.y as usize) {
        return None;
    }
    let p2 = pair.true_match(p1)?;
    pair.i2.contains_window(p2, window).then_some(p2)
}

/// Draws `p1` uniformly over admissible pixels and pairs it with its true
/// match (flow rounded to the nearest pixel).
pub fn sample_positive<R: Rng + ?Sized>(pair: &ImagePair, window: usize, rng: &mut R) -> Result<TrainingSample> {
    for _ in 0..MAX_RETRIES {
        let p1 = Point::new(
            rng.random_range(0..pair.width()) as i32,
            rng.random_range(0..pair.height()) as i32,
        );
        if let Some(p2) = is_admissible(pair, p1, window) {
            return Ok(TrainingSample {
                p1,
                p2,
                label: Label::Positive,
                pixel_distance: 0,
                displacement: p1.distance(p2),
                resolution_level: 0,
            });
        }
    }
    Err(Error::Sampling(format!(
        "no admissible positive location after {MAX_RETRIES} draws"
    )))
}

/// Draws a non-matching `p2⁻` around `p2_plus` from `dist`, resampling until
/// its window fits inside `I2`.
pub fn sample_negative<R: Rng + ?Sized>(
    pair: &ImagePair,
    p1: Point,
    p2_plus: Point,
    dist: &NegativeOffsetDist,
    window: usize,
    rng: &mut R,
) -> Result<TrainingSample> {
    for _ in 0..MAX_RETRIES {
        let (dx, dy) = dist.sample_offset(rng);
        let p2 = p2_plus.offset(dx, dy);
        if pair.i2.contains_window(p2, window) {
            return Ok(TrainingSample {
                p1,
                p2,
                label: Label::Negative,
                pixel_distance: rounded_length(dx, dy),
                displacement: p1.distance(p2_plus),
                resolution_level: 0,
            });
        }
    }
    Err(Error::Sampling(format!(
        "no in-bounds negative around ({}, {}) after {MAX_RETRIES} draws",
        p2_plus.x, p2_plus.y
    )))
}

pub fn sample_triplet<R: Rng + ?Sized>(
    pair: &ImagePair,
    dist: &NegativeOffsetDist,
    window: usize,
    rng: &mut R,
) -> Result<SampleTriplet> {
    let positive = sample_positive(pair, window, rng)?;
    let negative = sample_negative(pair, positive.p1, positive.p2, dist, window, rng)?;
    Ok(SampleTriplet { positive, negative })
}

/// The same pair at 100%, 50%, 25%, ... resolution. Flow vectors are halved
/// per level and occlusion is propagated conservatively.
#[derive(Clone, Debug)]
pub struct PairPyramid {
    pub levels: Vec<ImagePair>,
}

impl PairPyramid {
    pub fn new(pair: ImagePair, level_count: usize, window: usize) -> Result<Self> {
        if level_count == 0 {
            return Err(Error::InvalidArgument("pair pyramid needs at least one level".into()));
        }
        let mut levels = vec![pair];
        while levels.len() < level_count {
            let prev = levels.last().expect("non-empty");
            let i1 = downsample_image(&prev.i1, window)?;
            let i2 = downsample_image(&prev.i2, window)?;
            let flow = prev.flow.downsample2()?;
            let occlusion = downsample_mask_any(&prev.occlusion, prev.width(), prev.height());
            levels.push(ImagePair::new(i1, i2, flow, occlusion)?);
        }
        Ok(Self { levels })
    }
}

/// Level selection probabilities where each level is `ratio` times as
/// likely as the next finer one.
pub fn level_probabilities(level_count: usize, ratio: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..level_count).map(|l| ratio.powi(l as i32)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

pub const LEVEL_RATIO: f64 = 0.6;

pub fn sample_level<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &p) in probabilities.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probabilities.len() - 1
}

/// Draws a level (probabilities ∝ 1, 0.6, 0.36, ...) and a triplet on it.
/// Negative offsets are drawn in level coordinates.
pub fn sample_multiresolution<R: Rng + ?Sized>(
    pyramid: &PairPyramid,
    dist: &NegativeOffsetDist,
    window: usize,
    rng: &mut R,
) -> Result<SampleTriplet> {
    let probs = level_probabilities(pyramid.levels.len(), LEVEL_RATIO);
    let level = sample_level(&probs, rng);
    let mut t = sample_triplet(&pyramid.levels[level], dist, window, rng)?;
    t.positive.resolution_level = level;
    t.negative.resolution_level = level;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise_pair(w: usize, h: usize, flow: (f32, f32)) -> ImagePair {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let i1 = Image::from_fn(w, h, |_, _| rng.random::<f32>());
        let i2 = i1.clone();
        ImagePair::new(i1, i2, FlowField::from_fn(w, h, |_, _| flow), vec![false; w * h]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let (z, flagged) = normalize_image(&Image::filled(4, 4, 5.0));
        assert!(flagged);
        assert!(z.data().iter().all(|&v| v == 0.0));
        let (n, flagged) = normalize_image(&Image::new(2, 1, vec![0.0, 2.0]).unwrap());
        assert!(!flagged);
        assert_eq!(n.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn level_probability_values() {
        let p = level_probabilities(3, LEVEL_RATIO);
        let want = [1.0 / 1.96, 0.6 / 1.96, 0.36 / 1.96];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.5102).abs() < 1e-4 && (p[1] - 0.3061).abs() < 1e-4 && (p[2] - 0.1837).abs() < 1e-4);
        assert_eq!(level_probabilities(1, LEVEL_RATIO), vec![1.0]);
    }

    #[test]
    fn zero_flow_positive_shares_coordinates() {
        let pair = noise_pair(40, 40, (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = sample_positive(&pair, 16, &mut rng).unwrap();
            assert_eq!(s.p1, s.p2);
            assert_eq!(s.label, Label::Positive);
        }
    }

    #[test]
    fn occluded_centers_are_never_drawn() {
        let mut pair = noise_pair(40, 40, (2.0, 1.0));
        for y in 0..40 {
            for x in 0..20 {
                pair.occlusion[y * 40 + x] = true;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let s = sample_positive(&pair, 8, &mut rng).unwrap();
            assert!(s.p1.x >= 20);
            assert_eq!(s.p2, s.p1.offset(2, 1));
        }
    }

    #[test]
    fn fully_occluded_pair_errors() {
        let mut pair = noise_pair(20, 20, (0.0, 0.0));
        pair.occlusion.iter_mut().for_each(|o| *o = true);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(sample_positive(&pair, 8, &mut rng), Err(Error::Sampling(_))));
    }

    #[test]
    fn negative_at_fixed_radius_two() {
        let pair = noise_pair(40, 40, (0.0, 0.0));
        let dist = NegativeOffsetDist {
            min_distance: 2,
            near_radius: 2,
            far_cap: 10.0,
            near_probability: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let s = sample_negative(&pair, Point::new(20, 20), Point::new(20, 20), &dist, 8, &mut rng).unwrap();
            assert_eq!(s.pixel_distance, 2);
        }
    }

    #[test]
    fn radius_probabilities_sum_to_one() {
        let d = NegativeOffsetDist::default();
        let total = d.radius_probability(0.0, 1e9);
        assert!((total - 1.0).abs() < 1e-12);
        assert!(NegativeOffsetDist { near_radius: 300, ..d }.validate().is_err());
    }

    #[test]
    fn occlusion_proxy_flags_inconsistent_pixels() {
        let fwd = FlowField::from_fn(6, 6, |_, _| (1.0, 0.0));
        let mut bwd = FlowField::from_fn(6, 6, |_, _| (-1.0, 0.0));
        bwd.set(3, 2, 2.0, 0.0);
        let occ = occlusion_proxy(&fwd, &bwd, 1.5);
        assert!(occ[2 * 6 + 2]);
        assert!(!occ[2 * 6 + 1]);
        // Pixels mapping outside the second frame count as occluded.
        assert!(occ[5]);
    }
}
