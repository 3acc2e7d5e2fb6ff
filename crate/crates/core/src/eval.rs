//! Matching robustness, relative robustness error, endpoint error and L2
//! distance histograms.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{FeatureMap, Point};
use crate::sampler::{is_admissible, sample_negative, ImagePair, NegativeOffsetDist};

/// Pixel-distance bins `|p2⁻ − p2⁺|` as inclusive `(lo, hi)`; `None` is open.
pub const DIST_BINS: [(u32, Option<u32>); 7] = [
    (2, Some(4)),
    (5, Some(8)),
    (9, Some(16)),
    (17, Some(32)),
    (33, Some(64)),
    (65, Some(128)),
    (129, None),
];

/// Displacement bins `|p2⁺ − p1|`, rounded to whole pixels.
pub const FLOW_BINS: [(u32, Option<u32>); 6] = [
    (0, Some(8)),
    (9, Some(16)),
    (17, Some(32)),
    (33, Some(64)),
    (65, Some(128)),
    (129, None),
];

/// One anchor with its correct and one wrong match, all at integer pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustnessTriple {
    pub pair_index: usize,
    pub p1: Point,
    pub p2_pos: Point,
    pub p2_neg: Point,
    pub pixel_distance: u32,
    pub displacement: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub negatives_per_pixel: usize,
    /// Evaluate every `pixel_stride`-th admissible pixel in both directions.
    pub pixel_stride: usize,
    /// Patch side used for the admissibility test.
    pub window: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            negatives_per_pixel: 4,
            pixel_stride: 1,
            window: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessBin {
    pub lo: u32,
    pub hi: Option<u32>,
    pub robust: u64,
    pub samples: u64,
}

impl RobustnessBin {
    fn new((lo, hi): (u32, Option<u32>)) -> Self {
        Self {
            lo,
            hi,
            robust: 0,
            samples: 0,
        }
    }

    fn holds(&self, v: u32) -> bool {
        v >= self.lo && self.hi.is_none_or(|hi| v <= hi)
    }

    /// `None` for an empty bin.
    pub fn r(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.robust as f64 / self.samples as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub r: f64,
    pub robust: u64,
    pub samples: u64,
    /// Anchor pixels that took part in the evaluation.
    pub admissible_pixels: u64,
    pub r_dist: Vec<RobustnessBin>,
    pub r_flow: Vec<RobustnessBin>,
}

impl RobustnessReport {
    /// Binomial standard error of `r`.
    pub fn standard_error(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        (self.r * (1.0 - self.r) / self.samples as f64).sqrt()
    }

    pub fn dist_curve(&self) -> Vec<Option<f64>> {
        self.r_dist.iter().map(RobustnessBin::r).collect()
    }

    pub fn flow_curve(&self) -> Vec<Option<f64>> {
        self.r_flow.iter().map(RobustnessBin::r).collect()
    }
}

/// Draws `negatives_per_pixel` negatives from `dist` for every admissible
/// anchor on the stride grid of every pair.
pub fn robustness_triples<R: Rng + ?Sized>(
    pairs: &[ImagePair],
    dist: &NegativeOffsetDist,
    cfg: &RobustnessConfig,
    rng: &mut R,
) -> Result<Vec<RobustnessTriple>> {
    if cfg.negatives_per_pixel == 0 || cfg.pixel_stride == 0 {
        return Err(Error::InvalidArgument(
            "robustness needs at least one negative per pixel and a positive stride".into(),
        ));
    }
    dist.validate()?;
    let mut triples = Vec::new();
    for (pair_index, pair) in pairs.iter().enumerate() {
        for y in (0..pair.height()).step_by(cfg.pixel_stride) {
            for x in (0..pair.width()).step_by(cfg.pixel_stride) {
                let p1 = Point::new(x as i32, y as i32);
                let Some(p2_pos) = is_admissible(pair, p1, cfg.window) else {
                    continue;
                };
                for _ in 0..cfg.negatives_per_pixel {
                    let neg = sample_negative(pair, p1, p2_pos, dist, cfg.window, rng)?;
                    triples.push(RobustnessTriple {
                        pair_index,
                        p1,
                        p2_pos,
                        p2_neg: neg.p2,
                        pixel_distance: neg.pixel_distance,
                        displacement: neg.displacement,
                    });
                }
            }
        }
    }
    Ok(triples)
}

fn feature_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn lookup(fm: &FeatureMap, p: Point) -> Result<&[f32]> {
    if !fm.contains(p) {
        return Err(Error::Shape(format!("point ({}, {}) outside feature map", p.x, p.y)));
    }
    Ok(fm.feature(p.x as usize, p.y as usize))
}

/// `(L2(p1, p2⁺), L2(p1, p2⁻))` for each triple, with `features[i]` the
/// maps of pair `i`.
pub fn triple_distances(
    triples: &[RobustnessTriple],
    features: &[(FeatureMap, FeatureMap)],
) -> Result<Vec<(f64, f64)>> {
    triples
        .iter()
        .map(|t| {
            let (fm1, fm2) = features
                .get(t.pair_index)
                .ok_or_else(|| Error::Shape(format!("no feature maps for pair {}", t.pair_index)))?;
            let a = lookup(fm1, t.p1)?;
            Ok((feature_l2(a, lookup(fm2, t.p2_pos)?), feature_l2(a, lookup(fm2, t.p2_neg)?)))
        })
        .collect()
}

/// Tallies `L2⁺ < L2⁻` (ties are not robust) overall and per bin.
pub fn robustness_report(triples: &[RobustnessTriple], distances: &[(f64, f64)]) -> Result<RobustnessReport> {
    if triples.is_empty() {
        return Err(Error::EmptyDomain("no admissible pixels for matching robustness".into()));
    }
    if triples.len() != distances.len() {
        return Err(Error::Shape("one distance pair per triple required".into()));
    }
    let mut r_dist: Vec<_> = DIST_BINS.iter().copied().map(RobustnessBin::new).collect();
    let mut r_flow: Vec<_> = FLOW_BINS.iter().copied().map(RobustnessBin::new).collect();
    let mut robust = 0u64;
    let mut anchors = std::collections::BTreeSet::new();
    for (t, &(dp, dn)) in triples.iter().zip(distances) {
        let ok = dp < dn;
        robust += u64::from(ok);
        anchors.insert((t.pair_index, t.p1.y, t.p1.x));
        let flow_px = t.displacement.round() as u32;
        for (bins, v) in [(&mut r_dist, t.pixel_distance), (&mut r_flow, flow_px)] {
            if let Some(b) = bins.iter_mut().find(|b| b.holds(v)) {
                b.samples += 1;
                b.robust += u64::from(ok);
            }
        }
    }
    let samples = triples.len() as u64;
    Ok(RobustnessReport {
        r: robust as f64 / samples as f64,
        robust,
        samples,
        admissible_pixels: anchors.len() as u64,
        r_dist,
        r_flow,
    })
}

/// Robustness `r` of the given feature maps on `pairs`.
pub fn matching_robustness<R: Rng + ?Sized>(
    pairs: &[ImagePair],
    features: &[(FeatureMap, FeatureMap)],
    dist: &NegativeOffsetDist,
    cfg: &RobustnessConfig,
    rng: &mut R,
) -> Result<RobustnessReport> {
    if pairs.len() != features.len() {
        return Err(Error::Shape("one feature-map pair per image pair required".into()));
    }
    let triples = robustness_triples(pairs, dist, cfg, rng)?;
    let d = triple_distances(&triples, features)?;
    robustness_report(&triples, &d)
}

/// `E = (1 − r_test) / (1 − r_ref)`.
pub fn relative_error(r_ref: f64, r_test: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r_ref) || !(0.0..=1.0).contains(&r_test) {
        return Err(Error::InvalidArgument(format!(
            "robustness values must lie in [0, 1] (got {r_ref}, {r_test})"
        )));
    }
    if r_ref == 1.0 {
        return Err(Error::UndefinedRelativeError);
    }
    Ok((1.0 - r_test) / (1.0 - r_ref))
}

/// Elementwise [`relative_error`]; bins that are empty or have `r_ref = 1`
/// yield `None`.
pub fn relative_error_curve(r_ref: &[Option<f64>], r_test: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    if r_ref.len() != r_test.len() {
        return Err(Error::Shape("relative error curves need matching bins".into()));
    }
    r_ref
        .iter()
        .zip(r_test)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => match relative_error(*a, *b) {
                Ok(e) => Ok(Some(e)),
                Err(Error::UndefinedRelativeError) => Ok(None),
                Err(e) => Err(e),
            },
            _ => Ok(None),
        })
        .collect()
}

/// Endpoint-error thresholds in pixels.
pub const EPE_THRESHOLDS: [f64; 2] = [3.0, 5.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpeReport {
    pub epe_noc: f64,
    pub epe_all: f64,
    /// Percentage of noc pixels with EPE above each of [`EPE_THRESHOLDS`].
    pub pct_noc: [f64; 2],
    pub pct_all: [f64; 2],
    pub count_noc: u64,
    pub count_all: u64,
}

impl EpeReport {
    /// Pixel-weighted aggregate of per-pair reports.
    pub fn combine(reports: &[EpeReport]) -> Result<EpeReport> {
        let n_all: u64 = reports.iter().map(|r| r.count_all).sum();
        let n_noc: u64 = reports.iter().map(|r| r.count_noc).sum();
        if n_all == 0 || n_noc == 0 {
            return Err(Error::EmptyDomain("no evaluated pixels to combine".into()));
        }
        let mean = |f: &dyn Fn(&EpeReport) -> (f64, u64), n: u64| {
            reports.iter().map(|r| f(r)).map(|(v, c)| v * c as f64).sum::<f64>() / n as f64
        };
        Ok(EpeReport {
            epe_noc: mean(&|r| (r.epe_noc, r.count_noc), n_noc),
            epe_all: mean(&|r| (r.epe_all, r.count_all), n_all),
            pct_noc: [0, 1].map(|k| mean(&|r| (r.pct_noc[k], r.count_noc), n_noc)),
            pct_all: [0, 1].map(|k| mean(&|r| (r.pct_all[k], r.count_all), n_all)),
            count_noc: n_noc,
            count_all: n_all,
        })
    }
}

/// EPE over the "all" domain (ground truth and estimate valid) and the
/// "noc" domain (additionally non-occluded per `noc_mask`, where `true`
/// marks a non-occluded pixel). Without a mask both domains coincide.
pub fn epe_metrics(est: &FlowField, gt: &FlowField, noc_mask: Option<&[bool]>) -> Result<EpeReport> {
    let dims = (gt.width(), gt.height());
    if (est.width(), est.height()) != dims {
        return Err(Error::Shape(format!(
            "estimate {}x{} vs ground truth {}x{}",
            est.width(),
            est.height(),
            dims.0,
            dims.1
        )));
    }
    if noc_mask.is_some_and(|m| m.len() != gt.len()) {
        return Err(Error::Shape("noc mask does not match the flow size".into()));
    }
    let (mut sum_all, mut sum_noc) = (0.0f64, 0.0f64);
    let (mut n_all, mut n_noc) = (0u64, 0u64);
    let (mut over_all, mut over_noc) = ([0u64; 2], [0u64; 2]);
    for i in 0..gt.len() {
        if !(gt.valid[i] && est.valid[i]) {
            continue;
        }
        let du = f64::from(est.u[i]) - f64::from(gt.u[i]);
        let dv = f64::from(est.v[i]) - f64::from(gt.v[i]);
        let e = du.hypot(dv);
        sum_all += e;
        n_all += 1;
        let noc = noc_mask.is_none_or(|m| m[i]);
        if noc {
            sum_noc += e;
            n_noc += 1;
        }
        for (k, &tau) in EPE_THRESHOLDS.iter().enumerate() {
            if e > tau {
                over_all[k] += 1;
                over_noc[k] += u64::from(noc);
            }
        }
    }
    if n_all == 0 || n_noc == 0 {
        return Err(Error::EmptyDomain("no pixel is valid in both flow fields (noc/all)".into()));
    }
    let pct = |over: [u64; 2], n: u64| over.map(|c| 100.0 * c as f64 / n as f64);
    Ok(EpeReport {
        epe_noc: sum_noc / n_noc as f64,
        epe_all: sum_all / n_all as f64,
        pct_noc: pct(over_noc, n_noc),
        pct_all: pct(over_all, n_all),
        count_noc: n_noc,
        count_all: n_all,
    })
}

/// Normalized histograms of positive and negative L2 distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Histogram {
    pub edges: Vec<f64>,
    pub positive_mass: Vec<f64>,
    pub negative_mass: Vec<f64>,
    pub positive_mean: f64,
    pub negative_mean: f64,
    pub positive_variance: f64,
    pub negative_variance: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

/// Shared-edge histograms over `range` (default: min..max of all values).
/// Values at the upper edge go to the last bin; values outside are dropped.
/// Variances are population variances of the raw distances.
pub fn l2_histogram(positive: &[f64], negative: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<L2Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let all = positive.iter().chain(negative);
    if all.clone().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument("non-finite distance in histogram input".into()));
    }
    let (lo, mut hi) = range.unwrap_or_else(|| {
        all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)))
    });
    if !lo.is_finite() {
        return Err(Error::EmptyDomain("histogram of no distances".into()));
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mass = |values: &[f64]| {
        let mut counts = vec![0f64; bins];
        for &d in values {
            if d < lo || d > hi {
                continue;
            }
            let k = (((d - lo) / width) as usize).min(bins - 1);
            counts[k] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            counts.iter_mut().for_each(|c| *c /= total);
        }
        counts
    };
    let (pm, pv) = mean_var(positive);
    let (nm, nv) = mean_var(negative);
    Ok(L2Histogram {
        positive_mass: mass(positive),
        negative_mass: mass(negative),
        edges,
        positive_mean: pm,
        negative_mean: nm,
        positive_variance: pv,
        negative_variance: nv,
    })
}

/// Positive and negative distances with the negative placed at a fixed
/// pixel distance `d` (random direction, rounded to the pixel grid) from
/// the true match.
pub fn fixed_distance_samples<R: Rng + ?Sized>(
    pairs: &[ImagePair],
    features: &[(FeatureMap, FeatureMap)],
    d: f64,
    window: usize,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if pairs.is_empty() || pairs.len() != features.len() {
        return Err(Error::Shape("one feature-map pair per image pair required".into()));
    }
    if !(d >= 1.0) {
        return Err(Error::InvalidArgument(format!("fixed negative distance must be >= 1 (got {d})")));
    }
    let (mut pos, mut neg) = (Vec::with_capacity(count), Vec::with_capacity(count));
    let max_tries = 1000 * count.max(1);
    let mut tries = 0;
    while pos.len() < count {
        tries += 1;
        if tries > max_tries {
            return Err(Error::Sampling("could not place fixed-distance samples".into()));
        }
        let k = rng.random_range(0..pairs.len());
        let pair = &pairs[k];
        let p1 = Point::new(
            rng.random_range(0..pair.width()) as i32,
            rng.random_range(0..pair.height()) as i32,
        );
        let Some(p2) = is_admissible(pair, p1, window) else {
            continue;
        };
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let pn = p2.offset((d * angle.cos()).round() as i32, (d * angle.sin()).round() as i32);
        if !pair.i2.contains_window(pn, window) {
            continue;
        }
        let (fm1, fm2) = &features[k];
        let a = lookup(fm1, p1)?;
        pos.push(feature_l2(a, lookup(fm2, p2)?));
        neg.push(feature_l2(a, lookup(fm2, pn)?));
    }
    Ok((pos, neg))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write_bins<W: Write>(
    out: &mut W,
    curve: &str,
    bins: &[RobustnessBin],
    reference: Option<&[RobustnessBin]>,
) -> std::io::Result<()> {
    for (k, b) in bins.iter().enumerate() {
        let e = reference
            .and_then(|r| r.get(k))
            .and_then(|rb| match (rb.r(), b.r()) {
                (Some(a), Some(t)) => relative_error(a, t).ok(),
                _ => None,
            });
        writeln!(
            out,
            "{curve},{},{},{},{},{}",
            b.lo,
            b.hi.map(|h| h.to_string()).unwrap_or_default(),
            fmt_opt(b.r()),
            b.samples,
            fmt_opt(e)
        )?;
    }
    Ok(())
}

/// One row per bin (`curve,bin_lo,bin_hi,r,samples,E_vs_reference`) and a
/// final `overall` summary row.
pub fn write_robustness_csv<W: Write>(
    out: &mut W,
    report: &RobustnessReport,
    reference: Option<&RobustnessReport>,
) -> std::io::Result<()> {
    writeln!(out, "curve,bin_lo,bin_hi,r,samples,E_vs_reference")?;
    write_bins(out, "r_dist", &report.r_dist, reference.map(|r| r.r_dist.as_slice()))?;
    write_bins(out, "r_flow", &report.r_flow, reference.map(|r| r.r_flow.as_slice()))?;
    let e = reference.and_then(|r| relative_error(r.r, report.r).ok());
    writeln!(out, "overall,,,{},{},{}", report.r, report.samples, fmt_opt(e))
}

pub fn write_epe_csv<W: Write>(out: &mut W, report: &EpeReport) -> std::io::Result<()> {
    writeln!(out, "domain,epe,pct_over_3px,pct_over_5px,pixels")?;
    writeln!(
        out,
        "noc,{},{},{},{}",
        report.epe_noc, report.pct_noc[0], report.pct_noc[1], report.count_noc
    )?;
    writeln!(
        out,
        "all,{},{},{},{}",
        report.epe_all, report.pct_all[0], report.pct_all[1], report.count_all
    )
}

/// `bin_center,positive_density,negative_density`, densities being mass per
/// unit distance.
pub fn write_histogram_csv<W: Write>(out: &mut W, hist: &L2Histogram) -> std::io::Result<()> {
    writeln!(out, "bin_center,positive_density,negative_density")?;
    for k in 0..hist.positive_mass.len() {
        let (a, b) = (hist.edges[k], hist.edges[k + 1]);
        let w = b - a;
        writeln!(
            out,
            "{},{},{}",
            0.5 * (a + b),
            hist.positive_mass[k] / w,
            hist.negative_mass[k] / w
        )?;
    }
    writeln!(out, "# variance,{},{}", hist.positive_variance, hist.negative_variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(d: u32, disp: f64) -> RobustnessTriple {
        RobustnessTriple {
            pair_index: 0,
            p1: Point::new(0, 0),
            p2_pos: Point::new(0, 0),
            p2_neg: Point::new(0, 0),
            pixel_distance: d,
            displacement: disp,
        }
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(0.9, 0.9).unwrap(), 1.0);
        assert!((relative_error(0.98, 0.99).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(relative_error(0.98, 1.0).unwrap(), 0.0);
        assert!(matches!(relative_error(1.0, 0.5), Err(Error::UndefinedRelativeError)));
    }

    #[test]
    fn ties_are_not_robust() {
        let t = vec![triple(3, 1.0); 4];
        let r = robustness_report(&t, &[(1.0, 1.0); 4]).unwrap();
        assert_eq!(r.r, 0.0);
        let r = robustness_report(&t, &[(0.5, 1.0); 4]).unwrap();
        assert_eq!(r.r, 1.0);
    }

    #[test]
    fn bins_cover_all_samples() {
        let t: Vec<_> = (2..300).map(|d| triple(d, d as f64 * 0.7)).collect();
        let dist: Vec<_> = (2..300).map(|d| (1.0, if d % 3 == 0 { 0.5 } else { 2.0 })).collect();
        let r = robustness_report(&t, &dist).unwrap();
        assert_eq!(r.r_dist.iter().map(|b| b.samples).sum::<u64>(), r.samples);
        assert_eq!(r.r_flow.iter().map(|b| b.samples).sum::<u64>(), r.samples);
        let weighted: f64 = r.r_dist.iter().map(|b| b.robust as f64).sum::<f64>() / r.samples as f64;
        assert!((weighted - r.r).abs() <= 1e-12);
    }

    #[test]
    fn empty_domain_errors() {
        assert!(robustness_report(&[], &[]).is_err());
        let gt = FlowField::zeros(2, 2);
        let mut est = FlowField::zeros(2, 2);
        est.valid = vec![false; 4];
        assert!(matches!(epe_metrics(&est, &gt, None), Err(Error::EmptyDomain(_))));
    }

    #[test]
    fn epe_examples() {
        let gt = FlowField::from_fn(3, 1, |x, _| (x as f32, 1.0));
        let same = epe_metrics(&gt, &gt, None).unwrap();
        assert_eq!((same.epe_all, same.epe_noc, same.pct_all), (0.0, 0.0, [0.0, 0.0]));
        let one_gt = FlowField::from_fn(1, 1, |_, _| (4.0, 5.0));
        let one_est = FlowField::from_fn(1, 1, |_, _| (1.0, 1.0));
        let r = epe_metrics(&one_est, &one_gt, None).unwrap();
        assert_eq!(r.epe_noc, 5.0);
        assert_eq!(r.pct_noc, [100.0, 0.0]);
    }

    #[test]
    fn noc_mask_restricts_domain() {
        let gt = FlowField::zeros(2, 1);
        let est = FlowField::from_fn(2, 1, |x, _| (x as f32 * 6.0, 0.0));
        let r = epe_metrics(&est, &gt, Some(&[true, false])).unwrap();
        assert_eq!((r.epe_noc, r.epe_all, r.count_noc, r.count_all), (0.0, 3.0, 1, 2));
    }

    #[test]
    fn histogram_single_bin_and_mass() {
        let h = l2_histogram(&[0.7; 5], &[0.7; 3], 10, None).unwrap();
        assert_eq!(h.positive_mass.iter().filter(|&&m| m > 0.0).count(), 1);
        assert_eq!(h.positive_variance, 0.0);
        let h = l2_histogram(&[0.1, 0.4, 0.9], &[0.5, 1.5], 4, None).unwrap();
        assert!((h.positive_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((h.negative_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
