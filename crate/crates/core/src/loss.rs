//! Pairwise embedding losses on feature distances, non-zero-loss batch
//! selection and hard mining.
//!
//! All losses are functions of the L2 distance `d` between two feature
//! vectors. Each returns the loss together with its derivative with respect
//! to `d`; at a kink where the loss is exactly zero the derivative is 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Hinge,
    Thresholded,
    Gap,
    HingeHardMined,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Hinge => "hinge",
            LossKind::Thresholded => "thresholded",
            LossKind::Gap => "gap",
            LossKind::HingeHardMined => "hinge_hard_mined",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hinge" => Ok(LossKind::Hinge),
            "thresholded" => Ok(LossKind::Thresholded),
            "gap" => Ok(LossKind::Gap),
            "hinge_hard_mined" => Ok(LossKind::HingeHardMined),
            other => Err(format!(
                "unknown loss kind `{other}` (expected hinge, thresholded, gap or hinge_hard_mined)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Margin `m`.
    pub margin: f64,
    /// Threshold `t` of the thresholded loss.
    pub threshold: f64,
    /// Gap `g` of the gap loss.
    pub gap: f64,
    pub mining_factor: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Thresholded,
            margin: 1.0,
            threshold: 0.3,
            gap: 0.4,
            mining_factor: 1,
        }
    }
}

impl LossConfig {
    pub fn hinge() -> Self {
        Self {
            kind: LossKind::Hinge,
            ..Self::default()
        }
    }

    pub fn thresholded(threshold: f64) -> Self {
        Self {
            kind: LossKind::Thresholded,
            threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::InvalidArgument(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.threshold >= 0.0 && self.threshold < self.margin / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must satisfy 0 <= t < m/2, got t={} m={}",
                self.threshold, self.margin
            )));
        }
        if !(self.gap > 0.0) {
            return Err(Error::InvalidArgument(format!("gap must be > 0, got {}", self.gap)));
        }
        if self.mining_factor == 0 {
            return Err(Error::InvalidArgument("mining factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Loss of a single pair under this config. The gap loss is defined on
    /// triplets only; a lone pair falls back to the thresholded loss with
    /// the matching threshold `t = (1 - g) / 2`.
    pub fn pair_loss(&self, distance: f64, label: Label) -> LossValue {
        match self.kind {
            LossKind::Hinge | LossKind::HingeHardMined => hinge_loss(distance, label, self.margin),
            LossKind::Thresholded => thresholded_loss(distance, label, self.margin, self.threshold),
            LossKind::Gap => thresholded_loss(distance, label, self.margin, gap_equivalent_threshold(self.gap)),
        }
    }
}

/// Threshold of the thresholded loss whose positive/negative gap equals `g`
/// (`g = m - 2t` for `m = 1`).
pub fn gap_equivalent_threshold(gap: f64) -> f64 {
    ((1.0 - gap) / 2.0).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

/// One patch pair as seen by the losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample {
    pub distance: f64,
    pub label: Label,
    /// Pixel distance between `p2` and the true match (0 for positives).
    pub pixel_distance: u32,
    /// Flow displacement magnitude between `p1` and its true match.
    pub displacement: f64,
    pub level: usize,
}

impl PairSample {
    pub fn positive(distance: f64) -> Self {
        Self {
            distance,
            label: Label::Positive,
            pixel_distance: 0,
            displacement: 0.0,
            level: 0,
        }
    }

    pub fn negative(distance: f64, pixel_distance: u32) -> Self {
        Self {
            distance,
            label: Label::Negative,
            pixel_distance,
            displacement: 0.0,
            level: 0,
        }
    }
}

/// Loss value and `dLoss/dd`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub grad: f64,
}

#[inline]
fn ramp(x: f64) -> LossValue {
    if x > 0.0 {
        LossValue { loss: x, grad: 1.0 }
    } else {
        LossValue { loss: 0.0, grad: 0.0 }
    }
}

#[inline]
fn neg_ramp(x: f64) -> LossValue {
    let v = ramp(x);
    LossValue {
        loss: v.loss,
        grad: -v.grad,
    }
}

/// `‖a − b‖₂`.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Gradient of `‖a − b‖₂` with respect to `a` (the gradient for `b` is its
/// negation). Taken as zero at `a = b`.
pub fn l2_distance_grad(a: &[f64], b: &[f64], distance: f64) -> Vec<f64> {
    if distance == 0.0 {
        return vec![0.0; a.len()];
    }
    a.iter().zip(b).map(|(x, y)| (x - y) / distance).collect()
}

/// Hinge embedding loss: `d` for positives, `max(0, m − d)` for negatives.
pub fn hinge_loss(distance: f64, label: Label, margin: f64) -> LossValue {
    match label {
        Label::Positive => ramp(distance),
        Label::Negative => neg_ramp(margin - distance),
    }
}

/// Thresholded hinge loss: `max(0, d − t)` for positives and
/// `max(0, m − (d − t))` for negatives, which keeps the decision boundary at
/// `m / 2` for every `t`.
pub fn thresholded_loss(distance: f64, label: Label, margin: f64, threshold: f64) -> LossValue {
    match label {
        Label::Positive => ramp(distance - threshold),
        Label::Negative => neg_ramp(margin - (distance - threshold)),
    }
}

/// Gap loss value with gradients for both distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapValue {
    pub loss: f64,
    pub grad_pos: f64,
    pub grad_neg: f64,
}

/// `max(0, d⁺ − d⁻ + g)`. The negative pair receives the reversed gradient
/// of the positive pair.
pub fn gap_loss(pos_distance: f64, neg_distance: f64, gap: f64) -> GapValue {
    let v = ramp(pos_distance - neg_distance + gap);
    GapValue {
        loss: v.loss,
        grad_pos: v.grad,
        grad_neg: -v.grad,
    }
}

/// Anything `select_batch` / `hard_mine` can rank by loss.
pub trait Candidate {
    fn loss(&self, cfg: &LossConfig) -> f64;

    /// Label for positive/negative bookkeeping; `None` for triplets.
    fn label(&self) -> Option<Label> {
        None
    }
}

impl Candidate for PairSample {
    fn loss(&self, cfg: &LossConfig) -> f64 {
        cfg.pair_loss(self.distance, self.label).loss
    }

    fn label(&self) -> Option<Label> {
        Some(self.label)
    }
}

/// Positive and negative pair sharing the same anchor patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletSample {
    pub positive: PairSample,
    pub negative: PairSample,
}

impl Candidate for TripletSample {
    fn loss(&self, cfg: &LossConfig) -> f64 {
        gap_loss(self.positive.distance, self.negative.distance, cfg.gap).loss
    }
}

/// Outcome of scanning a candidate stream for non-zero-loss samples.
#[derive(Clone, Debug)]
pub struct Selection<C> {
    pub batch: Vec<C>,
    pub scanned: usize,
    pub rejected: usize,
    /// Set when the stream ran out before the batch was full.
    pub exhausted: bool,
}

impl<C> Selection<C> {
    pub fn rejection_ratio(&self) -> f64 {
        if self.scanned == 0 {
            0.0
        } else {
            self.rejected as f64 / self.scanned as f64
        }
    }

    /// Fraction of scanned candidates that end up back-propagated.
    pub fn accepted_fraction(&self) -> f64 {
        if self.scanned == 0 {
            0.0
        } else {
            self.batch.len() as f64 / self.scanned as f64
        }
    }
}

/// Pulls candidates until `batch_size` of them have a strictly positive
/// loss. Zero-loss candidates are dropped, so the batch size that reaches
/// back-propagation is constant.
pub fn select_batch<C, I>(stream: I, cfg: &LossConfig, batch_size: usize) -> Selection<C>
where
    C: Candidate,
    I: IntoIterator<Item = C>,
{
    let mut batch = Vec::with_capacity(batch_size);
    let mut scanned = 0;
    let mut rejected = 0;
    let mut stream = stream.into_iter();
    while batch.len() < batch_size {
        let Some(c) = stream.next() else {
            return Selection {
                batch,
                scanned,
                rejected,
                exhausted: true,
            };
        };
        scanned += 1;
        if c.loss(cfg) > 0.0 {
            batch.push(c);
        } else {
            rejected += 1;
        }
    }
    Selection {
        batch,
        scanned,
        rejected,
        exhausted: false,
    }
}

/// Keeps the `batch_size` candidates with the largest loss, ordered by
/// decreasing loss (stable for ties). With no surplus the input is returned
/// unchanged.
pub fn hard_mine<C: Candidate>(candidates: Vec<C>, cfg: &LossConfig, batch_size: usize) -> Vec<C> {
    if candidates.len() <= batch_size {
        return candidates;
    }
    let losses: Vec<f64> = candidates.iter().map(|c| c.loss(cfg)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
    order.truncate(batch_size);
    let mut keep = vec![false; candidates.len()];
    let mut rank = vec![0; candidates.len()];
    for (r, &i) in order.iter().enumerate() {
        keep[i] = true;
        rank[i] = r;
    }
    let mut kept: Vec<(usize, C)> = candidates
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(i, c)| (rank[i], c))
        .collect();
    kept.sort_by_key(|(r, _)| *r);
    kept.into_iter().map(|(_, c)| c).collect()
}

/// Summed loss of positive and negative pairs in a batch; their ratio is
/// the hard-mining stability diagnostic.
pub fn loss_mass<C: Candidate>(batch: &[C], cfg: &LossConfig) -> (f64, f64) {
    batch.iter().fold((0.0, 0.0), |(p, n), c| match c.label() {
        Some(Label::Positive) => (p + c.loss(cfg), n),
        Some(Label::Negative) => (p, n + c.loss(cfg)),
        None => (p, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_examples() {
        assert_eq!(l2_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(l2_distance(&[3.0, 0.0, 0.0], &[0.0, 4.0, 0.0]).unwrap(), 5.0);
        assert!(l2_distance(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(l2_distance_grad(&[1.0, 1.0], &[1.0, 1.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(0.4, Label::Positive, 1.0).loss, 0.4);
        assert_eq!(hinge_loss(1.2, Label::Negative, 1.0), LossValue { loss: 0.0, grad: 0.0 });
        let v = hinge_loss(0.3, Label::Negative, 1.0);
        assert!((v.loss - 0.7).abs() < 1e-15);
        assert_eq!(v.grad, -1.0);
        assert_eq!(hinge_loss(0.0, Label::Positive, 1.0), LossValue { loss: 0.0, grad: 0.0 });
    }

    #[test]
    fn thresholded_examples() {
        assert_eq!(thresholded_loss(0.2, Label::Positive, 1.0, 0.3), LossValue { loss: 0.0, grad: 0.0 });
        let v = thresholded_loss(0.5, Label::Negative, 1.0, 0.3);
        assert!((v.loss - 0.8).abs() < 1e-15);
        assert_eq!(v.grad, -1.0);
        // Negatives keep receiving gradient slightly beyond m.
        assert!(thresholded_loss(1.1, Label::Negative, 1.0, 0.3).loss > 0.0);
    }

    #[test]
    fn gap_examples() {
        let v = gap_loss(0.3, 0.5, 0.4);
        assert!((v.loss - 0.2).abs() < 1e-15);
        assert_eq!((v.grad_pos, v.grad_neg), (1.0, -1.0));
        assert_eq!(gap_loss(0.1, 0.9, 0.4).loss, 0.0);
        assert_eq!(gap_loss(0.1, 0.9, 0.4).grad_neg, 0.0);
    }

    #[test]
    fn gap_matches_threshold_relation() {
        assert!((gap_equivalent_threshold(0.4) - 0.3).abs() < 1e-15);
        assert_eq!(gap_equivalent_threshold(1.5), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { threshold: 0.5, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { margin: 0.0, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { mining_factor: 0, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { gap: 0.0, ..LossConfig::default() }.validate().is_err());
        assert_eq!("gap".parse::<LossKind>().unwrap(), LossKind::Gap);
        assert!("drlim".parse::<LossKind>().is_err());
    }

    #[test]
    fn select_batch_keeps_only_nonzero() {
        let cfg = LossConfig::default();
        let stream = (0..50).map(|i| PairSample::positive(i as f64 / 50.0));
        let sel = select_batch(stream, &cfg, 10);
        assert_eq!(sel.batch.len(), 10);
        assert!(sel.batch.iter().all(|s| s.loss(&cfg) > 0.0));
        // d <= 0.3 is rejected: indices 0..=15
        assert_eq!(sel.rejected, 16);
        assert_eq!(sel.scanned, 26);
        assert!(!sel.exhausted);
    }

    #[test]
    fn select_batch_all_zero_stream() {
        let cfg = LossConfig::default();
        let stream = std::iter::repeat_n(PairSample::positive(0.1), 100);
        let sel = select_batch(stream, &cfg, 100);
        assert!(sel.batch.is_empty());
        assert!(sel.exhausted);
        assert_eq!(sel.rejection_ratio(), 1.0);
    }

    #[test]
    fn hard_mine_examples() {
        let cfg = LossConfig::hinge();
        let cands: Vec<PairSample> = [0.0, 0.1, 0.2, 0.3].iter().map(|&d| PairSample::positive(d)).collect();
        let kept = hard_mine(cands.clone(), &cfg, 2);
        let d: Vec<f64> = kept.iter().map(|c| c.distance).collect();
        assert_eq!(d, vec![0.3, 0.2]);
        assert_eq!(hard_mine(cands.clone(), &cfg, 4), cands);
    }

    #[test]
    fn loss_mass_splits_by_label() {
        let cfg = LossConfig::hinge();
        let batch = [PairSample::positive(0.5), PairSample::negative(0.25, 3)];
        assert_eq!(loss_mass(&batch, &cfg), (0.5, 0.75));
    }
}
