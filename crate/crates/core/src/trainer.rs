//! Siamese training loop: candidate sampling, non-zero-loss batch selection
//! or hard mining, batch-mean gradients and the exponential learning-rate
//! schedule.

use std::collections::HashMap;
use std::io::Write;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Point;
use crate::loss::{
    gap_loss, hard_mine, l2_distance, loss_mass, select_batch, Candidate, Label, LossConfig, LossKind, PairSample,
    TripletSample,
};
use crate::net::sgd::{LrSchedule, Sgd};
use crate::net::{compact_architecture, desk_architecture, full_architecture, ForwardCache, Gradients, LayerSpec, NetworkParams, SharedCache};
use crate::sampler::{sample_multiresolution, ImagePair, NegativeOffsetDist, PairPyramid, SampleTriplet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Full-size reference layout (56 px patches).
    Full,
    /// Reduced channels and 3×3 kernels (32 px patches).
    Desk,
    /// Small layout for tests (16 px patches).
    Compact,
}

impl Architecture {
    pub fn layers(self) -> Vec<LayerSpec> {
        match self {
            Architecture::Full => full_architecture(1),
            Architecture::Desk => desk_architecture(1),
            Architecture::Compact => compact_architecture(1),
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "desk" => Ok(Self::Desk),
            "compact" => Ok(Self::Compact),
            other => Err(format!("unknown architecture `{other}` (expected full, desk or compact)")),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Desk => "desk",
            Self::Compact => "compact",
        })
    }
}

/// Near/far mixture parameters; `far_cap = None` uses
/// `min(256, image diagonal / 2)` per pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeConfig {
    pub near_probability: f64,
    pub near_radius: u32,
    pub far_cap: Option<f64>,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        let d = NegativeOffsetDist::default();
        Self {
            near_probability: d.near_probability,
            near_radius: d.near_radius,
            far_cap: None,
        }
    }
}

impl NegativeConfig {
    pub fn for_image(&self, width: usize, height: usize) -> NegativeOffsetDist {
        let base = NegativeOffsetDist::for_image(width, height);
        NegativeOffsetDist {
            near_probability: self.near_probability,
            near_radius: self.near_radius,
            far_cap: self.far_cap.unwrap_or(base.far_cap),
            ..base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Back-propagated samples (pairs or triplets); batches = ceil(total / batch).
    pub total_samples: usize,
    pub negative: NegativeConfig,
    pub architecture: Architecture,
    /// 1 trains at full resolution only; `n > 1` adds 50%, 25%, ... levels.
    pub resolution_levels: usize,
    /// Skip zero-loss candidates when filling a batch.
    pub select_nonzero: bool,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            lr_start: 0.004,
            lr_end: 0.0004,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 100,
            total_samples: 50_000,
            negative: NegativeConfig::default(),
            architecture: Architecture::Desk,
            resolution_levels: 1,
            select_nonzero: true,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn batches(&self) -> usize {
        self.total_samples.div_ceil(self.batch_size.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 || self.total_samples == 0 || self.log_every == 0 {
            return Err(Error::InvalidArgument(
                "batch size, total samples and log interval must be >= 1".into(),
            ));
        }
        if self.resolution_levels == 0 {
            return Err(Error::InvalidArgument("at least one resolution level is required".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("momentum must be in [0, 1) and weight decay >= 0".into()));
        }
        LrSchedule::new(self.lr_start, self.lr_end, self.batches())?;
        Ok(())
    }
}

/// Patch pair with the activations of both branches.
#[derive(Clone, Debug)]
pub struct PairCandidate {
    pub sample: PairSample,
    pub first: SharedCache,
    pub second: SharedCache,
}

impl Candidate for PairCandidate {
    fn loss(&self, cfg: &LossConfig) -> f64 {
        self.sample.loss(cfg)
    }

    fn label(&self) -> Option<Label> {
        Some(self.sample.label)
    }
}

/// Anchor, positive and negative with their activations.
#[derive(Clone, Debug)]
pub struct TripletCandidate {
    pub sample: TripletSample,
    pub anchor: SharedCache,
    pub positive: SharedCache,
    pub negative: SharedCache,
}

impl Candidate for TripletCandidate {
    fn loss(&self, cfg: &LossConfig) -> f64 {
        self.sample.loss(cfg)
    }
}

/// `dLoss/dD1` for `d = ||D1 − D2||`; `dLoss/dD2` is its negation.
fn distance_feature_grad(f1: &[f64], f2: &[f64], distance: f64, dloss_dd: f64) -> Vec<f64> {
    if distance == 0.0 || dloss_dd == 0.0 {
        return vec![0.0; f1.len()];
    }
    let s = dloss_dd / distance;
    f1.iter().zip(f2).map(|(a, b)| s * (a - b)).collect()
}

/// Feature gradients keyed by cache identity, so shared anchors are
/// back-propagated once.
struct FeatureGrads {
    order: Vec<SharedCache>,
    grads: HashMap<*const ForwardCache, Vec<f64>>,
}

impl FeatureGrads {
    fn new() -> Self {
        Self {
            order: Vec::new(),
            grads: HashMap::new(),
        }
    }

    fn add(&mut self, cache: &SharedCache, g: &[f64], sign: f64) {
        let key = Rc::as_ptr(cache);
        let slot = self.grads.entry(key).or_insert_with(|| {
            self.order.push(cache.clone());
            vec![0.0; g.len()]
        });
        for (s, v) in slot.iter_mut().zip(g) {
            *s += sign * v;
        }
    }

    fn backprop(self, net: &NetworkParams) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(net);
        for cache in &self.order {
            net.accumulate_backward(cache, &self.grads[&Rc::as_ptr(cache)], &mut grads)?;
        }
        Ok(grads)
    }
}

/// Mean loss and parameter gradient of a batch of pairs.
pub fn pair_batch_gradients(net: &NetworkParams, batch: &[PairCandidate], cfg: &LossConfig) -> Result<(f64, Gradients)> {
    let mut fg = FeatureGrads::new();
    let mut total = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;
    for c in batch {
        let (f1, f2) = (c.first.feature(), c.second.feature());
        let d = l2_distance(f1, f2)?;
        let lv = cfg.pair_loss(d, c.sample.label);
        total += lv.loss;
        let g = distance_feature_grad(f1, f2, d, lv.grad * scale);
        fg.add(&c.first, &g, 1.0);
        fg.add(&c.second, &g, -1.0);
    }
    Ok((total * scale, fg.backprop(net)?))
}

/// Mean gap loss and parameter gradient of a batch of triplets.
pub fn triplet_batch_gradients(net: &NetworkParams, batch: &[TripletCandidate], cfg: &LossConfig) -> Result<(f64, Gradients)> {
    let mut fg = FeatureGrads::new();
    let mut total = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;
    for c in batch {
        let (fa, fp, fnn) = (c.anchor.feature(), c.positive.feature(), c.negative.feature());
        let dp = l2_distance(fa, fp)?;
        let dn = l2_distance(fa, fnn)?;
        let gv = gap_loss(dp, dn, cfg.gap);
        total += gv.loss;
        let gp = distance_feature_grad(fa, fp, dp, gv.grad_pos * scale);
        let gn = distance_feature_grad(fa, fnn, dn, gv.grad_neg * scale);
        fg.add(&c.anchor, &gp, 1.0);
        fg.add(&c.positive, &gp, -1.0);
        fg.add(&c.anchor, &gn, 1.0);
        fg.add(&c.negative, &gn, -1.0);
    }
    Ok((total * scale, fg.backprop(net)?))
}

fn pair_sample(label: Label, distance: f64, t: &SampleTriplet) -> PairSample {
    let s = if label == Label::Positive { &t.positive } else { &t.negative };
    PairSample {
        distance,
        label,
        pixel_distance: s.pixel_distance,
        displacement: s.displacement,
        level: s.resolution_level,
    }
}

/// Draws triplets from the training pairs and runs the network on their
/// patches.
pub struct CandidateSource {
    window: usize,
    pyramids: Vec<PairPyramid>,
    dists: Vec<NegativeOffsetDist>,
    rng: ChaCha8Rng,
    pending: Option<PairCandidate>,
    error: Option<Error>,
}

impl CandidateSource {
    /// `pairs` are normalized here; the pyramids hold `levels` resolutions
    /// and patches have side `window`.
    pub fn new(
        window: usize,
        pairs: &[ImagePair],
        negative: &NegativeConfig,
        levels: usize,
        seed: u64,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("training needs at least one image pair".into()));
        }
        let mut pyramids = Vec::with_capacity(pairs.len());
        let mut dists = Vec::with_capacity(pairs.len());
        for p in pairs {
            let dist = negative.for_image(p.width(), p.height());
            dist.validate()?;
            dists.push(dist);
            pyramids.push(PairPyramid::new(p.normalized(), levels, window)?);
        }
        Ok(Self {
            window,
            pyramids,
            dists,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            error: None,
        })
    }

    fn features(net: &NetworkParams, pair: &ImagePair, image_two: bool, p: Point) -> Result<SharedCache> {
        let img = if image_two { &pair.i2 } else { &pair.i1 };
        Ok(Rc::new(net.forward_cached(&img.window(p, net.receptive_field()))?))
    }

    /// Drops a buffered candidate computed with older parameters.
    pub fn discard_pending(&mut self) {
        self.pending = None;
    }

    /// Next triplet with activations for anchor, positive and negative.
    pub fn next_triplet(&mut self, net: &NetworkParams) -> Result<(SampleTriplet, SharedCache, SharedCache, SharedCache)> {
        if net.receptive_field() != self.window {
            return Err(Error::Shape(format!(
                "network patch size {} differs from sampler window {}",
                net.receptive_field(),
                self.window
            )));
        }
        let k = self.rng.random_range(0..self.pyramids.len());
        let t = sample_multiresolution(&self.pyramids[k], &self.dists[k], self.window, &mut self.rng)?;
        let pair = &self.pyramids[k].levels[t.positive.resolution_level];
        let a = Self::features(net, pair, false, t.positive.p1)?;
        let p = Self::features(net, pair, true, t.positive.p2)?;
        let n = Self::features(net, pair, true, t.negative.p2)?;
        Ok((t, a, p, n))
    }

    pub fn next_triplet_candidate(&mut self, net: &NetworkParams) -> Result<TripletCandidate> {
        let (t, a, p, n) = self.next_triplet(net)?;
        let dp = l2_distance(a.feature(), p.feature())?;
        let dn = l2_distance(a.feature(), n.feature())?;
        Ok(TripletCandidate {
            sample: TripletSample {
                positive: pair_sample(Label::Positive, dp, &t),
                negative: pair_sample(Label::Negative, dn, &t),
            },
            anchor: a,
            positive: p,
            negative: n,
        })
    }

    /// Alternates positive and negative pairs of consecutive triplets.
    pub fn next_pair_candidate(&mut self, net: &NetworkParams) -> Result<PairCandidate> {
        if let Some(c) = self.pending.take() {
            return Ok(c);
        }
        let (t, a, p, n) = self.next_triplet(net)?;
        let dp = l2_distance(a.feature(), p.feature())?;
        let dn = l2_distance(a.feature(), n.feature())?;
        self.pending = Some(PairCandidate {
            sample: pair_sample(Label::Negative, dn, &t),
            first: a.clone(),
            second: n,
        });
        Ok(PairCandidate {
            sample: pair_sample(Label::Positive, dp, &t),
            first: a,
            second: p,
        })
    }

    /// Stream of pair candidates that stops at the first sampling error
    /// (retrieved with [`Self::take_error`]).
    pub fn pairs<'s>(&'s mut self, net: &'s NetworkParams) -> impl Iterator<Item = PairCandidate> + 's {
        std::iter::from_fn(move || match self.next_pair_candidate(net) {
            Ok(c) => Some(c),
            Err(e) => {
                self.error = Some(e);
                None
            }
        })
    }

    pub fn triplets<'s>(&'s mut self, net: &'s NetworkParams) -> impl Iterator<Item = TripletCandidate> + 's {
        std::iter::from_fn(move || match self.next_triplet_candidate(net) {
            Ok(c) => Some(c),
            Err(e) => {
                self.error = Some(e);
                None
            }
        })
    }

    pub fn take_error(&mut self) -> Option<Error> {
        self.error.take()
    }
}

/// One row of the training log, aggregated over `log_every` batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub batch: usize,
    pub lr: f64,
    pub mean_loss_pos: f64,
    pub mean_loss_neg: f64,
    pub rejection_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub batches: usize,
    pub samples_backpropagated: usize,
    pub candidates_scanned: usize,
    pub candidates_rejected: usize,
    /// Positive / negative loss mass of each hard-mined batch.
    pub mining_mass_ratio: Vec<f64>,
}

impl TrainStats {
    /// Fraction of scanned candidates that were back-propagated.
    pub fn backpropagated_fraction(&self) -> f64 {
        if self.candidates_scanned == 0 {
            return 0.0;
        }
        self.samples_backpropagated as f64 / self.candidates_scanned as f64
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: Vec<LogRow>,
    pub stats: TrainStats,
}

#[derive(Default)]
struct Window {
    pos_loss: f64,
    pos_n: usize,
    neg_loss: f64,
    neg_n: usize,
    scanned: usize,
    rejected: usize,
}

impl Window {
    fn add_pairs(&mut self, batch: &[PairCandidate], cfg: &LossConfig) {
        for c in batch {
            let l = c.loss(cfg);
            match c.sample.label {
                Label::Positive => {
                    self.pos_loss += l;
                    self.pos_n += 1;
                }
                Label::Negative => {
                    self.neg_loss += l;
                    self.neg_n += 1;
                }
            }
        }
    }

    fn row(&self, batch: usize, lr: f64) -> LogRow {
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        LogRow {
            batch,
            lr,
            mean_loss_pos: mean(self.pos_loss, self.pos_n),
            mean_loss_neg: mean(self.neg_loss, self.neg_n),
            rejection_ratio: if self.scanned == 0 {
                0.0
            } else {
                self.rejected as f64 / self.scanned as f64
            },
        }
    }
}

/// Trains a freshly initialized network (seeded by `cfg.seed`).
pub fn train(pairs: &[ImagePair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let net = NetworkParams::init(cfg.architecture.layers(), cfg.seed)?;
    train_from(net, pairs, cfg)
}

/// Continues training `net` on `pairs`.
pub fn train_from(mut net: NetworkParams, pairs: &[ImagePair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let batches = cfg.batches();
    let mut sgd = Sgd::new(LrSchedule::new(cfg.lr_start, cfg.lr_end, batches)?).with_momentum(cfg.momentum, cfg.weight_decay);
    let mut stats = TrainStats::default();
    let mut log = Vec::new();
    let mut window = Window::default();
    let mut source = CandidateSource::new(
        net.receptive_field(),
        pairs,
        &cfg.negative,
        cfg.resolution_levels,
        cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;
    for b in 0..batches {
        source.discard_pending();
        let (scanned, rejected, grads) = match cfg.loss.kind {
            LossKind::Gap => {
                let (batch, scanned, rejected) = if cfg.select_nonzero {
                    let sel = select_batch(source.triplets(&net), &cfg.loss, cfg.batch_size);
                    (sel.batch, sel.scanned, sel.rejected)
                } else {
                    let batch: Vec<_> = source.triplets(&net).take(cfg.batch_size).collect();
                    let zero = batch.iter().filter(|c| c.loss(&cfg.loss) == 0.0).count();
                    let n = batch.len();
                    (batch, n, zero)
                };
                if let Some(e) = source.take_error() {
                    return Err(e);
                }
                for c in &batch {
                    let l = c.loss(&cfg.loss);
                    window.pos_loss += l;
                    window.neg_loss += l;
                }
                window.pos_n += batch.len();
                window.neg_n += batch.len();
                stats.samples_backpropagated += batch.len();
                (scanned, rejected, triplet_batch_gradients(&net, &batch, &cfg.loss)?.1)
            }
            kind => {
                let (batch, scanned, rejected) = if kind == LossKind::HingeHardMined {
                    let pool: Vec<_> = source.pairs(&net).take(cfg.batch_size * cfg.loss.mining_factor).collect();
                    let n = pool.len();
                    let mined = hard_mine(pool, &cfg.loss, cfg.batch_size);
                    let (mp, mn) = loss_mass(&mined, &cfg.loss);
                    stats.mining_mass_ratio.push(if mn > 0.0 { mp / mn } else { f64::INFINITY });
                    (mined, n, n - cfg.batch_size.min(n))
                } else if cfg.select_nonzero {
                    let sel = select_batch(source.pairs(&net), &cfg.loss, cfg.batch_size);
                    (sel.batch, sel.scanned, sel.rejected)
                } else {
                    let batch: Vec<_> = source.pairs(&net).take(cfg.batch_size).collect();
                    let zero = batch.iter().filter(|c| c.loss(&cfg.loss) == 0.0).count();
                    let n = batch.len();
                    (batch, n, zero)
                };
                if let Some(e) = source.take_error() {
                    return Err(e);
                }
                window.add_pairs(&batch, &cfg.loss);
                stats.samples_backpropagated += batch.len();
                (scanned, rejected, pair_batch_gradients(&net, &batch, &cfg.loss)?.1)
            }
        };
        window.scanned += scanned;
        window.rejected += rejected;
        stats.candidates_scanned += scanned;
        stats.candidates_rejected += rejected;
        let lr = sgd.step(&mut net, &grads, b)?;
        stats.batches += 1;
        if (b + 1) % cfg.log_every == 0 || b + 1 == batches {
            log.push(window.row(b + 1, lr));
            window = Window::default();
        }
    }
    Ok(TrainOutcome { params: net, log, stats })
}

/// Fraction of non-zero-loss candidates among the first `count` pair
/// candidates drawn from `pairs` with seed `seed`, under the current net.
pub fn nonzero_fraction(
    net: &NetworkParams,
    pairs: &[ImagePair],
    negative: &NegativeConfig,
    loss: &LossConfig,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let mut source = CandidateSource::new(net.receptive_field(), pairs, negative, 1, seed)?;
    let cands: Vec<_> = source.pairs(net).take(count).collect();
    if let Some(e) = source.take_error() {
        return Err(e);
    }
    if cands.is_empty() {
        return Err(Error::EmptyDomain("no candidates drawn".into()));
    }
    Ok(cands.iter().filter(|c| c.loss(loss) > 0.0).count() as f64 / cands.len() as f64)
}

pub fn write_log_csv<W: Write>(out: &mut W, log: &[LogRow]) -> std::io::Result<()> {
    writeln!(out, "batch,lr,mean_loss_pos,mean_loss_neg,rejection_ratio")?;
    for r in log {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.batch, r.lr, r.mean_loss_pos, r.mean_loss_neg, r.rejection_ratio
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_pair, SynthConfig};

    fn tiny_pairs() -> Vec<ImagePair> {
        (0..2)
            .map(|s| {
                generate_synthetic_pair(&SynthConfig {
                    seed: s,
                    width: 48,
                    height: 48,
                    max_displacement: 4.0,
                    occluder_count: 1,
                    ..Default::default()
                })
                .unwrap()
            })
            .collect()
    }

    fn tiny_cfg(kind: LossKind) -> TrainConfig {
        TrainConfig {
            loss: LossConfig { kind, ..Default::default() },
            architecture: Architecture::Compact,
            batch_size: 8,
            total_samples: 24,
            log_every: 2,
            ..Default::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let pairs = tiny_pairs();
        let cfg = tiny_cfg(LossKind::Thresholded);
        let a = train(&pairs, &cfg).unwrap();
        let b = train(&pairs, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 2);
        assert_eq!(a.stats.batches, 3);
    }

    #[test]
    fn all_loss_kinds_run() {
        let pairs = tiny_pairs();
        for kind in [LossKind::Hinge, LossKind::Gap, LossKind::HingeHardMined] {
            let mut cfg = tiny_cfg(kind);
            cfg.loss.mining_factor = 2;
            let out = train(&pairs, &cfg).unwrap();
            assert!(out.params.flatten().iter().all(|v| v.is_finite()));
            if kind == LossKind::HingeHardMined {
                assert_eq!(out.stats.mining_mass_ratio.len(), 3);
            }
        }
    }

    #[test]
    fn shared_anchor_gradient_equals_separate_backprop() {
        let net = NetworkParams::init(compact_architecture(1), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut patch = || -> Vec<f64> { (0..256).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let a = Rc::new(net.forward_cached(&patch()).unwrap());
        let p = Rc::new(net.forward_cached(&patch()).unwrap());
        let n = Rc::new(net.forward_cached(&patch()).unwrap());
        let cfg = LossConfig::hinge();
        let mk = |label, second: &SharedCache| PairCandidate {
            sample: PairSample {
                distance: l2_distance(a.feature(), second.feature()).unwrap(),
                label,
                pixel_distance: 0,
                displacement: 0.0,
                level: 0,
            },
            first: a.clone(),
            second: second.clone(),
        };
        let batch = vec![mk(Label::Positive, &p), mk(Label::Negative, &n)];
        let (_, shared) = pair_batch_gradients(&net, &batch, &cfg).unwrap();
        let mut sum = Gradients::zeros_like(&net);
        for c in &batch {
            let (_, g) = pair_batch_gradients(&net, std::slice::from_ref(c), &cfg).unwrap();
            sum.add(&g);
        }
        sum.scale(0.5);
        for (x, y) in shared.flatten().iter().zip(sum.flatten()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
