//! Finite-difference check of the training gradients.
//!
//! Each case draws a fresh network, random patches and loss constants,
//! computes the batch gradient with the trainer's code and compares a
//! random subset of parameters against central differences. Parameters
//! whose perturbation changes a max-pool winner sit on a kink and are
//! replaced by another draw.

use std::rc::Rc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::loss::{gap_loss, l2_distance, Label, LossConfig, LossKind, PairSample, TripletSample};
use crate::net::{ForwardCache, LayerSpec, NetworkParams};
use crate::trainer::{pair_batch_gradients, triplet_batch_gradients, PairCandidate, TripletCandidate};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub cases: usize,
    pub params_per_case: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            cases: 100,
            params_per_case: 8,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub kind: LossKind,
    pub cases: usize,
    /// Worst `‖g_a − g_n‖ / max(‖g_a‖, ‖g_n‖)` over cases.
    pub max_relative_error: f64,
    /// Cases whose relative error exceeded the tolerance.
    pub failures: usize,
    /// Parameters redrawn because the step crossed a max-pool kink.
    pub kink_skips: usize,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

fn random_patch(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Patches and loss constants of one case.
enum Case {
    Pairs {
        anchor: Vec<f64>,
        positive: Vec<f64>,
        negative: Vec<f64>,
        cfg: LossConfig,
    },
    Triplet {
        anchor: Vec<f64>,
        positive: Vec<f64>,
        negative: Vec<f64>,
        cfg: LossConfig,
    },
}

impl Case {
    fn patches(&self) -> [&[f64]; 3] {
        match self {
            Case::Pairs { anchor, positive, negative, .. } | Case::Triplet { anchor, positive, negative, .. } => {
                [anchor, positive, negative]
            }
        }
    }

    /// Mean batch loss computed directly from the three features.
    fn loss(&self, net: &NetworkParams) -> Result<f64> {
        let [a, p, n] = self.patches();
        let (fa, fp, fn_) = (net.forward(a)?, net.forward(p)?, net.forward(n)?);
        let (dp, dn) = (l2_distance(&fa, &fp)?, l2_distance(&fa, &fn_)?);
        Ok(match self {
            Case::Pairs { cfg, .. } => {
                0.5 * (cfg.pair_loss(dp, Label::Positive).loss + cfg.pair_loss(dn, Label::Negative).loss)
            }
            Case::Triplet { cfg, .. } => gap_loss(dp, dn, cfg.gap).loss,
        })
    }

    fn analytic(&self, net: &NetworkParams) -> Result<Vec<f64>> {
        let [a, p, n] = self.patches();
        let ca = Rc::new(net.forward_cached(a)?);
        let cp = Rc::new(net.forward_cached(p)?);
        let cn = Rc::new(net.forward_cached(n)?);
        let dp = l2_distance(ca.feature(), cp.feature())?;
        let dn = l2_distance(ca.feature(), cn.feature())?;
        let grads = match self {
            Case::Pairs { cfg, .. } => {
                let batch = [
                    PairCandidate {
                        sample: PairSample::positive(dp),
                        first: ca.clone(),
                        second: cp,
                    },
                    PairCandidate {
                        sample: PairSample::negative(dn, 1),
                        first: ca,
                        second: cn,
                    },
                ];
                pair_batch_gradients(net, &batch, cfg)?.1
            }
            Case::Triplet { cfg, .. } => {
                let batch = [TripletCandidate {
                    sample: TripletSample {
                        positive: PairSample::positive(dp),
                        negative: PairSample::negative(dn, 1),
                    },
                    anchor: ca,
                    positive: cp,
                    negative: cn,
                }];
                triplet_batch_gradients(net, &batch, cfg)?.1
            }
        };
        Ok(grads.flatten())
    }

    fn pool_pattern(&self, net: &NetworkParams) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        for p in self.patches() {
            let cache: ForwardCache = net.forward_cached(p)?;
            for a in cache.pool_argmax() {
                out.extend_from_slice(a);
            }
        }
        Ok(out)
    }
}

/// Draws loss constants so that every ramp argument stays at least a
/// quarter of its scale away from zero. One negative in four is inactive.
fn draw_case(kind: LossKind, net: &NetworkParams, rng: &mut ChaCha8Rng) -> Result<Case> {
    let len = net.receptive_field() * net.receptive_field() * net.in_channels();
    let (anchor, positive, negative) = (random_patch(rng, len), random_patch(rng, len), random_patch(rng, len));
    let fa = net.forward(&anchor)?;
    let dp = l2_distance(&fa, &net.forward(&positive)?)?;
    let dn = l2_distance(&fa, &net.forward(&negative)?)?;
    let scale = dp.max(dn).max(1e-3);
    let active = rng.random_bool(0.75);
    let offset = scale * rng.random_range(0.25..1.0);
    let mut cfg = LossConfig {
        kind,
        ..LossConfig::default()
    };
    match kind {
        LossKind::Hinge | LossKind::HingeHardMined | LossKind::Thresholded => {
            cfg.threshold = if kind == LossKind::Thresholded {
                dp * rng.random_range(0.0..0.75)
            } else {
                0.0
            };
            // Negative ramp argument is m − (dn − t).
            let shifted = dn - cfg.threshold;
            cfg.margin = if active { shifted + offset } else { shifted - offset };
            if cfg.margin <= 0.0 {
                cfg.margin = shifted + offset;
            }
            Ok(Case::Pairs { anchor, positive, negative, cfg })
        }
        LossKind::Gap => {
            cfg.gap = dn - dp + offset;
            if cfg.gap <= 0.0 {
                // Swap roles so the gap stays positive.
                return Ok(Case::Triplet {
                    anchor,
                    positive: negative,
                    negative: positive,
                    cfg: LossConfig {
                        gap: dp - dn + offset,
                        ..cfg
                    },
                });
            }
            Ok(Case::Triplet { anchor, positive, negative, cfg })
        }
    }
}

/// Runs `cfg.cases` random cases for one loss kind on freshly initialised
/// networks with the given layers.
pub fn check_loss(kind: LossKind, layers: &[LayerSpec], cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.cases == 0 || cfg.params_per_case == 0 || !(cfg.step > 0.0) {
        return Err(Error::InvalidArgument("gradcheck needs cases, parameters and a positive step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (kind as u64).wrapping_mul(0x9e37_79b9));
    let mut report = GradcheckReport {
        kind,
        cases: 0,
        max_relative_error: 0.0,
        failures: 0,
        kink_skips: 0,
        tolerance: cfg.tolerance,
    };
    for _ in 0..cfg.cases {
        let net = NetworkParams::init(layers.to_vec(), rng.random())?;
        let case = draw_case(kind, &net, &mut rng)?;
        let analytic = case.analytic(&net)?;
        let base = net.flatten();
        let pattern = case.pool_pattern(&net)?;
        let indices: Vec<usize> = (0..base.len()).collect();
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        let mut checked = 0;
        let mut attempts = 0;
        while checked < cfg.params_per_case {
            attempts += 1;
            if attempts > 50 * cfg.params_per_case {
                return Err(Error::Other("gradcheck could not find kink-free parameters".into()));
            }
            let i = *indices.choose(&mut rng).expect("network has parameters");
            let mut plus = net.clone();
            plus.set_flat(i, base[i] + cfg.step);
            let mut minus = net.clone();
            minus.set_flat(i, base[i] - cfg.step);
            if case.pool_pattern(&plus)? != pattern || case.pool_pattern(&minus)? != pattern {
                report.kink_skips += 1;
                continue;
            }
            let numeric = (case.loss(&plus)? - case.loss(&minus)?) / (2.0 * cfg.step);
            diff2 += (analytic[i] - numeric).powi(2);
            a2 += analytic[i].powi(2);
            n2 += numeric.powi(2);
            checked += 1;
        }
        let denom = a2.sqrt().max(n2.sqrt());
        let rel = if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom };
        report.cases += 1;
        report.max_relative_error = report.max_relative_error.max(rel);
        if !(rel <= cfg.tolerance) {
            report.failures += 1;
        }
    }
    Ok(report)
}

pub const ALL_KINDS: [LossKind; 4] = [LossKind::Hinge, LossKind::Thresholded, LossKind::Gap, LossKind::HingeHardMined];

pub fn check_all(layers: &[LayerSpec], cfg: &GradcheckConfig) -> Result<Vec<GradcheckReport>> {
    ALL_KINDS.iter().map(|&k| check_loss(k, layers, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::compact_architecture;

    #[test]
    fn compact_net_passes_small_run() {
        let cfg = GradcheckConfig {
            cases: 5,
            params_per_case: 4,
            ..GradcheckConfig::default()
        };
        for r in check_all(&compact_architecture(1), &cfg).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }
}
