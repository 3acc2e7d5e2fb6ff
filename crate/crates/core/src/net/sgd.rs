use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkParams};
use crate::error::{Error, Result};

/// Learning rate interpolated linearly in log space from `lr_start` (first
/// batch) to `lr_end` (last batch).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_batches: usize,
}

impl LrSchedule {
    pub fn new(lr_start: f64, lr_end: f64, total_batches: usize) -> Result<Self> {
        if !(lr_end > 0.0 && lr_start >= lr_end && lr_start.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rates must satisfy lr_start >= lr_end > 0 (got {lr_start}, {lr_end})"
            )));
        }
        if total_batches == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one batch".into()));
        }
        Ok(Self {
            lr_start,
            lr_end,
            total_batches,
        })
    }

    pub fn lr(&self, batch_index: usize) -> f64 {
        if batch_index == 0 || self.total_batches == 1 {
            return self.lr_start;
        }
        if batch_index + 1 == self.total_batches {
            return self.lr_end;
        }
        let frac = batch_index as f64 / (self.total_batches - 1) as f64;
        let (a, b) = (self.lr_start.ln(), self.lr_end.ln());
        (a + frac * (b - a)).exp()
    }
}

/// Plain SGD; momentum and weight decay are available but off by default.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(schedule: LrSchedule) -> Self {
        Self {
            schedule,
            momentum: 0.0,
            weight_decay: 0.0,
            velocity: None,
        }
    }

    pub fn with_momentum(mut self, momentum: f64, weight_decay: f64) -> Self {
        self.momentum = momentum;
        self.weight_decay = weight_decay;
        self
    }

    /// `params -= lr(batch_index) * grads`. Rejects non-finite gradients
    /// without touching the parameters.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients, batch_index: usize) -> Result<f64> {
        if batch_index >= self.schedule.total_batches {
            return Err(Error::InvalidArgument(format!(
                "batch {batch_index} beyond schedule of {} batches",
                self.schedule.total_batches
            )));
        }
        check_finite(grads)?;
        let lr = self.schedule.lr(batch_index);
        let use_velocity = self.momentum != 0.0 || self.weight_decay != 0.0;
        if !use_velocity {
            for (p, g) in params.blocks_mut().iter_mut().zip(&grads.blocks) {
                p.weight.iter_mut().zip(&g.weight).for_each(|(w, d)| *w -= lr * d);
                p.bias.iter_mut().zip(&g.bias).for_each(|(w, d)| *w -= lr * d);
            }
            return Ok(lr);
        }
        let velocity = self.velocity.get_or_insert_with(|| Gradients::zeros_like(params));
        let (mu, wd) = (self.momentum, self.weight_decay);
        for ((p, g), v) in params
            .blocks_mut()
            .iter_mut()
            .zip(&grads.blocks)
            .zip(&mut velocity.blocks)
        {
            for ((w, d), vel) in p.weight.iter_mut().zip(&g.weight).zip(&mut v.weight) {
                *vel = mu * *vel + d + wd * *w;
                *w -= lr * *vel;
            }
            for ((w, d), vel) in p.bias.iter_mut().zip(&g.bias).zip(&mut v.bias) {
                *vel = mu * *vel + d;
                *w -= lr * *vel;
            }
        }
        Ok(lr)
    }
}

pub fn check_finite(grads: &Gradients) -> Result<()> {
    for (block, g) in grads.blocks.iter().enumerate() {
        let mut bad = g.weight.iter().chain(&g.bias).enumerate().filter(|(_, v)| !v.is_finite());
        if let Some((first, _)) = bad.next() {
            return Err(Error::NonFiniteGradient {
                block,
                count: 1 + bad.count(),
                first,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::compact_architecture;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = LrSchedule::new(0.004, 0.0004, 101).unwrap();
        assert!((s.lr(0) - 0.004).abs() < 1e-15);
        assert!((s.lr(100) - 0.0004).abs() < 1e-15);
        assert!((s.lr(50) - (0.004f64 * 0.0004).sqrt()).abs() < 1e-15);
        assert!((s.lr(50) - 1.2649e-3).abs() < 1e-7);
    }

    #[test]
    fn schedule_is_geometric() {
        let s = LrSchedule::new(0.004, 0.0004, 11).unwrap();
        let ratio = s.lr(1) / s.lr(0);
        for i in 1..10 {
            assert!((s.lr(i + 1) / s.lr(i) - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_rejects_bad_rates() {
        assert!(LrSchedule::new(0.0004, 0.004, 10).is_err());
        assert!(LrSchedule::new(0.004, 0.0, 10).is_err());
        assert!(LrSchedule::new(0.004, 0.0004, 0).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = NetworkParams::init(compact_architecture(1), 1).unwrap();
        let before = net.clone();
        let mut sgd = Sgd::new(LrSchedule::new(0.004, 0.0004, 10).unwrap());
        sgd.step(&mut net, &Gradients::zeros_like(&before), 3).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn step_applies_learning_rate() {
        let mut net = NetworkParams::init(compact_architecture(1), 1).unwrap();
        let before = net.flatten();
        let mut g = Gradients::zeros_like(&net);
        g.blocks[0].weight[0] = 2.0;
        let mut sgd = Sgd::new(LrSchedule::new(0.004, 0.0004, 10).unwrap());
        let lr = sgd.step(&mut net, &g, 0).unwrap();
        assert_eq!(lr, 0.004);
        assert!((net.flatten()[0] - (before[0] - 0.008)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut net = NetworkParams::init(compact_architecture(1), 1).unwrap();
        let before = net.clone();
        let mut g = Gradients::zeros_like(&net);
        g.blocks[1].bias[2] = f64::NAN;
        let mut sgd = Sgd::new(LrSchedule::new(0.004, 0.0004, 10).unwrap());
        let err = sgd.step(&mut net, &g, 0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { block: 1, count: 1, .. }));
        assert_eq!(net, before);
        assert!(sgd.step(&mut net, &Gradients::zeros_like(&before), 10).is_err());
    }
}
