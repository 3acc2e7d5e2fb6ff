//! Coarse-to-fine dense correspondence search over a scale pyramid using
//! random initialization, scanline propagation and local random search,
//! followed by forward-backward consistency filtering.
//!
//! Every update is accepted only when it strictly lowers the match cost, so
//! per-pixel cost never increases and optimal fields are fixed points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::{FeatureMap, Point};
use crate::pyramid::ScalePyramid;

/// `iterations` rounds of propagation + random search with radius `radius`
/// at the finest scale. `subpixel` switches the finest-scale offsets to a
/// half-pixel grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub radius: f32,
    pub iterations: usize,
    pub subpixel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSchedule {
    pub steps: Vec<SearchStep>,
}

impl Default for SearchSchedule {
    /// Four iterations with R = 2, then two refining iterations with R = 1.
    fn default() -> Self {
        Self {
            steps: vec![
                SearchStep {
                    radius: 2.0,
                    iterations: 4,
                    subpixel: false,
                },
                SearchStep {
                    radius: 1.0,
                    iterations: 2,
                    subpixel: true,
                },
            ],
        }
    }
}

impl SearchSchedule {
    /// Default schedule with four more R = 1 iterations appended.
    pub fn extended() -> Self {
        let mut s = Self::default();
        s.steps.push(SearchStep {
            radius: 1.0,
            iterations: 4,
            subpixel: true,
        });
        s
    }

    /// Search radius at pyramid scale `scale` (0 = finest): `2^scale · R`.
    pub fn scaled_radius(radius: f32, scale: usize) -> f32 {
        radius * (1u32 << scale) as f32
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() || self.steps.iter().any(|s| s.iterations == 0 || !(s.radius >= 1.0)) {
            return Err(Error::InvalidArgument(
                "search schedule needs steps with radius >= 1 and at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub schedule: SearchSchedule,
    /// Bound on `|u|` and `|v|`, used for initialization and search.
    pub max_displacement: f32,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            schedule: SearchSchedule::default(),
            max_displacement: 64.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub epsilon: f32,
    pub secondary_enabled: bool,
    pub secondary_seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.5,
            secondary_enabled: false,
            secondary_seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassDirection {
    /// Top-left to bottom-right, taking candidates from left and top.
    Forward,
    /// Bottom-right to top-left, taking candidates from right and bottom.
    Backward,
}

fn l2(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

/// L2 feature distance between `fm1` at `pos` and `fm2` at `pos + disp`,
/// with bilinear interpolation for sub-pixel displacements. Positions
/// outside `fm2` are clamped.
pub fn match_cost(fm1: &FeatureMap, fm2: &FeatureMap, pos: Point, disp: (f32, f32)) -> f32 {
    let mut scratch = vec![0f32; fm2.dim()];
    CostEval::new(fm1, fm2, f32::INFINITY).cost(pos.x as usize, pos.y as usize, disp, &mut scratch)
}

/// Cost evaluation with candidate admissibility checks.
struct CostEval<'a> {
    fm1: &'a FeatureMap,
    fm2: &'a FeatureMap,
    bound: f32,
}

impl<'a> CostEval<'a> {
    fn new(fm1: &'a FeatureMap, fm2: &'a FeatureMap, bound: f32) -> Self {
        Self { fm1, fm2, bound }
    }

    #[inline]
    fn admissible(&self, x: usize, y: usize, (u, v): (f32, f32)) -> bool {
        let (tx, ty) = (x as f32 + u, y as f32 + v);
        u.abs() <= self.bound
            && v.abs() <= self.bound
            && tx >= 0.0
            && ty >= 0.0
            && tx <= (self.fm2.width() - 1) as f32
            && ty <= (self.fm2.height() - 1) as f32
    }

    #[inline]
    fn cost(&self, x: usize, y: usize, (u, v): (f32, f32), scratch: &mut [f32]) -> f32 {
        let a = self.fm1.feature(x, y);
        let (tx, ty) = (x as f32 + u, y as f32 + v);
        if tx.fract() == 0.0 && ty.fract() == 0.0 && tx >= 0.0 && ty >= 0.0 {
            let (ix, iy) = (tx as usize, ty as usize);
            if ix < self.fm2.width() && iy < self.fm2.height() {
                return l2(a, self.fm2.feature(ix, iy));
            }
        }
        self.fm2.sample_bilinear(tx, ty, scratch);
        l2(a, scratch)
    }
}

fn check_maps(fm1: &FeatureMap, fm2: &FeatureMap) -> Result<()> {
    if fm1.dim() != fm2.dim() || fm1.width() != fm2.width() || fm1.height() != fm2.height() {
        return Err(Error::Shape("feature maps to match must share size and dimension".into()));
    }
    Ok(())
}

/// Uniform random integer displacement in `[-max_disp, max_disp]²` per
/// pixel, restricted so the target stays inside the second map.
pub fn init_flow<R: Rng + ?Sized>(fm1: &FeatureMap, fm2: &FeatureMap, rng: &mut R, max_disp: f32) -> Result<FlowField> {
    check_maps(fm1, fm2)?;
    let (w, h) = (fm1.width(), fm1.height());
    let md = max_disp.max(0.0).floor() as i64;
    let eval = CostEval::new(fm1, fm2, f32::INFINITY);
    let mut scratch = vec![0f32; fm1.dim()];
    let mut flow = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let u = rng.random_range((-md).max(-(x as i64))..=md.min((w - 1 - x) as i64));
            let v = rng.random_range((-md).max(-(y as i64))..=md.min((h - 1 - y) as i64));
            let d = (u as f32, v as f32);
            let i = flow.index(x, y);
            flow.u[i] = d.0;
            flow.v[i] = d.1;
            flow.cost[i] = eval.cost(x, y, d, &mut scratch);
        }
    }
    Ok(flow)
}

fn recompute_costs(flow: &mut FlowField, eval: &CostEval<'_>) {
    let mut scratch = vec![0f32; eval.fm1.dim()];
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let i = flow.index(x, y);
            flow.cost[i] = eval.cost(x, y, (flow.u[i], flow.v[i]), &mut scratch);
        }
    }
}

fn propagate_with(flow: &mut FlowField, eval: &CostEval<'_>, direction: PassDirection) -> usize {
    let (w, h) = (flow.width(), flow.height());
    let mut scratch = vec![0f32; eval.fm1.dim()];
    let mut updates = 0;
    let mut visit = |x: usize, y: usize, flow: &mut FlowField| {
        let i = flow.index(x, y);
        let neighbors = match direction {
            PassDirection::Forward => [(x > 0).then(|| i - 1), (y > 0).then(|| i - w)],
            PassDirection::Backward => [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)],
        };
        for n in neighbors.into_iter().flatten() {
            let cand = (flow.u[n], flow.v[n]);
            if cand == (flow.u[i], flow.v[i]) || !eval.admissible(x, y, cand) {
                continue;
            }
            let c = eval.cost(x, y, cand, &mut scratch);
            if c < flow.cost[i] {
                flow.u[i] = cand.0;
                flow.v[i] = cand.1;
                flow.cost[i] = c;
                updates += 1;
            }
        }
    };
    match direction {
        PassDirection::Forward => {
            for y in 0..h {
                for x in 0..w {
                    visit(x, y, flow);
                }
            }
        }
        PassDirection::Backward => {
            for y in (0..h).rev() {
                for x in (0..w).rev() {
                    visit(x, y, flow);
                }
            }
        }
    }
    updates
}

/// One scanline propagation pass. Returns the number of adopted updates.
pub fn propagate(
    flow: &mut FlowField,
    fm1: &FeatureMap,
    fm2: &FeatureMap,
    direction: PassDirection,
    max_disp: f32,
) -> Result<usize> {
    check_maps(fm1, fm2)?;
    Ok(propagate_with(flow, &CostEval::new(fm1, fm2, max_disp), direction))
}

fn random_search_with<R: Rng + ?Sized>(
    flow: &mut FlowField,
    eval: &CostEval<'_>,
    radius: f32,
    step: f32,
    rng: &mut R,
) -> usize {
    let k = (radius / step).floor().max(1.0) as i32;
    let mut scratch = vec![0f32; eval.fm1.dim()];
    let mut updates = 0;
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            let i = flow.index(x, y);
            let du = rng.random_range(-k..=k) as f32 * step;
            let dv = rng.random_range(-k..=k) as f32 * step;
            if du == 0.0 && dv == 0.0 {
                continue;
            }
            let cand = (flow.u[i] + du, flow.v[i] + dv);
            if !eval.admissible(x, y, cand) {
                continue;
            }
            let c = eval.cost(x, y, cand, &mut scratch);
            if c < flow.cost[i] {
                flow.u[i] = cand.0;
                flow.v[i] = cand.1;
                flow.cost[i] = c;
                updates += 1;
            }
        }
    }
    updates
}

/// Tries one random offset on an integer grid within `[-radius, radius]²`
/// per pixel. Returns the number of adopted updates.
pub fn random_search<R: Rng + ?Sized>(
    flow: &mut FlowField,
    fm1: &FeatureMap,
    fm2: &FeatureMap,
    radius: f32,
    max_disp: f32,
    rng: &mut R,
) -> Result<usize> {
    random_search_on_grid(flow, fm1, fm2, radius, 1.0, max_disp, rng)
}

/// [`random_search`] with offsets restricted to multiples of `step`.
#[allow(clippy::too_many_arguments)]
pub fn random_search_on_grid<R: Rng + ?Sized>(
    flow: &mut FlowField,
    fm1: &FeatureMap,
    fm2: &FeatureMap,
    radius: f32,
    step: f32,
    max_disp: f32,
    rng: &mut R,
) -> Result<usize> {
    check_maps(fm1, fm2)?;
    if !(radius >= step && step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "random search needs radius >= step > 0 (got {radius}, {step})"
        )));
    }
    Ok(random_search_with(flow, &CostEval::new(fm1, fm2, max_disp), radius, step, rng))
}

/// Runs the schedule from the coarsest scale down to the finest. Each scale
/// starts from the previous scale's field; the search radius at scale `s`
/// (0 = finest) is `2^s · R`.
pub fn match_scales<R: Rng + ?Sized>(
    pyr1: &ScalePyramid,
    pyr2: &ScalePyramid,
    cfg: &MatchConfig,
    rng: &mut R,
) -> Result<FlowField> {
    cfg.schedule.validate()?;
    if pyr1.is_empty() || pyr1.len() != pyr2.len() {
        return Err(Error::Shape("pyramids must be non-empty and have equal scale counts".into()));
    }
    let coarsest = pyr1.len() - 1;
    let mut flow = init_flow(&pyr1.scales[coarsest], &pyr2.scales[coarsest], rng, cfg.max_displacement)?;
    let mut pass = 0usize;
    for s in (0..pyr1.len()).rev() {
        let (fm1, fm2) = (&pyr1.scales[s], &pyr2.scales[s]);
        check_maps(fm1, fm2)?;
        let eval = CostEval::new(fm1, fm2, cfg.max_displacement);
        if s != coarsest {
            recompute_costs(&mut flow, &eval);
        }
        for step in &cfg.schedule.steps {
            let radius = SearchSchedule::scaled_radius(step.radius, s);
            let grid = if step.subpixel { SearchSchedule::scaled_radius(0.5, s) } else { 1.0 };
            for _ in 0..step.iterations {
                let dir = if pass % 2 == 0 { PassDirection::Forward } else { PassDirection::Backward };
                pass += 1;
                propagate_with(&mut flow, &eval, dir);
                random_search_with(&mut flow, &eval, radius, grid, rng);
            }
        }
    }
    Ok(flow)
}

/// Keeps pixel `x` valid iff `|fwd(x) + bwd(x + fwd(x))| <= epsilon` (with a
/// bilinear lookup into `bwd`) and, when given, the secondary forward field
/// agrees with `fwd` within `epsilon`.
pub fn consistency_filter(
    forward: &FlowField,
    backward: &FlowField,
    secondary: Option<&FlowField>,
    epsilon: f32,
) -> Result<FlowField> {
    let dims = (forward.width(), forward.height());
    if (backward.width(), backward.height()) != dims || secondary.is_some_and(|s| (s.width(), s.height()) != dims) {
        return Err(Error::Shape("flow fields to cross-check differ in size".into()));
    }
    let mut out = forward.clone();
    for y in 0..dims.1 {
        for x in 0..dims.0 {
            let i = forward.index(x, y);
            if !forward.valid[i] {
                continue;
            }
            let (u, v) = forward.get(x, y);
            let back_ok = backward
                .sample_bilinear(x as f32 + u, y as f32 + v)
                .is_some_and(|(bu, bv)| ((u + bu).powi(2) + (v + bv).powi(2)).sqrt() <= epsilon);
            let second_ok = secondary.is_none_or(|s| {
                let (su, sv) = s.get(x, y);
                s.valid[i] && ((u - su).powi(2) + (v - sv).powi(2)).sqrt() <= epsilon
            });
            out.valid[i] = back_ok && second_ok;
        }
    }
    Ok(out)
}

/// Forward, backward and filtered flow between two pyramids.
#[derive(Clone, Debug)]
pub struct FlowEstimate {
    pub forward: FlowField,
    pub backward: FlowField,
    pub secondary: Option<FlowField>,
    pub filtered: FlowField,
}

/// Runs matching in both directions (and the same-feature secondary pass
/// when enabled) and applies the consistency filter.
pub fn estimate_flow(
    pyr1: &ScalePyramid,
    pyr2: &ScalePyramid,
    cfg: &MatchConfig,
    consistency: &ConsistencyConfig,
) -> Result<FlowEstimate> {
    if !(consistency.epsilon >= 0.0) {
        return Err(Error::InvalidArgument("consistency epsilon must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let forward = match_scales(pyr1, pyr2, cfg, &mut rng)?;
    let backward = match_scales(pyr2, pyr1, cfg, &mut rng)?;
    let secondary = if consistency.secondary_enabled {
        let mut rng2 = ChaCha8Rng::seed_from_u64(consistency.secondary_seed);
        Some(match_scales(pyr1, pyr2, cfg, &mut rng2)?)
    } else {
        None
    };
    let filtered = consistency_filter(&forward, &backward, secondary.as_ref(), consistency.epsilon)?;
    Ok(FlowEstimate {
        forward,
        backward,
        secondary,
        filtered,
    })
}

/// Fills invalid pixels with the vector of the nearest valid pixel
/// (breadth-first, 4-connected). Baseline filler for dense evaluation only.
pub fn fill_nearest_valid(flow: &FlowField) -> FlowField {
    let (w, h) = (flow.width(), flow.height());
    let mut out = flow.clone();
    let mut queue: std::collections::VecDeque<usize> = (0..flow.len()).filter(|&i| flow.valid[i]).collect();
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let neighbors = [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ];
        for n in neighbors.into_iter().flatten() {
            if !out.valid[n] {
                out.valid[n] = true;
                out.u[n] = out.u[i];
                out.v[n] = out.v[i];
                queue.push_back(n);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from(w: usize, h: usize, f: impl Fn(usize, usize) -> Vec<f32>) -> FeatureMap {
        let dim = f(0, 0).len();
        let mut fm = FeatureMap::zeros(w, h, dim);
        for y in 0..h {
            for x in 0..w {
                fm.feature_mut(x, y).copy_from_slice(&f(x, y));
            }
        }
        fm
    }

    #[test]
    fn identical_maps_zero_cost() {
        let fm = map_from(6, 6, |x, y| vec![x as f32, (y * y) as f32]);
        assert_eq!(match_cost(&fm, &fm, Point::new(3, 2), (0.0, 0.0)), 0.0);
    }

    #[test]
    fn cost_symmetric_for_integer_displacement() {
        let a = map_from(6, 6, |x, y| vec![x as f32, y as f32 * 0.3]);
        let b = map_from(6, 6, |x, y| vec![(x * y) as f32 * 0.1, 1.0]);
        let c1 = match_cost(&a, &b, Point::new(1, 2), (2.0, 1.0));
        let c2 = match_cost(&b, &a, Point::new(3, 3), (-2.0, -1.0));
        assert_eq!(c1, c2);
    }

    #[test]
    fn init_zero_bound_is_zero_flow() {
        let fm = map_from(5, 5, |x, _| vec![x as f32]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = init_flow(&fm, &fm, &mut rng, 0.0).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&d| d == 0.0));
        assert!(f.cost.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn constant_maps_are_left_alone() {
        let fm = map_from(8, 8, |_, _| vec![0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = init_flow(&fm, &fm, &mut rng, 3.0).unwrap();
        let before = f.clone();
        assert_eq!(propagate(&mut f, &fm, &fm, PassDirection::Forward, 3.0).unwrap(), 0);
        assert_eq!(random_search(&mut f, &fm, &fm, 2.0, 3.0, &mut rng).unwrap(), 0);
        assert_eq!(f, before);
    }

    #[test]
    fn scaled_radii() {
        let r: Vec<f32> = (0..4).map(|s| SearchSchedule::scaled_radius(2.0, s)).collect();
        assert_eq!(r, vec![2.0, 4.0, 8.0, 16.0]);
    }

    #[test]
    fn consistency_identity_and_zero_epsilon() {
        let f = FlowField::zeros(6, 6);
        let out = consistency_filter(&f, &f, None, 1.5).unwrap();
        assert_eq!(out.valid_count(), 36);
        let fwd = FlowField::from_fn(6, 6, |x, _| (if x == 2 { 0.25 } else { 0.0 }, 0.0));
        let bwd = FlowField::zeros(6, 6);
        let strict = consistency_filter(&fwd, &bwd, None, 0.0).unwrap();
        assert_eq!(strict.valid_count(), 30);
    }

    #[test]
    fn secondary_field_must_agree() {
        let f = FlowField::zeros(4, 4);
        let mut s = FlowField::zeros(4, 4);
        s.set(1, 1, 3.0, 0.0);
        let out = consistency_filter(&f, &f, Some(&s), 1.5).unwrap();
        assert_eq!(out.valid_count(), 15);
        assert!(!out.is_valid(1, 1));
    }

    #[test]
    fn fill_nearest_covers_everything() {
        let mut f = FlowField::from_fn(5, 1, |x, _| (x as f32, 0.0));
        f.valid = vec![false, true, false, false, true];
        let filled = fill_nearest_valid(&f);
        assert_eq!(filled.valid_count(), 5);
        assert_eq!(filled.u, vec![1.0, 1.0, 1.0, 4.0, 4.0]);
    }
}
