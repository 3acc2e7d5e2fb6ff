//! Synthetic image pairs with exact dense flow and occlusion masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::Image;
use crate::pyramid::{blur_image, gaussian_kernel};
use crate::sampler::ImagePair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Upper bound on the flow magnitude. Must be below `min(w, h) / 4`.
    pub max_displacement: f32,
    pub occluder_count: usize,
    /// Standard deviation of independent additive noise on each image.
    pub noise: f32,
    /// Number of Gaussian bumps added to the global translation.
    pub bumps: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 96,
            height: 96,
            max_displacement: 8.0,
            occluder_count: 3,
            noise: 0.0,
            bumps: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Rect {
    x0: f32,
    y0: f32,
    x1: f32,
    y1: f32,
}

impl Rect {
    fn contains(&self, x: f32, y: f32) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Band-limited random field: two octaves of blurred white noise rescaled
/// to mean 0.5 and standard deviation 0.2, clamped to `[0, 1]`.
pub fn band_limited_texture<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Image {
    let mut octave = |sigma: f64| {
        let noise = Image::from_fn(width, height, |_, _| rng.sample::<f32, _>(StandardNormal));
        blur_image(&noise, &gaussian_kernel(sigma))
    };
    let fine = octave(1.0);
    let coarse = octave(3.0);
    let mixed = Image::from_fn(width, height, |x, y| fine.get(x, y) + 2.0 * coarse.get(x, y));
    let (mean, std) = mixed.mean_std();
    let scale = if std > 0.0 { 0.2 / std } else { 0.0 };
    Image::from_fn(width, height, |x, y| {
        ((f64::from(mixed.get(x, y)) - mean) * scale + 0.5).clamp(0.0, 1.0) as f32
    })
}

fn smooth_flow<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> FlowField {
    let (w, h) = (cfg.width, cfg.height);
    if cfg.max_displacement <= 0.0 {
        return FlowField::zeros(w, h);
    }
    let md = f64::from(cfg.max_displacement);
    let base = (rng.random_range(-0.5..=0.5) * md, rng.random_range(-0.5..=0.5) * md);
    let side = w.min(h) as f64;
    let bumps: Vec<_> = (0..cfg.bumps)
        .map(|_| {
            let cx = rng.random_range(0.0..w as f64);
            let cy = rng.random_range(0.0..h as f64);
            let sigma = rng.random_range(side / 8.0..=side / 4.0);
            let a = (rng.random_range(-0.5..=0.5) * md, rng.random_range(-0.5..=0.5) * md);
            (cx, cy, sigma, a)
        })
        .collect();
    let mut raw = vec![(0.0f64, 0.0f64); w * h];
    let mut peak = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let (mut u, mut v) = base;
            for &(cx, cy, s, (au, av)) in &bumps {
                let g = (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp();
                u += au * g;
                v += av * g;
            }
            peak = peak.max(u.hypot(v));
            raw[y * w + x] = (u, v);
        }
    }
    let scale = if peak > md { md / peak } else { 1.0 };
    FlowField::from_fn(w, h, |x, y| {
        let (u, v) = raw[y * w + x];
        ((u * scale) as f32, (v * scale) as f32)
    })
}

/// A rectangle of its own texture that sits at `(x0, y0)` in `I1` and moves
/// by the integer offset `(du, dv)` into `I2`.
struct Occluder {
    x0: usize,
    y0: usize,
    du: i64,
    dv: i64,
    patch: Image,
}

impl Occluder {
    fn in_first(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.patch.width() && y < self.y0 + self.patch.height()
    }

    fn rect_in_second(&self) -> Rect {
        let x0 = (self.x0 as i64 + self.du) as f32;
        let y0 = (self.y0 as i64 + self.dv) as f32;
        Rect {
            x0,
            y0,
            x1: x0 + (self.patch.width() - 1) as f32,
            y1: y0 + (self.patch.height() - 1) as f32,
        }
    }
}

/// Textured pair with a smooth background flow and moving occluders.
/// The background is `I1(x) = T(x + flow(x))` for a random texture `T`.
/// Each occluder is a textured rectangle present in both images that
/// translates by its own integer offset; later occluders lie on top. A
/// pixel of `I1` is occluded when its target leaves the image or any
/// bilinear neighbor of the target lies under an occluder above it in `I2`.
pub fn generate_synthetic_pair(cfg: &SynthConfig) -> Result<ImagePair> {
    let (w, h) = (cfg.width, cfg.height);
    if w < 4 || h < 4 {
        return Err(Error::InvalidArgument(format!("synthetic image {w}x{h} is too small")));
    }
    if !(cfg.max_displacement >= 0.0 && cfg.max_displacement < (w.min(h) as f32) / 4.0) {
        return Err(Error::InvalidArgument(format!(
            "max displacement {} must be in [0, {})",
            cfg.max_displacement,
            w.min(h) as f32 / 4.0
        )));
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let texture = band_limited_texture(w, h, &mut rng);
    let mut flow = smooth_flow(cfg, &mut rng);

    // Integer occluder motion keeps the pasted texture exact in both images.
    let reach = (f64::from(cfg.max_displacement) / std::f64::consts::SQRT_2).floor() as i64;
    let mut occluders = Vec::with_capacity(cfg.occluder_count);
    for _ in 0..cfg.occluder_count {
        let rw = rng.random_range(w / 8..=(w / 4).max(w / 8 + 1)).max(2);
        let rh = rng.random_range(h / 8..=(h / 4).max(h / 8 + 1)).max(2);
        let du = rng.random_range(-reach..=reach);
        let dv = rng.random_range(-reach..=reach);
        let x0 = rng.random_range((-du).max(0)..=(w - rw) as i64 - du.max(0)) as usize;
        let y0 = rng.random_range((-dv).max(0)..=(h - rh) as i64 - dv.max(0)) as usize;
        let patch = band_limited_texture(rw, rh, &mut rng);
        occluders.push(Occluder { x0, y0, du, dv, patch });
    }

    let mut i2 = texture.clone();
    for o in &occluders {
        let r = o.rect_in_second();
        for y in 0..o.patch.height() {
            for x in 0..o.patch.width() {
                i2.set(r.x0 as usize + x, r.y0 as usize + y, o.patch.get(x, y));
            }
        }
    }
    let rects: Vec<Rect> = occluders.iter().map(Occluder::rect_in_second).collect();

    let mut i1 = Image::filled(w, h, 0.0);
    let mut occlusion = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let top = occluders.iter().rposition(|o| o.in_first(x, y));
            if let Some(k) = top {
                let o = &occluders[k];
                i1.set(x, y, o.patch.get(x - o.x0, y - o.y0));
                flow.set(x, y, o.du as f32, o.dv as f32);
            } else {
                let (u, v) = flow.get(x, y);
                i1.set(x, y, texture.sample_bilinear(x as f32 + u, y as f32 + v));
            }
            let (u, v) = flow.get(x, y);
            let (tx, ty) = (x as f32 + u, y as f32 + v);
            let inside = tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f32 && ty <= (h - 1) as f32;
            let above = top.map_or(0, |k| k + 1);
            let covered = [(tx.floor(), ty.floor()), (tx.ceil(), ty.floor()), (tx.floor(), ty.ceil()), (tx.ceil(), ty.ceil())]
                .iter()
                .any(|&(nx, ny)| rects[above..].iter().any(|r| r.contains(nx, ny)));
            occlusion[y * w + x] = !inside || covered;
        }
    }

    if cfg.noise > 0.0 {
        for img in [&mut i1, &mut i2] {
            for p in img.data_mut() {
                *p += cfg.noise * rng.sample::<f32, _>(StandardNormal);
            }
        }
    }
    ImagePair::new(i1, i2, flow, occlusion)
}

/// Pairs for seeds `base_seed, base_seed + 1, ...`.
pub fn generate_dataset(cfg: &SynthConfig, count: usize) -> Result<Vec<ImagePair>> {
    (0..count)
        .map(|k| {
            generate_synthetic_pair(&SynthConfig {
                seed: cfg.seed.wrapping_add(k as u64),
                ..*cfg
            })
        })
        .collect()
}
