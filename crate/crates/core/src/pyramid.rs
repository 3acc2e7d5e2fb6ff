//! Full-resolution multi-scale feature maps.
//!
//! Four scales are produced, all at input resolution. In the default mode
//! the two finest scales come from a network run on the full image, the two
//! coarser ones from a second network run on the 50% and 25% images and
//! upsampled. Every map is low-pass filtered before use. The legacy mode
//! derives all scales from the finest features by increasingly strong
//! low-pass filtering only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FeatureMap, Image, Point};
use crate::net::{forward_dense, NetworkParams};

/// Normalized Gaussian taps for `sigma`, truncated at `±ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

pub(crate) fn blur_image(img: &Image, kernel: &[f64]) -> Image {
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (img.width(), img.height());
    let tmp = Image::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &t)| t * f64::from(img.get_clamped(x as i64 + k as i64 - r, y as i64)))
            .sum::<f64>() as f32
    });
    Image::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, &t)| t * f64::from(tmp.get_clamped(x as i64, y as i64 + k as i64 - r)))
            .sum::<f64>() as f32
    })
}

/// Anti-aliased 2:1 reduction: Gaussian blur (σ = 1) followed by bilinear
/// sampling at the center of every 2×2 block. Output pixel `x` corresponds
/// to input coordinate `2x + 0.5`.
pub fn downsample_image(img: &Image, min_side: usize) -> Result<Image> {
    let (w, h) = (img.width() / 2, img.height() / 2);
    if w == 0 || h == 0 || w < min_side || h < min_side {
        return Err(Error::Shape(format!(
            "downsampling {}x{} gives {w}x{h}, below the minimum side {min_side}",
            img.width(),
            img.height()
        )));
    }
    let blurred = blur_image(img, &gaussian_kernel(1.0));
    Ok(Image::from_fn(w, h, |x, y| {
        blurred.sample_bilinear(2.0 * x as f32 + 0.5, 2.0 * y as f32 + 0.5)
    }))
}

/// Bilinear upsampling of every channel by `factor` to `width`×`height`,
/// using the same pixel-center convention as [`downsample_image`].
pub fn upsample_featuremap(fm: &FeatureMap, factor: usize, width: usize, height: usize) -> FeatureMap {
    let mut out = FeatureMap::zeros(width, height, fm.dim());
    out.set_window(fm.window() * factor);
    let f = factor as f32;
    for y in 0..height {
        let sy = (y as f32 + 0.5) / f - 0.5;
        for x in 0..width {
            let sx = (x as f32 + 0.5) / f - 0.5;
            fm.sample_bilinear(sx, sy, out.feature_mut(x, y));
        }
    }
    out
}

/// Separable per-channel Gaussian blur with σ = `0.5 * factor` and clamped
/// borders. A factor of 1 (or less) means no filtering.
pub fn lowpass_featuremap(fm: &FeatureMap, factor: f64) -> FeatureMap {
    if factor <= 1.0 {
        return fm.clone();
    }
    let kernel = gaussian_kernel(0.5 * factor);
    let r = (kernel.len() / 2) as i64;
    let (w, h, dim) = (fm.width(), fm.height(), fm.dim());
    let mut acc = vec![0f64; dim];
    let mut pass = |src: &FeatureMap, horizontal: bool| {
        let mut dst = src.clone();
        for y in 0..h {
            for x in 0..w {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (k, &t) in kernel.iter().enumerate() {
                    let off = k as i64 - r;
                    let (sx, sy) = if horizontal {
                        ((x as i64 + off).clamp(0, w as i64 - 1) as usize, y)
                    } else {
                        (x, (y as i64 + off).clamp(0, h as i64 - 1) as usize)
                    };
                    for (a, &v) in acc.iter_mut().zip(src.feature(sx, sy)) {
                        *a += t * f64::from(v);
                    }
                }
                for (d, &a) in dst.feature_mut(x, y).iter_mut().zip(&acc) {
                    *d = a as f32;
                }
            }
        }
        dst
    };
    let tmp = pass(fm, true);
    pass(&tmp, false)
}

/// Something that turns an image into a dense full-resolution feature map.
pub trait FeatureExtractor {
    fn extract(&self, image: &Image) -> Result<FeatureMap>;

    /// Side of the input window behind each feature.
    fn window(&self) -> usize;
}

impl FeatureExtractor for NetworkParams {
    fn extract(&self, image: &Image) -> Result<FeatureMap> {
        forward_dense(self, image)
    }

    fn window(&self) -> usize {
        self.receptive_field()
    }
}

/// Raw intensities of the `side`×`side` window (clamped at the border) as
/// the feature vector. Engineered baseline and test fixture.
#[derive(Clone, Copy, Debug)]
pub struct RawPatchFeatures {
    pub side: usize,
}

impl FeatureExtractor for RawPatchFeatures {
    fn extract(&self, image: &Image) -> Result<FeatureMap> {
        let (w, h, dim) = (image.width(), image.height(), self.side * self.side);
        let mut fm = FeatureMap::zeros(w, h, dim);
        for y in 0..h {
            for x in 0..w {
                let win = image.window(Point::new(x as i32, y as i32), self.side);
                for (d, v) in fm.feature_mut(x, y).iter_mut().zip(win) {
                    *d = v as f32;
                }
            }
        }
        fm.set_window(self.side);
        Ok(fm)
    }

    fn window(&self) -> usize {
        self.side
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PyramidMode {
    /// Features recomputed on downsampled images for the coarse scales.
    MultiResolution,
    /// All scales are low-pass filtered copies of the finest features.
    Legacy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    pub mode: PyramidMode,
    /// Downsampling factor per scale, finest first.
    pub scale_resolutions: Vec<usize>,
    pub lowpass_factor: f64,
    /// Extra low-pass multiplier for a scale that reuses the resolution of
    /// the previous one (scale 2 by default).
    pub extra_scale2_lowpass: f64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            mode: PyramidMode::MultiResolution,
            scale_resolutions: vec![1, 1, 2, 4],
            lowpass_factor: 2.25,
            extra_scale2_lowpass: 2.0,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.scale_resolutions;
        if r.is_empty() || r.iter().any(|&f| f == 0 || !f.is_power_of_two()) {
            return Err(Error::InvalidArgument(
                "scale resolutions must be non-empty powers of two".into(),
            ));
        }
        if r.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::InvalidArgument("scale resolutions must be non-decreasing".into()));
        }
        if !(self.lowpass_factor >= 1.0) || !(self.extra_scale2_lowpass >= 1.0) {
            return Err(Error::InvalidArgument("low-pass factors must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetRole {
    FullResolution,
    MultiResolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleProvenance {
    pub net: NetRole,
    pub resolution_factor: usize,
    pub lowpass_factor: f64,
}

/// Feature maps of all scales at full image resolution, finest first.
#[derive(Clone, Debug)]
pub struct ScalePyramid {
    pub scales: Vec<FeatureMap>,
    pub provenance: Vec<ScaleProvenance>,
}

impl ScalePyramid {
    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn width(&self) -> usize {
        self.scales[0].width()
    }

    pub fn height(&self) -> usize {
        self.scales[0].height()
    }

    /// Builds a pyramid by repeating one map; used when a caller already
    /// has the features it wants to match at every scale.
    pub fn uniform(fm: FeatureMap, scales: usize) -> Self {
        Self {
            provenance: vec![
                ScaleProvenance {
                    net: NetRole::FullResolution,
                    resolution_factor: 1,
                    lowpass_factor: 1.0,
                };
                scales
            ],
            scales: vec![fm; scales],
        }
    }
}

fn features_at_resolution(img: &Image, net: &dyn FeatureExtractor, factor: usize) -> Result<FeatureMap> {
    let mut level = img.clone();
    let mut f = 1;
    while f < factor {
        level = downsample_image(&level, net.window())?;
        f *= 2;
    }
    let fm = net.extract(&level)?;
    Ok(if factor == 1 {
        fm
    } else {
        upsample_featuremap(&fm, factor, img.width(), img.height())
    })
}

/// Builds the scale pyramid of a (normalized) image.
pub fn build_pyramid(
    img: &Image,
    full_res_net: &dyn FeatureExtractor,
    multi_res_net: &dyn FeatureExtractor,
    cfg: &PyramidConfig,
) -> Result<ScalePyramid> {
    cfg.validate()?;
    let mut scales = Vec::with_capacity(cfg.scale_resolutions.len());
    let mut provenance = Vec::with_capacity(cfg.scale_resolutions.len());
    match cfg.mode {
        PyramidMode::Legacy => {
            let base = full_res_net.extract(img)?;
            for s in 0..cfg.scale_resolutions.len() {
                let lp = cfg.lowpass_factor * f64::from(1u32 << s);
                scales.push(lowpass_featuremap(&base, lp));
                provenance.push(ScaleProvenance {
                    net: NetRole::FullResolution,
                    resolution_factor: 1,
                    lowpass_factor: lp,
                });
            }
        }
        PyramidMode::MultiResolution => {
            let mut cache: Vec<(usize, FeatureMap)> = Vec::new();
            for (s, &factor) in cfg.scale_resolutions.iter().enumerate() {
                let net_role = if factor == 1 { NetRole::FullResolution } else { NetRole::MultiResolution };
                let net = if factor == 1 { full_res_net } else { multi_res_net };
                if !cache.iter().any(|(f, _)| *f == factor) {
                    cache.push((factor, features_at_resolution(img, net, factor)?));
                }
                let base = &cache.iter().find(|(f, _)| *f == factor).expect("cached").1;
                let repeats = cfg.scale_resolutions[..s].iter().filter(|&&f| f == factor).count();
                let lp = cfg.lowpass_factor * cfg.extra_scale2_lowpass.powi(repeats as i32);
                scales.push(lowpass_featuremap(base, lp));
                provenance.push(ScaleProvenance {
                    net: net_role,
                    resolution_factor: factor,
                    lowpass_factor: lp,
                });
            }
        }
    }
    Ok(ScalePyramid { scales, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_map(w: usize, h: usize) -> FeatureMap {
        let mut fm = FeatureMap::zeros(w, h, 2);
        for y in 0..h {
            for x in 0..w {
                fm.feature_mut(x, y).copy_from_slice(&[x as f32 * 0.5, y as f32 - 3.0]);
            }
        }
        fm
    }

    #[test]
    fn kernel_sums_to_one() {
        for f in [1.0, 1.5, 2.0, 2.25, 2.5, 4.0] {
            let k = gaussian_kernel(0.5 * f);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(k.len() as i64, 2 * (1.5 * f as f64).ceil() as i64 + 1);
        }
    }

    #[test]
    fn downsample_constant_and_size() {
        let d = downsample_image(&Image::filled(40, 30, 0.7), 1).unwrap();
        assert_eq!((d.width(), d.height()), (20, 15));
        assert!(d.data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
        assert!(downsample_image(&Image::filled(40, 30, 0.7), 16).is_err());
    }

    #[test]
    fn upsample_identity_and_constant() {
        let fm = ramp_map(7, 5);
        assert_eq!(upsample_featuremap(&fm, 1, 7, 5), fm);
        let mut c = FeatureMap::zeros(4, 4, 3);
        c.data_mut().iter_mut().for_each(|v| *v = 1.25);
        let up = upsample_featuremap(&c, 2, 8, 8);
        assert!(up.data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn upsample_preserves_ramp_away_from_border() {
        let fm = ramp_map(8, 8);
        let up = upsample_featuremap(&fm, 2, 16, 16);
        for y in 1..15 {
            for x in 1..15 {
                let f = up.feature(x, y);
                let (sx, sy) = ((x as f32 + 0.5) / 2.0 - 0.5, (y as f32 + 0.5) / 2.0 - 0.5);
                assert!((f[0] - sx * 0.5).abs() < 1e-6);
                assert!((f[1] - (sy - 3.0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lowpass_constant_unchanged() {
        let mut c = FeatureMap::zeros(9, 6, 2);
        c.data_mut().iter_mut().for_each(|v| *v = -0.5);
        let lp = lowpass_featuremap(&c, 2.25);
        assert!(lp.data().iter().all(|&v| (v + 0.5).abs() < 1e-6));
        assert_eq!(lowpass_featuremap(&c, 1.0), c);
    }

    #[test]
    fn legacy_and_multires_provenance() {
        let img = Image::from_fn(64, 64, |x, y| ((x * 13 + y * 7) % 11) as f32);
        let raw = RawPatchFeatures { side: 3 };
        let p = build_pyramid(&img, &raw, &raw, &PyramidConfig::default()).unwrap();
        let nets: Vec<NetRole> = p.provenance.iter().map(|s| s.net).collect();
        assert_eq!(
            nets,
            vec![NetRole::FullResolution, NetRole::FullResolution, NetRole::MultiResolution, NetRole::MultiResolution]
        );
        let lps: Vec<f64> = p.provenance.iter().map(|s| s.lowpass_factor).collect();
        assert_eq!(lps, vec![2.25, 4.5, 2.25, 2.25]);
        assert!(p.scales.iter().all(|s| s.width() == 64 && s.height() == 64 && s.all_finite()));

        let cfg = PyramidConfig {
            mode: PyramidMode::Legacy,
            ..PyramidConfig::default()
        };
        let legacy = build_pyramid(&img, &raw, &raw, &cfg).unwrap();
        assert!(legacy.provenance.iter().all(|s| s.net == NetRole::FullResolution && s.resolution_factor == 1));
    }

    #[test]
    fn config_validation() {
        let mut cfg = PyramidConfig::default();
        cfg.scale_resolutions = vec![1, 2, 1, 4];
        assert!(cfg.validate().is_err());
        cfg.scale_resolutions = vec![1, 3];
        assert!(cfg.validate().is_err());
        let cfg = PyramidConfig {
            lowpass_factor: 0.5,
            ..PyramidConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
