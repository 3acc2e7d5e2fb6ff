//! Raster containers shared by every stage: grayscale images and
//! per-pixel feature maps.

use crate::error::{Error, Result};

/// Integer pixel position. Signed so that offsets and out-of-bounds
/// candidates can be represented before they are checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn distance(self, other: Point) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Top-left corner of a square window of side `side` whose center pixel is
/// `center`. Even sides put the center just right/below the middle.
pub fn window_origin(center: Point, side: usize) -> Point {
    let half = (side / 2) as i32;
    center.offset(-half, -half)
}

/// Single-channel float raster, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "image {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f32 {
        let cx = x.clamp(0, self.width as i64 - 1) as usize;
        let cy = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// True when the `side`×`side` window centered at `center` lies fully
    /// inside the image.
    pub fn contains_window(&self, center: Point, side: usize) -> bool {
        let o = window_origin(center, side);
        o.x >= 0
            && o.y >= 0
            && o.x as usize + side <= self.width
            && o.y as usize + side <= self.height
    }

    /// Bilinear sample with clamp-to-edge.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Extracts the `side`×`side` window centered at `center` as f64, with
    /// clamp-to-edge for pixels outside the image.
    pub fn window(&self, center: Point, side: usize) -> Vec<f64> {
        let o = window_origin(center, side);
        let mut out = Vec::with_capacity(side * side);
        for dy in 0..side as i64 {
            for dx in 0..side as i64 {
                out.push(f64::from(self.get_clamped(i64::from(o.x) + dx, i64::from(o.y) + dy)));
            }
        }
        out
    }

    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.data.len() as f64;
        let mean = self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = self
            .data
            .iter()
            .map(|&v| {
                let d = f64::from(v) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }
}

/// Per-pixel feature vectors of dimensionality `dim`, stored pixel-major
/// (row-major over pixels, channels interleaved).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    dim: usize,
    /// Side of the square input window each feature was computed from.
    /// Pixels whose window leaves the image were computed from clamp-padded
    /// input. Zero means every pixel counts as interior.
    window: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "empty feature map {width}x{height}x{dim}"
            )));
        }
        if data.len() != width * height * dim {
            return Err(Error::Shape(format!(
                "feature map {width}x{height}x{dim} needs {} values, got {}",
                width * height * dim,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            dim,
            window: 0,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, dim: usize) -> Self {
        Self {
            width,
            height,
            dim,
            window: 0,
            data: vec![0.0; width * height * dim],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn feature(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.dim;
        &self.data[start..start + self.dim]
    }

    #[inline]
    pub fn feature_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let start = (y * self.width + x) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn set_window(&mut self, window: usize) {
        self.window = window;
    }

    /// Width of the clamp-padded band on the top/left edge.
    pub fn border(&self) -> usize {
        self.window / 2
    }

    /// Whether the feature at `(x, y)` was computed without clamp padding.
    pub fn is_interior(&self, x: usize, y: usize) -> bool {
        let lo = self.window / 2;
        let hi = if self.window == 0 { 0 } else { self.window - 1 - lo };
        x >= lo && y >= lo && x + hi < self.width && y + hi < self.height
    }

    /// Bilinear interpolation of the feature vector at a sub-pixel position,
    /// clamped to the map. Returns whether clamping was needed.
    pub fn sample_bilinear(&self, x: f32, y: f32, out: &mut [f32]) -> bool {
        let max_x = (self.width - 1) as f32;
        let max_y = (self.height - 1) as f32;
        let clamped = x < 0.0 || y < 0.0 || x > max_x || y > max_y;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        if fx == 0.0 && fy == 0.0 {
            out.copy_from_slice(self.feature(x0, y0));
            return clamped;
        }
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let (a, b, c, d) = (
            self.feature(x0, y0),
            self.feature(x1, y0),
            self.feature(x0, y1),
            self.feature(x1, y1),
        );
        for k in 0..self.dim {
            out[k] = w00 * a[k] + w10 * b[k] + w01 * c[k] + w11 * d[k];
        }
        clamped
    }

    /// Copies channel `c` into a standalone image.
    pub fn channel(&self, c: usize) -> Image {
        Image::from_fn(self.width, self.height, |x, y| self.feature(x, y)[c])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
