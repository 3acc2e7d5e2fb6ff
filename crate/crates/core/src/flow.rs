use crate::error::{Error, Result};

/// Per-pixel 2D displacement with a validity mask and the match cost that
/// produced it. Used for ground truth (cost unused) and for estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
    pub cost: Vec<f32>,
}

impl FlowField {
    /// Zero flow, all pixels valid.
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![true; n],
            cost: vec![0.0; n],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut flow = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                flow.set(x, y, u, v);
            }
        }
        flow
    }

    pub fn from_parts(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::Shape(format!("flow components do not match {width}x{height}")));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            valid,
            cost: vec![0.0; n],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = self.index(x, y);
        (self.u[i], self.v[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = self.index(x, y);
        self.u[i] = u;
        self.v[i] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.index(x, y)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Bilinear lookup at a sub-pixel position. Returns `None` outside the
    /// field or when a neighbor with non-zero weight is invalid.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> Option<(f32, f32)> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f32 && y <= (self.height - 1) as f32) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        let (mut u, mut v) = (0.0, 0.0);
        for (tx, ty, w) in taps {
            if w == 0.0 {
                continue;
            }
            if !self.is_valid(tx, ty) {
                return None;
            }
            let (a, b) = self.get(tx, ty);
            u += w * a;
            v += w * b;
        }
        Some((u, v))
    }

    /// Halves resolution and flow magnitudes. Each output pixel averages the
    /// valid vectors of its 2×2 source block and is valid when at least one
    /// of them is.
    pub fn downsample2(&self) -> Result<Self> {
        let (w, h) = (self.width / 2, self.height / 2);
        if w == 0 || h == 0 {
            return Err(Error::Shape("flow field too small to downsample".into()));
        }
        let mut out = Self::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (mut su, mut sv, mut n) = (0.0f32, 0.0f32, 0);
                for (sx, sy) in [(2 * x, 2 * y), (2 * x + 1, 2 * y), (2 * x, 2 * y + 1), (2 * x + 1, 2 * y + 1)] {
                    if self.is_valid(sx, sy) {
                        let (a, b) = self.get(sx, sy);
                        su += a;
                        sv += b;
                        n += 1;
                    }
                }
                let i = out.index(x, y);
                if n == 0 {
                    out.valid[i] = false;
                } else {
                    out.u[i] = su / n as f32 / 2.0;
                    out.v[i] = sv / n as f32 / 2.0;
                }
            }
        }
        Ok(out)
    }
}

/// Downsamples a boolean mask 2:1; an output pixel is set when any pixel of
/// its 2×2 source block is set.
pub fn downsample_mask_any(mask: &[bool], width: usize, height: usize) -> Vec<bool> {
    let (w, h) = (width / 2, height / 2);
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = [(2 * x, 2 * y), (2 * x + 1, 2 * y), (2 * x, 2 * y + 1), (2 * x + 1, 2 * y + 1)]
                .iter()
                .any(|&(sx, sy)| mask[sy * width + sx]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_requires_valid_neighbors() {
        let mut f = FlowField::from_fn(3, 3, |x, _| (x as f32, 0.0));
        assert_eq!(f.sample_bilinear(0.5, 1.0), Some((0.5, 0.0)));
        assert_eq!(f.sample_bilinear(2.0, 2.0), Some((2.0, 0.0)));
        assert_eq!(f.sample_bilinear(2.5, 0.0), None);
        let i = f.index(1, 1);
        f.valid[i] = false;
        assert_eq!(f.sample_bilinear(0.5, 1.0), None);
        assert_eq!(f.sample_bilinear(0.0, 1.0), Some((0.0, 0.0)));
    }

    #[test]
    fn downsample_halves_vectors() {
        let f = FlowField::from_fn(4, 4, |_, _| (4.0, -2.0));
        let d = f.downsample2().unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
        assert!(d.u.iter().all(|&u| u == 2.0));
        assert!(d.v.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn mask_downsample_is_conservative() {
        let mut m = vec![false; 16];
        m[5] = true;
        let d = downsample_mask_any(&m, 4, 4);
        assert_eq!(d, vec![true, false, false, false]);
    }
}
