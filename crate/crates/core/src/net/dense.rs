//! Dense (shared-convolution) inference.
//!
//! Evaluating the network on every window of an image independently
//! recomputes the same intermediate outputs many times. Instead the image is
//! clamp-padded once and the layer stack is run over the whole raster; every
//! stride-`s` pooling becomes a stride-1 pooling and multiplies the dilation
//! of all following layers by `s`. This evaluates all pooling phases at once
//! and yields one feature per input pixel.

use super::kernels::{self, Tensor3};
use super::{LayerKind, NetworkParams};
use crate::error::{Error, Result};
use crate::image::{FeatureMap, Image};

/// Per-pixel features at full image resolution. The feature at `(x, y)`
/// equals `forward` of the window centered at `(x, y)`; windows crossing the
/// image edge see clamp-to-edge padding.
pub fn forward_dense(params: &NetworkParams, image: &Image) -> Result<FeatureMap> {
    let rf = params.receptive_field();
    if params.in_channels() != 1 {
        return Err(Error::InvalidArgument(
            "dense inference on grayscale images needs a single-channel network".into(),
        ));
    }
    if image.width() < rf || image.height() < rf {
        return Err(Error::Shape(format!(
            "image {}x{} is smaller than the {rf}x{rf} receptive field",
            image.width(),
            image.height()
        )));
    }
    let lo = (rf / 2) as i64;
    let (pw, ph) = (image.width() + rf - 1, image.height() + rf - 1);
    let mut padded = Vec::with_capacity(pw * ph);
    for y in 0..ph as i64 {
        for x in 0..pw as i64 {
            padded.push(f64::from(image.get_clamped(x - lo, y - lo)));
        }
    }
    let mut x = Tensor3::from_vec(1, ph, pw, padded);
    let mut dilation = 1;
    let mut conv = 0;
    for l in params.layers() {
        x = match l.kind {
            LayerKind::Conv => {
                let b = &params.blocks()[conv];
                conv += 1;
                kernels::conv_forward(&x, &b.weight, &b.bias, l.kernel_size, dilation)
            }
            LayerKind::MaxPool => {
                let out = kernels::maxpool_forward(&x, l.kernel_size, 1, dilation).0;
                dilation *= l.stride;
                out
            }
            LayerKind::Tanh => {
                kernels::tanh_inplace(&mut x);
                x
            }
        };
    }
    debug_assert_eq!((x.height, x.width), (image.height(), image.width()));
    let (w, h, dim) = (image.width(), image.height(), x.channels);
    let plane = w * h;
    let mut data = vec![0f32; plane * dim];
    for c in 0..dim {
        for (p, &v) in x.plane(c).iter().enumerate() {
            data[p * dim + c] = v as f32;
        }
    }
    let mut fm = FeatureMap::new(w, h, dim, data)?;
    fm.set_window(rf);
    Ok(fm)
}
